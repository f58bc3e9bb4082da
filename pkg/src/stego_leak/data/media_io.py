"""
PNG ingestion and cover preprocessing: random crop, bilinear resize, grayscale.

Images are held as float arrays of shape [C, H, W] with values in [0, 1].
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import png

from ..core.errors import ImageFormatError, ShapeError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
SeedLike = Union[int, np.random.Generator, None]

# ITU-R BT.601 luma weights
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])
SUPPORTED_BIT_DEPTHS = (1, 8)


@dataclass
class RasterImage:
    """Channel-major image with values in [0, 1]."""
    pixels: np.ndarray

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim != 3 or self.pixels.shape[0] not in (1, 3):
            raise ShapeError("RasterImage", "[1|3, H, W]", self.pixels.shape)
        if self.pixels.size and (self.pixels.min() < 0.0 or self.pixels.max() > 1.0):
            raise ImageFormatError("pixel values must lie in [0, 1]")

    @property
    def channels(self) -> int:
        return self.pixels.shape[0]

    @property
    def height(self) -> int:
        return self.pixels.shape[1]

    @property
    def width(self) -> int:
        return self.pixels.shape[2]

    def to_uint8(self) -> np.ndarray:
        """Quantise by round(v * 255), clamped to [0, 255]."""
        return np.clip(np.rint(self.pixels * 255.0), 0, 255).astype(np.uint8)

    @classmethod
    def from_uint8(cls, data: np.ndarray) -> "RasterImage":
        return cls(np.asarray(data, dtype=np.float64) / 255.0)


def _rng(seed: SeedLike) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def load_png(path: PathLike) -> RasterImage:
    """
    Decode a PNG into a RasterImage.

    Palettes and transparency are expanded by pypng, alpha is dropped. Only
    1-bit and 8-bit samples are accepted.

    Raises:
        ImageFormatError: For other bit depths or an undecodable file
    """
    try:
        with open(path, "rb") as fh:
            width, height, rows, info = png.Reader(file=fh).asDirect()
            data = np.vstack([np.asarray(row, dtype=np.uint16) for row in rows])
    except png.Error as exc:
        raise ImageFormatError(f"{path}: {exc}") from None

    bitdepth = info["bitdepth"]
    if bitdepth not in SUPPORTED_BIT_DEPTHS:
        raise ImageFormatError(f"{path}: unsupported bit depth {bitdepth}")

    planes = info["planes"]
    data = data.reshape(height, width, planes)
    if info.get("alpha"):
        data = data[:, :, : planes - 1]
    scale = float(2 ** bitdepth - 1)
    return RasterImage(np.transpose(data, (2, 0, 1)).astype(np.float64) / scale)


def _write_rows(path: PathLike, rows: np.ndarray, width: int, height: int, greyscale: bool, bitdepth: int) -> None:
    writer = png.Writer(width, height, greyscale=greyscale, bitdepth=bitdepth)
    with open(path, "wb") as fh:
        writer.write(fh, rows.tolist())


def save_png(image: RasterImage, path: PathLike) -> None:
    """Write an 8-bit grayscale or RGB PNG."""
    data = image.to_uint8()
    rows = np.transpose(data, (1, 2, 0)).reshape(image.height, image.width * image.channels)
    _write_rows(path, rows, image.width, image.height, greyscale=image.channels == 1, bitdepth=8)


def save_binary_png(pixels: np.ndarray, path: PathLike) -> None:
    """Write an H x W {0, 1} array as a 1-bit grayscale PNG."""
    pixels = np.asarray(pixels)
    if pixels.ndim == 3 and pixels.shape[0] == 1:
        pixels = pixels[0]
    if pixels.ndim != 2:
        raise ShapeError("save_binary_png", "[H, W]", pixels.shape)
    if np.any((pixels != 0) & (pixels != 1)):
        raise ImageFormatError("1-bit PNG needs a binary image")
    height, width = pixels.shape
    _write_rows(path, pixels.astype(np.uint8), width, height, greyscale=True, bitdepth=1)


def save_residual_png(cover: RasterImage, container: RasterImage, path: PathLike, gain: float = 10.0) -> None:
    """Write |cover - container| amplified by gain and clipped to [0, 1]."""
    if cover.pixels.shape != container.pixels.shape:
        raise ShapeError("residual", cover.pixels.shape, container.pixels.shape)
    residual = np.clip(np.abs(cover.pixels - container.pixels) * gain, 0.0, 1.0)
    save_png(RasterImage(residual), path)


def bilinear_resize(pixels: np.ndarray, out_height: int, out_width: int) -> np.ndarray:
    """
    Resize [C, H, W] with bilinear weights and half-pixel-centre alignment.

    Source coordinate of output index d is (d + 0.5) * in / out - 0.5,
    clamped to the valid range.
    """

    def axis(n_in: int, n_out: int):
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0.0, n_in - 1)
        lo = np.floor(src).astype(np.int64)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, src - lo

    _, in_h, in_w = pixels.shape
    y0, y1, wy = axis(in_h, out_height)
    x0, x1, wx = axis(in_w, out_width)

    top = pixels[:, y0, :] * (1 - wy)[None, :, None] + pixels[:, y1, :] * wy[None, :, None]
    out = top[:, :, x0] * (1 - wx)[None, None, :] + top[:, :, x1] * wx[None, None, :]
    return np.clip(out, 0.0, 1.0)


def random_crop_resize(
    image: RasterImage,
    crop: int = 224,
    out: Union[int, Tuple[int, int]] = 256,
    seed: SeedLike = None,
) -> RasterImage:
    """
    Take a crop x crop patch at a uniformly random offset and resize it to out
    (a side length, or an (height, width) pair).

    Raises:
        ShapeError: If the image is smaller than the crop
    """
    if image.height < crop or image.width < crop:
        raise ShapeError("random_crop_resize", f">= {crop}x{crop}", (image.height, image.width))
    rng = _rng(seed)
    top = int(rng.integers(0, image.height - crop + 1))
    left = int(rng.integers(0, image.width - crop + 1))
    patch = image.pixels[:, top : top + crop, left : left + crop]
    out_h, out_w = (out, out) if isinstance(out, int) else out
    if (crop, crop) == (out_h, out_w):
        return RasterImage(patch.copy())
    return RasterImage(bilinear_resize(patch, out_h, out_w))


def to_grayscale(image: RasterImage) -> RasterImage:
    """BT.601 luma; single-channel input passes through unchanged."""
    if image.channels == 1:
        return image
    luma = np.tensordot(LUMA_WEIGHTS, image.pixels, axes=([0], [0]))
    return RasterImage(np.clip(luma, 0.0, 1.0)[None, :, :])


def list_pngs(directory: PathLike) -> List[Path]:
    """PNG files of a directory, sorted by filename."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"not a directory: {directory}")
    return sorted(p for p in directory.iterdir() if p.suffix.lower() == ".png")


def prepare_cover(
    image: RasterImage,
    crop: int,
    out: Union[int, Tuple[int, int]],
    channels: int,
    rng: np.random.Generator,
) -> RasterImage:
    """
    Crop/resize, then convert to grayscale when a one-channel cover is wanted.

    A crop of 0 resizes the whole image instead of cropping it.

    Raises:
        ShapeError: If the image is smaller than a non-zero crop
    """
    if image.channels == 1 and channels == 3:
        image = RasterImage(np.repeat(image.pixels, 3, axis=0))
    if crop:
        image = random_crop_resize(image, crop, out, rng)
    else:
        out_h, out_w = (out, out) if isinstance(out, int) else out
        image = RasterImage(bilinear_resize(image.pixels, out_h, out_w))
    return to_grayscale(image) if channels == 1 else image


def load_cover_directory(
    directory: PathLike,
    crop: int,
    out: Union[int, Tuple[int, int]],
    channels: int = 3,
    seed: SeedLike = 0,
    limit: Optional[int] = None,
) -> List[RasterImage]:
    """
    Load and preprocess every PNG in a directory, in filename order.

    Raises:
        ImageFormatError: If the directory holds no PNG files
        ShapeError: If a cover is smaller than a non-zero crop
    """
    paths = list_pngs(directory)[:limit]
    if not paths:
        raise ImageFormatError(f"no PNG covers in {directory}")
    rng = _rng(seed)
    covers = []
    for path in paths:
        image = load_png(path)
        if image.height < crop or image.width < crop:
            raise ShapeError(
                f"cover {path.name} (crop_size {crop}, 0 disables cropping)",
                (crop, crop),
                (image.height, image.width),
            )
        covers.append(prepare_cover(image, crop, out, channels, rng))
    logger.info("Loaded %d covers from %s", len(covers), directory)
    return covers


def generate_synthetic_covers(
    n: int,
    height: int,
    width: int,
    channels: int = 3,
    seed: SeedLike = 0,
) -> List[RasterImage]:
    """
    Smooth natural-looking covers: random linear gradients, a low-frequency
    wave and a little texture noise per channel.
    """
    if n < 1:
        raise ShapeError("generate_synthetic_covers n", ">= 1", (n,))
    rng = _rng(seed)
    ys, xs = np.meshgrid(np.linspace(0, 1, height), np.linspace(0, 1, width), indexing="ij")
    covers = []
    for _ in range(n):
        planes = []
        for _ in range(channels):
            gy, gx = rng.uniform(-0.4, 0.4, size=2)
            base = rng.uniform(0.3, 0.7)
            freq = rng.uniform(1.0, 4.0, size=2)
            phase = rng.uniform(0, 2 * np.pi)
            wave = 0.15 * np.sin(2 * np.pi * (freq[0] * ys + freq[1] * xs) + phase)
            noise = rng.normal(0.0, 0.03, size=(height, width))
            planes.append(base + gy * (ys - 0.5) + gx * (xs - 0.5) + wave + noise)
        covers.append(RasterImage(np.clip(np.stack(planes), 0.0, 1.0)))
    return covers
