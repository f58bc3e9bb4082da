"""
n-bit least-significant-bit embedding on 8-bit images.

Bytes are visited in C order over [C, H, W] (channel-major, then row-major).
Each visited byte takes the next n payload bits, most significant first, in
its n low bits; the final group is zero-padded.
"""

from typing import Union

import numpy as np

from ..core.errors import CapacityError, ImageFormatError, ShapeError
from ..core.models import LsbConfig

BitsLike = Union[np.ndarray, list]


def capacity(cover: np.ndarray, config: LsbConfig = LsbConfig()) -> int:
    """Number of payload bits the cover can carry."""
    return int(np.asarray(cover).size) * config.n


def _check_image(image: np.ndarray, context: str) -> np.ndarray:
    image = np.asarray(image)
    if image.dtype != np.uint8:
        raise ImageFormatError(f"{context} must be 8-bit (uint8), got {image.dtype}")
    return image


def _check_bits(bits: BitsLike) -> np.ndarray:
    bits = np.asarray(bits).reshape(-1)
    if np.any((bits != 0) & (bits != 1)):
        raise ShapeError("LSB payload", "bits in {0, 1}", "other values")
    return bits.astype(np.uint8)


def lsb_embed(cover: np.ndarray, payload_bits: BitsLike, config: LsbConfig = LsbConfig()) -> np.ndarray:
    """
    Replace the n low bits of leading cover bytes with the payload.

    Args:
        cover: uint8 image, any shape (traversed in C order)
        payload_bits: 0/1 values
        config: Bits per byte

    Returns:
        Container with the cover's shape; untouched bytes equal the cover

    Raises:
        CapacityError: If the payload exceeds n * cover.size bits
    """
    cover = _check_image(cover, "cover")
    bits = _check_bits(payload_bits)
    n = config.n
    available = capacity(cover, config)
    if bits.size > available:
        raise CapacityError(f"payload too large for {n}-bit LSB", bits.size, available)

    container = cover.copy().reshape(-1)
    if bits.size == 0:
        return container.reshape(cover.shape)

    n_bytes = -(-bits.size // n)
    padded = np.zeros(n_bytes * n, dtype=np.uint8)
    padded[: bits.size] = bits
    weights = 1 << np.arange(n - 1, -1, -1, dtype=np.int64)
    values = padded.reshape(n_bytes, n).astype(np.int64) @ weights

    low_mask = np.uint8((1 << n) - 1)
    container[:n_bytes] = (container[:n_bytes] & ~low_mask) | values.astype(np.uint8)
    return container.reshape(cover.shape)


def lsb_extract(container: np.ndarray, bit_count: int, config: LsbConfig = LsbConfig()) -> np.ndarray:
    """
    Read bit_count payload bits back from a container.

    Raises:
        CapacityError: If bit_count exceeds the container capacity
    """
    container = _check_image(container, "container")
    n = config.n
    available = capacity(container, config)
    if bit_count < 0 or bit_count > available:
        raise CapacityError(f"cannot extract {bit_count} bits with {n}-bit LSB", bit_count, available)
    if bit_count == 0:
        return np.zeros(0, dtype=np.uint8)

    n_bytes = -(-bit_count // n)
    low = container.reshape(-1)[:n_bytes] & np.uint8((1 << n) - 1)
    shifts = np.arange(n - 1, -1, -1, dtype=np.uint8)
    bits = (low[:, None] >> shifts[None, :]) & 1
    return bits.reshape(-1)[:bit_count].astype(np.uint8)


def bytes_to_bits(payload: bytes) -> np.ndarray:
    """MSB-first bits of a byte string."""
    return np.unpackbits(np.frombuffer(payload, dtype=np.uint8))


def bits_to_bytes(bits: BitsLike) -> bytes:
    """Inverse of bytes_to_bits; a trailing partial byte is zero-padded."""
    return np.packbits(_check_bits(bits)).tobytes()
