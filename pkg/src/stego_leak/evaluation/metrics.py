"""
Secrecy and accuracy metrics: PSNR, SSIM, bit accuracy and bits per pixel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Union

import numpy as np
import pandas as pd

from ..core.errors import SecretFormatError, ShapeError
from ..core.models import PsnrMode
from ..core.tensor import Tensor

ImageLike = Union[Tensor, np.ndarray]

DEFAULT_DELTA = 0.001

# column names of the published result tables
CSV_HEADER = ["BPP", "alpha", "beta", "L_all", "L_mse", "L_bce", "PSNR", "SSIM", "BACC"]


def _array(image: ImageLike) -> np.ndarray:
    data = image.data if isinstance(image, Tensor) else image
    return np.asarray(data, dtype=np.float64)


def _same_shape(context: str, a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeError(context, a.shape, b.shape)


def psnr(
    cover: ImageLike,
    container: ImageLike,
    mode: PsnrMode = PsnrMode.STANDARD,
    data_range: float = 1.0,
) -> float:
    """
    Peak signal-to-noise ratio in dB.

    Standard mode: 10 log10(data_range^2 / mean squared error).
    Literal mode: 10 log10(max|cover| / summed squared error).

    Returns:
        PSNR in dB, or +inf when the images are identical
    """
    a, b = _array(cover), _array(container)
    _same_shape("psnr", a, b)
    squared = (a - b) ** 2
    if mode is PsnrMode.LITERAL:
        numerator, noise = float(np.max(np.abs(a))), float(np.sum(squared))
    else:
        numerator, noise = data_range ** 2, float(np.mean(squared))
    if noise == 0.0:
        return math.inf
    return 10.0 * math.log10(numerator / noise)


def ssim(cover: ImageLike, container: ImageLike, data_range: float = 1.0) -> float:
    """
    Global structural similarity (single window over all pixels).

    Uses c1 = (0.01 L)^2 and c2 = (0.03 L)^2 with L the dynamic range.
    """
    a, b = _array(cover), _array(container)
    _same_shape("ssim", a, b)
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    mu_a, mu_b = a.mean(), b.mean()
    var_a, var_b = a.var(), b.var()
    covariance = np.mean((a - mu_a) * (b - mu_b))
    numerator = (2 * mu_a * mu_b + c1) * (2 * covariance + c2)
    denominator = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float(numerator / denominator)


def top_k_mask(revealed: ImageLike, k: int) -> np.ndarray:
    """
    Binary mask of the k largest revealed values.

    Ties are broken by row-major index, lowest index first.
    """
    values = _array(revealed)
    if not 0 <= k <= values.size:
        raise ShapeError("top_k_mask k", f"0..{values.size}", (k,))
    order = np.argsort(-values.reshape(-1), kind="stable")
    mask = np.zeros(values.size, dtype=np.float64)
    mask[order[:k]] = 1.0
    return mask.reshape(values.shape)


def bit_accuracy(secret: ImageLike, revealed: ImageLike, delta: float = DEFAULT_DELTA) -> float:
    """
    Fraction of the secret's active bits recovered within delta.

    k is the number of active secret pixels; the revealed image is masked to
    its k most active pixels before comparing.

    Raises:
        SecretFormatError: If the secret has no active bits
    """
    sec, rev = _array(secret), _array(revealed)
    _same_shape("bit_accuracy", sec, rev)
    active = sec > 0
    k = int(active.sum())
    if k == 0:
        raise SecretFormatError("bit accuracy is undefined for a secret without active bits")
    masked = top_k_mask(rev, k) * rev
    matched = np.abs(sec - masked) <= delta
    return float(np.count_nonzero(matched & active)) / k


def bpp(payload_dims: int, height: int, width: int, channels: int) -> float:
    """Bits per pixel: D / (H * W * C)."""
    for name, value in (("D", payload_dims), ("H", height), ("W", width), ("C", channels)):
        if value <= 0:
            raise ShapeError(f"bpp {name}", "> 0", (value,))
    return payload_dims / (height * width * channels)


@dataclass
class PairMetrics:
    psnr_db: float
    ssim: float
    bacc: float
    loss_mse: float
    loss_bce: float


@dataclass
class MetricsReport:
    """
    Aggregate evaluation results, one row of the result tables.

    Losses are raw (not multiplied by 10^4); see :meth:`scaled_losses`.
    """

    bpp: float
    alpha: float
    beta: float
    loss_all: float
    loss_mse: float
    loss_bce: float
    psnr_db: float
    ssim: float
    bacc: float
    n_pairs: int
    pairs: List[PairMetrics] = field(default_factory=list, repr=False)

    def to_row(self) -> Dict[str, float]:
        return {
            "BPP": self.bpp,
            "alpha": self.alpha,
            "beta": self.beta,
            "L_all": self.loss_all,
            "L_mse": self.loss_mse,
            "L_bce": self.loss_bce,
            "PSNR": self.psnr_db,
            "SSIM": self.ssim,
            "BACC": self.bacc,
        }

    def scaled_losses(self, factor: float = 1e4) -> Dict[str, float]:
        """Losses multiplied the way the published tables print them."""
        return {
            "L_all": self.loss_all * factor,
            "L_mse": self.loss_mse * factor,
            "L_bce": self.loss_bce * factor,
        }

    @classmethod
    def aggregate(
        cls,
        pairs: Sequence[PairMetrics],
        payload_dims: int,
        image_shape: Sequence[int],
        alpha: float,
        beta: float,
    ) -> "MetricsReport":
        """Average per-pair metrics; any infinite PSNR makes the mean infinite."""
        if not pairs:
            raise ShapeError("MetricsReport.aggregate pairs", "at least one pair", "none")
        channels, height, width = image_shape
        loss_mse = float(np.mean([p.loss_mse for p in pairs]))
        loss_bce = float(np.mean([p.loss_bce for p in pairs]))
        psnrs = [p.psnr_db for p in pairs]
        return cls(
            bpp=bpp(payload_dims, height, width, channels),
            alpha=alpha,
            beta=beta,
            loss_all=alpha * loss_mse + beta * loss_bce,
            loss_mse=loss_mse,
            loss_bce=loss_bce,
            psnr_db=math.inf if any(math.isinf(v) for v in psnrs) else float(np.mean(psnrs)),
            ssim=float(np.mean([p.ssim for p in pairs])),
            bacc=float(np.mean([p.bacc for p in pairs])),
            n_pairs=len(pairs),
            pairs=list(pairs),
        )


def reports_frame(reports: Sequence[MetricsReport]) -> pd.DataFrame:
    return pd.DataFrame([r.to_row() for r in reports], columns=CSV_HEADER)


def write_metrics_csv(reports: Sequence[MetricsReport], path: Union[str, Path]) -> None:
    """Write reports with the fixed header BPP, alpha, beta, L_all, L_mse, L_bce, PSNR, SSIM, BACC."""
    reports_frame(reports).to_csv(path, index=False)
