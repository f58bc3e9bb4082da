"""
Training losses: cover MSE, secret BCE and their weighted batch combination.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import numpy as np

from ..core import tensor as T
from ..core.errors import ConfigError, ShapeError
from ..core.models import LossWeights
from ..core.tensor import Tensor

ImageLike = Union[Tensor, np.ndarray]


def _as_tensor(image: ImageLike) -> Tensor:
    return image if isinstance(image, Tensor) else Tensor(np.asarray(image, dtype=np.float64))


def cover_loss(cover: ImageLike, container: ImageLike) -> Tensor:
    """
    Summed squared difference between cover and container over all C, H, W.

    The sum (not the mean) is used; alpha absorbs the scale.
    """
    container_t = _as_tensor(container)
    cover_v = cover if isinstance(cover, Tensor) else np.asarray(cover)
    if cover_v.shape != container_t.shape:
        raise ShapeError("cover_loss", cover_v.shape, container_t.shape)
    return T.sum_squared_error(cover_v, container_t)


def secret_loss(secret: ImageLike, revealed: ImageLike) -> Tensor:
    """
    Binary cross-entropy summed over H, W (negated log-likelihood).

    The revealed image is clamped to [1e-7, 1 - 1e-7] before taking logs.
    """
    revealed_t = _as_tensor(revealed)
    secret_v = secret if isinstance(secret, Tensor) else np.asarray(secret)
    if secret_v.shape != revealed_t.shape:
        raise ShapeError("secret_loss", secret_v.shape, revealed_t.shape)
    return T.binary_cross_entropy_sum(secret_v, revealed_t)


@dataclass
class StegoPair:
    """Inputs and outputs of one forward pass, as needed by the losses."""
    secret: ImageLike
    cover: ImageLike
    container: Tensor
    revealed: Tensor


def batch_losses(batch: Sequence[StegoPair]) -> Tuple[Tensor, Tensor]:
    """
    Batch means of the cover and secret losses.

    Raises:
        ConfigError: If the batch is empty
    """
    if not batch:
        raise ConfigError("combined loss needs at least one pair")
    n = len(batch)
    cover_terms = [cover_loss(pair.cover, pair.container) for pair in batch]
    secret_terms = [secret_loss(pair.secret, pair.revealed) for pair in batch]
    return T.scale(T.sum_all(cover_terms), 1.0 / n), T.scale(T.sum_all(secret_terms), 1.0 / n)


def combine(mean_cover: Tensor, mean_secret: Tensor, weights: LossWeights) -> Tensor:
    return T.add(T.scale(mean_cover, weights.alpha), T.scale(mean_secret, weights.beta))


def combined_loss(batch: Sequence[StegoPair], weights: LossWeights) -> Tensor:
    """alpha * mean(cover_loss) + beta * mean(secret_loss) over the batch."""
    mean_cover, mean_secret = batch_losses(batch)
    return combine(mean_cover, mean_secret, weights)
