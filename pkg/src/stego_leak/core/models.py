"""
Core configuration models for the stego pipeline.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Tuple

import numpy as np

from .errors import ConfigError


class Precision(Enum):
    """Floating point precision of a run."""
    FLOAT32 = 32
    FLOAT64 = 64

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(np.float32) if self is Precision.FLOAT32 else np.dtype(np.float64)

    @classmethod
    def from_bits(cls, bits: int) -> "Precision":
        try:
            return cls(int(bits))
        except ValueError:
            raise ConfigError(f"precision must be 32 or 64, got {bits}") from None


class PsnrMode(Enum):
    """PSNR numerator convention."""
    STANDARD = "standard"  # peak^2 / mean squared error
    LITERAL = "literal"    # max|cover| / summed squared error


@dataclass(frozen=True)
class LossWeights:
    """Balance between the cover (MSE) and secret (BCE) losses."""
    alpha: float = 0.5
    beta: float = 1.0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError(f"loss weights must be >= 0, got alpha={self.alpha}, beta={self.beta}")
        if self.alpha == 0 and self.beta == 0:
            raise ConfigError("alpha and beta cannot both be zero")


KERNEL_SIZES: Tuple[int, int, int] = (3, 4, 5)


@dataclass(frozen=True)
class NetworkConfig:
    """Width and geometry of the three stego networks."""
    branch_channels: int = 50
    image_height: int = 256
    image_width: int = 256
    cover_channels: int = 3
    kernel_sizes: Tuple[int, int, int] = KERNEL_SIZES

    def __post_init__(self):
        if self.branch_channels < 1:
            raise ConfigError(f"branch_channels must be >= 1, got {self.branch_channels}")
        if tuple(self.kernel_sizes) != KERNEL_SIZES:
            raise ConfigError(f"kernel_sizes must be {KERNEL_SIZES}, got {self.kernel_sizes}")
        if self.cover_channels not in (1, 3):
            raise ConfigError(f"cover_channels must be 1 or 3, got {self.cover_channels}")
        smallest = max(self.kernel_sizes)
        if self.image_height < smallest or self.image_width < smallest:
            raise ConfigError(
                f"image dims must be >= {smallest}, got {self.image_height}x{self.image_width}"
            )

    @property
    def hide_input_channels(self) -> int:
        return 3 + self.cover_channels

    @property
    def trunk_channels(self) -> int:
        return len(self.kernel_sizes) * self.branch_channels

    def to_dict(self) -> dict:
        return {
            "branch_channels": self.branch_channels,
            "image_height": self.image_height,
            "image_width": self.image_width,
            "cover_channels": self.cover_channels,
        }


@dataclass(frozen=True)
class EarlyStopConfig:
    """Windowed relative-improvement stopping rule."""
    window: int = 1000
    min_rel_improvement: float = 1e-4

    def __post_init__(self):
        if self.window < 2:
            raise ConfigError(f"early-stop window must be >= 2, got {self.window}")
        if not 0 < self.min_rel_improvement < 1:
            raise ConfigError(
                f"min_rel_improvement must be in (0, 1), got {self.min_rel_improvement}"
            )


@dataclass(frozen=True)
class TrainingConfig:
    """Optimisation settings; defaults are the published setup."""
    batch_size: int = 6
    max_iterations: int = 800_000
    learning_rate: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-8
    loss_weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    early_stop: EarlyStopConfig = field(default_factory=EarlyStopConfig)
    eval_pairs: int = 5000
    precision: Precision = Precision.FLOAT32
    log_interval: int = 1
    checkpoint_interval: int = 0  # 0 disables periodic checkpoints

    def __post_init__(self):
        for name in ("batch_size", "max_iterations", "eval_pairs", "log_interval"):
            value = getattr(self, name)
            if value < 1:
                raise ConfigError(f"{name} must be >= 1, got {value}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        for name in ("beta1", "beta2"):
            value = getattr(self, name)
            if not 0 < value < 1:
                raise ConfigError(f"{name} must be in (0, 1), got {value}")
        if self.checkpoint_interval < 0:
            raise ConfigError(f"checkpoint_interval must be >= 0, got {self.checkpoint_interval}")


@dataclass(frozen=True)
class LsbConfig:
    """
    n-bit LSB settings.

    Bytes are consumed channel-major, then row-major (C-order over [C, H, W]).
    """
    n: int = 1

    def __post_init__(self):
        if not 1 <= self.n <= 8:
            raise ConfigError(f"LSB bit count must be in [1, 8], got {self.n}")
