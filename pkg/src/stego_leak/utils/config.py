"""
Flat key=value run configuration.

Values are resolved from, lowest to highest precedence: the dataclass
defaults, a config file (``#`` comments allowed), ``key=value`` overrides from
the command line, and the ``STEGO_SEED`` environment variable.
"""

import logging
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Sequence, Tuple, Union

from dotenv import dotenv_values

from ..core.errors import ConfigError
from ..core.models import (
    EarlyStopConfig,
    LossWeights,
    LsbConfig,
    NetworkConfig,
    Precision,
    PsnrMode,
    TrainingConfig,
)

logger = logging.getLogger(__name__)

SEED_ENV_VAR = "STEGO_SEED"


def _listed(kind: type) -> Dict[str, type]:
    return {"item": kind}


@dataclass(frozen=True)
class RunConfig:
    """Every tunable of a run in one flat namespace."""

    # training
    seed: int = 0
    batch_size: int = 6
    max_iterations: int = 800_000
    learning_rate: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-8
    alpha: float = 0.5
    beta: float = 1.0
    early_stop_window: int = 1000
    early_stop_min_rel_improvement: float = 1e-4
    log_interval: int = 1
    checkpoint_interval: int = 0
    eval_pairs: int = 5000
    precision: int = 32

    # networks and preprocessing
    branch_channels: int = 50
    image_height: int = 256
    image_width: int = 256
    cover_channels: int = 3
    crop_size: int = 224
    records_per_image: int = 1

    # metrics and baselines
    lsb_bits: int = 1
    delta: float = 0.001
    psnr_mode: str = "standard"
    alphas: Tuple[float, ...] = field(default=(0.2, 0.5, 0.8, 1.0), metadata=_listed(float))
    sweep_seeds: Tuple[int, ...] = field(default=(), metadata=_listed(int))

    # paths ("" = not set)
    secrets_dir: str = ""
    covers_dir: str = ""
    checkpoint: str = ""
    history_csv: str = ""
    metrics_csv: str = ""

    def __post_init__(self):
        if self.crop_size < 0:
            raise ConfigError(f"crop_size must be >= 0 (0 disables cropping), got {self.crop_size}")
        # build the typed views once so bad values fail early
        self.training_config()
        self.network_config()
        self.lsb_config()
        self.psnr()

    @classmethod
    def keys(cls) -> Tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    def training_config(self) -> TrainingConfig:
        return TrainingConfig(
            batch_size=self.batch_size,
            max_iterations=self.max_iterations,
            learning_rate=self.learning_rate,
            beta1=self.beta1,
            beta2=self.beta2,
            adam_epsilon=self.adam_epsilon,
            loss_weights=LossWeights(self.alpha, self.beta),
            seed=self.seed,
            early_stop=EarlyStopConfig(self.early_stop_window, self.early_stop_min_rel_improvement),
            eval_pairs=self.eval_pairs,
            precision=Precision.from_bits(self.precision),
            log_interval=self.log_interval,
            checkpoint_interval=self.checkpoint_interval,
        )

    def network_config(self) -> NetworkConfig:
        return NetworkConfig(
            branch_channels=self.branch_channels,
            image_height=self.image_height,
            image_width=self.image_width,
            cover_channels=self.cover_channels,
        )

    def lsb_config(self) -> LsbConfig:
        return LsbConfig(self.lsb_bits)

    def psnr(self) -> PsnrMode:
        try:
            return PsnrMode(self.psnr_mode)
        except ValueError:
            choices = ", ".join(m.value for m in PsnrMode)
            raise ConfigError(f"psnr_mode must be one of {choices}, got {self.psnr_mode!r}") from None

    def with_values(self, values: Mapping[str, str]) -> "RunConfig":
        """A copy with string values coerced onto the matching fields."""
        known = {f.name: f for f in fields(self)}
        updates: Dict[str, Any] = {}
        for key, raw in values.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            if raw is None:
                raise ConfigError(f"config key {key!r} has no value")
            updates[key] = _coerce(known[key], raw)
        return replace(self, **updates)

    def to_text(self, keys: Optional[Sequence[str]] = None) -> str:
        """Flat key=value text for every field, or only for ``keys`` in that order."""
        known = {f.name: f for f in fields(self)}
        unknown = [key for key in (keys or ()) if key not in known]
        if unknown:
            raise ConfigError(f"unknown config keys {unknown}")
        lines = []
        for f in [known[key] for key in keys] if keys else fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            lines.append(f"{f.name}={value}")
        return "\n".join(lines) + "\n"


def _coerce(spec, raw: str) -> Any:
    raw = raw.strip()
    default = spec.default
    try:
        if isinstance(default, tuple):
            item = spec.metadata["item"]
            return tuple(item(part.strip()) for part in raw.split(",") if part.strip())
        if isinstance(default, bool):
            if raw.lower() not in ("1", "0", "true", "false", "yes", "no"):
                raise ValueError(raw)
            return raw.lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {spec.name}: {raw!r}") from None


def parse_overrides(pairs: Sequence[str]) -> Dict[str, str]:
    """Turn ``key=value`` strings into a dict (later entries win)."""
    values: Dict[str, str] = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override must look like key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        values[key.strip()] = value
    return values


def load_run_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Sequence[str] = (),
    environ: Optional[Mapping[str, str]] = None,
) -> RunConfig:
    """
    Resolve a RunConfig from defaults, file, overrides and environment.

    Raises:
        ConfigError: For unknown keys, bad values or a missing config file
    """
    config = RunConfig()
    if path:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        config = config.with_values(dotenv_values(path))
        logger.debug("Read config file %s", path)

    config = config.with_values(parse_overrides(overrides))

    environ = os.environ if environ is None else environ
    seed = environ.get(SEED_ENV_VAR)
    if seed:
        config = config.with_values({"seed": seed})
        logger.debug("Seed overridden by %s=%s", SEED_ENV_VAR, seed)
    return config
