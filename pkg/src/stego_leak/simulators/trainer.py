"""
Training harness for the stego networks.

Pairs secrets with randomly drawn covers, runs mini-batch Adam on the
combined loss, stops early once the windowed loss plateaus, evaluates the
secrecy/accuracy metrics and persists checkpoints that can be resumed.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from dotenv import dotenv_values
from tqdm import tqdm

from ..core.checkpoint import read_tensors, write_tensors
from ..core.errors import CheckpointError, ConfigError, TrainingDivergedError
from ..core.models import EarlyStopConfig, LossWeights, NetworkConfig, Precision, PsnrMode, TrainingConfig
from ..core.optim import Adam, AdamState
from ..evaluation.losses import StegoPair, batch_losses, combine, cover_loss, secret_loss
from ..evaluation.metrics import DEFAULT_DELTA, MetricsReport, PairMetrics, bit_accuracy, psnr, ssim
from ..networks.stego_networks import StegoBackend, StegoModel, build_model, full_forward
from ..utils.config import RunConfig

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
Pair = Tuple[np.ndarray, np.ndarray]

HISTORY_COLUMNS = ["iteration", "loss_all", "loss_mse", "loss_bce"]


class PairSampler:
    """
    Seeded stream of (secret, cover) pairs.

    Secrets are cycled in a freshly shuffled order each pass; covers are drawn
    uniformly with replacement. Two samplers with the same inputs and seed
    yield the same sequence.

    Attributes:
        payload_dims: D of the secrets, used for BPP when known
        drawn: Number of pairs produced so far
    """

    def __init__(
        self,
        secrets: Sequence[np.ndarray],
        covers: Sequence[np.ndarray],
        seed: int = 0,
        payload_dims: Optional[int] = None,
    ):
        if len(secrets) == 0:
            raise ConfigError("pair sampler needs at least one secret image")
        if len(covers) == 0:
            raise ConfigError("pair sampler needs at least one cover image")
        self.secrets = [np.asarray(s) for s in secrets]
        self.covers = [np.asarray(c) for c in covers]
        self.seed = seed
        self.payload_dims = payload_dims
        self.drawn = 0
        self._rng = np.random.default_rng(seed)
        self._order = np.empty(0, dtype=np.int64)
        self._cursor = 0

    def next_pair(self) -> Pair:
        if self._cursor >= len(self._order):
            self._order = self._rng.permutation(len(self.secrets))
            self._cursor = 0
        secret = self.secrets[self._order[self._cursor]]
        self._cursor += 1
        cover = self.covers[int(self._rng.integers(len(self.covers)))]
        self.drawn += 1
        return secret, cover

    def batch(self, size: int) -> List[Pair]:
        return [self.next_pair() for _ in range(size)]

    def skip(self, n: int) -> None:
        """Advance the stream by n pairs (used when resuming)."""
        for _ in range(n):
            self.next_pair()

    def __iter__(self) -> Iterator[Pair]:
        while True:
            yield self.next_pair()


@dataclass(frozen=True)
class HistoryRecord:
    iteration: int
    loss_all: float
    loss_mse: float
    loss_bce: float


@dataclass
class TrainingHistory:
    """Logged losses; iterations are strictly increasing."""
    records: List[HistoryRecord] = field(default_factory=list)

    def append(self, iteration: int, loss_all: float, loss_mse: float, loss_bce: float) -> None:
        if self.records and iteration <= self.records[-1].iteration:
            raise ConfigError(
                f"history iterations must increase: {iteration} after {self.records[-1].iteration}"
            )
        self.records.append(HistoryRecord(iteration, loss_all, loss_mse, loss_bce))

    def __len__(self) -> int:
        return len(self.records)

    @property
    def losses(self) -> List[float]:
        return [r.loss_all for r in self.records]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [(r.iteration, r.loss_all, r.loss_mse, r.loss_bce) for r in self.records],
            columns=HISTORY_COLUMNS,
        )

    def to_csv(self, path: PathLike) -> None:
        self.to_frame().to_csv(path, index=False)

    @classmethod
    def from_csv(cls, path: PathLike) -> "TrainingHistory":
        frame = pd.read_csv(path, float_precision="round_trip")
        missing = [c for c in HISTORY_COLUMNS if c not in frame.columns]
        if missing:
            raise CheckpointError(f"{path}: history lacks columns {missing}")
        history = cls()
        for row in frame.itertuples(index=False):
            history.append(int(row.iteration), float(row.loss_all), float(row.loss_mse), float(row.loss_bce))
        return history


class EarlyStopper:
    """
    Stops when the mean of the latest window of logged losses improves on the
    previous window by less than min_rel_improvement (relative).

    Checked at window boundaries only, from 2 x window logged values on.
    """

    def __init__(self, config: EarlyStopConfig):
        self.config = config
        self.values: List[float] = []

    def update(self, loss: float) -> bool:
        self.values.append(loss)
        window = self.config.window
        n = len(self.values)
        if n < 2 * window or n % window != 0:
            return False
        previous = float(np.mean(self.values[n - 2 * window : n - window]))
        current = float(np.mean(self.values[n - window :]))
        improvement = (previous - current) / abs(previous) if previous != 0 else 0.0
        logger.debug("Early-stop check at %d logged steps: relative improvement %.3g", n, improvement)
        return improvement < self.config.min_rel_improvement


@dataclass
class TrainingResult:
    model: StegoModel
    history: TrainingHistory
    optimizer: Adam
    iteration: int
    stopped_early: bool = False


def _make_optimizer(model: StegoModel, config: TrainingConfig) -> Adam:
    return Adam(
        model.named_parameters(),
        lr=config.learning_rate,
        beta1=config.beta1,
        beta2=config.beta2,
        eps=config.adam_epsilon,
    )


def train(
    model: StegoModel,
    sampler: PairSampler,
    config: TrainingConfig,
    history: Optional[TrainingHistory] = None,
    optimizer: Optional[Adam] = None,
    start_iteration: int = 0,
    checkpoint_path: Optional[PathLike] = None,
    progress: bool = True,
) -> TrainingResult:
    """
    Mini-batch training on alpha * mean(cover loss) + beta * mean(secret loss).

    Each iteration draws batch_size pairs, runs the forward pass on every
    pair, backpropagates the batch loss and takes one Adam step.

    Args:
        model: Networks to train (updated in place)
        sampler: Pair stream, positioned where training should continue
        config: Optimisation settings
        history: Existing history when resuming
        optimizer: Existing optimizer state when resuming
        start_iteration: Iterations already completed
        checkpoint_path: Where periodic checkpoints go, if enabled
        progress: Show a progress bar

    Returns:
        TrainingResult with the history and the last completed iteration

    Raises:
        TrainingDivergedError: If the combined loss becomes non-finite
    """
    history = history if history is not None else TrainingHistory()
    optimizer = optimizer if optimizer is not None else _make_optimizer(model, config)
    stopper = EarlyStopper(config.early_stop)
    stopper.values = history.losses

    weights = config.loss_weights
    iteration = start_iteration
    stopped = False
    logger.info(
        "Training %d parameters: batch %d, lr %g, alpha %g, beta %g, up to %d iterations",
        model.parameter_count(), config.batch_size, config.learning_rate,
        weights.alpha, weights.beta, config.max_iterations,
    )

    bar = tqdm(
        range(start_iteration + 1, config.max_iterations + 1),
        desc="Training",
        disable=not progress,
        initial=start_iteration,
        total=config.max_iterations,
    )
    for step in bar:
        optimizer.zero_grad()
        batch = []
        for secret, cover in sampler.batch(config.batch_size):
            _, container, revealed = full_forward(model, secret, cover)
            batch.append(StegoPair(secret, cover, container, revealed))
        mean_cover, mean_secret = batch_losses(batch)
        loss = combine(mean_cover, mean_secret, weights)
        loss_value = float(loss)
        if not math.isfinite(loss_value):
            raise TrainingDivergedError(step, loss_value)

        loss.backward()
        optimizer.step()
        iteration = step

        if step % config.log_interval == 0:
            history.append(step, loss_value, float(mean_cover), float(mean_secret))
            logger.debug("iteration %d: loss_all=%.6g", step, loss_value)
            bar.set_postfix(loss=f"{loss_value:.4g}")
            if stopper.update(loss_value):
                logger.info("Early stop at iteration %d (loss plateaued)", step)
                stopped = True

        if checkpoint_path and config.checkpoint_interval and step % config.checkpoint_interval == 0:
            save_checkpoint(model, checkpoint_path, history, optimizer, step)
        if stopped:
            break
    bar.close()

    logger.info("Training finished at iteration %d", iteration)
    return TrainingResult(model, history, optimizer, iteration, stopped)


def evaluate(
    backend: StegoBackend,
    n_pairs: int,
    sampler: PairSampler,
    delta: float = DEFAULT_DELTA,
    weights: LossWeights = LossWeights(),
    psnr_mode: PsnrMode = PsnrMode.STANDARD,
    payload_dims: Optional[int] = None,
    progress: bool = False,
) -> MetricsReport:
    """
    Mean PSNR, SSIM, BACC and losses over n_pairs freshly drawn pairs.

    Evaluation pairs come from the same secret/cover population as training.

    Args:
        backend: Trained model or any object with the same forward()
        n_pairs: Number of pairs (>= 1)
        sampler: Pair stream
        delta: BACC tolerance
        weights: Loss weights for L_all
        psnr_mode: PSNR convention
        payload_dims: D for BPP; defaults to the sampler's, then to H * W
        progress: Show a progress bar
    """
    if n_pairs < 1:
        raise ConfigError(f"n_pairs must be >= 1, got {n_pairs}")
    pairs = []
    cover_shape: Tuple[int, ...] = ()
    for _ in tqdm(range(n_pairs), desc="Evaluating", disable=not progress):
        secret, cover = sampler.next_pair()
        _, container, revealed = backend.forward(secret, cover)
        cover_shape = cover.shape
        pairs.append(
            PairMetrics(
                psnr_db=psnr(cover, container, psnr_mode),
                ssim=ssim(cover, container),
                bacc=bit_accuracy(secret, revealed, delta),
                loss_mse=float(cover_loss(cover, container)),
                loss_bce=float(secret_loss(secret, revealed)),
            )
        )

    if payload_dims is None:
        payload_dims = sampler.payload_dims or cover_shape[1] * cover_shape[2]
    report = MetricsReport.aggregate(pairs, payload_dims, cover_shape, weights.alpha, weights.beta)
    logger.info(
        "Evaluated %d pairs: PSNR %.2f dB, SSIM %.4f, BACC %.4f",
        n_pairs, report.psnr_db, report.ssim, report.bacc,
    )
    return report


# checkpoints

ADAM_M_PREFIX = "adam.m."
ADAM_V_PREFIX = "adam.v."
ADAM_STEP_PREFIX = "adam.step."
ITERATION_KEY = "train.iteration"

# RunConfig keys stored next to a checkpoint
SIDECAR_KEYS = ("branch_channels", "image_height", "image_width", "cover_channels", "precision")


def config_path(path: PathLike) -> Path:
    return Path(f"{path}.cfg")


def history_path(path: PathLike) -> Path:
    return Path(f"{path}.history.csv")


def _sidecar_text(config: NetworkConfig, precision: Precision) -> str:
    run = RunConfig(**config.to_dict(), precision=precision.value)
    return run.to_text(SIDECAR_KEYS)


def save_checkpoint(
    model: StegoModel,
    path: PathLike,
    history: Optional[TrainingHistory] = None,
    optimizer: Optional[Adam] = None,
    iteration: int = 0,
) -> None:
    """
    Write parameters (and optimizer state for resuming) plus the .cfg and
    .history.csv sidecars.
    """
    tensors: Dict[str, np.ndarray] = {name: p.data for name, p in model.named_parameters().items()}
    if optimizer is not None:
        for name, state in optimizer.states.items():
            tensors[ADAM_M_PREFIX + name] = state.m
            tensors[ADAM_V_PREFIX + name] = state.v
            tensors[ADAM_STEP_PREFIX + name] = np.array([state.step], dtype=np.float64)
        tensors[ITERATION_KEY] = np.array([iteration], dtype=np.float64)

    Path(path).parent.mkdir(parents=True, exist_ok=True)
    write_tensors(path, tensors)
    precision = Precision.from_bits(model.dtype.itemsize * 8)
    config_path(path).write_text(_sidecar_text(model.config, precision), encoding="utf-8")
    if history is not None:
        history.to_csv(history_path(path))
    logger.info("Saved checkpoint %s", path)


@dataclass
class LoadedCheckpoint:
    model: StegoModel
    history: TrainingHistory
    adam_states: Dict[str, AdamState]
    iteration: int

    def optimizer(self, config: TrainingConfig) -> Adam:
        """An Adam instance carrying the saved moments and step counts."""
        optimizer = _make_optimizer(self.model, config)
        optimizer.load_states(self.adam_states)
        return optimizer


def read_network_config(path: PathLike) -> Tuple[NetworkConfig, Precision]:
    sidecar = config_path(path)
    if not sidecar.exists():
        raise CheckpointError(f"missing checkpoint config {sidecar}")
    values = dotenv_values(sidecar)
    missing = [key for key in SIDECAR_KEYS if key not in values]
    if missing:
        raise CheckpointError(f"{sidecar}: missing keys {missing}")
    try:
        run = RunConfig().with_values({key: values[key] for key in SIDECAR_KEYS})
    except ConfigError as exc:
        raise CheckpointError(f"{sidecar}: {exc}") from None
    return run.network_config(), Precision.from_bits(run.precision)


def load_checkpoint(path: PathLike, precision: Optional[Precision] = None) -> LoadedCheckpoint:
    """
    Rebuild a model from a checkpoint and its sidecars.

    Raises:
        CheckpointError: On unknown, missing or mis-shaped parameters, or a bad file
    """
    config, saved_precision = read_network_config(path)
    dtype = (precision or saved_precision).dtype
    tensors = read_tensors(path)
    model = build_model(config, seed=0, dtype=dtype)

    params = model.named_parameters()
    for name, param in params.items():
        if name not in tensors:
            raise CheckpointError(f"{path}: missing parameter {name!r}")
        value = tensors.pop(name)
        if value.shape != param.data.shape:
            raise CheckpointError(f"{path}: {name!r} has shape {value.shape}, expected {param.data.shape}")
        param.data = value.astype(dtype)

    states: Dict[str, AdamState] = {}
    for name, param in params.items():
        keys = (ADAM_M_PREFIX + name, ADAM_V_PREFIX + name, ADAM_STEP_PREFIX + name)
        if all(k in tensors for k in keys):
            m, v, step = (tensors.pop(k) for k in keys)
            states[name] = AdamState(step=int(step[0]), m=m.astype(dtype), v=v.astype(dtype))
    iteration = int(tensors.pop(ITERATION_KEY, np.zeros(1))[0])

    if tensors:
        raise CheckpointError(f"{path}: unknown parameter names {sorted(tensors)[:3]}")

    history = TrainingHistory.from_csv(history_path(path)) if history_path(path).exists() else TrainingHistory()
    logger.info("Loaded checkpoint %s (iteration %d)", path, iteration)
    return LoadedCheckpoint(model, history, states, iteration)


def resume(
    path: PathLike,
    sampler: PairSampler,
    config: TrainingConfig,
    checkpoint_path: Optional[PathLike] = None,
    progress: bool = True,
) -> TrainingResult:
    """
    Continue training from a checkpoint.

    The sampler must be freshly constructed with the original seed; it is
    fast-forwarded past the pairs the saved iterations consumed.
    """
    loaded = load_checkpoint(path, config.precision)
    if loaded.iteration >= config.max_iterations:
        logger.info("Checkpoint already at iteration %d", loaded.iteration)
        return TrainingResult(loaded.model, loaded.history, loaded.optimizer(config), loaded.iteration)
    sampler.skip(loaded.iteration * config.batch_size)
    return train(
        loaded.model,
        sampler,
        config,
        history=loaded.history,
        optimizer=loaded.optimizer(config),
        start_iteration=loaded.iteration,
        checkpoint_path=checkpoint_path,
        progress=progress,
    )


def with_alpha(config: TrainingConfig, alpha: float, seed: int) -> TrainingConfig:
    return replace(config, loss_weights=replace(config.loss_weights, alpha=alpha), seed=seed)
