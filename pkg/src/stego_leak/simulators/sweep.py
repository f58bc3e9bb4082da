"""
Alpha sweep: independent seeded train + evaluate runs per cover-loss weight.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from ..core.errors import ConfigError
from ..core.models import NetworkConfig, PsnrMode, TrainingConfig
from ..evaluation.metrics import CSV_HEADER, DEFAULT_DELTA, MetricsReport
from ..networks.stego_networks import build_model
from .trainer import PairSampler, evaluate, train, with_alpha

logger = logging.getLogger(__name__)

SamplerFactory = Callable[[int], PairSampler]

SPREAD_COLUMNS = ["L_all", "L_mse", "L_bce", "PSNR", "SSIM", "BACC"]


@dataclass
class SweepResult:
    """
    One row of the sweep.

    ``report`` holds per-metric means over ``runs``; ``spread`` the standard
    deviations (zero for a single seed).
    """
    alpha: float
    report: MetricsReport
    runs: List[MetricsReport] = field(default_factory=list, repr=False)
    spread: Dict[str, float] = field(default_factory=dict)


def _mean_report(runs: Sequence[MetricsReport]) -> MetricsReport:
    if len(runs) == 1:
        return runs[0]
    first = runs[0]
    return MetricsReport(
        bpp=first.bpp,
        alpha=first.alpha,
        beta=first.beta,
        loss_all=float(np.mean([r.loss_all for r in runs])),
        loss_mse=float(np.mean([r.loss_mse for r in runs])),
        loss_bce=float(np.mean([r.loss_bce for r in runs])),
        psnr_db=float(np.mean([r.psnr_db for r in runs])),
        ssim=float(np.mean([r.ssim for r in runs])),
        bacc=float(np.mean([r.bacc for r in runs])),
        n_pairs=sum(r.n_pairs for r in runs),
    )


def _spread(runs: Sequence[MetricsReport]) -> Dict[str, float]:
    rows = pd.DataFrame([r.to_row() for r in runs])
    return {column: float(rows[column].std(ddof=0)) for column in SPREAD_COLUMNS}


def alpha_sweep(
    base_config: TrainingConfig,
    network_config: NetworkConfig,
    alphas: Sequence[float],
    train_sampler: SamplerFactory,
    eval_sampler: SamplerFactory,
    seeds: Optional[Sequence[int]] = None,
    eval_pairs: Optional[int] = None,
    delta: float = DEFAULT_DELTA,
    psnr_mode: PsnrMode = PsnrMode.STANDARD,
    progress: bool = False,
) -> List[SweepResult]:
    """
    Train and evaluate one model per alpha.

    The run for alphas[i] uses seed base + i, where base is base_config.seed
    or, when ``seeds`` is given, each listed seed in turn.

    Args:
        base_config: Settings shared by every run
        network_config: Network geometry
        alphas: Cover-loss weights to sweep
        train_sampler: Builds the training pair stream for a seed
        eval_sampler: Builds the evaluation pair stream for a seed
        seeds: Optional base seeds for repeated runs
        eval_pairs: Evaluation pairs per run (defaults to base_config.eval_pairs)
        delta: BACC tolerance
        psnr_mode: PSNR convention
        progress: Show progress bars

    Returns:
        One SweepResult per alpha, in input order
    """
    if not alphas:
        raise ConfigError("alpha sweep needs at least one alpha")
    bases = list(seeds) if seeds else [base_config.seed]
    n_eval = eval_pairs or base_config.eval_pairs

    results = []
    for index, alpha in enumerate(alphas):
        runs = []
        for base in bases:
            seed = base + index
            config = with_alpha(base_config, alpha, seed)
            logger.info("Sweep run alpha=%g seed=%d", alpha, seed)
            model = build_model(network_config, seed=seed, dtype=config.precision.dtype)
            train(model, train_sampler(seed), config, progress=progress)
            runs.append(
                evaluate(
                    model,
                    n_eval,
                    eval_sampler(seed),
                    delta=delta,
                    weights=config.loss_weights,
                    psnr_mode=psnr_mode,
                    progress=progress,
                )
            )
        results.append(SweepResult(alpha, _mean_report(runs), runs, _spread(runs)))
    return results


def sweep_frame(results: Sequence[SweepResult]) -> pd.DataFrame:
    """Result-table rows plus a ``<metric>_std`` column per spread metric."""
    rows = []
    for result in results:
        row = result.report.to_row()
        row.update({f"{k}_std": v for k, v in result.spread.items()})
        rows.append(row)
    return pd.DataFrame(rows, columns=CSV_HEADER + [f"{c}_std" for c in SPREAD_COLUMNS])


def write_sweep_csv(results: Sequence[SweepResult], path: Union[str, Path]) -> None:
    sweep_frame(results).to_csv(path, index=False)
