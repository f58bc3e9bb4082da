"""
Synthetic vendor-payment records.

Stands in for public municipal payment ledgers: about ten categorical columns
with skewed value frequencies plus one log-normal amount column.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from ..core.errors import ConfigError
from .tabular_codec import DEFAULT_BINS, AttributeKind, AttributeSpec

logger = logging.getLogger(__name__)

DEFAULT_COLUMNS: Tuple[str, ...] = (
    "vendor_name",
    "department",
    "expense_category",
    "contract_type",
    "fund",
    "cost_center",
    "payment_method",
    "region",
    "fiscal_quarter",
    "document_type",
)
DEFAULT_CARDINALITIES: Tuple[int, ...] = (30, 25, 20, 18, 15, 15, 15, 12, 10, 8)
AMOUNT_COLUMN = "amount"


@dataclass(frozen=True)
class PaymentSpec:
    """
    Shape of the synthetic ledger.

    With the defaults, and a corpus large enough to show every value,
    D = sum(cardinalities) + amount_bins = 168 + 32 = 200.
    """
    columns: Tuple[str, ...] = DEFAULT_COLUMNS
    cardinalities: Tuple[int, ...] = DEFAULT_CARDINALITIES
    amount_bins: int = DEFAULT_BINS
    amount_log_mean: float = 6.0
    amount_log_sigma: float = 1.2
    skew: float = 1.0  # Zipf exponent of categorical value frequencies

    def __post_init__(self):
        if len(self.columns) != len(self.cardinalities):
            raise ConfigError(
                f"{len(self.columns)} columns but {len(self.cardinalities)} cardinalities"
            )
        if any(c < 1 for c in self.cardinalities):
            raise ConfigError(f"cardinalities must be >= 1, got {self.cardinalities}")
        if self.amount_bins < 1:
            raise ConfigError(f"amount_bins must be >= 1, got {self.amount_bins}")
        if AMOUNT_COLUMN in self.columns:
            raise ConfigError(f"'{AMOUNT_COLUMN}' is reserved for the numeric column")

    @property
    def header(self) -> List[str]:
        return list(self.columns) + [AMOUNT_COLUMN]

    def attribute_specs(self) -> List[AttributeSpec]:
        specs = [AttributeSpec(name, AttributeKind.CATEGORICAL) for name in self.columns]
        specs.append(AttributeSpec(AMOUNT_COLUMN, AttributeKind.NUMERIC, bins=self.amount_bins))
        return specs

    @property
    def expected_dims(self) -> int:
        return sum(self.cardinalities) + self.amount_bins


def generate_synthetic_payments(n: int, seed: int = 0, spec: PaymentSpec = PaymentSpec()) -> List[Dict[str, str]]:
    """
    Generate n deterministic payment records with string-valued cells.

    Every categorical value appears at least once when n >= its cardinality,
    so a fitted schema reaches ``spec.expected_dims``.

    Args:
        n: Number of records (>= 1)
        seed: PRNG seed
        spec: Column layout

    Returns:
        Records keyed by ``spec.header``
    """
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)

    columns: Dict[str, np.ndarray] = {}
    for name, cardinality in zip(spec.columns, spec.cardinalities):
        weights = 1.0 / np.arange(1, cardinality + 1) ** spec.skew
        drawn = rng.choice(cardinality, size=n, p=weights / weights.sum())
        covered = min(n, cardinality)
        positions = rng.choice(n, size=covered, replace=False)
        drawn[positions] = rng.permutation(cardinality)[:covered]
        columns[name] = drawn

    amounts = rng.lognormal(spec.amount_log_mean, spec.amount_log_sigma, size=n)

    records = []
    for i in range(n):
        record = {name: f"{name}_{int(columns[name][i]):03d}" for name in spec.columns}
        record[AMOUNT_COLUMN] = f"{amounts[i]:.2f}"
        records.append(record)
    logger.debug("Generated %d synthetic payments (seed %d)", n, seed)
    return records
