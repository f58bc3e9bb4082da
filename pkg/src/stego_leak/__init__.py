"""
Stego Leak Package

Hides one-hot encoded tabular records in cover images with jointly trained
preparation, hiding and reveal networks, and measures how well they leak.
"""

__version__ = "1.0.0"
__author__ = "Stego Leak Team"

from .core.errors import StegoError
from .core.models import LossWeights, NetworkConfig, Precision, PsnrMode, TrainingConfig
from .core.tensor import Tensor
from .networks.stego_networks import IdentityBackend, StegoModel, build_model, full_forward
from .data.tabular_codec import AttributeKind, AttributeSpec, TabularSchema, fit_schema, encode_record, decode_bits
from .simulators.trainer import PairSampler, TrainingHistory, evaluate, train
from .evaluation.metrics import MetricsReport

__all__ = [
    # Core
    "StegoError", "Tensor", "LossWeights", "NetworkConfig", "Precision", "PsnrMode", "TrainingConfig",

    # Networks
    "StegoModel", "IdentityBackend", "build_model", "full_forward",

    # Data
    "AttributeKind", "AttributeSpec", "TabularSchema", "fit_schema", "encode_record", "decode_bits",

    # Training and evaluation
    "PairSampler", "TrainingHistory", "train", "evaluate", "MetricsReport",
]
