"""
Basic tests for the stego leak package.
"""

import sys
from pathlib import Path
import pytest

# Add src to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

import stego_leak
from stego_leak import (
    AttributeSpec,
    IdentityBackend,
    LossWeights,
    MetricsReport,
    NetworkConfig,
    PairSampler,
    Precision,
    TrainingConfig,
    build_model,
    fit_schema,
)
from stego_leak.core.errors import ConfigError, StegoError
from stego_leak.core.models import EarlyStopConfig, LsbConfig


def test_imports():
    """Test that the public API can be imported."""
    assert stego_leak.__version__
    for name in stego_leak.__all__:
        assert getattr(stego_leak, name) is not None
    assert AttributeSpec is not None
    assert IdentityBackend is not None
    assert MetricsReport is not None
    assert PairSampler is not None
    assert fit_schema is not None


def test_network_config():
    """Test network geometry defaults and validation."""
    config = NetworkConfig()
    assert config.branch_channels == 50
    assert config.kernel_sizes == (3, 4, 5)
    assert config.hide_input_channels == 6
    assert config.trunk_channels == 150
    assert NetworkConfig(cover_channels=1).hide_input_channels == 4

    with pytest.raises(ConfigError):
        NetworkConfig(cover_channels=2)
    with pytest.raises(ConfigError):
        NetworkConfig(branch_channels=0)
    with pytest.raises(ConfigError):
        NetworkConfig(image_height=4)
    with pytest.raises(ConfigError):
        NetworkConfig(kernel_sizes=(3, 5, 7))


def test_training_config():
    """Test training defaults and validation."""
    config = TrainingConfig()
    assert config.batch_size == 6
    assert config.max_iterations == 800_000
    assert config.learning_rate == pytest.approx(1e-5)
    assert config.loss_weights == LossWeights(0.5, 1.0)

    with pytest.raises(ConfigError):
        TrainingConfig(batch_size=0)
    with pytest.raises(ConfigError):
        TrainingConfig(learning_rate=0.0)
    with pytest.raises(ConfigError):
        TrainingConfig(beta1=1.0)
    with pytest.raises(ConfigError):
        EarlyStopConfig(window=1)


def test_precision_and_lsb_config():
    assert Precision.from_bits(32).dtype.itemsize == 4
    assert Precision.from_bits(64).dtype.itemsize == 8
    with pytest.raises(ConfigError):
        Precision.from_bits(16)
    assert LsbConfig().n == 1
    with pytest.raises(ConfigError):
        LsbConfig(0)


def test_errors_share_a_base():
    with pytest.raises(StegoError):
        LsbConfig(0)
    # also plain ValueErrors for callers that don't know the package
    with pytest.raises(ValueError):
        LossWeights(-1.0, 1.0)


def test_build_model_parameter_count_scales_with_width():
    small = build_model(NetworkConfig(branch_channels=2, image_height=8, image_width=8))
    wider = build_model(NetworkConfig(branch_channels=4, image_height=8, image_width=8))
    assert 0 < small.parameter_count() < wider.parameter_count()
