"""
Preparation, hiding and reveal networks.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add src to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from stego_leak.core.errors import ImageFormatError, SecretFormatError, ShapeError
from stego_leak.core.models import LossWeights, NetworkConfig
from stego_leak.evaluation.losses import StegoPair, combined_loss
from stego_leak.networks.stego_networks import (
    Activation,
    IdentityBackend,
    build_model,
    full_forward,
    hide_forward,
    prep_forward,
    reveal_forward,
)

from gradcheck import numerical_gradient, sample_indices


def _inputs(config: NetworkConfig, seed: int = 0):
    rng = np.random.default_rng(seed)
    secret = rng.integers(0, 2, size=(1, config.image_height, config.image_width)).astype(np.float64)
    cover = rng.uniform(size=(config.cover_channels, config.image_height, config.image_width))
    return secret, cover


@pytest.mark.parametrize("cover_channels", [1, 3])
def test_shapes_and_output_ranges(cover_channels):
    config = NetworkConfig(branch_channels=2, image_height=8, image_width=9, cover_channels=cover_channels)
    model = build_model(config, seed=1)
    secret, cover = _inputs(config)

    prepared, container, revealed = full_forward(model, secret, cover)
    assert prepared.shape == (3, 8, 9)
    assert container.shape == (cover_channels, 8, 9)
    assert revealed.shape == (1, 8, 9)
    for out in (prepared, container, revealed):
        assert np.all(out.data > 0.0) and np.all(out.data < 1.0)


def test_channel_arithmetic():
    config = NetworkConfig(branch_channels=4, image_height=8, image_width=8, cover_channels=1)
    model = build_model(config)
    assert model.hide.in_channels == 3 + 1
    assert config.trunk_channels == 12
    assert model.prep.out_channels == 3
    assert model.hide.out_channels == 1
    assert model.reveal.out_channels == 1
    for network in model.networks():
        for head in network.heads:
            assert head[0].layer.in_channels == config.trunk_channels


def test_composition_equals_separate_calls():
    config = NetworkConfig(branch_channels=2, image_height=8, image_width=8)
    model = build_model(config, seed=3)
    secret, cover = _inputs(config, seed=3)

    prepared, container, revealed = full_forward(model, secret, cover)
    prepared2 = prep_forward(model, secret)
    container2 = hide_forward(model, prepared2, cover)
    revealed2 = reveal_forward(model, container2)
    np.testing.assert_array_equal(prepared.data, prepared2.data)
    np.testing.assert_array_equal(container.data, container2.data)
    np.testing.assert_array_equal(revealed.data, revealed2.data)


def test_same_seed_builds_same_model():
    config = NetworkConfig(branch_channels=2, image_height=8, image_width=8)
    a = build_model(config, seed=11).named_parameters()
    b = build_model(config, seed=11).named_parameters()
    c = build_model(config, seed=12).named_parameters()
    assert list(a) == list(b)
    assert all(np.array_equal(a[name].data, b[name].data) for name in a)
    assert any(not np.array_equal(a[name].data, c[name].data) for name in a)


def test_parameter_names_are_unique_and_prefixed():
    config = NetworkConfig(branch_channels=2, image_height=8, image_width=8)
    model = build_model(config)
    names = list(model.named_parameters())
    assert len(names) == len(set(names))
    assert {name.split(".")[0] for name in names} == {"prep", "hide", "reveal"}
    assert "prep.trunk.k3.0.kernels" in names
    assert model.parameter_count() == sum(p.size for p in model.named_parameters().values())


def test_float32_model_keeps_dtype():
    config = NetworkConfig(branch_channels=2, image_height=8, image_width=8)
    model = build_model(config, dtype=np.float32)
    secret, cover = _inputs(config)
    _, container, revealed = full_forward(model, secret, cover)
    assert container.dtype == np.float32
    assert revealed.dtype == np.float32


def test_rejects_bad_inputs():
    config = NetworkConfig(branch_channels=2, image_height=8, image_width=8)
    model = build_model(config)
    secret, cover = _inputs(config)

    with pytest.raises(SecretFormatError):
        prep_forward(model, secret * 0.5)
    with pytest.raises(ShapeError):
        prep_forward(model, np.zeros((1, 8, 7)))
    with pytest.raises(ImageFormatError):
        full_forward(model, secret, cover + 1.5)
    with pytest.raises(ShapeError):
        full_forward(model, secret, cover[:1])


def test_every_parameter_receives_a_finite_gradient():
    config = NetworkConfig(branch_channels=2, image_height=8, image_width=8)
    model = build_model(config, seed=2)
    secret, cover = _inputs(config, seed=2)

    _, container, revealed = full_forward(model, secret, cover)
    loss = combined_loss([StegoPair(secret, cover, container, revealed)], LossWeights(0.5, 1.0))
    loss.backward()
    for name, param in model.named_parameters().items():
        assert param.grad is not None, name
        assert np.all(np.isfinite(param.grad)), name


@pytest.mark.parametrize("cover_channels", [1, 3])
def test_full_network_gradients_match_finite_differences(cover_channels):
    config = NetworkConfig(branch_channels=2, image_height=8, image_width=8, cover_channels=cover_channels)
    model = build_model(config, seed=4)
    # smooth activations everywhere so differences never straddle a relu kink
    for network in model.networks():
        for block in network.blocks():
            block.activation = Activation.SIGMOID
    secret, cover = _inputs(config, seed=4)
    weights = LossWeights(0.5, 1.0)

    def loss_value():
        _, container, revealed = full_forward(model, secret, cover)
        return float(combined_loss([StegoPair(secret, cover, container, revealed)], weights))

    _, container, revealed = full_forward(model, secret, cover)
    combined_loss([StegoPair(secret, cover, container, revealed)], weights).backward()

    rng = np.random.default_rng(0)
    for name, param in model.named_parameters().items():
        indices = sample_indices(param.shape, 3, rng)
        numeric = numerical_gradient(loss_value, param.data, indices=indices)
        analytic = np.array([param.grad[idx] for idx in indices])
        expected = np.array([numeric[idx] for idx in indices])
        np.testing.assert_allclose(analytic, expected, rtol=1e-4, atol=1e-6, err_msg=name)


def test_identity_backend_passes_images_through():
    secret = np.zeros((1, 4, 4))
    secret[0, 1, 2] = 1.0
    cover = np.full((3, 4, 4), 0.25)
    prepared, container, revealed = IdentityBackend().forward(secret, cover)
    assert prepared.shape == (3, 4, 4)
    np.testing.assert_array_equal(container.data, cover)
    np.testing.assert_array_equal(revealed.data, secret)
