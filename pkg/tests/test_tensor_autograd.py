"""
Autograd ops, Adam and the checkpoint container.
"""

import struct
import sys
from pathlib import Path

import numpy as np
import pytest

# Add src to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from stego_leak.core import functional as F
from stego_leak.core import tensor as T
from stego_leak.core.checkpoint import MAGIC, read_tensors, write_tensors
from stego_leak.core.errors import CheckpointError, ShapeError
from stego_leak.core.optim import Adam, AdamState, adam_step
from stego_leak.core.tensor import Tensor

from gradcheck import numerical_gradient


def _brute_conv(x, kernels, bias, padding):
    c_out, c_in, k, _ = kernels.shape
    top, bottom, left, right = padding
    padded = np.pad(x, ((0, 0), (top, bottom), (left, right)))
    _, height, width = x.shape
    out = np.zeros((c_out, height, width))
    for c in range(c_out):
        for y in range(height):
            for xx in range(width):
                total = bias[c]
                for i in range(c_in):
                    for dy in range(k):
                        for dx in range(k):
                            total += kernels[c, i, dy, dx] * padded[i, y + dy, xx + dx]
                out[c, y, xx] = total
    return out


def test_same_padding_odd_and_even_kernels():
    assert F.same_padding(3) == (1, 1, 1, 1)
    assert F.same_padding(5) == (2, 2, 2, 2)
    # even kernels put the extra row/column after
    assert F.same_padding(4) == (1, 2, 1, 2)
    with pytest.raises(ShapeError):
        F.same_padding(0)


@pytest.mark.parametrize("k", [3, 4, 5])
def test_conv_forward_matches_loop(k):
    rng = np.random.default_rng(k)
    x = rng.normal(size=(2, 6, 7))
    kernels = rng.normal(size=(3, 2, k, k))
    bias = rng.normal(size=3)
    padding = F.same_padding(k)

    out = F.conv2d_forward(x, kernels, bias, padding)
    assert out.shape == (3, 6, 7)
    np.testing.assert_allclose(out, _brute_conv(x, kernels, bias, padding), rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("k", [3, 4, 5])
def test_conv_backward_matches_finite_differences(k):
    rng = np.random.default_rng(10 + k)
    x = rng.normal(size=(2, 6, 6))
    kernels = rng.normal(size=(2, 2, k, k))
    bias = rng.normal(size=2)
    readout = rng.normal(size=(2, 6, 6))
    padding = F.same_padding(k)

    def loss():
        return float(np.sum(F.conv2d_forward(x, kernels, bias, padding) * readout))

    gi, gk, gb = F.conv2d_backward(x, kernels, bias, padding, readout)
    np.testing.assert_allclose(gi, numerical_gradient(loss, x), rtol=1e-4, atol=1e-7)
    np.testing.assert_allclose(gk, numerical_gradient(loss, kernels), rtol=1e-4, atol=1e-7)
    np.testing.assert_allclose(gb, numerical_gradient(loss, bias), rtol=1e-4, atol=1e-7)


def test_conv_rejects_bad_shapes():
    x = np.zeros((2, 5, 5))
    with pytest.raises(ShapeError):
        F.conv2d_forward(x, np.zeros((1, 3, 3, 3)), np.zeros(1), F.same_padding(3))
    with pytest.raises(ShapeError):
        F.conv2d_forward(x, np.zeros((1, 2, 3, 3)), np.zeros(2), F.same_padding(3))
    with pytest.raises(ShapeError):
        F.conv2d_forward(x, np.zeros((1, 2, 3, 3)), np.zeros(1), (0, 0, 0, 0))


def test_relu_and_sigmoid_gradients():
    rng = np.random.default_rng(3)
    # keep values away from the relu kink
    values = rng.normal(size=(2, 4, 4))
    values = np.sign(values) * (0.1 + np.abs(values))
    upstream = rng.normal(size=values.shape)

    relu_grad = F.relu_backward(values, upstream)
    numeric = numerical_gradient(lambda: float(np.sum(F.relu_forward(values) * upstream)), values)
    np.testing.assert_allclose(relu_grad, numeric, rtol=1e-4, atol=1e-7)

    out = F.sigmoid_forward(values)
    sig_grad = F.sigmoid_backward(out, upstream)
    numeric = numerical_gradient(lambda: float(np.sum(F.sigmoid_forward(values) * upstream)), values)
    np.testing.assert_allclose(sig_grad, numeric, rtol=1e-4, atol=1e-7)


def test_relu_at_zero_passes_no_gradient():
    grad = F.relu_backward(np.array([0.0, 1.0, -1.0]), np.ones(3))
    assert grad.tolist() == [0.0, 1.0, 0.0]


def test_sigmoid_is_stable_for_large_inputs():
    out = F.sigmoid_forward(np.array([-1000.0, 0.0, 1000.0]))
    assert np.all(np.isfinite(out))
    assert out[1] == pytest.approx(0.5)
    assert out[0] == pytest.approx(0.0, abs=1e-300)
    assert out[2] == pytest.approx(1.0)


def test_concat_backward_splits_in_order():
    a = Tensor(np.ones((1, 3, 3)), requires_grad=True)
    b = Tensor(np.ones((2, 3, 3)), requires_grad=True)
    out = T.concat_channels([a, b])
    assert out.shape == (3, 3, 3)
    out.backward(np.arange(27, dtype=np.float64).reshape(3, 3, 3))
    np.testing.assert_array_equal(a.grad, np.arange(9).reshape(1, 3, 3))
    np.testing.assert_array_equal(b.grad, np.arange(9, 27).reshape(2, 3, 3))


def test_concat_rejects_mismatched_spatial_dims():
    with pytest.raises(ShapeError):
        F.concat_channels_forward([np.zeros((1, 3, 3)), np.zeros((1, 4, 3))])


def test_loss_gradients_match_finite_differences():
    rng = np.random.default_rng(5)
    target = rng.integers(0, 2, size=(1, 4, 4)).astype(np.float64)
    prediction = rng.uniform(0.05, 0.95, size=(1, 4, 4))

    p = Tensor(prediction, requires_grad=True)
    T.sum_squared_error(target, p).backward()
    numeric = numerical_gradient(lambda: float(np.sum((target - prediction) ** 2)), prediction)
    np.testing.assert_allclose(p.grad, numeric, rtol=1e-4, atol=1e-7)

    def bce():
        return float(-np.sum(target * np.log(prediction) + (1 - target) * np.log(1 - prediction)))

    p = Tensor(prediction, requires_grad=True)
    T.binary_cross_entropy_sum(target, p).backward()
    np.testing.assert_allclose(p.grad, numerical_gradient(bce, prediction), rtol=1e-4, atol=1e-7)


def test_composed_graph_accumulates_shared_inputs():
    rng = np.random.default_rng(8)
    x_data = rng.normal(size=(1, 5, 5))
    kernels_data = rng.normal(size=(2, 1, 3, 3))
    bias_data = np.array([0.3, -0.2])
    target = rng.uniform(size=(2, 5, 5))

    x = Tensor(x_data, requires_grad=True)
    kernels = Tensor(kernels_data, requires_grad=True)
    bias = Tensor(bias_data, requires_grad=True)
    hidden = T.sigmoid(T.conv2d(x, kernels, bias, F.same_padding(3)))
    # x feeds the loss twice: through the conv and directly
    loss = T.add(T.sum_squared_error(target, hidden), T.scale(T.sum_squared_error(np.zeros((1, 5, 5)), x), 0.5))
    loss.backward()

    def forward():
        h = F.sigmoid_forward(F.conv2d_forward(x_data, kernels_data, bias_data, F.same_padding(3)))
        return float(np.sum((target - h) ** 2) + 0.5 * np.sum(x_data ** 2))

    np.testing.assert_allclose(x.grad, numerical_gradient(forward, x_data), rtol=1e-4, atol=1e-7)
    np.testing.assert_allclose(kernels.grad, numerical_gradient(forward, kernels_data), rtol=1e-4, atol=1e-7)
    np.testing.assert_allclose(bias.grad, numerical_gradient(forward, bias_data), rtol=1e-4, atol=1e-7)


def test_backward_needs_scalar_seed():
    t = Tensor(np.ones((2, 2)), requires_grad=True)
    out = T.scale(t, 2.0)
    with pytest.raises(ShapeError):
        out.backward()


def test_non_float_input_becomes_float64():
    assert Tensor([1, 2, 3]).dtype == np.float64
    assert Tensor(np.zeros(2, dtype=np.float32)).dtype == np.float32


def test_first_adam_step_moves_by_learning_rate():
    param = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
    state = AdamState.zeros_like(param)
    grad = np.array([0.5, -4.0, 0.0])
    adam_step(param, grad, state, lr=0.1)

    # bias-corrected first step is lr * g / (|g| + eps)
    expected = np.array([1.0 - 0.1, -2.0 + 0.1, 3.0])
    np.testing.assert_allclose(param.data, expected, atol=1e-6)
    assert state.step == 1
    np.testing.assert_allclose(state.m, 0.1 * grad)
    np.testing.assert_allclose(state.v, 0.001 * grad * grad)


def test_adam_steps_every_parameter():
    params = {
        "a": Tensor(np.zeros(2), requires_grad=True),
        "b": Tensor(np.zeros((1, 2)), requires_grad=True),
    }
    optimizer = Adam(params, lr=0.01)
    params["a"].grad = np.array([1.0, 1.0])
    optimizer.step()
    optimizer.step()
    assert optimizer.step_count == 2
    assert np.all(params["a"].data < 0)
    # no gradient means a zero gradient
    np.testing.assert_array_equal(params["b"].data, np.zeros((1, 2)))
    optimizer.zero_grad()
    assert params["a"].grad is None


def test_checkpoint_round_trip_preserves_order_and_values(tmp_path):
    rng = np.random.default_rng(0)
    tensors = {
        "prep.trunk.k3.0.kernels": rng.normal(size=(2, 1, 3, 3)),
        "prep.trunk.k3.0.bias": rng.normal(size=2),
        "train.iteration": np.array(7.0),
    }
    path = tmp_path / "model.ckpt"
    write_tensors(path, tensors)
    assert path.read_bytes().startswith(MAGIC)

    loaded = read_tensors(path)
    assert list(loaded) == list(tensors)
    for name, value in tensors.items():
        np.testing.assert_array_equal(loaded[name], value)


def test_checkpoint_rejects_bad_magic_and_truncation(tmp_path):
    path = tmp_path / "model.ckpt"
    write_tensors(path, {"w": np.arange(6.0).reshape(2, 3)})
    raw = path.read_bytes()

    truncated = tmp_path / "truncated.ckpt"
    truncated.write_bytes(raw[:-4])
    with pytest.raises(CheckpointError):
        read_tensors(truncated)

    foreign = tmp_path / "foreign.ckpt"
    foreign.write_bytes(b"NOTSTEGO" + raw[len(MAGIC):])
    with pytest.raises(CheckpointError):
        read_tensors(foreign)


def test_checkpoint_records_follow_magic_directly(tmp_path):
    path = tmp_path / "model.ckpt"
    write_tensors(path, {"w": np.arange(3.0)})
    raw = path.read_bytes()

    expected = (
        b"STEGO1"
        + struct.pack("<Q", 1) + b"w"
        + struct.pack("<Q", 1) + struct.pack("<Q", 3)
        + struct.pack("<3d", 0.0, 1.0, 2.0)
    )
    assert raw == expected


def test_checkpoint_rejects_other_versions(tmp_path):
    path = tmp_path / "model.ckpt"
    write_tensors(path, {"w": np.arange(3.0)})
    future = tmp_path / "future.ckpt"
    future.write_bytes(b"STEGO2" + path.read_bytes()[len(MAGIC):])
    with pytest.raises(CheckpointError, match="version"):
        read_tensors(future)
