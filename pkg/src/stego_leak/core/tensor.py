"""
Minimal reverse-mode autograd tensor.

Only the ops the preparation, hiding and reveal networks and their losses need
are provided: conv2d, relu, sigmoid, channel concat, and the scalar arithmetic
used to combine losses. Every op records a backward closure and its parents;
``Tensor.backward()`` walks the graph in reverse topological order and
accumulates gradients into ``.grad``.
"""

from __future__ import annotations

from typing import Callable, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import functional as F
from .errors import ShapeError

ArrayLike = Union[np.ndarray, Sequence[float], float]

DEFAULT_DTYPE = np.float64


class Tensor:
    """
    Dense real array that can take part in the gradient tape.

    Attributes:
        data: The values (numpy array, row-major)
        requires_grad: Whether gradients are accumulated for this tensor
        grad: Accumulated gradient, same shape as data, or None
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "name")

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        dtype: Optional[np.dtype] = None,
        name: Optional[str] = None,
    ):
        array = np.asarray(data, dtype=dtype if dtype is not None else None)
        if array.dtype.kind != "f":
            array = array.astype(DEFAULT_DTYPE)
        self.data: np.ndarray = array
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._parents: Tuple[Tensor, ...] = ()
        self._backward: Optional[Callable[[np.ndarray], None]] = None
        self.name = name

    # properties

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def size(self) -> int:
        return int(self.data.size)

    def __float__(self) -> float:
        if self.data.size != 1:
            raise ShapeError("float() of tensor", (1,), self.shape)
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        label = f" {self.name}" if self.name else ""
        return f"<Tensor{label} shape={self.shape} dtype={self.dtype} requires_grad={self.requires_grad}>"

    # gradient bookkeeping

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, grad: np.ndarray) -> None:
        if grad.shape != self.data.shape:
            raise ShapeError("gradient accumulation", self.data.shape, grad.shape)
        if self.grad is None:
            self.grad = np.array(grad, dtype=self.data.dtype, copy=True)
        else:
            self.grad += grad

    def _topological_order(self) -> List["Tensor"]:
        order: List[Tensor] = []
        visited = set()
        stack: List[Tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        return order

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """
        Back-propagate from this tensor.

        Args:
            grad: Upstream gradient; defaults to ones for a scalar tensor
        """
        if not self.requires_grad:
            return
        if grad is None:
            if self.data.size != 1:
                raise ShapeError("implicit backward seed", "scalar tensor", self.shape)
            grad = np.ones_like(self.data)
        grads = {id(self): np.asarray(grad, dtype=self.data.dtype)}

        for node in reversed(self._topological_order()):
            node_grad = grads.pop(id(node), None)
            if node_grad is None:
                continue
            if node._backward is None:
                # leaf
                node._accumulate(node_grad)
                continue
            for parent, parent_grad in zip(node._parents, node._backward(node_grad)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + parent_grad
                else:
                    grads[id(parent)] = parent_grad


def _as_tensor(value: Union[Tensor, ArrayLike], dtype: Optional[np.dtype] = None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value, requires_grad=False, dtype=dtype)


def _result(data: np.ndarray, parents: Iterable[Tensor], backward: Callable) -> Tensor:
    parents = tuple(parents)
    out = Tensor(data, requires_grad=any(p.requires_grad for p in parents))
    if out.requires_grad:
        out._parents = parents
        out._backward = backward
    return out


# network ops


def conv2d(x: Tensor, kernels: Tensor, bias: Tensor, padding: F.Padding) -> Tensor:
    """Autograd wrapper around :func:`functional.conv2d_forward`."""
    out = F.conv2d_forward(x.data, kernels.data, bias.data, padding)

    def backward(upstream: np.ndarray):
        return F.conv2d_backward(x.data, kernels.data, bias.data, padding, upstream)

    return _result(out, (x, kernels, bias), backward)


def relu(x: Tensor) -> Tensor:
    out = F.relu_forward(x.data)
    return _result(out, (x,), lambda upstream: (F.relu_backward(x.data, upstream),))


def sigmoid(x: Tensor) -> Tensor:
    out = F.sigmoid_forward(x.data)
    return _result(out, (x,), lambda upstream: (F.sigmoid_backward(out, upstream),))


def concat_channels(inputs: Sequence[Tensor]) -> Tensor:
    if len(inputs) == 1:
        return inputs[0]
    out = F.concat_channels_forward([t.data for t in inputs])
    counts = [t.shape[0] for t in inputs]
    return _result(out, inputs, lambda upstream: F.concat_channels_backward(counts, upstream))


# loss arithmetic


def sum_squared_error(target: Union[Tensor, np.ndarray], prediction: Tensor) -> Tensor:
    """Scalar sum over all elements of (target - prediction)^2."""
    target_t = _as_tensor(target, prediction.dtype)
    if target_t.shape != prediction.shape:
        raise ShapeError("sum_squared_error", target_t.shape, prediction.shape)
    diff = target_t.data - prediction.data
    out = np.asarray(np.sum(diff * diff), dtype=prediction.dtype)

    def backward(upstream: np.ndarray):
        return (2.0 * upstream * diff, -2.0 * upstream * diff)

    return _result(out, (target_t, prediction), backward)


def binary_cross_entropy_sum(target: Union[Tensor, np.ndarray], prediction: Tensor) -> Tensor:
    """
    Scalar -sum[t * log p + (1 - t) * log(1 - p)] with p clamped to [1e-7, 1 - 1e-7].

    The clamp has zero gradient outside the band.
    """
    target_t = _as_tensor(target, prediction.dtype)
    if target_t.shape != prediction.shape:
        raise ShapeError("binary_cross_entropy_sum", target_t.shape, prediction.shape)
    t = target_t.data
    p = F.clamp_probabilities(prediction.data)
    out = np.asarray(-np.sum(t * np.log(p) + (1.0 - t) * np.log(1.0 - p)), dtype=prediction.dtype)
    inside = (prediction.data >= F.BCE_CLAMP) & (prediction.data <= 1.0 - F.BCE_CLAMP)

    def backward(upstream: np.ndarray):
        grad_p = upstream * (-t / p + (1.0 - t) / (1.0 - p)) * inside
        return (None, grad_p.astype(prediction.dtype, copy=False))

    return _result(out, (target_t, prediction), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError("add", a.shape, b.shape)
    return _result(a.data + b.data, (a, b), lambda upstream: (upstream, upstream))


def scale(a: Tensor, factor: float) -> Tensor:
    return _result(a.data * factor, (a,), lambda upstream: (upstream * factor,))


def sum_all(tensors: Sequence[Tensor]) -> Tensor:
    """Sum a non-empty list of same-shaped tensors."""
    if not tensors:
        raise ShapeError("sum_all", "at least one tensor", "none")
    total = tensors[0]
    for t in tensors[1:]:
        total = add(total, t)
    return total
