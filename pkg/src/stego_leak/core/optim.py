"""
Adam optimizer with bias correction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Mapping

import numpy as np

from .errors import ConfigError, ShapeError
from .tensor import Tensor


@dataclass
class AdamState:
    """First/second moment estimates for one parameter."""

    step: int
    m: np.ndarray
    v: np.ndarray

    @classmethod
    def zeros_like(cls, param: Tensor) -> "AdamState":
        return cls(step=0, m=np.zeros_like(param.data), v=np.zeros_like(param.data))


def adam_step(
    param: Tensor,
    grad: np.ndarray,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """
    Apply one bias-corrected Adam update to ``param`` in place.

    m <- b1 m + (1 - b1) g
    v <- b2 v + (1 - b2) g^2
    p <- p - lr * m_hat / (sqrt(v_hat) + eps)

    Args:
        param: Parameter tensor (updated in place)
        grad: Gradient, same shape as the parameter
        state: Moment state for this parameter (updated in place)
        lr: Learning rate
        beta1: First-moment decay
        beta2: Second-moment decay
        eps: Denominator stabilizer
    """
    if grad.shape != param.data.shape:
        raise ShapeError(f"adam_step gradient for {param.name or 'parameter'}", param.data.shape, grad.shape)
    if state.m.shape != param.data.shape or state.v.shape != param.data.shape:
        raise ShapeError("adam_step moment state", param.data.shape, state.m.shape)

    state.step += 1
    state.m *= beta1
    state.m += (1.0 - beta1) * grad
    state.v *= beta2
    state.v += (1.0 - beta2) * grad * grad

    m_hat = state.m / (1.0 - beta1 ** state.step)
    v_hat = state.v / (1.0 - beta2 ** state.step)
    param.data -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(param.data.dtype, copy=False)


@dataclass
class Adam:
    """
    Adam over a fixed, named set of parameters.

    Parameters are updated in their registration order, which keeps runs
    reproducible.
    """

    params: Dict[str, Tensor]
    lr: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    states: Dict[str, AdamState] = field(default_factory=dict)

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError(f"learning rate must be > 0, got {self.lr}")
        for name, value in (("beta1", self.beta1), ("beta2", self.beta2)):
            if not 0.0 < value < 1.0:
                raise ConfigError(f"{name} must be in (0, 1), got {value}")
        for name, param in self.params.items():
            self.states.setdefault(name, AdamState.zeros_like(param))

    def step(self) -> None:
        for name, param in self.params.items():
            grad = param.grad if param.grad is not None else np.zeros_like(param.data)
            adam_step(param, grad, self.states[name], self.lr, self.beta1, self.beta2, self.eps)

    def zero_grad(self) -> None:
        for param in self.params.values():
            param.zero_grad()

    @property
    def step_count(self) -> int:
        return min((s.step for s in self.states.values()), default=0)

    def load_states(self, states: Mapping[str, AdamState]) -> None:
        for name, state in states.items():
            if name not in self.params:
                continue
            self.states[name] = AdamState(
                step=state.step,
                m=state.m.astype(self.params[name].dtype),
                v=state.v.astype(self.params[name].dtype),
            )
