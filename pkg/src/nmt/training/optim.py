"""Optimizers and global-norm gradient clipping."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..errors import ConfigError, TrainingDivergenceError
from ..tensor import Tensor


def _array(g) -> np.ndarray:
    return g.data if isinstance(g, Tensor) else np.asarray(g)


def global_norm(grads) -> float:
    values = grads.values() if isinstance(grads, Mapping) else grads
    return float(np.sqrt(sum(float(np.sum(np.square(_array(g), dtype=np.float64))) for g in values)))


def clip_gradients(grads, threshold: float = 5.0):
    """Rescale all gradients jointly so their global L2 norm is at most ``threshold``.

    Accepts a mapping (e.g. a :class:`~nmt.tensor.GradientMap`) or a sequence
    and returns the same kind of container.

    Raises:
        TrainingDivergenceError: if any gradient entry is NaN or infinite.
    """
    norm = global_norm(grads)
    if not np.isfinite(norm):
        raise TrainingDivergenceError("non-finite gradient")
    factor = threshold / norm if norm > threshold else None

    def scale(g):
        if factor is None:
            return g
        if isinstance(g, Tensor):
            return Tensor(g.data * np.asarray(factor, dtype=g.dtype))
        arr = np.asarray(g)
        return arr * np.asarray(factor, dtype=arr.dtype)

    if isinstance(grads, Mapping):
        return type(grads)((k, scale(v)) for k, v in grads.items())
    return [scale(g) for g in grads]


@dataclass
class OptimizerState:
    kind: str
    buffers: dict = field(default_factory=dict)
    step_num: int = 0
    momentum: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.98
    epsilon: float = 1e-9
    last_lr: float | None = None


class Optimizer:
    """Updates parameter tensors in place from gradient arrays."""

    kind = "base"

    def __init__(self, params: Sequence[Tensor], **hyper):
        self.params = list(params)
        self.state = OptimizerState(self.kind, **hyper)

    def step(self, grads: Sequence[np.ndarray], lr: float) -> None:
        self.state.step_num += 1
        for i, (param, grad) in enumerate(zip(self.params, grads)):
            self._update(i, param, np.asarray(grad, dtype=param.dtype), lr)
        self.state.last_lr = lr

    def _update(self, i: int, param: Tensor, grad: np.ndarray, lr: float) -> None:
        raise NotImplementedError


class SGD(Optimizer):
    kind = "sgd"

    def _update(self, i, param, grad, lr):
        param.data = param.data - np.asarray(lr, dtype=param.dtype) * grad


class NAG(Optimizer):
    """Nesterov accelerated gradient in the reformulation used by fairseq."""

    kind = "nag"

    def __init__(self, params, momentum: float = 0.99):
        super().__init__(params, momentum=momentum)

    def _update(self, i, param, grad, lr):
        mu = self.state.momentum
        correction = 1.0 if self.state.last_lr in (None, 0) else lr / self.state.last_lr
        buf = self.state.buffers.get(i)
        if buf is None:
            buf = np.zeros_like(param.data)
        param.data = param.data + (mu * mu * correction) * buf - ((1 + mu) * lr) * grad
        self.state.buffers[i] = (mu * correction) * buf - lr * grad


class Adam(Optimizer):
    kind = "adam"

    def __init__(self, params, beta1: float = 0.9, beta2: float = 0.98, epsilon: float = 1e-9):
        super().__init__(params, beta1=beta1, beta2=beta2, epsilon=epsilon)

    def _update(self, i, param, grad, lr):
        s = self.state
        m, v = s.buffers.get(i, (np.zeros_like(param.data), np.zeros_like(param.data)))
        m = s.beta1 * m + (1 - s.beta1) * grad
        v = s.beta2 * v + (1 - s.beta2) * grad * grad
        m_hat = m / (1 - s.beta1 ** s.step_num)
        v_hat = v / (1 - s.beta2 ** s.step_num)
        param.data = (param.data - lr * m_hat / (np.sqrt(v_hat) + s.epsilon)).astype(param.dtype)
        s.buffers[i] = (m, v)


def make_optimizer(kind: str, params: Sequence[Tensor], **hyper) -> Optimizer:
    kinds = {"sgd": SGD, "nag": NAG, "adam": Adam}
    if kind not in kinds:
        raise ConfigError(f"unknown optimizer {kind!r}; expected one of {sorted(kinds)}")
    return kinds[kind](params, **hyper)
