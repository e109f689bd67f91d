"""Neural building blocks shared by the three model families."""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from typing import Iterator, Mapping

import numpy as np

from . import tensor as T
from .errors import ContractError, DimensionError
from .tensor import Tensor


class ModelParameters:
    """Ordered, named collection of trainable tensors.

    The unit of checkpointing and averaging. Names are unique and the
    insertion order is the order records are written to disk.
    """

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self._tensors: "OrderedDict[str, Tensor]" = OrderedDict()

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._tensors:
            raise ContractError(f"duplicate parameter name {name!r}")
        param = Tensor(np.asarray(value, dtype=self.dtype), requires_grad=True, name=name)
        self._tensors[name] = param
        return param

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def items(self):
        return self._tensors.items()

    def values(self):
        return self._tensors.values()

    def names(self) -> list[str]:
        return list(self._tensors)

    def numel(self) -> int:
        return int(sum(p.size for p in self._tensors.values()))

    def to_arrays(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((name, p.data.copy()) for name, p in self._tensors.items())

    def load_arrays(self, arrays: Mapping[str, np.ndarray]) -> None:
        """Overwrite parameter values in place; names and shapes must match."""
        missing = set(self._tensors) ^ set(arrays)
        if missing:
            raise ContractError(f"parameter names differ: {sorted(missing)}")
        for name, param in self._tensors.items():
            value = np.asarray(arrays[name])
            if value.shape != param.shape:
                raise DimensionError(f"{name}: expected shape {param.shape}, got {value.shape}")
            param.data = value.astype(self.dtype, copy=True)

    def astype(self, dtype) -> "ModelParameters":
        clone = ModelParameters(dtype)
        for name, param in self._tensors.items():
            clone.add(name, param.data)
        return clone


# -- initializers ------------------------------------------------------------


def uniform_init(rng: np.random.Generator, shape, scale: float = 0.08) -> np.ndarray:
    return rng.uniform(-scale, scale, size=shape)


def scaled_normal_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    return rng.normal(0.0, fan_in ** -0.5, size=shape)


# -- layers ------------------------------------------------------------------


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    out = T.matmul(x, weight)
    return out if bias is None else out + bias


def glu(y: Tensor) -> Tensor:
    """Gated linear unit: split the last axis into ``[A B]`` and return ``A * sigmoid(B)``."""
    width = y.shape[-1]
    if width % 2:
        raise ContractError(f"glu needs an even last dimension, got {width}")
    half = width // 2
    return y[..., :half] * T.sigmoid(y[..., half:])


@dataclass
class LstmWeights:
    """Weights of one LSTM cell; gate blocks ordered input, forget, output, candidate."""

    w_input: Tensor  # [input_size, 4 * hidden]
    w_hidden: Tensor  # [hidden, 4 * hidden]
    bias: Tensor  # [4 * hidden]

    @property
    def hidden_size(self) -> int:
        return self.w_hidden.shape[0]


def lstm_cell(x: Tensor, h_prev: Tensor, c_prev: Tensor, weights: LstmWeights) -> tuple[Tensor, Tensor]:
    """One step of the standard LSTM recurrence.

    Works on single vectors or on ``[batch, features]`` rows.
    """
    hidden = weights.hidden_size
    if x.shape[-1] != weights.w_input.shape[0] or h_prev.shape[-1] != hidden:
        raise DimensionError(
            f"lstm_cell inputs x{x.shape}, h{h_prev.shape} do not fit weights "
            f"{weights.w_input.shape}/{weights.w_hidden.shape}"
        )
    z = T.matmul(x, weights.w_input) + T.matmul(h_prev, weights.w_hidden) + weights.bias
    i = T.sigmoid(z[..., :hidden])
    f = T.sigmoid(z[..., hidden : 2 * hidden])
    o = T.sigmoid(z[..., 2 * hidden : 3 * hidden])
    g = T.tanh(z[..., 3 * hidden :])
    c = f * c_prev + i * g
    h = o * T.tanh(c)
    return h, c


def add_lstm_params(params: ModelParameters, prefix: str, input_size: int, hidden: int, rng) -> None:
    params.add(f"{prefix}.w_input", uniform_init(rng, (input_size, 4 * hidden)))
    params.add(f"{prefix}.w_hidden", uniform_init(rng, (hidden, 4 * hidden)))
    params.add(f"{prefix}.bias", np.zeros(4 * hidden))


def lstm_weights(params: ModelParameters, prefix: str) -> LstmWeights:
    return LstmWeights(params[f"{prefix}.w_input"], params[f"{prefix}.w_hidden"], params[f"{prefix}.bias"])


def label_smoothed_nll(log_probs: Tensor, targets: np.ndarray, epsilon: float, weights: np.ndarray | None = None) -> Tensor:
    """Summed cross-entropy against ``(1 - eps) * onehot + eps / T``.

    ``weights`` (same shape as ``targets``) masks padded positions.
    """
    targets = np.asarray(targets, dtype=np.int64)
    vocab = log_probs.shape[-1]
    if targets.size and (targets.min() < 0 or targets.max() >= vocab):
        raise ContractError(f"target id out of range [0, {vocab})")
    q = np.full(log_probs.shape, epsilon / vocab, dtype=log_probs.dtype)
    np.put_along_axis(q, targets[..., None], 1.0 - epsilon + epsilon / vocab, axis=-1)
    if weights is not None:
        q = q * np.asarray(weights, dtype=log_probs.dtype)[..., None]
    return -(log_probs * q).sum()
