"""Central finite-difference checks for analytic gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, backward

# float32 gradients of a loss of order 10 carry rounding noise near 1e-6
FLOAT32_FLOOR = 1e-6


def numerical_gradient(
    loss_fn: Callable[[], Tensor],
    param: Tensor,
    step: float = 1e-5,
    indices: Sequence[int] | None = None,
) -> np.ndarray:
    """Central differences of ``loss_fn()`` with respect to ``param.data``.

    ``param.data`` is perturbed in place and restored afterwards. With
    ``indices`` only those flat positions are probed; the result then holds
    one value per index.
    """
    flat = param.data.reshape(-1)
    probe = range(flat.size) if indices is None else indices
    out = np.zeros(len(probe), dtype=np.float64)
    for k, i in enumerate(probe):
        original = flat[i]
        flat[i] = original + step
        plus = float(loss_fn().item())
        flat[i] = original - step
        minus = float(loss_fn().item())
        flat[i] = original
        out[k] = (plus - minus) / (2.0 * step)
    return out.reshape(param.shape) if indices is None else out


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """Largest elementwise ``|a - n| / max(|a|, |n|, floor)``."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / scale)) if analytic.size else 0.0


def check_gradients(
    loss_fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    step: float = 1e-5,
    floor: float = 1e-8,
) -> float:
    """Max relative error between backward() and finite differences over ``params``."""
    grads = backward(loss_fn())
    worst = 0.0
    for param in params:
        analytic = grads[param].data if param in grads else np.zeros(param.shape)
        numeric = numerical_gradient(loss_fn, param, step)
        worst = max(worst, relative_error(analytic, numeric, floor))
    return worst


def check_model_gradients(
    model,
    loss_of: Callable[[object], Tensor],
    step: float = 1e-5,
    floor: float = FLOAT32_FLOOR,
    max_coords: int | None = None,
    seed: int = 0,
) -> dict[str, float]:
    """Per-parameter relative error of ``model``'s own-precision gradients.

    Finite differences run on a 64-bit copy of the model, so a 32-bit model
    is judged against the exact gradient rather than against 32-bit
    differencing noise. ``max_coords`` samples that many positions per
    parameter.
    """
    rng = np.random.default_rng(seed)
    grads = backward(loss_of(model))
    reference = model.astype(np.float64)
    errors = {}
    for name, param in model.params.items():
        ref_param = reference.params[name]
        analytic = grads[param].data.reshape(-1) if param in grads else np.zeros(param.size)
        idx = np.arange(param.size)
        if max_coords is not None and param.size > max_coords:
            idx = np.sort(rng.choice(param.size, max_coords, replace=False))
        numeric = numerical_gradient(lambda: loss_of(reference), ref_param, step, idx.tolist())
        errors[name] = relative_error(analytic[idx], numeric, floor)
    return errors
