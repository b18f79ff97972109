"""Central-difference gradient oracle."""
from __future__ import annotations

from typing import Callable

import numpy as np

from ..errors import ContractError, NumericError
from .tensor import Tensor, Tape, backward


def _scalar(v) -> float:
    v = float(v.item() if isinstance(v, Tensor) else v)
    if not np.isfinite(v):
        raise NumericError("non-finite function value during finite differencing")
    return v


def finite_diff_grad(f: Callable[[Tensor], object], x: Tensor, h: float = 1e-5) -> np.ndarray:
    """(f(x + h e_i) - f(x - h e_i)) / 2h for every element of ``x``.

    ``x.data`` is perturbed in place and restored, so ``f`` may close over
    other tensors that share ``x``.
    """
    if not h > 0:
        raise ContractError("finite difference step must be positive")
    flat = x.data.reshape(-1)
    out = np.empty(flat.size)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = _scalar(f(x))
        flat[i] = orig - h
        fm = _scalar(f(x))
        flat[i] = orig
        out[i] = (fp - fm) / (2 * h)
    return out.reshape(x.shape)


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> float:
    """max|a - b| scaled by the larger of the two tensors' max magnitudes."""
    scale = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0), floor)
    return float(np.abs(a - b).max(initial=0.0) / scale)


def check_gradients(loss_fn: Callable[[], Tensor], tensors: dict[str, Tensor],
                    h: float = 1e-5) -> dict[str, float]:
    """Relative error of tape gradients vs central differences, per tensor.

    ``loss_fn`` rebuilds the loss from the current values of ``tensors``.
    """
    for t in tensors.values():
        t.grad = None
    with Tape() as tape:
        loss = loss_fn()
    backward(loss, tape)
    errors = {}
    for name, t in tensors.items():
        auto = t.grad if t.grad is not None else np.zeros_like(t.data)
        numeric = finite_diff_grad(lambda _: loss_fn(), t, h)
        errors[name] = relative_error(auto, numeric)
    return errors
