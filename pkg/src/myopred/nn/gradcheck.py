"""Central-difference verification of reverse-mode gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    return np.abs(analytic - numeric) / np.maximum(1e-8, np.abs(analytic) + np.abs(numeric))


def numeric_gradient(fn: Callable[[], Tensor], x: Tensor, h: float = 1e-5,
                     coords: np.ndarray | None = None) -> np.ndarray:
    flat = x.data.reshape(-1)
    grad = np.zeros(flat.size)
    indices = range(flat.size) if coords is None else coords
    for i in indices:
        old = flat[i]
        flat[i] = old + h
        f_plus = float(fn().data)
        flat[i] = old - h
        f_minus = float(fn().data)
        flat[i] = old
        grad[i] = (f_plus - f_minus) / (2.0 * h)
    return grad.reshape(x.shape)


def grad_check(fn: Callable[[], Tensor], inputs: Sequence[Tensor], h: float = 1e-5,
               max_coords: int | None = None, rng: np.random.Generator | None = None) -> float:
    """Max relative error between tape gradients and central differences.

    ``fn`` closes over ``inputs`` and returns a scalar tensor; inputs are
    perturbed in place.  With ``max_coords`` set, each input is checked on a
    random subset of that many coordinates.
    """
    for x in inputs:
        if x.dtype != np.float64:
            raise TypeError("grad_check requires float64 inputs")
        x.requires_grad = True
        x.grad = None
    out = fn()
    out.backward()
    analytic = [np.zeros(x.shape) if x.grad is None else x.grad.copy() for x in inputs]
    rng = rng or np.random.default_rng(0)
    worst = 0.0
    for x, a in zip(inputs, analytic):
        coords = None
        if max_coords is not None and x.data.size > max_coords:
            coords = rng.choice(x.data.size, size=max_coords, replace=False)
        n = numeric_gradient(fn, x, h, coords)
        if coords is not None:
            err = relative_error(a.reshape(-1)[coords], n.reshape(-1)[coords])
        else:
            err = relative_error(a, n)
        if err.size:
            worst = max(worst, float(err.max()))
    return worst
