"""Central finite-difference gradient checking."""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .core import Node, backward


def numerical_gradient(f: Callable[[], Node], x: Node, eps: float = 1e-5,
                       coords: Optional[Sequence[tuple]] = None) -> np.ndarray:
    """Central differences of the scalar ``f()`` with respect to ``x.value``.

    Only ``coords`` are perturbed when given; other entries stay ``nan``.
    """
    grad = np.full(x.shape, np.nan)
    if coords is None:
        coords = list(np.ndindex(*x.shape))
    for idx in coords:
        original = x.value[idx]
        x.value[idx] = original + eps
        plus = float(f().value)
        x.value[idx] = original - eps
        minus = float(f().value)
        x.value[idx] = original
        grad[idx] = (plus - minus) / (2 * eps)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> np.ndarray:
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def check_gradients(f: Callable[[], Node], inputs: Sequence[Node], eps: float = 1e-5,
                    coords_per_input: Optional[int] = None, rng: Optional[np.random.Generator] = None) -> float:
    """Return the max relative error between backprop and central differences."""
    for x in inputs:
        x.grad = None
    backward(f())
    worst = 0.0
    for x in inputs:
        analytic = x.grad if x.grad is not None else np.zeros_like(x.value)
        coords = None
        if coords_per_input is not None and x.value.size > coords_per_input:
            rng = rng or np.random.default_rng(0)
            flat = rng.choice(x.value.size, size=coords_per_input, replace=False)
            coords = [np.unravel_index(i, x.shape) for i in flat]
        numeric = numerical_gradient(f, x, eps=eps, coords=coords)
        mask = ~np.isnan(numeric)
        if mask.any():
            worst = max(worst, float(relative_error(analytic[mask], numeric[mask]).max()))
    return worst
