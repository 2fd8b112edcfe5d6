"""Central finite differences: the independent oracle for analytic gradients.

The oracle only ever evaluates the function being checked as a black box
on plain arrays; it never touches the recorded graph.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .tensor import Tensor


def finite_difference_gradient(f: Callable[[np.ndarray], float],
                               x: np.ndarray,
                               step: float = 1e-5) -> np.ndarray:
    """Central-difference estimate of df/dx, one coordinate at a time."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = float(f(x))
        flat[i] = orig - step
        lo = float(f(x))
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * step)
    return grad


def gradient_relative_error(analytic: np.ndarray, numeric: np.ndarray,
                            floor: float = 1e-6) -> float:
    """Worst elementwise relative disagreement between two gradients."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(floor, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / denom))


def check_gradient(f: Callable[[Tensor], Tensor], x0: np.ndarray,
                   step: float = 1e-5, tol: float = 1e-4) -> float:
    """Compare the recorded-graph gradient of f at x0 against the oracle.

    f maps one leaf tensor to a scalar tensor.  Returns the relative
    error and raises AssertionError when it exceeds tol.
    """
    leaf = Tensor(np.asarray(x0, dtype=np.float64), requires_grad=True)
    out = f(leaf)
    out.backward()
    analytic = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)

    numeric = finite_difference_gradient(lambda x: f(Tensor(x)).item(), x0, step)
    err = gradient_relative_error(analytic, numeric)
    if err > tol:
        raise AssertionError(f"gradient mismatch: relative error {err:.3e} > {tol:.1e}")
    return err
