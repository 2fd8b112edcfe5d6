"""Differentiable linear-algebra kernels for Gaussian densities.

Factorizations are delegated to LAPACK (via numpy/scipy); the backward
rules are implemented here so the factorizations participate in the
recorded graph.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from ..errors import NotPositiveDefiniteError, ShapeMismatchError
from .tensor import Tensor, as_tensor

SYMMETRY_TOL = 1e-9


def cholesky(a) -> Tensor:
    """Lower-triangular L with L @ L.T == a, for symmetric positive definite a."""
    a = as_tensor(a)
    A = a.data
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ShapeMismatchError(f"cholesky expects a square matrix, got {A.shape}")
    if np.max(np.abs(A - A.T)) > SYMMETRY_TOL:
        raise ShapeMismatchError("cholesky expects a symmetric matrix")
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as err:
        raise NotPositiveDefiniteError(str(err)) from err

    def backward(g):
        a._accumulate(_cholesky_vjp(L, g))

    return Tensor._result(L, (a,), backward)


def _cholesky_vjp(L: np.ndarray, gL: np.ndarray) -> np.ndarray:
    # Reverse-mode rule for A = L L^T: gA = (S + S^T)/2 with
    # S = L^{-T} Phi(L^T gL) L^{-1}, Phi = lower triangle with halved diagonal.
    n = L.shape[0]
    P = np.tril(L.T @ gL)
    P[np.diag_indices(n)] *= 0.5
    S = scipy.linalg.solve_triangular(L, P, lower=True, trans="T", check_finite=False)
    S = scipy.linalg.solve_triangular(L, S.T, lower=True, trans="T", check_finite=False).T
    return 0.5 * (S + S.T)


def solve_triangular_lower(l, b) -> Tensor:
    """Solve L X = B for lower-triangular L; differentiable in both operands."""
    l, b = as_tensor(l), as_tensor(b)
    L, B = l.data, b.data
    if L.ndim != 2 or L.shape[0] != L.shape[1] or L.shape[1] != B.shape[0]:
        raise ShapeMismatchError(f"triangular solve shapes: {L.shape} vs {B.shape}")
    X = scipy.linalg.solve_triangular(L, B, lower=True, check_finite=False)

    def backward(gX):
        gB = scipy.linalg.solve_triangular(L, gX, lower=True, trans="T",
                                           check_finite=False)
        b._accumulate(gB)
        l._accumulate(np.tril(-gB @ X.T) if X.ndim == 2 else np.tril(-np.outer(gB, X)))

    return Tensor._result(X, (l, b), backward)
