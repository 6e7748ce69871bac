"""Dense symmetric-positive-definite helpers sized for small design matrices
(d up to ~16).

Everything operates on plain float64 numpy arrays: a (d, d) array stands for
an SPD matrix, a (d,) array for a vector. Row-major dense storage only.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import NotPositiveDefinite

# Pivots in [-PIVOT_FLOOR, PIVOT_FLOOR] are lifted to the floor; anything more
# negative signals a genuinely indefinite matrix.
PIVOT_FLOOR = 1e-12

SYMMETRY_RTOL = 1e-12


def is_symmetric(m: np.ndarray, rtol: float = SYMMETRY_RTOL) -> bool:
    """True when m equals its transpose within relative tolerance."""
    scale = max(float(np.max(np.abs(m))), 1.0)
    return float(np.max(np.abs(m - m.T))) <= rtol * scale


def cholesky(m: np.ndarray) -> np.ndarray:
    """Lower-triangular L with m = L @ L.T (lower triangle of m is read).

    Comfortably positive-definite input goes through LAPACK; if that reports
    a failure the column-by-column fallback decides between lifting an
    underflowed pivot (anything in [-PIVOT_FLOOR, PIVOT_FLOOR] becomes
    PIVOT_FLOOR) and raising NotPositiveDefinite for pivots below the floor.
    """
    a = np.asarray(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        return _cholesky_floored(a)


def _cholesky_floored(a: np.ndarray) -> np.ndarray:
    n = a.shape[0]
    lower = np.zeros_like(a)
    for j in range(n):
        pivot = a[j, j] - lower[j, :j] @ lower[j, :j]
        if pivot < -PIVOT_FLOOR:
            raise NotPositiveDefinite(f"pivot {pivot:.6e} at column {j}")
        if pivot < PIVOT_FLOOR:
            pivot = PIVOT_FLOOR
        ljj = math.sqrt(pivot)
        lower[j, j] = ljj
        if j + 1 < n:
            lower[j + 1:, j] = (a[j + 1:, j] - lower[j + 1:, :j] @ lower[j, :j]) / ljj
    return lower


def _lower_tri_inverse(lower: np.ndarray) -> np.ndarray:
    n = lower.shape[0]
    inv = np.zeros_like(lower)
    for i in range(n):
        inv[i, i] = 1.0 / lower[i, i]
        for j in range(i):
            inv[i, j] = -(lower[i, j:i] @ inv[j:i, j]) / lower[i, i]
    return inv


def spd_inverse(m: np.ndarray) -> np.ndarray:
    """Inverse of an SPD matrix via its Cholesky factor (L^-T L^-1)."""
    li = _lower_tri_inverse(cholesky(m))
    return li.T @ li


def sherman_morrison(a_inv: np.ndarray, x: np.ndarray) -> np.ndarray:
    """(A + x xᵀ)⁻¹ from A⁻¹ in O(d²).

    The denominator 1 + xᵀ A⁻¹ x is at least 1 for SPD A⁻¹, so no pivoting
    or error path is needed. The result stays exactly symmetric.
    """
    w = a_inv @ x
    denom = 1.0 + float(x @ w)
    return a_inv - np.outer(w, w) / denom


def quad_form(a_inv: np.ndarray, x: np.ndarray) -> float:
    """xᵀ A⁻¹ x; nonnegative for SPD A⁻¹ and zero only at x = 0."""
    return float(x @ (a_inv @ x))
