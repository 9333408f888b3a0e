"""Banded Hermitian solves for the windowed estimator.

A half-bandwidth-B Hermitian matrix is factored with LAPACK's banded
Cholesky at O(n B^2) cost; if truncation destroyed positive definiteness
the solver falls back to a dense solve and reports it.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded


def band_truncate(mat: np.ndarray, half_bandwidth: int) -> np.ndarray:
    """Copy of `mat` with entries |i - j| > half_bandwidth zeroed."""
    if half_bandwidth < 0:
        raise ValueError("half bandwidth must be >= 0")
    n, m = mat.shape
    idx = np.arange(n)[:, None] - np.arange(m)[None, :]
    out = mat.copy()
    out[np.abs(idx) > half_bandwidth] = 0
    return out


def to_upper_banded(mat: np.ndarray, half_bandwidth: int) -> np.ndarray:
    """Pack the upper band into LAPACK banded storage ab[b + i - j, j]."""
    n = mat.shape[0]
    b = half_bandwidth
    ab = np.zeros((b + 1, n), dtype=mat.dtype)
    for diag in range(b + 1):
        ab[b - diag, diag:] = np.diagonal(mat, diag)
    return ab


class BandedHermitianSolver:
    """Factor once, solve many right-hand sides.

    Tries a banded Cholesky of the matrix restricted to the given band;
    loss of positive definiteness triggers a dense fallback (flagged so
    callers can count it in run statistics).
    """

    def __init__(self, mat: np.ndarray, half_bandwidth: int):
        n = mat.shape[0]
        self.half_bandwidth = min(half_bandwidth, n - 1)
        self.used_fallback = False
        self._dense_inverse_factor = None
        self._cb = None
        try:
            ab = to_upper_banded(mat, self.half_bandwidth)
            self._cb = cholesky_banded(ab, lower=False)
        except np.linalg.LinAlgError:
            self.used_fallback = True
            self._dense = mat
        except Exception:
            self.used_fallback = True
            self._dense = mat

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if self.used_fallback:
            return np.linalg.solve(self._dense, rhs)
        return cho_solve_banded((self._cb, False), rhs)
