"""Shared symmetric-factorization helpers.

All Gaussian algebra in the package goes through these routines; nothing
forms an explicit matrix inverse.  The jitter policy is fixed: try the
factorization as given, retry once with ``1e-10 * scale`` added to the
diagonal, once more with ``1e-8 * scale``, then raise NumericalBreakdown.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from .errors import NumericalBreakdown

JITTERS = (0.0, 1e-10, 1e-8)


class SymFactor:
    """Cholesky factorization of a symmetric positive definite matrix."""

    def __init__(self, matrix: np.ndarray, scale: float | None = None):
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError(f"expected square matrix, got shape {matrix.shape}")
        if scale is None:
            scale = float(np.max(np.diag(matrix))) if matrix.size else 1.0
            scale = max(scale, 1.0e-30)
        self.n = matrix.shape[0]
        self.jitter = None
        err = None
        for jit in JITTERS:
            try:
                shifted = matrix if jit == 0.0 else matrix + (jit * scale) * np.eye(self.n)
                self._cho = cho_factor(shifted, lower=True, check_finite=False)
                self.jitter = jit * scale
                return
            except np.linalg.LinAlgError as exc:  # pragma: no cover - scipy raises LinAlgError
                err = exc
            except ValueError as exc:
                err = exc
        raise NumericalBreakdown(f"Cholesky failed after jitter retries: {err}")

    @property
    def lower(self) -> np.ndarray:
        return np.tril(self._cho[0])

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve A x = rhs."""
        return cho_solve(self._cho, np.asarray(rhs, dtype=float), check_finite=False)

    def half_solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve L x = rhs with A = L L^T; useful for whitening."""
        return solve_triangular(self._cho[0], rhs, lower=True, check_finite=False)

    def half_rsolve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve L^T x = rhs; maps standard normals to N(0, A^{-1}) draws."""
        return solve_triangular(self._cho[0], rhs, lower=True, trans="T", check_finite=False)

    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self._cho[0]))))

    def quad_form(self, vec: np.ndarray) -> np.ndarray:
        """x^T A^{-1} x for a vector or a stack of row vectors."""
        vec = np.asarray(vec, dtype=float)
        half = self.half_solve(np.atleast_2d(vec).T)
        out = np.sum(half * half, axis=0)
        return out[0] if vec.ndim == 1 else out


def sym_eig_desc(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix, eigenvalues descending."""
    vals, vecs = np.linalg.eigh(np.asarray(matrix, dtype=float))
    order = np.argsort(vals)[::-1]
    return vals[order], vecs[:, order]


def symmetrize(matrix: np.ndarray) -> np.ndarray:
    return 0.5 * (matrix + matrix.T)
