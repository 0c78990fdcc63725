"""Function-space GP regression and the equivalent weight-space form.

The function-space predictive conditions the kernel directly on data; the
weight-space form regresses on the truncated eigenbasis and pushes the
weight posterior through the basis.  Near the data (and for small variance
deficit) the two agree; far away the truncated form loses variance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError
from .kernels import EigenBasis, SquaredExpKernel, kernel_eval
from .linalg import SymFactor, symmetrize

__all__ = [
    "GaussianDensity",
    "Dataset",
    "WeightSpaceGP",
    "fs_posterior_predictive",
    "ws_weight_posterior",
    "ws_pushforward",
    "ws_pushforward_pointwise",
]


@dataclass
class GaussianDensity:
    """Mean vector plus covariance; optionally carries the precision factor.

    ``precision_factor`` is the Cholesky factorization of the precision
    matrix when the density was assembled from one (posterior updates); it
    makes sampling stable even when the covariance is nearly singular.
    """

    mean: np.ndarray
    cov: np.ndarray
    precision_factor: SymFactor | None = field(default=None, repr=False)

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        self.cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        n = self.mean.size
        if self.cov.shape != (n, n):
            raise DimensionError(f"covariance shape {self.cov.shape} does not match mean size {n}")
        scale = max(float(np.max(np.abs(self.cov))), 1e-300)
        if np.max(np.abs(self.cov - self.cov.T)) > 1e-12 * scale:
            raise ValueError("covariance is not symmetric")
        self.cov = symmetrize(self.cov)

    @property
    def dim(self) -> int:
        return self.mean.size

    def std(self) -> np.ndarray:
        return np.sqrt(np.maximum(np.diag(self.cov), 0.0))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw n samples, shape (n, dim)."""
        z = rng.standard_normal((self.dim, n))
        if self.precision_factor is not None:
            return self.mean + self.precision_factor.half_rsolve(z).T
        fac = SymFactor(self.cov, scale=max(float(np.max(np.diag(self.cov))), 1e-300))
        return self.mean + (np.tril(fac._cho[0]) @ z).T

    def marginal(self, idx) -> "GaussianDensity":
        idx = np.atleast_1d(idx)
        return GaussianDensity(self.mean[idx], self.cov[np.ix_(idx, idx)])


@dataclass(frozen=True)
class Dataset:
    """Observations y at scalar inputs x (plus times t for field problems)."""

    x: np.ndarray
    y: np.ndarray
    noise_std: float
    t: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "x", np.atleast_1d(np.asarray(self.x, dtype=float)))
        object.__setattr__(self, "y", np.atleast_1d(np.asarray(self.y, dtype=float)))
        if self.t is not None:
            object.__setattr__(self, "t", np.atleast_1d(np.asarray(self.t, dtype=float)))
            if self.t.shape != self.x.shape:
                raise DimensionError("t must match x in length")
        if self.x.shape != self.y.shape:
            raise DimensionError("x and y must have the same length")
        if not self.noise_std > 0:
            raise ValueError("noise_std must be positive")

    @property
    def n(self) -> int:
        return self.x.size


@dataclass(frozen=True)
class WeightSpaceGP:
    """Truncated basis plus the zero-mean weight prior diag(eigenvalues)."""

    basis: EigenBasis
    weight_prior: GaussianDensity

    @classmethod
    def from_basis(cls, basis: EigenBasis) -> "WeightSpaceGP":
        prior = GaussianDensity(np.zeros(basis.m), np.diag(basis.eigenvalues))
        return cls(basis, prior)

    @property
    def m(self) -> int:
        return self.basis.m


def fs_posterior_predictive(kernel: SquaredExpKernel, data: Dataset, x_star) -> GaussianDensity:
    """Exact GP predictive at x_star given noisy data (function-space form)."""
    if data.n < 1:
        raise ValueError("need at least one observation")
    x_star = np.atleast_1d(np.asarray(x_star, dtype=float))
    kxx = kernel.gram(data.x) + data.noise_std**2 * np.eye(data.n)
    fac = SymFactor(kxx, scale=kernel.signal_std**2)
    ksx = kernel_eval(kernel, x_star[:, None], data.x[None, :])
    alpha = fac.solve(data.y)
    mean = ksx @ alpha
    half = fac.half_solve(ksx.T)
    cov = kernel.gram(x_star) - half.T @ half
    return GaussianDensity(mean, symmetrize(cov))


def ws_weight_posterior(gp: WeightSpaceGP, data: Dataset) -> GaussianDensity:
    """Gaussian weight posterior; with no data it reduces to the prior.

    Posterior precision is (Phi Phi^T / noise^2 + prior_cov^{-1}); everything
    goes through one symmetric factorization of that matrix.
    """
    prior_var = np.diag(gp.weight_prior.cov)
    if data.n == 0:
        return GaussianDensity(gp.weight_prior.mean.copy(), gp.weight_prior.cov.copy())
    phi = gp.basis.phi(data.x)  # (N, m)
    prec = phi.T @ phi / data.noise_std**2 + np.diag(1.0 / prior_var)
    fac = SymFactor(symmetrize(prec), scale=float(np.max(np.diag(prec))))
    mean = fac.solve(phi.T @ data.y) / data.noise_std**2
    cov = symmetrize(fac.solve(np.eye(gp.m)))
    return GaussianDensity(mean, cov, precision_factor=fac)


def ws_pushforward(gp: WeightSpaceGP, weight_law: GaussianDensity, x_star) -> GaussianDensity:
    """Law of phi(x)^T w at x_star under the given weight law."""
    if weight_law.dim != gp.m:
        raise DimensionError(f"weight law has dim {weight_law.dim}, basis has m={gp.m}")
    x_star = np.asarray(x_star, dtype=float)
    scalar = x_star.ndim == 0
    phi = gp.basis.phi(np.atleast_1d(x_star))
    mean = phi @ weight_law.mean
    cov = phi @ weight_law.cov @ phi.T
    out = GaussianDensity(mean, symmetrize(np.atleast_2d(cov)))
    return out


def ws_pushforward_pointwise(gp: WeightSpaceGP, weight_law: GaussianDensity, xs) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise (mean, std) of the push-forward on a grid; no cross terms."""
    phi = gp.basis.phi(np.atleast_1d(np.asarray(xs, dtype=float)))
    mean = phi @ weight_law.mean
    var = np.einsum("ni,ij,nj->n", phi, weight_law.cov, phi)
    return mean, np.sqrt(np.maximum(var, 0.0))
