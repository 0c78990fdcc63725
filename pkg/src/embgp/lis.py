"""Likelihood-informed subspace reduction for the joint calibration posterior.

The data typically inform only a handful of directions in (parameters,
weights) space.  Those directions are the leading eigenvectors of the
prior-preconditioned Gauss-Newton Hessian (ppGNH); sampling happens in that
subspace while the complement keeps its prior.  For nonlinear models the
ppGNH is averaged over posterior points found by an adaptive
subspace-chain procedure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .calibrate import KohPosterior, PosteriorSpec
from .errors import EmptyLis, EvaluationFailure, ModelOverflow
from .linalg import sym_eig_desc, symmetrize
from .mcmc import SamplerSettings, _autocorr_time, sample

__all__ = [
    "LisBasis",
    "LisSettings",
    "PpgnhAccumulator",
    "local_gnh",
    "lis_from_ppgnh",
    "ReducedPosterior",
    "reduced_log_posterior",
    "adaptive_global_lis",
    "recombine_samples",
]


@dataclass
class LisBasis:
    """Rank-r informed basis with oblique projectors and prior factor."""

    rank: int
    u_r: np.ndarray  # (d, r)
    w_r: np.ndarray  # (d, r)
    u_perp: np.ndarray  # (d, d-r)
    w_perp: np.ndarray  # (d, d-r)
    eigenvalues: np.ndarray  # (d,) ppGNH spectrum, descending
    prior_sqrt: np.ndarray  # lower-triangular L with prior cov = L L^T
    prior_mean: np.ndarray
    cutoff: float
    v_r: np.ndarray | None = None  # whitened-space orthonormal basis (d, r)

    @property
    def dim(self) -> int:
        return self.prior_mean.size

    def projector(self) -> np.ndarray:
        return self.u_r @ self.w_r.T

    def complement_projector(self) -> np.ndarray:
        return self.u_perp @ self.w_perp.T

    def reduced_coords(self, theta: np.ndarray) -> np.ndarray:
        return np.asarray(theta, dtype=float) @ self.w_r

    def complement_coords(self, theta: np.ndarray) -> np.ndarray:
        return np.asarray(theta, dtype=float) @ self.w_perp

    def lift(self, theta_r: np.ndarray, theta_perp: np.ndarray | None = None) -> np.ndarray:
        """Assemble full-space points; complement defaults to its prior mean."""
        theta_r = np.asarray(theta_r, dtype=float)
        if theta_perp is None:
            theta_perp = self.w_perp.T @ self.prior_mean
        return theta_r @ self.u_r.T + np.asarray(theta_perp, dtype=float) @ self.u_perp.T

    @property
    def reduced_prior_mean(self) -> np.ndarray:
        return self.w_r.T @ self.prior_mean

    @property
    def complement_prior_mean(self) -> np.ndarray:
        return self.w_perp.T @ self.prior_mean


@dataclass
class PpgnhAccumulator:
    """Running mean of prior-preconditioned local Gauss-Newton Hessians."""

    prior_sqrt: np.ndarray
    total: np.ndarray | None = None
    count: int = 0

    def add(self, local_hessian: np.ndarray) -> None:
        whitened = self.prior_sqrt.T @ local_hessian @ self.prior_sqrt
        self.total = whitened if self.total is None else self.total + whitened
        self.count += 1

    def mean(self) -> np.ndarray:
        if self.count == 0:
            raise ValueError("no Hessians accumulated")
        return symmetrize(self.total / self.count)


def local_gnh(spec, theta: np.ndarray) -> np.ndarray:
    """Gauss-Newton Hessian of the log likelihood at theta.

    For the joint embedded posterior this is J^T J / noise^2; for the
    marginalized formulation the noise covariance is the full (kernel +
    noise) Gram matrix.
    """
    theta = np.asarray(theta, dtype=float)
    try:
        if isinstance(spec, KohPosterior):
            from .calibrate import _plain_jacobian

            jac = _plain_jacobian(spec.model, spec.data, theta)
            half = spec._fac.half_solve(jac)
            return half.T @ half
        if spec.data.n == 0:
            return np.zeros((spec.dim, spec.dim))
        jac = spec.data_jacobian(theta)
        return jac.T @ jac / spec.data.noise_std**2
    except ModelOverflow as exc:
        raise EvaluationFailure(f"model overflow at the requested point: {exc}") from exc


def lis_from_ppgnh(s_matrix: np.ndarray, prior_sqrt: np.ndarray, prior_mean: np.ndarray,
                   cutoff: float) -> LisBasis:
    """Split parameter space by the ppGNH spectrum at the given cutoff."""
    vals, vecs = sym_eig_desc(symmetrize(np.asarray(s_matrix, dtype=float)))
    rank = int(np.sum(vals >= cutoff))
    if rank == 0:
        raise EmptyLis(f"no ppGNH eigenvalue reaches the cutoff {cutoff}")
    v_r, v_perp = vecs[:, :rank], vecs[:, rank:]
    u_r = prior_sqrt @ v_r
    u_perp = prior_sqrt @ v_perp
    w_r = solve_triangular(prior_sqrt, v_r, lower=True, trans="T")
    w_perp = solve_triangular(prior_sqrt, v_perp, lower=True, trans="T")
    return LisBasis(rank, u_r, w_r, u_perp, w_perp, vals, prior_sqrt,
                    np.asarray(prior_mean, dtype=float), cutoff, v_r=v_r)


class ReducedPosterior:
    """Posterior over the informed coordinates with the complement at prior.

    log density = log likelihood(lift(theta_r)) + log N(theta_r | W_r^T mu, I).
    """

    def __init__(self, lis: LisBasis, base):
        self.lis = lis
        self.base = base
        self._perp_mean = lis.complement_prior_mean
        self._red_mean = lis.reduced_prior_mean

    def log_likelihood_full(self, theta: np.ndarray) -> np.ndarray:
        if isinstance(self.base, KohPosterior):
            return self.base.log_likelihood(theta)
        return self.base.log_likelihood(theta) + self.base.penalty(theta)

    def logpdf(self, theta_r: np.ndarray) -> np.ndarray:
        theta_r = np.asarray(theta_r, dtype=float)
        theta = self.lis.lift(theta_r)
        try:
            lik = self.log_likelihood_full(theta)
        except ModelOverflow:
            if theta_r.ndim == 1:
                return np.float64(-np.inf)
            return np.array([self.logpdf(t) for t in theta_r])
        d = theta_r - self._red_mean
        return lik - 0.5 * np.sum(d * d, axis=-1) - 0.5 * theta_r.shape[-1] * np.log(2 * np.pi)


def reduced_log_posterior(lis: LisBasis, base, theta_r) -> np.ndarray:
    """One-shot evaluation of the reduced posterior log density."""
    return ReducedPosterior(lis, base).logpdf(theta_r)


@dataclass(frozen=True)
class LisSettings:
    cutoff: float = 0.1
    max_hessians: int = 40
    min_hessians: int = 10
    subspace_steps: int = 800
    subspace_walkers: int = 32
    stride_cap: int = 2000
    distance_tol: float = 1e-3
    converge_rounds: int = 3
    seed: int = 0


@dataclass
class LisReport:
    hessian_count: int
    converged: bool
    distances: list = field(default_factory=list)
    map_point: np.ndarray | None = None


def adaptive_global_lis(base, settings: LisSettings,
                        theta_map: np.ndarray | None = None) -> tuple[LisBasis, LisReport]:
    """Discover the global informed subspace by posterior-averaged Hessians.

    Starts at the posterior mode; each round runs a short chain in the
    current subspace, lifts an approximately uncorrelated state (stride of
    five autocorrelation times, capped), draws the complement from its
    prior, and refreshes the running Hessian mean.  Stops after
    ``max_hessians`` evaluations or once the projector change stays below
    ``distance_tol`` for ``converge_rounds`` consecutive rounds.
    """
    if isinstance(base, KohPosterior):
        prior_sqrt = base._lam_fac.lower
        prior_mean = base.lambda_prior.mean
        if theta_map is None:
            from scipy.optimize import minimize

            out = minimize(lambda l: -float(base.logpdf(l)), prior_mean, method="Nelder-Mead",
                           options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 2000})
            theta_map = out.x
    else:
        prior_sqrt = base.prior.joint_sqrt()
        prior_mean = base.prior.joint_mean
        if theta_map is None:
            theta_map = base.map_estimate()

    acc = PpgnhAccumulator(prior_sqrt)
    acc.add(local_gnh(base, theta_map))
    basis = lis_from_ppgnh(acc.mean(), prior_sqrt, prior_mean, settings.cutoff)
    report = LisReport(1, False, map_point=np.asarray(theta_map, dtype=float))
    if settings.max_hessians <= 1:
        return basis, report

    rng = np.random.default_rng(settings.seed)
    current = np.asarray(theta_map, dtype=float)
    streak = 0
    while acc.count < settings.max_hessians:
        reduced = ReducedPosterior(basis, base)
        walkers = max(settings.subspace_walkers, 2 * basis.rank)
        walkers += walkers % 2
        chain = sample(
            reduced,
            basis.reduced_coords(current),
            SamplerSettings(n_steps=settings.subspace_steps, burn_in=0, n_walkers=walkers,
                            seed=int(rng.integers(2**31))),
        )
        try:
            tau = max(_autocorr_time(chain.draws[:, :, i]) for i in range(basis.rank))
        except Exception:
            tau = float(settings.subspace_steps)
        stride = int(min(max(5.0 * tau, 1.0), settings.stride_cap, settings.subspace_steps - 1))
        theta_r = chain.draws[stride, 0]
        theta_perp = basis.complement_prior_mean + rng.standard_normal(basis.dim - basis.rank)
        current = basis.lift(theta_r, theta_perp)
        try:
            acc.add(local_gnh(base, current))
        except EvaluationFailure:
            continue
        # subspace distance on the whitened (orthogonal) projector; the
        # oblique one amplifies the prior's smallest scales to noise
        prev_proj = basis.v_r @ basis.v_r.T
        basis = lis_from_ppgnh(acc.mean(), prior_sqrt, prior_mean, settings.cutoff)
        dist = float(np.linalg.norm(basis.v_r @ basis.v_r.T - prev_proj))
        report.distances.append(dist)
        streak = streak + 1 if dist < settings.distance_tol else 0
        if streak >= settings.converge_rounds and acc.count >= settings.min_hessians:
            report.converged = True
            break
    report.hessian_count = acc.count
    return basis, report


def recombine_samples(lis: LisBasis, theta_r_samples: np.ndarray, n_cs: int = 1,
                      seed: int = 0) -> np.ndarray:
    """Lift reduced samples to full space with prior complement draws.

    Each reduced sample is combined with ``n_cs`` independent complement
    draws; the output has shape (n_samples * n_cs, dim).
    """
    theta_r_samples = np.atleast_2d(np.asarray(theta_r_samples, dtype=float))
    rng = np.random.default_rng(seed)
    n, _ = theta_r_samples.shape
    n_perp = lis.dim - lis.rank
    reps = np.repeat(theta_r_samples, n_cs, axis=0)
    if n_perp == 0:
        return reps @ lis.u_r.T
    perp = lis.complement_prior_mean + rng.standard_normal((n * n_cs, n_perp))
    return lis.lift(reps, perp)
