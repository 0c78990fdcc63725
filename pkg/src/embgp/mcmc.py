"""Gradient-free samplers, effective-sample-size diagnostics, push-forward bands.

The workhorse is the affine-invariant stretch-move ensemble: it needs no
gradients (constraint penalties make those awkward) and its moves adapt to
the strong weight-space correlations these posteriors develop.  A scalar
adaptive random-walk Metropolis sampler is included for low-dimensional
marginal chains.  Everything is deterministic given (seed, settings).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BadInit, DegenerateChain, ModelOverflow, StuckChain

__all__ = ["SamplerSettings", "ChainSet", "sample", "ess", "pushforward_bands", "BandTable"]


@dataclass(frozen=True)
class SamplerSettings:
    algorithm: str = "ensemble"  # "ensemble" | "rwm"
    n_steps: int = 40000
    burn_in: int = 10000
    n_walkers: int | None = None  # ensemble default: max(2*dim, 32)
    seed: int = 0
    stretch: float = 2.0
    target_acceptance: float = 0.3  # rwm only
    initial_scale: float = 1e-3  # point-init scatter, relative

    def __post_init__(self):
        if self.algorithm not in ("ensemble", "rwm"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if not 0 <= self.burn_in < self.n_steps:
            raise ValueError("require 0 <= burn_in < n_steps")
        if self.stretch <= 1.0:
            raise ValueError("stretch parameter must exceed 1")


@dataclass
class ChainSet:
    """Raw sampler output: draws are (n_steps, n_walkers, dim)."""

    draws: np.ndarray
    log_density: np.ndarray
    acceptance: float
    seed: int
    burn_in: int
    overflow_rejections: int = 0

    @property
    def n_steps(self) -> int:
        return self.draws.shape[0]

    @property
    def n_walkers(self) -> int:
        return self.draws.shape[1]

    @property
    def dim(self) -> int:
        return self.draws.shape[2]

    def flat(self, thin: int = 1) -> np.ndarray:
        """Post-burn-in draws flattened to (n, dim)."""
        kept = self.draws[self.burn_in :: thin]
        return kept.reshape(-1, self.dim)

    def kept(self) -> np.ndarray:
        return self.draws[self.burn_in :]


class _LogPost:
    """Uniform front-end: batched where the target supports it."""

    def __init__(self, target):
        self.fn = target.logpdf if hasattr(target, "logpdf") else target
        self.batched = None
        self.overflows = 0

    def one(self, theta: np.ndarray) -> float:
        try:
            return float(self.fn(theta))
        except ModelOverflow:
            self.overflows += 1
            return -np.inf

    def many(self, thetas: np.ndarray) -> np.ndarray:
        if self.batched is None:
            try:
                out = np.asarray(self.fn(thetas), dtype=float)
                self.batched = out.shape == thetas.shape[:1]
                if self.batched:
                    return out
            except ModelOverflow:
                self.batched = True  # batched but overflowing; fall through to rows
            except Exception:
                self.batched = False
        if self.batched:
            try:
                return np.asarray(self.fn(thetas), dtype=float)
            except ModelOverflow:
                pass
        return np.array([self.one(t) for t in thetas])


def _init_cloud(lp: _LogPost, init, n_walkers: int, dim: int, scale: float,
                rng: np.random.Generator) -> np.ndarray:
    init = np.asarray(init, dtype=float)
    if init.ndim == 2:
        if init.shape != (n_walkers, dim):
            raise BadInit(f"walker cloud must have shape {(n_walkers, dim)}, got {init.shape}")
        cloud = init.copy()
    else:
        if not np.isfinite(lp.one(init)):
            raise BadInit("initial state has zero posterior density")
        cloud = init + scale * (1.0 + np.abs(init)) * rng.standard_normal((n_walkers, dim))
    logp = lp.many(cloud)
    for _ in range(100):
        bad = ~np.isfinite(logp)
        if not np.any(bad):
            return cloud
        anchor = init if init.ndim == 1 else cloud[np.argmax(logp)]
        cloud[bad] = anchor + scale * (1.0 + np.abs(anchor)) * rng.standard_normal(
            (int(bad.sum()), dim))
        logp[bad] = lp.many(cloud[bad])
    raise BadInit("could not find finite-density starting positions for all walkers")


def _sample_ensemble(lp: _LogPost, init, settings: SamplerSettings, dim: int) -> ChainSet:
    rng = np.random.default_rng(settings.seed)
    n_walkers = settings.n_walkers or max(2 * dim, 32)
    if n_walkers < 2 * dim:
        raise ValueError(f"ensemble needs n_walkers >= 2*dim = {2 * dim}")
    if n_walkers % 2:
        raise ValueError("n_walkers must be even")
    cloud = _init_cloud(lp, init, n_walkers, dim, settings.initial_scale, rng)
    logp = lp.many(cloud)
    draws = np.empty((settings.n_steps, n_walkers, dim))
    logs = np.empty((settings.n_steps, n_walkers))
    half = n_walkers // 2
    blocks = (np.arange(half), np.arange(half, n_walkers))
    a = settings.stretch
    n_accept = 0
    stuck = 0
    for step in range(settings.n_steps):
        accepted_any = False
        for mine, other in ((blocks[0], blocks[1]), (blocks[1], blocks[0])):
            z = (1.0 + (a - 1.0) * rng.random(half)) ** 2 / a
            partners = other[rng.integers(0, half, half)]
            proposal = cloud[partners] + z[:, None] * (cloud[mine] - cloud[partners])
            logp_new = lp.many(proposal)
            log_accept = (dim - 1) * np.log(z) + logp_new - logp[mine]
            accept = np.log(rng.random(half)) < log_accept
            idx = mine[accept]
            cloud[idx] = proposal[accept]
            logp[idx] = logp_new[accept]
            n_accept += int(accept.sum())
            accepted_any = accepted_any or bool(np.any(accept))
        stuck = 0 if accepted_any else stuck + 1
        if stuck >= 1000:
            raise StuckChain("every proposal rejected for 1000 consecutive steps")
        draws[step] = cloud
        logs[step] = logp
    acc = n_accept / (settings.n_steps * n_walkers)
    return ChainSet(draws, logs, acc, settings.seed, settings.burn_in, lp.overflows)


def _sample_rwm(lp: _LogPost, init, settings: SamplerSettings, dim: int) -> ChainSet:
    rng = np.random.default_rng(settings.seed)
    init = np.asarray(init, dtype=float)
    state = init[0].copy() if init.ndim == 2 else init.copy()
    logp = lp.one(state)
    if not np.isfinite(logp):
        raise BadInit("initial state has zero posterior density")
    scale = settings.initial_scale * (1.0 + float(np.linalg.norm(state)) / np.sqrt(dim))
    draws = np.empty((settings.n_steps, 1, dim))
    logs = np.empty((settings.n_steps, 1))
    n_accept = 0
    stuck = 0
    for step in range(settings.n_steps):
        proposal = state + scale * rng.standard_normal(dim)
        logp_new = lp.one(proposal)
        if np.log(rng.random()) < logp_new - logp:
            state, logp = proposal, logp_new
            n_accept += 1
            stuck = 0
        else:
            stuck += 1
            if stuck >= 1000:
                raise StuckChain("every proposal rejected for 1000 consecutive steps")
        if step < settings.burn_in:
            # diminishing adaptation toward the target acceptance rate
            rate = n_accept / (step + 1)
            scale *= np.exp((rate - settings.target_acceptance) / np.sqrt(step + 1.0))
        draws[step, 0] = state
        logs[step, 0] = logp
    acc = n_accept / settings.n_steps
    return ChainSet(draws, logs, acc, settings.seed, settings.burn_in, lp.overflows)


def sample(logpost, init, settings: SamplerSettings) -> ChainSet:
    """Draw an MCMC chain targeting exp(logpost); deterministic per seed.

    ``init`` is either a single state (walkers are scattered around it) or a
    full (n_walkers, dim) cloud, which adaptive outer loops use to resume.
    """
    lp = _LogPost(logpost)
    init_arr = np.asarray(init, dtype=float)
    dim = init_arr.shape[-1]
    if settings.algorithm == "ensemble":
        return _sample_ensemble(lp, init_arr, settings, dim)
    return _sample_rwm(lp, init_arr, settings, dim)


def _autocorr_time(series: np.ndarray) -> float:
    """Integrated autocorrelation time by Geyer's initial positive sequence.

    ``series`` is (n, n_walkers); autocorrelations are averaged over walkers
    before the pairwise truncation.
    """
    n = series.shape[0]
    centered = series - series.mean(axis=0)
    var = np.mean(centered**2, axis=0)
    if np.all(var == 0):
        raise DegenerateChain("coordinate is constant; autocorrelation undefined")
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(centered, n=nfft, axis=0)
    acov = np.fft.irfft(f * np.conjugate(f), n=nfft, axis=0)[:n].real / n
    rho = (acov / np.where(var == 0, 1.0, var)).mean(axis=1)
    rho = rho / rho[0]
    # Geyer: sum consecutive pairs while the pair sums stay positive
    tau = -1.0
    k = 0
    while 2 * k + 1 < n:
        gamma = rho[2 * k] + rho[2 * k + 1]
        if gamma <= 0:
            break
        tau += 2.0 * gamma
        k += 1
    return max(tau, 1.0)


def ess(chain: ChainSet, coordinate: int) -> float:
    """Effective sample size of one coordinate across all walkers."""
    kept = chain.kept()
    if kept.shape[0] < 100:
        raise ValueError("need at least 100 post-burn-in steps for an ESS estimate")
    series = kept[:, :, coordinate]
    tau = _autocorr_time(series)
    return float(series.shape[0] * series.shape[1] / tau)


@dataclass
class BandTable:
    """Pointwise moments of the push-forward posteriors on a grid."""

    grid: np.ndarray
    pfp_f_mean: np.ndarray
    pfp_f_std: np.ndarray
    pfp_g_mean: np.ndarray
    pfp_g_std: np.ndarray
    pfp_gp_mean: np.ndarray
    pfp_gp_std: np.ndarray
    pp_mean: np.ndarray
    pp_std: np.ndarray
    skipped_samples: int = 0

    COLUMNS = ("x", "pfp_f_mean", "pfp_f_std", "pfp_g_mean", "pfp_g_std",
               "pfp_gp_mean", "pfp_gp_std", "pp_mean", "pp_std")

    def rows(self):
        for i, x in enumerate(self.grid):
            yield (x, self.pfp_f_mean[i], self.pfp_f_std[i], self.pfp_g_mean[i],
                   self.pfp_g_std[i], self.pfp_gp_mean[i], self.pfp_gp_std[i],
                   self.pp_mean[i], self.pp_std[i])


def pushforward_bands(theta_samples: np.ndarray, model, basis, grid,
                      noise_std: float, param_dim: int | None = None) -> BandTable:
    """Sample moments of plain-model, corrected-model, and GP push-forwards.

    PP equals the corrected-model push-forward with the observation noise
    variance added.  Samples on which the model overflows are skipped and
    counted.
    """
    theta_samples = np.atleast_2d(np.asarray(theta_samples, dtype=float))
    if theta_samples.size == 0:
        raise ValueError("need at least one posterior sample")
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    p = param_dim if param_dim is not None else getattr(model, "param_dim")
    lam, w = theta_samples[:, :p], theta_samples[:, p:]
    phi = basis.phi(grid)  # (n, m)
    gp_term = w @ phi.T  # (S, n)
    skipped = 0
    try:
        f_plain = model.value(grid, lam, 0.0)
        f_full = model.value(grid, lam, gp_term)
    except ModelOverflow:
        rows_plain, rows_full, keep = [], [], []
        for s in range(theta_samples.shape[0]):
            try:
                rows_plain.append(model.value(grid, lam[s], 0.0))
                rows_full.append(model.value(grid, lam[s], gp_term[s]))
                keep.append(s)
            except ModelOverflow:
                skipped += 1
        if not keep:
            raise ValueError("model overflowed at every posterior sample")
        f_plain = np.asarray(rows_plain)
        f_full = np.asarray(rows_full)
        gp_term = gp_term[keep]
    pp_var = f_full.var(axis=0) + noise_std**2
    return BandTable(
        grid,
        f_plain.mean(axis=0), f_plain.std(axis=0),
        f_full.mean(axis=0), f_full.std(axis=0),
        gp_term.mean(axis=0), gp_term.std(axis=0),
        f_full.mean(axis=0), np.sqrt(pp_var),
        skipped,
    )
