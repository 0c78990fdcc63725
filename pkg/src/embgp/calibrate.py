"""Likelihoods and posteriors for calibration with embedded model error.

Four inference targets are assembled here: the data-space least-squares fit,
the marginalized additive-GP posterior over model parameters, the joint
(parameters, weights) posterior of the embedded formulation with optional
quadratic constraint penalties, and the hyperparameter MAP search that wraps
the joint posterior.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, ModelOverflow, NonConvergence
from .gp import Dataset, GaussianDensity, fs_posterior_predictive
from .kernels import EigenBasis, SquaredExpKernel
from .linalg import SymFactor, symmetrize
from .models.adr import AdrEmbeddedModel
from .models.algebraic import EmbeddedModel

LOG2PI = float(np.log(2.0 * np.pi))

__all__ = [
    "LsFit",
    "PriorSpec",
    "PosteriorSpec",
    "least_squares_lambda",
    "koh_log_posterior",
    "KohPosterior",
    "koh_linear_posterior",
    "koh_bias_posterior",
    "BiasMixture",
    "embedded_log_posterior",
    "embedded_linear_posterior",
    "map_hyperparameters",
]


# ---------------------------------------------------------------------------
# plain-model residuals (shared by LS and KOH)
# ---------------------------------------------------------------------------


def _plain_predict(model, data: Dataset, lam: np.ndarray) -> np.ndarray:
    if isinstance(model, AdrEmbeddedModel):
        return model.predict(lam, np.zeros(lam.shape[:-1] + (model.m,)))
    return model.plain_value(data.x, lam)


def _plain_jacobian(model, data: Dataset, lam: np.ndarray) -> np.ndarray:
    if isinstance(model, AdrEmbeddedModel):
        return model.grad_lambda(lam, np.zeros(model.m))
    return model.grad_lambda(data.x, lam, 0.0)


@dataclass(frozen=True)
class LsFit:
    lambda_star: np.ndarray
    converged: bool
    n_iter: int
    objective: float
    grad_norm: float


def least_squares_lambda(model, data: Dataset, lam_init, max_iter: int = 200,
                         abs_tol: float = 1e-10, rel_tol: float = 1e-8) -> LsFit:
    """Least-squares fit of the plain model to the data.

    A MINPACK Levenberg-Marquardt pass finds the basin (its trust region
    handles near-flat oscillatory directions); a damped Gauss-Newton
    refinement then drives the gradient to the return tolerance.  Returns
    converged=False with the best iterate if the tolerance is unmet after
    max_iter refinement iterations.
    """
    lam0 = np.atleast_1d(np.asarray(lam_init, dtype=float))
    if data.n < lam0.size:
        raise ValueError("need at least as many observations as parameters")

    def safe_resid(l):
        try:
            return _plain_predict(model, data, l) - data.y
        except ModelOverflow:
            return np.full(data.n, 1e120)

    def safe_jac(l):
        try:
            return _plain_jacobian(model, data, l)
        except ModelOverflow:
            return np.zeros((data.n, lam0.size))

    from scipy.optimize import least_squares as _scipy_ls

    try:
        seed_fit = _scipy_ls(safe_resid, lam0, jac=safe_jac, method="lm",
                             xtol=1e-14, ftol=1e-14, gtol=1e-14, max_nfev=200 * lam0.size)
        lam = np.asarray(seed_fit.x, dtype=float)
    except Exception:
        lam = lam0.copy()

    def residual(l):
        with np.errstate(over="ignore"):
            r = _plain_predict(model, data, l) - data.y
            return r, float(r @ r)

    res, obj = residual(lam)
    nu = None
    growth = 2.0
    grad_norm = np.inf

    def tolerance(obj_val, jac):
        # The descent resolvable in float64 is bounded by the objective's own
        # rounding noise against the curvature; below that floor no optimizer
        # can make progress, so convergence is declared there.
        noise = np.finfo(float).eps * obj_val * np.sqrt(data.n)
        floor = np.sqrt(2.0 * noise * max(float(np.trace(jac.T @ jac)), 1e-300))
        return max(abs_tol * (1.0 + obj_val), floor)

    for it in range(1, max_iter + 1):
        jac = _plain_jacobian(model, data, lam)
        grad = 2.0 * jac.T @ res
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm < tolerance(obj, jac) or grad_norm < rel_tol * abs_tol:
            return LsFit(lam, True, it, obj, grad_norm)
        jtj = jac.T @ jac
        scale = np.maximum(np.diag(jtj), 1e-300)
        if nu is None:
            nu = 1e-3  # relative to the Marquardt diagonal scaling
        stepped = False
        for _ in range(60):
            try:
                step = np.linalg.solve(jtj + nu * np.diag(scale), -0.5 * grad)
            except np.linalg.LinAlgError:
                nu *= growth
                growth *= 2.0
                continue
            if np.any(np.abs(step) > 2.0 * (1.0 + np.abs(lam))):
                # trust-region cap: a poorly-curved coordinate must not
                # teleport on the back of another coordinate's gain
                nu *= growth
                growth *= 2.0
                continue
            try:
                cand_res, cand_obj = residual(lam + step)
            except ModelOverflow:
                cand_obj = np.inf
            # gain ratio: actual vs quadratic-model reduction
            predicted = float(step @ (nu * scale * step - 0.5 * grad))
            rho = (obj - cand_obj) / predicted if predicted > 0 else -1.0
            if np.isfinite(cand_obj) and rho > 1e-4:
                if np.linalg.norm(step) < 1e-14 * (1.0 + np.linalg.norm(lam)):
                    return LsFit(lam + step, True, it, cand_obj, grad_norm)
                lam = lam + step
                res, obj = cand_res, cand_obj
                nu = nu * max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
                growth = 2.0
                stepped = True
                break
            nu *= growth
            growth *= 2.0
        if not stepped:
            jac = _plain_jacobian(model, data, lam)
            return LsFit(lam, grad_norm < tolerance(obj, jac), it, obj, grad_norm)
    return LsFit(lam, False, max_iter, obj, grad_norm)


# ---------------------------------------------------------------------------
# priors
# ---------------------------------------------------------------------------


@dataclass
class PriorSpec:
    """Independent Gaussian blocks over model parameters and GP weights."""

    lambda_prior: GaussianDensity
    weight_prior: GaussianDensity

    def __post_init__(self):
        self._lam_fac = SymFactor(self.lambda_prior.cov)
        self._w_var = np.diag(self.weight_prior.cov)
        if np.any(self._w_var <= 0):
            raise ValueError("weight prior covariance must be positive definite")
        self._lam_logdet = self._lam_fac.logdet()
        self._w_logdet = float(np.sum(np.log(self._w_var)))

    @property
    def p(self) -> int:
        return self.lambda_prior.dim

    @property
    def m(self) -> int:
        return self.weight_prior.dim

    @property
    def dim(self) -> int:
        return self.p + self.m

    @property
    def joint_mean(self) -> np.ndarray:
        return np.concatenate([self.lambda_prior.mean, self.weight_prior.mean])

    def joint_cov(self) -> np.ndarray:
        cov = np.zeros((self.dim, self.dim))
        cov[: self.p, : self.p] = self.lambda_prior.cov
        cov[self.p :, self.p :] = self.weight_prior.cov
        return cov

    def joint_sqrt(self) -> np.ndarray:
        """Lower-triangular L with joint covariance = L L^T."""
        left = np.zeros((self.dim, self.dim))
        left[: self.p, : self.p] = self._lam_fac.lower
        left[self.p :, self.p :] = np.diag(np.sqrt(self._w_var))
        return left

    def log_density(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        lam = theta[..., : self.p] - self.lambda_prior.mean
        w = theta[..., self.p :] - self.weight_prior.mean
        qlam = np.sum(self._lam_fac.half_solve(
            lam.reshape(-1, self.p).T) ** 2, axis=0).reshape(lam.shape[:-1])
        qw = np.sum(w * w / self._w_var, axis=-1)
        return -0.5 * (qlam + qw + self._lam_logdet + self._w_logdet + self.dim * LOG2PI)

    def grad_log_density(self, theta: np.ndarray) -> np.ndarray:
        lam = theta[: self.p] - self.lambda_prior.mean
        w = theta[self.p :] - self.weight_prior.mean
        return -np.concatenate([self._lam_fac.solve(lam), w / self._w_var])


# ---------------------------------------------------------------------------
# embedded joint posterior
# ---------------------------------------------------------------------------


class PosteriorSpec:
    """Joint (lambda, w) posterior of an embedded model.

    ``regularizer`` is a constraint functional w -> (..., p) with quadratic
    penalties ``penalties`` (one alpha per constraint); absent regularizer
    means the plain embedded posterior.  All evaluations are batched over
    leading axes; model overflow is mapped to -inf log density and counted
    on ``overflow_count``.
    """

    def __init__(self, model, basis: EigenBasis, data: Dataset, prior: PriorSpec,
                 regularizer=None, penalties=None):
        if (regularizer is None) != (penalties is None):
            raise ValueError("penalties must be given exactly when a regularizer is")
        self.model = model
        self.basis = basis
        self.data = data
        self.prior = prior
        self.regularizer = regularizer
        self.penalties = None if penalties is None else np.atleast_1d(
            np.asarray(penalties, dtype=float))
        if self.penalties is not None and np.any(self.penalties < 0):
            raise ValueError("penalties must be non-negative")
        self.p = prior.p
        self.m = prior.m
        self.overflow_count = 0
        if isinstance(model, AdrEmbeddedModel):
            if model.m != self.m:
                raise DimensionError("weight prior does not match ADR basis size")
            self._phi_data = None
        else:
            if basis.m != self.m:
                raise DimensionError("weight prior does not match basis size")
            self._phi_data = basis.phi(data.x)
        self._lik_const = -0.5 * data.n * (LOG2PI + 2.0 * np.log(data.noise_std))

    @property
    def dim(self) -> int:
        return self.p + self.m

    def split(self, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        theta = np.asarray(theta, dtype=float)
        return theta[..., : self.p], theta[..., self.p :]

    def predict_data(self, theta: np.ndarray) -> np.ndarray:
        """Model predictions at the data inputs, batched over leading axes."""
        lam, w = self.split(theta)
        if isinstance(self.model, AdrEmbeddedModel):
            return self.model.predict(lam, w)
        return self.model.value(self.data.x, lam, w @ self._phi_data.T)

    def data_jacobian(self, theta: np.ndarray) -> np.ndarray:
        """(N, p+m) Jacobian of the data predictions at a single theta."""
        lam, w = self.split(theta)
        if isinstance(self.model, AdrEmbeddedModel):
            return np.concatenate(
                [self.model.grad_lambda(lam, w), self.model.grad_weights(lam, w)], axis=-1)
        delta = self._phi_data @ w
        gl = self.model.grad_lambda(self.data.x, lam, delta)
        gd = self.model.grad_delta(self.data.x, lam, delta)
        return np.concatenate([gl, gd[..., None] * self._phi_data], axis=-1)

    def log_likelihood(self, theta: np.ndarray) -> np.ndarray:
        pred = self.predict_data(theta)
        resid = pred - self.data.y
        return self._lik_const - 0.5 * np.sum(resid * resid, axis=-1) / self.data.noise_std**2

    def penalty(self, theta: np.ndarray) -> np.ndarray:
        if self.regularizer is None:
            return np.zeros(np.asarray(theta).shape[:-1])
        _, w = self.split(theta)
        r = self.regularizer(w)
        return -0.5 * np.sum(self.penalties * r * r, axis=-1)

    def logpdf(self, theta: np.ndarray) -> np.ndarray:
        """Log posterior density (up to the evidence constant)."""
        theta = np.asarray(theta, dtype=float)
        try:
            out = self.prior.log_density(theta) + self.log_likelihood(theta) + self.penalty(theta)
        except ModelOverflow:
            if theta.ndim == 1:
                self.overflow_count += 1
                return np.float64(-np.inf)
            out = np.empty(theta.shape[:-1])
            for idx in np.ndindex(*theta.shape[:-1]):
                out[idx] = self.logpdf(theta[idx])
            return out
        return out

    def grad_logpdf(self, theta: np.ndarray) -> np.ndarray:
        """Gradient at a single theta (used by MAP search and Laplace init)."""
        theta = np.asarray(theta, dtype=float)
        resid = self.predict_data(theta) - self.data.y
        jac = self.data_jacobian(theta)
        grad = self.prior.grad_log_density(theta) - jac.T @ resid / self.data.noise_std**2
        if self.regularizer is not None:
            _, w = self.split(theta)
            r = self.regularizer(w)
            dr = self.regularizer.grad(w)  # (p, m)
            grad[self.p :] -= dr.T @ (self.penalties * r)
        return grad

    def _augmented_residuals(self, theta: np.ndarray) -> np.ndarray:
        """Residual vector whose half squared norm is the negative log density.

        Blocks: whitened data misfit, whitened prior deviations, and
        sqrt(alpha)-scaled constraint values (constants dropped).
        """
        lam, w = self.split(theta)
        parts = [(self.predict_data(theta) - self.data.y) / self.data.noise_std,
                 self.prior._lam_fac.half_solve(lam - self.prior.lambda_prior.mean),
                 (w - self.prior.weight_prior.mean) / np.sqrt(self.prior._w_var)]
        if self.regularizer is not None:
            parts.append(np.sqrt(self.penalties) * self.regularizer(w))
        return np.concatenate(parts)

    def _augmented_jacobian(self, theta: np.ndarray) -> np.ndarray:
        jac_data = self.data_jacobian(theta) / self.data.noise_std
        jac_prior = np.zeros((self.dim, self.dim))
        jac_prior[: self.p, : self.p] = self.prior._lam_fac.half_solve(np.eye(self.p))
        jac_prior[self.p :, self.p :] = np.diag(1.0 / np.sqrt(self.prior._w_var))
        blocks = [jac_data, jac_prior]
        if self.regularizer is not None:
            dr = self.regularizer.grad(theta[self.p :])
            jac_pen = np.zeros((dr.shape[0], self.dim))
            jac_pen[:, self.p :] = np.sqrt(self.penalties)[:, None] * dr
            blocks.append(jac_pen)
        return np.vstack(blocks)

    def map_estimate(self, theta_init=None, maxiter: int = 500):
        """Posterior mode by damped Gauss-Newton on the augmented residuals.

        Gauss-Newton sees the model's output-scale curvature directly, which
        matters when the embedding sits inside an exponential; a quasi-Newton
        polish follows to tighten the gradient.
        """
        from scipy.optimize import minimize

        if theta_init is None:
            theta_init = self.prior.joint_mean
        theta = np.asarray(theta_init, dtype=float).copy()

        def half_obj(t):
            r = self._augmented_residuals(t)
            return r, 0.5 * float(r @ r)

        try:
            res, obj = half_obj(theta)
        except ModelOverflow:
            raise NonConvergence("MAP search failed: initial point overflows the model")
        nu = 1e-3
        growth = 2.0
        for _ in range(maxiter):
            jac = self._augmented_jacobian(theta)
            grad = jac.T @ res
            if np.linalg.norm(grad) < 1e-9 * (1.0 + obj):
                break
            jtj = jac.T @ jac
            scale = np.maximum(np.diag(jtj), 1e-300)
            moved = False
            for _ in range(60):
                try:
                    step = np.linalg.solve(jtj + nu * np.diag(scale), -grad)
                except np.linalg.LinAlgError:
                    nu *= growth
                    growth *= 2.0
                    continue
                if np.any(np.abs(step) > 2.0 * (1.0 + np.abs(theta))):
                    nu *= growth
                    growth *= 2.0
                    continue
                try:
                    cand_res, cand_obj = half_obj(theta + step)
                except ModelOverflow:
                    nu *= growth
                    growth *= 2.0
                    continue
                predicted = float(step @ (nu * scale * step - grad))
                rho = (obj - cand_obj) / predicted if predicted > 0 else -1.0
                if np.isfinite(cand_obj) and rho > 1e-4:
                    theta = theta + step
                    res, obj = cand_res, cand_obj
                    nu = nu * max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
                    growth = 2.0
                    moved = True
                    break
                nu *= growth
                growth *= 2.0
                if not np.isfinite(nu):
                    break
            if not moved:
                break

        def neg(t):
            val = self.logpdf(t)
            if not np.isfinite(val):
                return 1e300, np.zeros_like(t)
            return -float(val), -self.grad_logpdf(t)

        out = minimize(neg, theta, jac=True, method="L-BFGS-B",
                       options={"maxiter": maxiter, "ftol": 1e-14, "gtol": 1e-10})
        if not np.isfinite(out.fun):
            raise NonConvergence("MAP search failed to find a finite-density point")
        return out.x if -out.fun >= float(self.logpdf(theta)) else theta

    def laplace_approx(self, theta_map: np.ndarray) -> GaussianDensity:
        """Gauss-Newton Gaussian approximation at the mode.

        Curvature = J^T J / sigma^2 + prior precision + penalty curvature;
        used to shape sampler initial clouds, not as an inference result.
        """
        jac = self.data_jacobian(theta_map)
        prec = jac.T @ jac / self.data.noise_std**2
        prec[: self.p, : self.p] += self.prior._lam_fac.solve(np.eye(self.p))
        prec[self.p :, self.p :] += np.diag(1.0 / self.prior._w_var)
        if self.regularizer is not None:
            dr = self.regularizer.grad(theta_map[self.p :])
            prec[self.p :, self.p :] += (dr.T * self.penalties) @ dr
        fac = SymFactor(symmetrize(prec))
        return GaussianDensity(theta_map, symmetrize(fac.solve(np.eye(self.dim))),
                               precision_factor=fac)


def embedded_log_posterior(spec: PosteriorSpec, theta) -> np.ndarray:
    """Log joint posterior density of (lambda, w); batched over leading axes."""
    return spec.logpdf(theta)


def embedded_linear_posterior(spec: PosteriorSpec) -> GaussianDensity:
    """Exact Gaussian joint posterior when predictions are affine in theta.

    Valid for the linear fit model with additive embedding (and any other
    predictor affine in (lambda, w)); a linear regularizer (moment-matrix
    form) folds in exactly.
    """
    zero = np.zeros(spec.dim)
    offset = spec.predict_data(zero)
    jac = spec.data_jacobian(zero)
    prec = jac.T @ jac / spec.data.noise_std**2
    prec[: spec.p, : spec.p] += spec.prior._lam_fac.solve(np.eye(spec.p))
    prec[spec.p :, spec.p :] += np.diag(1.0 / spec.prior._w_var)
    rhs = jac.T @ (spec.data.y - offset) / spec.data.noise_std**2
    rhs[: spec.p] += spec.prior._lam_fac.solve(spec.prior.lambda_prior.mean)
    rhs[spec.p :] += spec.prior.weight_prior.mean / spec.prior._w_var
    if spec.regularizer is not None:
        if spec.regularizer.moment is None:
            raise ValueError("closed form needs a linear (moment-matrix) regularizer")
        mom = spec.regularizer.moment
        prec[spec.p :, spec.p :] += (mom.T * spec.penalties) @ mom
    fac = SymFactor(symmetrize(prec))
    mean = fac.solve(rhs)
    return GaussianDensity(mean, symmetrize(fac.solve(np.eye(spec.dim))), precision_factor=fac)


# ---------------------------------------------------------------------------
# KOH marginalized posterior
# ---------------------------------------------------------------------------


class KohPosterior:
    """Model-parameter posterior with the discrepancy GP marginalized out.

    The Gram matrix (kernel + noise) is fixed across parameter values, so it
    is factorized once; ``kernel_fn`` may supply a modified covariance.
    """

    def __init__(self, model, data: Dataset, kernel: SquaredExpKernel,
                 lambda_prior: GaussianDensity, kernel_fn=None):
        self.model = model
        self.data = data
        self.kernel = kernel
        self.lambda_prior = lambda_prior
        keval = kernel_fn if kernel_fn is not None else kernel.gram
        kxx = (keval(data.x[:, None], data.x[None, :]) if kernel_fn is not None
               else kernel.gram(data.x))
        self._fac = SymFactor(kxx + data.noise_std**2 * np.eye(data.n),
                              scale=kernel.signal_std**2)
        self._lam_fac = SymFactor(lambda_prior.cov)
        self._const = -0.5 * (self._fac.logdet() + data.n * LOG2PI)
        self._prior_const = -0.5 * (self._lam_fac.logdet() + lambda_prior.dim * LOG2PI)
        self.p = lambda_prior.dim

    def log_likelihood(self, lam) -> np.ndarray:
        lam = np.asarray(lam, dtype=float)
        resid = _plain_predict(self.model, self.data, lam) - self.data.y
        quad = np.sum(self._fac.half_solve(resid.reshape(-1, self.data.n).T) ** 2,
                      axis=0).reshape(lam.shape[:-1])
        return self._const - 0.5 * quad

    def logpdf(self, lam) -> np.ndarray:
        lam = np.asarray(lam, dtype=float)
        dl = lam - self.lambda_prior.mean
        qprior = np.sum(self._lam_fac.half_solve(dl.reshape(-1, self.p).T) ** 2,
                        axis=0).reshape(lam.shape[:-1])
        return self.log_likelihood(lam) + self._prior_const - 0.5 * qprior

    __call__ = logpdf


def koh_log_posterior(lam, model, data: Dataset, kernel: SquaredExpKernel,
                      lambda_prior: GaussianDensity, kernel_fn=None) -> np.ndarray:
    """One-shot evaluation of the marginalized KOH log posterior."""
    return KohPosterior(model, data, kernel, lambda_prior, kernel_fn=kernel_fn).logpdf(lam)


def koh_linear_posterior(model, data: Dataset, kernel: SquaredExpKernel,
                         lambda_prior: GaussianDensity, kernel_fn=None) -> GaussianDensity:
    """Exact Gaussian KOH parameter posterior for a linear plain model."""
    gmat = _plain_jacobian(model, data, lambda_prior.mean)  # (N, p), constant
    offset = _plain_predict(model, data, np.zeros(lambda_prior.dim))
    keval = kernel_fn if kernel_fn is not None else None
    kxx = (keval(data.x[:, None], data.x[None, :]) if keval is not None
           else kernel.gram(data.x))
    fac = SymFactor(kxx + data.noise_std**2 * np.eye(data.n), scale=kernel.signal_std**2)
    lam_fac = SymFactor(lambda_prior.cov)
    prec = gmat.T @ fac.solve(gmat) + lam_fac.solve(np.eye(lambda_prior.dim))
    rhs = gmat.T @ fac.solve(data.y - offset) + lam_fac.solve(lambda_prior.mean)
    pfac = SymFactor(symmetrize(prec))
    return GaussianDensity(pfac.solve(rhs), symmetrize(pfac.solve(np.eye(lambda_prior.dim))),
                           precision_factor=pfac)


@dataclass
class BiasMixture:
    """Per-parameter-sample Gaussian laws of the discrepancy at grid points."""

    grid: np.ndarray
    means: np.ndarray  # (S, n_grid)
    variances: np.ndarray  # (n_grid,) shared conditional variance

    def mean(self) -> np.ndarray:
        return self.means.mean(axis=0)

    def std(self) -> np.ndarray:
        return np.sqrt(self.variances + self.means.var(axis=0))


def koh_bias_posterior(lam_samples, model, data: Dataset, kernel: SquaredExpKernel,
                       x_star, kernel_fn=None) -> BiasMixture:
    """Discrepancy posterior mixed over parameter samples.

    For each sample the residual data y - f_lam conditions the GP exactly as
    in function-space regression; the conditional covariance does not depend
    on the sample, so it is computed once.
    """
    lam_samples = np.atleast_2d(np.asarray(lam_samples, dtype=float))
    if lam_samples.size == 0:
        raise ValueError("need at least one parameter sample")
    x_star = np.atleast_1d(np.asarray(x_star, dtype=float))
    if kernel_fn is None:
        kxx = kernel.gram(data.x)
        ksx = kernel.gram(x_star, data.x)
        kss = kernel.gram(x_star)
    else:
        kxx = kernel_fn(data.x[:, None], data.x[None, :])
        ksx = kernel_fn(x_star[:, None], data.x[None, :])
        kss = kernel_fn(x_star[:, None], x_star[None, :])
    fac = SymFactor(kxx + data.noise_std**2 * np.eye(data.n), scale=kernel.signal_std**2)
    resid = data.y - _plain_predict(model, data, lam_samples)  # (S, N)
    means = resid @ fac.solve(ksx.T)
    half = fac.half_solve(ksx.T)
    variances = np.maximum(np.diag(kss) - np.sum(half * half, axis=0), 0.0)
    return BiasMixture(x_star, means, variances)


# ---------------------------------------------------------------------------
# hyperparameter MAP
# ---------------------------------------------------------------------------


@dataclass
class HyperMapResult:
    signal_std: float
    length_scale: float
    table: list = field(default_factory=list)  # (sigma_f, ell, best log posterior)
    theta_at_best: np.ndarray | None = None


def map_hyperparameters(spec_factory, signal_grid, length_grid,
                        theta_init=None, maxiter: int = 400) -> HyperMapResult:
    """Grid search over kernel hyperparameters scored by the inner MAP.

    ``spec_factory(sigma_f, ell)`` must build the full PosteriorSpec for a
    candidate; the score of a candidate is max_theta of its log posterior
    (quasi-Newton inner optimization).  Candidates whose inner optimization
    fails are skipped; if all fail NonConvergence is raised.
    """
    best = None
    table = []
    for sig in signal_grid:
        for ell in length_grid:
            try:
                spec = spec_factory(float(sig), float(ell))
                tmap = spec.map_estimate(theta_init=theta_init, maxiter=maxiter)
                val = float(spec.logpdf(tmap))
            except Exception:
                table.append((float(sig), float(ell), -np.inf))
                continue
            table.append((float(sig), float(ell), val))
            if best is None or val > best[2]:
                best = (float(sig), float(ell), val, tmap)
    if best is None or not np.isfinite(best[2]):
        raise NonConvergence("every hyperparameter candidate failed its inner optimization")
    return HyperMapResult(best[0], best[1], table, best[3])
