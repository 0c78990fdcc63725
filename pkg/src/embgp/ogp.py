"""Orthogonality machinery for the discrepancy GP.

Three routes to keep the correction process from absorbing what the fit
model can explain near its best-fit parameters:

* additive route - condition the kernel on the p linear functionals
  int grad_lam f(x; lam*) delta(x) dmu(x) = 0, giving a modified covariance
  k(x,x') - h(x)^T H^{-1} h(x');
* linearized route (embedded models) - same conditioning with the model's
  sensitivity to the embedded correction folded into the integrand;
* regularized route - evaluate the p exact (generally nonlinear) residual
  functionals R_k(w) by quadrature and let the caller penalize them.

The modified kernel can be re-eigendecomposed with the Nystrom rule; for
truncations beyond the kernel's numerical rank, ``conditioned_weight_basis``
instead conditions the weight prior of an existing basis on the same
constraints exactly and re-diagonalizes in weight space.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DegenerateConstraints
from .kernels import EigenBasis, QuadratureRule, SquaredExpKernel, kernel_eval, nystrom_basis
from .linalg import SymFactor, sym_eig_desc, symmetrize

DEFAULT_ORDER = 128
COND_LIMIT = 1e12

__all__ = [
    "ModifiedKernel",
    "RogpConstraint",
    "OrthoConstraintSet",
    "additive_ogp_kernel",
    "logp_kernel",
    "rogp_constraints",
    "conditioned_weight_basis",
    "constraint_coefficients",
]


def constraint_coefficients(model, lam_star: np.ndarray, xs: np.ndarray, mode: str) -> np.ndarray:
    """Integrand coefficient c(x) of the orthogonality functionals, (N, p).

    mode "additive": c = grad_lam f at lam*;
    mode "linearized": c = (df/d delta at (lam*, 0)) * grad_lam f at lam*.
    """
    xs = np.asarray(xs, dtype=float)
    lam_star = np.asarray(lam_star, dtype=float)
    g = model.grad_lambda(xs, lam_star, 0.0)
    if mode == "additive":
        return g
    if mode == "linearized":
        dd = model.grad_delta(xs, lam_star, 0.0)
        return dd[..., None] * g
    raise ValueError(f"unknown constraint mode {mode!r}")


@dataclass
class ModifiedKernel:
    """Covariance conditioned on the p orthogonality functionals.

    The constraint Gram is factorized in correlation form: the functionals
    may carry wildly different natural scales (e.g. derivative w.r.t. an
    exponent), and only genuine collinearity - not units - should count as
    degeneracy.  The conditioned kernel itself is invariant to that scaling.
    """

    base: SquaredExpKernel
    mode: str
    lambda_star: np.ndarray
    rule: QuadratureRule
    coeff_nodes: np.ndarray = field(repr=False)  # (Q, p)
    h_weights: np.ndarray = field(repr=False)  # (Q, p): w_q c(x_q)
    H: np.ndarray = field(repr=False)
    _scale: np.ndarray = field(repr=False)
    _h_fac: SymFactor = field(repr=False)

    @property
    def p(self) -> int:
        return self.coeff_nodes.shape[1]

    def h(self, x) -> np.ndarray:
        """Cross-covariance between delta(x) and the constraint functionals."""
        x = np.asarray(x, dtype=float)
        return kernel_eval(self.base, x[..., None], self.rule.nodes) @ self.h_weights

    def __call__(self, x, y) -> np.ndarray:
        """Modified kernel; broadcasts like kernel_eval."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        hx = self.h(x) / self._scale  # (..., p)
        hy = self.h(y) / self._scale
        half_x = self._h_fac.half_solve(hx.reshape(-1, self.p).T).T.reshape(hx.shape)
        half_y = self._h_fac.half_solve(hy.reshape(-1, self.p).T).T.reshape(hy.shape)
        correction = np.sum(
            np.broadcast_arrays(half_x, half_y)[0] * np.broadcast_arrays(half_x, half_y)[1],
            axis=-1,
        )
        return kernel_eval(self.base, x, y) - correction


def _build_modified(kernel, model, lam_star, measure, order, mode) -> ModifiedKernel:
    lam_star = np.atleast_1d(np.asarray(lam_star, dtype=float))
    rule = measure.quadrature(order)
    coeff = constraint_coefficients(model, lam_star, rule.nodes, mode)  # (Q, p)
    wc = rule.weights[:, None] * coeff
    gram = kernel.gram(rule.nodes)
    big_h = symmetrize(wc.T @ gram @ wc)
    diag = np.diag(big_h)
    if np.any(diag <= 0):
        raise DegenerateConstraints(
            "a constraint functional has zero variance under the prior",
            null_direction=np.eye(big_h.shape[0])[int(np.argmin(diag))],
        )
    scale = np.sqrt(diag)
    corr = big_h / np.outer(scale, scale)
    vals, vecs = sym_eig_desc(corr)
    if vals[-1] <= vals[0] / COND_LIMIT:
        raise DegenerateConstraints(
            f"constraint Gram is singular (condition beyond {COND_LIMIT:.0e}); "
            "some gradient directions are collinear under the measure",
            null_direction=vecs[:, -1] / scale,
        )
    fac = SymFactor(corr, scale=vals[0])
    return ModifiedKernel(kernel, mode, lam_star, rule, coeff, wc, big_h, scale, fac)


def additive_ogp_kernel(kernel: SquaredExpKernel, model, lam_star, measure,
                        order: int = DEFAULT_ORDER) -> ModifiedKernel:
    """Kernel conditioned on orthogonality to the plain-model gradients."""
    return _build_modified(kernel, model, lam_star, measure, order, "additive")


def logp_kernel(kernel: SquaredExpKernel, model, lam_star, measure,
                order: int = DEFAULT_ORDER) -> ModifiedKernel:
    """Kernel conditioned on the linearized embedded-model functionals."""
    return _build_modified(kernel, model, lam_star, measure, order, "linearized")


@dataclass
class RogpConstraint:
    """Residual orthogonality functionals R(w), evaluated by quadrature.

    ``moment`` is the exact linear representation R(w) = moment @ w, present
    whenever the embedding enters additively (then f~ - f == delta).
    """

    lambda_star: np.ndarray
    rule: QuadratureRule
    phi_nodes: np.ndarray = field(repr=False)  # (Q, m)
    grad_nodes: np.ndarray = field(repr=False)  # (Q, p)
    plain_nodes: np.ndarray = field(repr=False)  # (Q,)
    model: object = field(repr=False, default=None)
    moment: np.ndarray | None = field(default=None, repr=False)  # (p, m)

    @property
    def p(self) -> int:
        return self.grad_nodes.shape[1]

    @property
    def m(self) -> int:
        return self.phi_nodes.shape[1]

    def __call__(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        if self.moment is not None:
            return w @ self.moment.T
        delta = w @ self.phi_nodes.T  # (..., Q)
        vals = self.model.value(self.rule.nodes, self.lambda_star, delta) - self.plain_nodes
        return (vals * self.rule.weights) @ self.grad_nodes

    def grad(self, w) -> np.ndarray:
        """dR/dw at a single w, shape (p, m)."""
        if self.moment is not None:
            return self.moment
        w = np.asarray(w, dtype=float)
        delta = self.phi_nodes @ w
        dd = self.model.grad_delta(self.rule.nodes, self.lambda_star, delta)
        return (self.grad_nodes * (self.rule.weights * dd)[:, None]).T @ self.phi_nodes


def rogp_constraints(model, lam_star, basis: EigenBasis, measure,
                     order: int = DEFAULT_ORDER, normalize: bool = True) -> RogpConstraint:
    """Build R(w) for an algebraic embedded model under the given measure.

    With ``normalize`` each functional is divided by the L2(measure) norm of
    its gradient weight, so R_k reads as the projection of the model change
    onto the unit gradient direction.  This leaves the constraint set
    {R = 0} unchanged but makes penalty strengths comparable across
    components whose raw gradients differ by orders of magnitude.
    """
    lam_star = np.atleast_1d(np.asarray(lam_star, dtype=float))
    rule = measure.quadrature(order)
    phi_nodes = basis.phi(rule.nodes)
    grad_nodes = model.grad_lambda(rule.nodes, lam_star, 0.0)
    if normalize:
        # columns can overflow when squared (exponential gradients); rescale first
        cmax = np.maximum(np.max(np.abs(grad_nodes), axis=0), 1e-300)
        scaled = grad_nodes / cmax
        norms = cmax * np.sqrt(rule.weights @ (scaled * scaled))
        grad_nodes = grad_nodes / norms
    plain_nodes = model.plain_value(rule.nodes, lam_star)
    moment = None
    if getattr(model, "embed_site", None) == "additive":
        moment = (grad_nodes * rule.weights[:, None]).T @ phi_nodes
    return RogpConstraint(lam_star, rule, phi_nodes, grad_nodes, plain_nodes, model, moment)


def adr_rogp_constraints(adr_model, lam_star: float, normalize: bool = True) -> RogpConstraint:
    """Field-space residual functional for the source-embedded PDE model.

    The embedding is linear in w, so R(w) = M w with
    M_j = integral over the space-time square of u_j * du/dlam, evaluated by
    trapezoid on the solver grid (normalized by ||du/dlam||_{L2} so R reads
    in field units).
    """
    grid = adr_model.grid
    lam_star = np.atleast_1d(np.asarray(lam_star, dtype=float))
    from .models.adr import SRC_COEFF, solve_adr_pde

    zero_init = lambda x: np.zeros_like(x)
    dlam_field = solve_adr_pde(
        grid,
        lambda x, t: np.exp(-t) * SRC_COEFF * x * np.cos(lam_star[0] * x),
        init=zero_init,
    )
    wx = np.full(grid.nx + 1, grid.dx)
    wx[[0, -1]] *= 0.5
    wt = np.full(grid.nt + 1, grid.dt)
    wt[[0, -1]] *= 0.5
    weight_2d = wt[:, None] * wx[None, :]
    if normalize:
        dlam_field = dlam_field / np.sqrt(np.sum(weight_2d * dlam_field * dlam_field))
    moment = np.empty((1, adr_model.m))
    for j in range(adr_model.m):
        phi_j = adr_model.basis.eigenfunction(j)
        uj = solve_adr_pde(grid, lambda x, t: np.exp(-t) * phi_j(x), init=zero_init)
        moment[0, j] = float(np.sum(weight_2d * uj * dlam_field))
    rule = QuadratureRule(np.zeros(1), np.ones(1), 1)
    return RogpConstraint(lam_star, rule, np.zeros((1, adr_model.m)), np.zeros((1, 1)),
                          np.zeros(1), adr_model, moment)


@dataclass(frozen=True)
class OrthoConstraintSet:
    """What a posterior needs to know about the orthogonality treatment."""

    mode: str  # "additive" | "linearized" | "regularized"
    lambda_star: np.ndarray
    measure: object
    order: int
    modified_kernel: ModifiedKernel | None = None
    constraint: RogpConstraint | None = None


def conditioned_weight_basis(basis: EigenBasis, model, lam_star, mode: str = "linearized",
                             rel_floor: float = 1e-8) -> EigenBasis:
    """Condition a basis's weight prior on the linear(ized) constraints.

    Equivalent to re-eigendecomposing the modified kernel truncated to this
    basis, but performed in weight space so it stays exact for eigenvalues
    far below the Gram-matrix noise floor.  Directions whose conditioned
    variance falls below ``rel_floor`` times the leading one carry no
    information and are dropped; the returned truncation is therefore
    at most m - p.
    """
    lam_star = np.atleast_1d(np.asarray(lam_star, dtype=float))
    rule = basis.quadrature
    coeff = constraint_coefficients(model, lam_star, rule.nodes, mode)  # (Q, p)
    phi_nodes = basis.phi(rule.nodes)
    bmat = (coeff * rule.weights[:, None]).T @ phi_nodes  # (p, m)
    sqrt_lam = np.sqrt(basis.eigenvalues)
    mmat = sqrt_lam[:, None] * bmat.T  # (m, p)
    col_norm = np.linalg.norm(mmat, axis=0)
    if np.any(col_norm == 0):
        raise DegenerateConstraints("a constraint functional vanishes on this basis",
                                    null_direction=np.eye(mmat.shape[1])[int(np.argmin(col_norm))])
    u_m, s_m, _ = np.linalg.svd(mmat / col_norm, full_matrices=False)
    if s_m[-1] <= s_m[0] / np.sqrt(COND_LIMIT):
        raise DegenerateConstraints("constraint functionals are collinear on this basis",
                                    null_direction=u_m[:, -1])
    sigma_c = np.diag(basis.eigenvalues) - (sqrt_lam[:, None] * u_m) @ (u_m.T * sqrt_lam[None, :])
    nu, qmat = sym_eig_desc(symmetrize(sigma_c))
    keep = nu > rel_floor * nu[0]
    nu, qmat = nu[keep], qmat[:, keep]

    base_phi = basis.phi_fn

    def phi(x):
        return base_phi(x) @ qmat

    from .kernels import _apply_sign_convention

    core = rule.nodes[rule.weights > 1e-13 * rule.weights.max()]
    center_vals = phi(np.atleast_1d(basis.measure.center))[0]
    signs = _apply_sign_convention(center_vals, phi(core))
    qsigned = qmat * signs

    def phi_signed(x):
        return base_phi(x) @ qsigned

    return EigenBasis(basis.kernel, basis.measure, int(keep.sum()), nu, "conditioned",
                      rule, phi_signed,
                      meta={"parent_source": basis.source, "mode": mode,
                            "lambda_star": lam_star.tolist()})
