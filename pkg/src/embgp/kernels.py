"""Squared-exponential kernel, weighting measures, and truncated eigenbases.

The weight-space GP machinery rests on a Mercer decomposition of the kernel
under a probability measure on the input axis.  Two constructions are
provided: the closed-form Hermite eigenpairs under a Gaussian measure, and a
Nystrom discretization of the integral eigenproblem that works for any
measure (and for the constraint-modified kernels built in :mod:`embgp.ogp`).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import InsufficientQuadrature, RankDeficientKernel, UnsupportedMeasure

__all__ = [
    "SquaredExpKernel",
    "QuadratureRule",
    "GaussianMeasure",
    "UniformMeasure",
    "EmpiricalMeasure",
    "EigenBasis",
    "kernel_eval",
    "analytic_sqe_basis",
    "nystrom_basis",
    "variance_deficit",
    "write_basis",
    "read_basis",
]


@dataclass(frozen=True)
class SquaredExpKernel:
    """k(x, x') = signal_std^2 * exp(-(x - x')^2 / (2 * length_scale^2))."""

    signal_std: float
    length_scale: float

    def __post_init__(self):
        if not self.signal_std > 0:
            raise ValueError(f"signal_std must be positive, got {self.signal_std}")
        if not self.length_scale > 0:
            raise ValueError(f"length_scale must be positive, got {self.length_scale}")

    def __call__(self, x, y):
        return kernel_eval(self, x, y)

    def gram(self, xs, ys=None) -> np.ndarray:
        """Kernel matrix between two point sets (defaults to square Gram)."""
        xs = np.asarray(xs, dtype=float)
        ys = xs if ys is None else np.asarray(ys, dtype=float)
        return kernel_eval(self, xs[:, None], ys[None, :])


def kernel_eval(kernel: SquaredExpKernel, x, y):
    """Evaluate the kernel with numpy broadcasting over both arguments."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = x - y
    return kernel.signal_std**2 * np.exp(-(d * d) / (2.0 * kernel.length_scale**2))


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes/weights for integrals against a probability measure (weights sum to 1)."""

    nodes: np.ndarray
    weights: np.ndarray
    order: int

    def __post_init__(self):
        object.__setattr__(self, "nodes", np.asarray(self.nodes, dtype=float))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))
        if self.nodes.shape != self.weights.shape:
            raise ValueError("nodes and weights must have matching length")

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Sum_q w_q f(x_q); `values` has node axis last."""
        return np.asarray(values) @ self.weights


@dataclass(frozen=True)
class GaussianMeasure:
    """Gaussian probability measure N(mean, variance) on the real line."""

    mean: float
    variance: float

    kind = "gaussian"

    def __post_init__(self):
        if not self.variance > 0:
            raise ValueError("variance must be positive")

    @property
    def center(self) -> float:
        return self.mean

    def quadrature(self, order: int) -> QuadratureRule:
        # Gauss-Hermite, affinely mapped onto N(mean, variance).  At high
        # order the extreme-node weights underflow to exactly zero; those
        # nodes contribute nothing and are dropped to keep weights positive.
        from scipy.special import roots_hermite

        u, w = roots_hermite(order)
        keep = w > 0.0
        nodes = self.mean + np.sqrt(2.0 * self.variance) * u[keep]
        weights = w[keep] / np.sqrt(np.pi)
        return QuadratureRule(nodes, weights / weights.sum(), order)

    def params(self) -> dict:
        return {"kind": "gaussian", "mean": self.mean, "variance": self.variance}


@dataclass(frozen=True)
class UniformMeasure:
    """Uniform probability measure on [lo, hi]."""

    lo: float
    hi: float

    kind = "uniform"

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValueError("require hi > lo")

    @property
    def center(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def quadrature(self, order: int) -> QuadratureRule:
        # Gauss-Legendre mapped to [lo, hi]; weights renormalized to unit mass.
        u, w = np.polynomial.legendre.leggauss(order)
        nodes = 0.5 * (self.hi - self.lo) * u + 0.5 * (self.hi + self.lo)
        weights = 0.5 * w  # plain GL weights integrate to (hi-lo)/ (hi-lo) after /2
        return QuadratureRule(nodes, weights, order)

    def params(self) -> dict:
        return {"kind": "uniform", "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Equal-weight atoms at fixed points (typically the data inputs).

    Constraint integrals against this measure reproduce data-sum
    orthogonality exactly: the residual functionals vanish precisely at the
    least-squares stationarity conditions.
    """

    points: np.ndarray

    kind = "empirical"

    def __post_init__(self):
        object.__setattr__(self, "points", np.atleast_1d(np.asarray(self.points, dtype=float)))

    @property
    def center(self) -> float:
        return float(np.median(self.points))

    def quadrature(self, order: int) -> QuadratureRule:
        n = self.points.size
        return QuadratureRule(self.points, np.full(n, 1.0 / n), order)

    def params(self) -> dict:
        return {"kind": "empirical", "points": self.points.tolist()}


def measure_from_params(params: dict):
    kind = params["kind"]
    if kind == "gaussian":
        return GaussianMeasure(params["mean"], params["variance"])
    if kind == "uniform":
        return UniformMeasure(params["lo"], params["hi"])
    if kind == "empirical":
        return EmpiricalMeasure(np.asarray(params["points"], dtype=float))
    raise ValueError(f"unknown measure kind {kind!r}")


@dataclass(frozen=True)
class EigenBasis:
    """Truncated Mercer basis of a kernel under a weighting measure.

    ``phi(x)`` evaluates all m eigenfunctions at once, returning an array of
    shape ``x.shape + (m,)``; eigenfunctions are orthonormal in L2(measure)
    and signed so the first significantly nonzero value among
    [measure center, quadrature nodes in order] is positive.
    """

    kernel: SquaredExpKernel
    measure: GaussianMeasure | UniformMeasure
    m: int
    eigenvalues: np.ndarray
    source: str
    quadrature: QuadratureRule
    phi_fn: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    meta: dict = field(default_factory=dict, repr=False)

    def phi(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        out = self.phi_fn(np.atleast_1d(x))
        return out[0] if scalar else out.reshape(x.shape + (self.m,))

    def eigenfunction(self, i: int) -> Callable:
        if not 0 <= i < self.m:
            raise IndexError(f"eigenfunction index {i} out of range [0, {self.m})")
        return lambda x: self.phi(x)[..., i]

    def prior_variance(self, x) -> np.ndarray:
        """Variance of the truncated GP at x: sum_i lambda_i phi_i(x)^2."""
        p = self.phi(x)
        return p * p @ self.eigenvalues

    def node_values(self) -> np.ndarray:
        """Eigenfunction values at the construction quadrature nodes, (Q, m)."""
        if "node_values" in self.meta:
            return self.meta["node_values"]
        return self.phi(self.quadrature.nodes)


def variance_deficit(basis: EigenBasis, x) -> np.ndarray:
    """Prior variance lost to truncation: signal_std^2 - sum_i lambda_i phi_i(x)^2."""
    return basis.kernel.signal_std**2 - basis.prior_variance(x)


def _apply_sign_convention(values_at_center: np.ndarray, values_at_nodes: np.ndarray) -> np.ndarray:
    """Return per-column signs making the first significant value positive.

    `values_at_center` is (m,), `values_at_nodes` is (Q, m); candidates are
    scanned in order [center, node_0, node_1, ...].
    """
    stacked = np.vstack([values_at_center[None, :], values_at_nodes])
    thresh = 1.0e-9 * np.max(np.abs(stacked), axis=0)
    signs = np.ones(stacked.shape[1])
    for j in range(stacked.shape[1]):
        sig = np.nonzero(np.abs(stacked[:, j]) > thresh[j])[0]
        if sig.size:
            signs[j] = np.sign(stacked[sig[0], j])
    return signs


def _hermite_phi_factory(kernel: SquaredExpKernel, measure: GaussianMeasure, m: int):
    """Closed-form SQE eigenfunctions under a Gaussian measure.

    With p(x) ~ N(mu, s2), a = 1/(4 s2), b = 1/(2 l^2), c = sqrt(a^2 + 2ab):
    phi_i(x) = (c/a)^(1/4) * Hhat_i(sqrt(2c) (x-mu)) * exp(-(c - a)(x-mu)^2),
    where Hhat_i = H_i / sqrt(2^i i!) uses a stable normalized recurrence.
    """
    a = 1.0 / (4.0 * measure.variance)
    b = 1.0 / (2.0 * kernel.length_scale**2)
    c = np.sqrt(a * a + 2.0 * a * b)
    norm0 = (c / a) ** 0.25
    mu = measure.mean

    def phi(x: np.ndarray) -> np.ndarray:
        # The envelope is folded into the recurrence so intermediate values
        # stay ~exp(a x^2) instead of the separately-overflowing H_i and env.
        x = np.atleast_1d(np.asarray(x, dtype=float))
        u = np.sqrt(2.0 * c) * (x - mu)
        env = np.exp(-(c - a) * (x - mu) ** 2)
        out = np.empty((x.size, m))
        g_prev = env.copy()
        out[:, 0] = norm0 * g_prev
        if m > 1:
            g_cur = u * np.sqrt(2.0) * env
            out[:, 1] = norm0 * g_cur
            for i in range(1, m - 1):
                g_next = u * np.sqrt(2.0 / (i + 1.0)) * g_cur - np.sqrt(i / (i + 1.0)) * g_prev
                g_prev, g_cur = g_cur, g_next
                out[:, i + 1] = norm0 * g_cur
        return out

    lam = kernel.signal_std**2 * np.sqrt(2.0 * a / (a + b + c)) * (b / (a + b + c)) ** np.arange(m)
    return lam, phi


def analytic_sqe_basis(kernel: SquaredExpKernel, measure, m: int, order: int | None = None) -> EigenBasis:
    """Closed-form eigenbasis of the SQE kernel under a Gaussian measure."""
    if not isinstance(measure, GaussianMeasure):
        raise UnsupportedMeasure(
            f"analytic SQE eigenpairs exist only under a Gaussian measure, got {type(measure).__name__}"
        )
    if m < 1:
        raise ValueError("m must be >= 1")
    if order is None:
        order = max(4 * m, 32)
    rule = measure.quadrature(order)
    lam, raw_phi = _hermite_phi_factory(kernel, measure, m)
    core = rule.nodes[rule.weights > 1e-13 * rule.weights.max()]
    signs = _apply_sign_convention(raw_phi(np.array([measure.center]))[0], raw_phi(core))

    def phi(x):
        return raw_phi(x) * signs

    return EigenBasis(kernel, measure, m, lam, "analytic", rule, phi)


def nystrom_basis(kernel: SquaredExpKernel, measure, m: int, order: int | None = None,
                  kernel_fn: Callable | None = None) -> EigenBasis:
    """Nystrom eigenbasis: eigenpairs of the weighted Gram at quadrature nodes.

    ``kernel_fn(x, y)`` overrides the kernel evaluation (used to decompose the
    constraint-modified kernels); it must broadcast like :func:`kernel_eval`.

    The extension phi_i(x) = (1/lam_i) sum_q w_q k(x, x_q) phi_i(x_q) is exact
    at the nodes and spectrally accurate in between for smooth kernels.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if order is None:
        order = 4 * m
    if order < 4 * m:
        raise InsufficientQuadrature(f"quadrature order {order} < 4*m = {4 * m}")
    rule = measure.quadrature(order)
    keval = kernel_fn if kernel_fn is not None else (lambda x, y: kernel_eval(kernel, x, y))

    nodes, weights = rule.nodes, rule.weights
    gram = keval(nodes[:, None], nodes[None, :])
    sqw = np.sqrt(weights)
    sym = sqw[:, None] * gram * sqw[None, :]
    vals, vecs = np.linalg.eigh(0.5 * (sym + sym.T))
    vals, vecs = vals[::-1], vecs[:, ::-1]
    lam = vals[:m]
    if np.any(lam <= 0):
        bad = int(np.argmax(lam <= 0))
        raise RankDeficientKernel(
            f"eigenvalue {bad} of requested {m} is non-positive ({lam[bad]:.3e}); "
            "kernel numerical rank is below m at this precision"
        )
    node_vals = vecs[:, :m] / sqw[:, None]  # orthonormal under the rule by construction
    # Where the rule weight is negligible, eigvec/sqrt(w) amplifies rounding
    # noise; the Nystrom extension gives the honest value there instead.
    coef = (weights[:, None] * node_vals) / lam[None, :]
    core = weights > 1e-13 * weights.max()
    if not np.all(core):
        node_vals = node_vals.copy()
        node_vals[~core] = keval(nodes[~core, None], nodes[None, :]) @ coef
    center_vals = (keval(np.atleast_1d(measure.center)[:, None], nodes[None, :]) @ coef)[0]
    signs = _apply_sign_convention(center_vals, node_vals[core])
    node_vals = node_vals * signs
    # extension coefficients: phi_i(x) = k(x, nodes) @ coef[:, i]
    coef = coef * signs

    def phi(x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return keval(x[:, None], nodes[None, :]) @ coef

    return EigenBasis(kernel, measure, m, lam, "nystrom", rule, phi,
                      meta={"node_values": node_vals})


def write_basis(basis: EigenBasis, csv_path, extra_meta: dict | None = None) -> None:
    """Export a basis as CSV (nodes, weights, eigenvalues, node values) + JSON header."""
    csv_path = Path(csv_path)
    rule = basis.quadrature
    node_vals = basis.node_values()
    header = {
        "kernel_family": "SquaredExponential",
        "signal_std": basis.kernel.signal_std,
        "length_scale": basis.kernel.length_scale,
        "measure": basis.measure.params(),
        "m": basis.m,
        "source": basis.source,
        "quadrature_order": rule.order,
    }
    if extra_meta:
        header.update(extra_meta)
    csv_path.with_suffix(".json").write_text(json.dumps(header, indent=2) + "\n")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node", "weight", "eigenvalue"] + [f"phi_{i}" for i in range(basis.m)])
        for q in range(rule.nodes.size):
            eig = repr(float(basis.eigenvalues[q])) if q < basis.m else ""
            writer.writerow([repr(float(rule.nodes[q])), repr(float(rule.weights[q])), eig]
                            + [repr(float(v)) for v in node_vals[q]])


def read_basis(csv_path) -> EigenBasis:
    """Rebuild a basis from its CSV+JSON export.

    Plain SQE bases are reconstructed exactly (analytic from the header,
    Nystrom via the stored extension data).  Modified-kernel bases fall back
    to cubic-spline interpolation of the stored node values; these are valid
    inside the node hull only.
    """
    csv_path = Path(csv_path)
    header = json.loads(csv_path.with_suffix(".json").read_text())
    kernel = SquaredExpKernel(header["signal_std"], header["length_scale"])
    measure = measure_from_params(header["measure"])
    m = int(header["m"])
    nodes, weights, eigs, vals = [], [], [], []
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            nodes.append(float(row[0]))
            weights.append(float(row[1]))
            if row[2]:
                eigs.append(float(row[2]))
            vals.append([float(v) for v in row[3 : 3 + m]])
    nodes = np.array(nodes)
    weights = np.array(weights)
    lam = np.array(eigs)
    node_vals = np.array(vals)
    rule = QuadratureRule(nodes, weights, int(header["quadrature_order"]))
    source = header["source"]
    if source == "analytic":
        return analytic_sqe_basis(kernel, measure, m, order=rule.order)
    if source == "nystrom":
        coef = (weights[:, None] * node_vals) / lam[None, :]

        def phi(x):
            x = np.atleast_1d(np.asarray(x, dtype=float))
            return kernel_eval(kernel, x[:, None], nodes[None, :]) @ coef

        return EigenBasis(kernel, measure, m, lam, "nystrom", rule, phi,
                          meta={"node_values": node_vals})
    from scipy.interpolate import CubicSpline

    order_idx = np.argsort(nodes)
    spline = CubicSpline(nodes[order_idx], node_vals[order_idx], axis=0)

    def phi(x):
        return spline(np.atleast_1d(np.asarray(x, dtype=float)))

    return EigenBasis(kernel, measure, m, lam, source, rule, phi,
                      meta={"node_values": node_vals, "interpolated": True})
