"""Truth/fit model pairs for the algebraic calibration problems.

An :class:`EmbeddedModel` evaluates the fit model with a scalar correction
``delta`` injected at its embedding site.  All callables broadcast: ``x`` has
shape (N,), ``lam`` has shape (..., p), ``delta`` broadcasts against
(..., N); values come back as (..., N) and parameter gradients as
(..., N, p).  Exponential arguments above EXP_GUARD raise ModelOverflow so
samplers can reject instead of propagating infinities.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..errors import ModelOverflow
from ..gp import Dataset

EXP_GUARD = 700.0


@dataclass(frozen=True)
class TruthModel:
    """Deterministic data-generating function."""

    name: str
    fn: Callable

    def __call__(self, *args):
        return self.fn(*args)


@dataclass(frozen=True)
class EmbeddedModel:
    name: str
    param_dim: int
    embed_site: str
    value: Callable  # (x, lam, delta) -> (..., N)
    grad_lambda: Callable  # (x, lam, delta) -> (..., N, p)
    grad_delta: Callable  # (x, lam, delta) -> (..., N)

    def plain_value(self, x, lam):
        return self.value(x, lam, 0.0)


def _guard_exp(arg):
    if np.any(arg > EXP_GUARD):
        raise ModelOverflow(f"exp argument exceeds {EXP_GUARD}")
    return np.exp(arg)


def linear_pair() -> tuple[TruthModel, EmbeddedModel]:
    """Cubic truth with a two-parameter linear fit and additive correction."""
    truth = TruthModel("cubic", lambda x: 2.0 + 2.0 * x + 3.0 * x**2 - 5.0 * x**3)

    def value(x, lam, delta):
        x = np.asarray(x, dtype=float)
        lam = np.asarray(lam, dtype=float)
        return lam[..., 0:1] + lam[..., 1:2] * x + delta

    def grad_lambda(x, lam, delta):
        x = np.asarray(x, dtype=float)
        lam = np.asarray(lam, dtype=float)
        g = np.empty(lam.shape[:-1] + x.shape + (2,))
        g[..., 0] = 1.0
        g[..., 1] = x
        return g

    def grad_delta(x, lam, delta):
        x = np.asarray(x, dtype=float)
        lam = np.asarray(lam, dtype=float)
        return np.ones(np.broadcast_shapes(lam[..., 0:1].shape, x.shape, np.shape(delta)))

    fit = EmbeddedModel("linear", 2, "additive", value, grad_lambda, grad_delta)
    return truth, fit


def sinexp_pair(embed_site: str = "S2") -> tuple[TruthModel, EmbeddedModel]:
    """Exponential-cubic truth with the two-submodel sin+exp fit.

    embed_site "S1" corrects inside the sine argument, "S2" inside the
    exponent.  "S2" is the structurally useful site since the truth is an
    exponential of a cubic.
    """
    if embed_site not in ("S1", "S2"):
        raise ValueError(f"embed_site must be 'S1' or 'S2', got {embed_site!r}")
    truth = TruthModel("expcubic", lambda x: np.exp(1.0 - 0.5 * x + x**2 + x**3))

    if embed_site == "S2":

        def value(x, lam, delta):
            x = np.asarray(x, dtype=float)
            lam = np.asarray(lam, dtype=float)
            return np.sin(lam[..., 0:1] * x) + _guard_exp(lam[..., 1:2] * x + delta)

        def grad_lambda(x, lam, delta):
            x = np.asarray(x, dtype=float)
            lam = np.asarray(lam, dtype=float)
            e = _guard_exp(lam[..., 1:2] * x + delta)
            g0 = x * np.cos(lam[..., 0:1] * x)
            g1 = x * e
            g0, g1 = np.broadcast_arrays(g0, g1)
            return np.stack([g0, g1], axis=-1)

        def grad_delta(x, lam, delta):
            x = np.asarray(x, dtype=float)
            lam = np.asarray(lam, dtype=float)
            return _guard_exp(lam[..., 1:2] * x + delta) * np.ones_like(np.asarray(x, dtype=float))

    else:  # S1

        def value(x, lam, delta):
            x = np.asarray(x, dtype=float)
            lam = np.asarray(lam, dtype=float)
            return np.sin(lam[..., 0:1] * x + delta) + _guard_exp(lam[..., 1:2] * x)

        def grad_lambda(x, lam, delta):
            x = np.asarray(x, dtype=float)
            lam = np.asarray(lam, dtype=float)
            g0 = x * np.cos(lam[..., 0:1] * x + delta)
            g1 = x * _guard_exp(lam[..., 1:2] * x)
            g0, g1 = np.broadcast_arrays(g0, g1)
            return np.stack([g0, g1], axis=-1)

        def grad_delta(x, lam, delta):
            x = np.asarray(x, dtype=float)
            lam = np.asarray(lam, dtype=float)
            return np.cos(lam[..., 0:1] * x + delta) + 0.0 * _guard_exp(lam[..., 1:2] * x)

    fit = EmbeddedModel(f"sinexp-{embed_site}", 2, embed_site, value, grad_lambda, grad_delta)
    return truth, fit


def generate_data(truth: TruthModel, inputs, noise_std: float, seed: int,
                  times=None) -> Dataset:
    """Evaluate the truth at the inputs and add iid Gaussian noise (seeded)."""
    if not noise_std > 0:
        raise ValueError("noise_std must be positive")
    inputs = np.atleast_1d(np.asarray(inputs, dtype=float))
    rng = np.random.default_rng(seed)
    clean = truth(inputs) if times is None else truth(inputs, np.asarray(times, dtype=float))
    y = clean + noise_std * rng.standard_normal(inputs.shape)
    return Dataset(inputs, y, noise_std, t=None if times is None else times)
