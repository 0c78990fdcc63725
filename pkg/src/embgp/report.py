"""Figure rendering for run directories.

Figures are a convenience companion to the delimited outputs; every number
shown also lives in a CSV next to the image.  The Agg backend keeps this
headless-safe.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

BAND_SIGMAS = 3.0


def _band(ax, x, mean, std, color, label):
    ax.plot(x, mean, color=color, lw=1.5, label=label)
    ax.fill_between(x, mean - BAND_SIGMAS * std, mean + BAND_SIGMAS * std,
                    color=color, alpha=0.2, lw=0)


def render_band_figure(outdir, assets, table) -> Path:
    fig, ax = plt.subplots(figsize=(7, 4.5))
    gx = table.grid
    _band(ax, gx, table.pfp_f_mean, table.pfp_f_std, "tab:blue", "fit model")
    _band(ax, gx, table.pfp_g_mean, table.pfp_g_std, "tab:orange", "fit + correction")
    _band(ax, gx, table.pp_mean, table.pp_std, "tab:green", "predictive (incl. noise)")
    try:
        ax.plot(gx, assets.truth(gx), "k--", lw=1.2, label="truth")
    except TypeError:
        pass
    ax.plot(assets.data.x, assets.data.y, "k.", ms=5, label="data")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.legend(fontsize=8, loc="best")
    ax.set_title(f"{assets.config['experiment']} / {assets.config['method']}: "
                 f"push-forward bands (±{BAND_SIGMAS:g} std)")
    span = np.ptp(assets.data.y)
    lo = float(assets.data.y.min() - 0.8 * span - 1.0)
    hi = float(assets.data.y.max() + 0.8 * span + 1.0)
    ax.set_ylim(lo, hi)
    fig.tight_layout()
    path = Path(outdir) / "bands.png"
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def render_marginals(outdir, lam_samples, lam_star) -> Path:
    lam_samples = np.atleast_2d(lam_samples)
    p = lam_samples.shape[1]
    fig, axes = plt.subplots(1, p, figsize=(4 * p, 3.2), squeeze=False)
    for i in range(p):
        ax = axes[0, i]
        ax.hist(lam_samples[:, i], bins=64, density=True, color="tab:blue", alpha=0.7)
        ax.axvline(lam_star[i], color="k", lw=1.5, label="least squares")
        ax.set_xlabel(f"lambda_{i}")
        if i == 0:
            ax.legend(fontsize=8)
    fig.tight_layout()
    path = Path(outdir) / "marginals.png"
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def render_lis_spectrum(outdir, lis_basis) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    vals = np.maximum(lis_basis.eigenvalues, 1e-300)
    upto = min(vals.size, max(3 * lis_basis.rank, 20))
    ax.semilogy(np.arange(upto), vals[:upto], "o-", ms=3)
    ax.axhline(lis_basis.cutoff, color="r", ls="--", lw=1, label=f"cutoff {lis_basis.cutoff}")
    ax.axvline(lis_basis.rank - 0.5, color="gray", ls=":", lw=1)
    ax.set_xlabel("index")
    ax.set_ylabel("preconditioned Hessian eigenvalue")
    ax.set_title(f"informed-subspace spectrum (rank {lis_basis.rank})")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = Path(outdir) / "lis_spectrum.png"
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def render_adr_source(outdir, gx, gp_vals, full_vals) -> Path:
    from .models.adr import missing_source_spatial, truth_source_spatial

    fig, axes = plt.subplots(1, 2, figsize=(10, 3.8))
    for ax, vals, true_fn, title in (
        (axes[0], gp_vals, missing_source_spatial, "learned correction vs missing source"),
        (axes[1], full_vals, truth_source_spatial, "inferred full source vs truth"),
    ):
        m, s = vals.mean(axis=0), vals.std(axis=0)
        _band(ax, gx, m, s, "tab:orange", "inferred")
        ax.plot(gx, true_fn(gx), "k--", lw=1.2, label="true")
        ax.set_xlabel("x")
        ax.set_title(title, fontsize=10)
        ax.legend(fontsize=8)
    fig.tight_layout()
    path = Path(outdir) / "source.png"
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path
