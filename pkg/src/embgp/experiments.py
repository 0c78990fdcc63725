"""Config-driven assembly and execution of the calibration experiments.

A run = dataset + best-fit parameters + posterior (per method) + chains +
push-forward tables, all written to an output directory.  Methods:

* ``koh``   - marginalized additive-GP parameter posterior;
* ``plain`` - joint (parameters, weights) posterior, no orthogonality;
* ``logp``  - joint posterior on the constraint-conditioned basis;
* ``rogp``  - joint posterior with quadratic constraint penalties.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import runio
from .calibrate import (KohPosterior, PosteriorSpec, PriorSpec, koh_bias_posterior,
                        least_squares_lambda)
from .errors import ComparisonError, ConfigError, RankDeficientKernel
from .gp import Dataset, GaussianDensity
from .kernels import (EmpiricalMeasure, GaussianMeasure, SquaredExpKernel, UniformMeasure,
                      analytic_sqe_basis, measure_from_params, nystrom_basis, write_basis)
from .lis import LisSettings, ReducedPosterior, adaptive_global_lis, recombine_samples
from .mcmc import BandTable, SamplerSettings, ess, pushforward_bands, sample
from .models import (AdrGrid, adr_embedded_model, adr_truth_field, generate_data, linear_pair,
                     sample_field_nodes, sinexp_pair)
from .models.adr import missing_source_spatial, truth_source_spatial
from .ogp import (adr_rogp_constraints, conditioned_weight_basis, logp_kernel,
                  rogp_constraints)

METHODS = ("koh", "plain", "logp", "rogp")

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["experiment", "method", "seed", "kernel", "dataset"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "experiment": {"enum": ["linear", "sinexp", "adr", "custom"]},
        "method": {"enum": list(METHODS)},
        "seed": {"type": "integer"},
        "m": {"type": "integer", "minimum": 1},
        "kernel": {
            "type": "object",
            "required": ["signal_std", "length_scale"],
            "additionalProperties": False,
            "properties": {
                "signal_std": {"type": "number", "exclusiveMinimum": 0},
                "length_scale": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "measure": {
            "type": "object",
            "required": ["kind"],
            "properties": {"kind": {"enum": ["uniform", "gaussian"]},
                           "lo": {"type": "number"}, "hi": {"type": "number"},
                           "mean": {"type": "number"},
                           "variance": {"type": "number", "exclusiveMinimum": 0}},
        },
        "basis_source": {"enum": ["auto", "analytic", "nystrom"]},
        "dataset": {
            "type": "object",
            "required": ["noise_std"],
            "additionalProperties": False,
            "properties": {
                "n": {"type": "integer", "minimum": 1},
                "noise_std": {"type": "number", "exclusiveMinimum": 0},
                "seed": {"type": "integer"},
                "domain": {"type": "array", "items": {"type": "number"},
                           "minItems": 2, "maxItems": 2},
                "file": {"type": "string"},
            },
        },
        "embed_site": {"enum": ["S1", "S2"]},
        "model": {"enum": ["linear", "sinexp"]},
        "prior": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "lambda_mean": {"type": "array", "items": {"type": "number"}},
                "lambda_std": {"type": "array", "items": {"type": "number"}},
            },
        },
        "alpha": {"type": "array", "items": {"type": "number", "minimum": 0}},
        "constraint_measure": {"enum": ["domain", "data"]},
        "quadrature_order": {"type": "integer", "minimum": 8},
        "lis": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "enabled": {"type": "boolean"},
                "cutoff": {"type": "number", "exclusiveMinimum": 0},
                "max_hessians": {"type": "integer", "minimum": 1},
                "subspace_steps": {"type": "integer", "minimum": 50},
            },
        },
        "sampler": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "algorithm": {"enum": ["ensemble", "rwm"]},
                "n_steps": {"type": "integer", "minimum": 10},
                "burn_in": {"type": "integer", "minimum": 0},
                "n_walkers": {"type": "integer", "minimum": 2},
                "stretch": {"type": "number", "exclusiveMinimum": 1},
                "seed": {"type": "integer"},
            },
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"nx": {"type": "integer", "minimum": 8},
                           "nt": {"type": "integer", "minimum": 8}},
        },
        "predict": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"lo": {"type": "number"}, "hi": {"type": "number"},
                           "n": {"type": "integer", "minimum": 2}},
        },
        "chain_thin": {"type": "integer", "minimum": 1},
        "plots": {"type": "boolean"},
    },
}

DEFAULTS = {
    "linear": {"domain": [-1.0, 1.0], "measure": {"kind": "uniform", "lo": -3.0, "hi": 3.0},
               "lambda_mean": [-2.0, 4.0], "lambda_std": [1.0, 1.0],
               "predict": {"lo": -3.0, "hi": 3.0, "n": 121}},
    "sinexp": {"domain": [-2.0, 2.0], "measure": {"kind": "uniform", "lo": -2.0, "hi": 2.0},
               "lambda_mean": [-3.0, 0.0], "lambda_std": [1.0, 1.0],
               "predict": {"lo": -3.0, "hi": 3.0, "n": 121}},
    "adr": {"measure": {"kind": "uniform", "lo": 0.0, "hi": 1.0},
            "lambda_mean": [5.0], "lambda_std": [1.0],
            "predict": {"lo": 0.0, "hi": 1.0, "n": 101}},
}


def validate_config(raw: dict) -> dict:
    """Schema-check and fill defaults; raises ConfigError naming the field."""
    import jsonschema

    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = ".".join(str(p) for p in exc.absolute_path) or "(root)"
        raise ConfigError(f"{path}: {exc.message}", field=path) from exc
    cfg = json.loads(json.dumps(raw))  # deep copy
    exp = cfg["experiment"]
    if exp == "custom" and "model" not in cfg:
        raise ConfigError("custom experiments must name a 'model'", field="model")
    if exp == "adr" and cfg["method"] not in ("plain", "rogp"):
        raise ConfigError("the field problem supports methods 'plain' and 'rogp'",
                          field="method")
    if cfg["method"] != "koh" and "m" not in cfg:
        raise ConfigError("'m' is required for weight-space methods", field="m")
    if cfg["method"] == "rogp" and "alpha" not in cfg:
        raise ConfigError("method 'rogp' requires 'alpha'", field="alpha")
    if cfg["method"] == "rogp" and cfg.get("lis", {}).get("enabled"):
        raise ConfigError("subspace reduction is not available with penalty constraints "
                          "(non-Gaussian effective prior)", field="lis.enabled")
    base = DEFAULTS["sinexp" if exp == "custom" and cfg["model"] == "sinexp"
                    else ("linear" if exp == "custom" else exp)]
    cfg.setdefault("m", 1)
    cfg.setdefault("measure", base["measure"])
    cfg.setdefault("basis_source", "auto")
    cfg.setdefault("embed_site", "S2")
    cfg.setdefault("prior", {})
    cfg["prior"].setdefault("lambda_mean", base["lambda_mean"])
    cfg["prior"].setdefault("lambda_std", base["lambda_std"])
    cfg.setdefault("alpha", None)
    cfg.setdefault("constraint_measure", "data" if cfg["method"] == "rogp" else "domain")
    cfg.setdefault("quadrature_order", 128)
    cfg.setdefault("lis", {})
    cfg["lis"].setdefault("enabled", False)
    cfg["lis"].setdefault("cutoff", 0.1)
    cfg["lis"].setdefault("max_hessians", 40)
    cfg["lis"].setdefault("subspace_steps", 800)
    cfg.setdefault("sampler", {})
    cfg["sampler"].setdefault("algorithm", "ensemble")
    cfg["sampler"].setdefault("n_steps", 40000)
    cfg["sampler"].setdefault("burn_in", 10000)
    cfg["sampler"].setdefault("stretch", 2.0)
    cfg["sampler"].setdefault("seed", cfg["seed"])
    cfg.setdefault("grid", {})
    cfg["grid"].setdefault("nx", 200)
    cfg["grid"].setdefault("nt", 200)
    cfg.setdefault("predict", dict(base["predict"]))
    cfg["dataset"].setdefault("seed", cfg["seed"])
    if exp != "adr":
        cfg["dataset"].setdefault("domain", base["domain"])
    cfg.setdefault("plots", True)
    return cfg


def numerical_rank(kernel: SquaredExpKernel, measure, order: int, rel: float = 1e-13) -> int:
    """Count of kernel eigenvalues resolvable above the float noise floor."""
    rule = measure.quadrature(order)
    sq = np.sqrt(rule.weights)
    gram = kernel.gram(rule.nodes)
    vals = np.linalg.eigvalsh(sq[:, None] * gram * sq[None, :])[::-1]
    return int(np.sum(vals > rel * vals[0]))


@dataclass
class ExperimentAssets:
    """Everything a run needs, assembled once from the config."""

    config: dict
    truth: object
    model: object
    data: Dataset
    kernel: SquaredExpKernel
    measure: object
    basis: object
    prior: PriorSpec | None
    ls_fit: object
    posterior: object
    constraint: object = None
    grid: AdrGrid | None = None
    truth_field: np.ndarray | None = None
    notes: list = field(default_factory=list)


def _build_dataset(cfg: dict, truth, grid: AdrGrid | None):
    ds = cfg["dataset"]
    if "file" in ds:
        return runio.read_dataset(ds["file"])
    if "n" not in ds:
        raise ConfigError("dataset needs either 'file' or 'n'", field="dataset.n")
    if cfg["experiment"] == "adr":
        xs, ts = sample_field_nodes(grid, ds["n"], seed=ds["seed"])
        return generate_data(truth, xs, ds["noise_std"], seed=ds["seed"] + 1, times=ts)
    lo, hi = ds["domain"]
    xs = np.random.default_rng(ds["seed"]).uniform(lo, hi, ds["n"])
    return generate_data(truth, xs, ds["noise_std"], seed=ds["seed"] + 1)


def _build_basis(cfg: dict, kernel, measure, model, lam_star, notes: list):
    """Basis for the configured method, clamped to what float64 can resolve."""
    m = cfg["m"]
    source = cfg["basis_source"]
    if source == "auto":
        source = "analytic" if isinstance(measure, GaussianMeasure) else "nystrom"
    order = max(4 * m, 64)

    if cfg["method"] == "logp":
        if source == "nystrom":
            rank = numerical_rank(kernel, measure, min(order, 1600))
            if m <= rank - model.param_dim:
                mk = logp_kernel(kernel, model, lam_star, measure, order=cfg["quadrature_order"])
                return nystrom_basis(kernel, measure, m, order=order, kernel_fn=mk)
            base_m = rank
            notes.append(f"requested m={m} exceeds the kernel's float64 rank {rank}; "
                         f"conditioning the rank-{rank} basis instead")
            base = nystrom_basis(kernel, measure, base_m, order=max(4 * base_m, 1600))
        else:
            base = analytic_sqe_basis(kernel, measure, m)
        return conditioned_weight_basis(base, model, lam_star)

    if source == "analytic":
        return analytic_sqe_basis(kernel, measure, m)
    try:
        return nystrom_basis(kernel, measure, m, order=order)
    except RankDeficientKernel:
        rank = numerical_rank(kernel, measure, min(max(order, 1600), 3200))
        notes.append(f"requested m={m} exceeds the kernel's float64 rank {rank}; "
                     f"truncating to m={rank}")
        return nystrom_basis(kernel, measure, rank, order=max(4 * rank, 1600))


def initial_weights(model, basis, data: Dataset, lam: np.ndarray) -> np.ndarray:
    """Data-driven starting weights for the joint posterior mode search.

    Additive embeddings regress the plain-model residuals; exponent-site
    embeddings regress log residuals with delta-method noise weights (the
    informative points carry weights ~ y/noise, which is what makes the
    mode findable when y spans orders of magnitude).
    """
    site = getattr(model, "embed_site", None)
    phi = basis.phi(data.x)
    if site == "additive":
        resid = data.y - model.plain_value(data.x, lam)
        prec = phi.T @ phi / data.noise_std**2 + np.diag(1.0 / basis.eigenvalues)
        return np.linalg.solve(prec, phi.T @ resid / data.noise_std**2)
    if site == "S2":
        resid = data.y - np.sin(lam[0] * data.x)
        ok = resid > 3.0 * data.noise_std
        if ok.sum() < 3:
            return np.zeros(basis.m)
        target = np.log(resid[ok]) - lam[1] * data.x[ok]
        sig = data.noise_std / resid[ok]
        pok = phi[ok]
        prec = pok.T @ (pok / sig[:, None] ** 2) + np.diag(1.0 / basis.eigenvalues)
        return np.linalg.solve(prec, pok.T @ (target / sig**2))
    return np.zeros(basis.m)


def build_experiment(cfg: dict) -> ExperimentAssets:
    cfg = validate_config(cfg)
    notes: list = []
    kernel = SquaredExpKernel(cfg["kernel"]["signal_std"], cfg["kernel"]["length_scale"])
    measure = measure_from_params(cfg["measure"])
    exp = cfg["experiment"]

    grid = None
    truth_field = None
    if exp == "adr":
        grid = AdrGrid(cfg["grid"]["nx"], cfg["grid"]["nt"])
        truth_field, truth = adr_truth_field(grid)
        data = _build_dataset(cfg, truth, grid)
        basis = _build_basis(cfg, kernel, measure, None, None, notes)
        model = adr_embedded_model(grid, basis, np.column_stack([data.x, data.t]))
    else:
        model_name = cfg["model"] if exp == "custom" else exp
        if model_name == "linear":
            truth, model = linear_pair()
        else:
            truth, model = sinexp_pair(cfg["embed_site"])
        data = _build_dataset(cfg, truth, None)

    lam_mean = np.asarray(cfg["prior"]["lambda_mean"], dtype=float)
    lam_std = np.asarray(cfg["prior"]["lambda_std"], dtype=float)
    ls_fit = least_squares_lambda(model, data, lam_mean)

    if exp != "adr":
        basis = _build_basis(cfg, kernel, measure, model, ls_fit.lambda_star, notes)

    lambda_prior = GaussianDensity(lam_mean, np.diag(lam_std**2))
    constraint = None
    prior = None
    if cfg["method"] == "koh":
        posterior = KohPosterior(model, data, kernel, lambda_prior)
    else:
        prior = PriorSpec(lambda_prior,
                          GaussianDensity(np.zeros(basis.m), np.diag(basis.eigenvalues)))
        penalties = None
        if cfg["method"] == "rogp":
            if exp == "adr":
                constraint = adr_rogp_constraints(model, float(ls_fit.lambda_star[0]))
            else:
                cmeasure = (EmpiricalMeasure(data.x) if cfg["constraint_measure"] == "data"
                            else measure)
                constraint = rogp_constraints(model, ls_fit.lambda_star, basis, cmeasure,
                                              order=cfg["quadrature_order"])
            penalties = np.asarray(cfg["alpha"], dtype=float)
            if penalties.size != constraint.p:
                raise ConfigError(f"alpha must have {constraint.p} entries", field="alpha")
        posterior = PosteriorSpec(model, basis, data, prior,
                                  regularizer=constraint, penalties=penalties)

    return ExperimentAssets(cfg, truth, model, data, kernel, measure, basis, prior,
                            ls_fit, posterior, constraint, grid, truth_field, notes)


def _theta_labels(assets: ExperimentAssets) -> list:
    p = assets.ls_fit.lambda_star.size
    labels = [f"lambda_{i}" for i in range(p)]
    if isinstance(assets.posterior, PosteriorSpec):
        labels += [f"w_{j}" for j in range(assets.posterior.m)]
    return labels


def _marginal_subset(labels, p):
    keep = list(range(p)) + [p + j for j in range(min(10, len(labels) - p))]
    return keep


def _koh_bands(assets: ExperimentAssets, lam_samples: np.ndarray, grid_x: np.ndarray) -> BandTable:
    model, data = assets.model, assets.data
    thin = max(1, lam_samples.shape[0] // 800)
    lam_thin = lam_samples[::thin]
    f_vals = model.plain_value(grid_x, lam_thin)
    mix = koh_bias_posterior(lam_thin, model, data, assets.kernel, grid_x)
    g_vals = f_vals + mix.means
    g_var = g_vals.var(axis=0) + mix.variances
    return BandTable(
        grid_x,
        f_vals.mean(axis=0), f_vals.std(axis=0),
        g_vals.mean(axis=0), np.sqrt(g_var),
        mix.mean(), mix.std(),
        g_vals.mean(axis=0), np.sqrt(g_var + data.noise_std**2),
    )


def run_experiment(raw_cfg: dict, outdir) -> dict:
    """Execute one configured run; returns the summary dictionary."""
    t_start = time.time()
    assets = build_experiment(raw_cfg)
    cfg = assets.config
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    runio.write_json(outdir / "config.resolved.json", cfg)
    runio.write_dataset(outdir, assets.data,
                        {"experiment": cfg["experiment"], "truth": assets.truth.name,
                         "seed": cfg["dataset"]["seed"]})
    runio.write_json(outdir / "ls_fit.json", {
        "lambda_star": assets.ls_fit.lambda_star.tolist(),
        "converged": assets.ls_fit.converged,
        "n_iter": assets.ls_fit.n_iter,
        "objective": assets.ls_fit.objective,
        "grad_norm": assets.ls_fit.grad_norm,
    })

    p = assets.ls_fit.lambda_star.size
    scfg = cfg["sampler"]
    lis_info = None
    lis_basis = None

    if cfg["method"] == "koh":
        settings = SamplerSettings(algorithm=scfg["algorithm"], n_steps=scfg["n_steps"],
                                   burn_in=scfg["burn_in"],
                                   n_walkers=scfg.get("n_walkers"),
                                   seed=scfg["seed"], stretch=scfg["stretch"],
                                   initial_scale=0.05)
        chain = sample(assets.posterior, np.asarray(cfg["prior"]["lambda_mean"], dtype=float),
                       settings)
        theta_samples = chain.flat()
        sampled_dim_labels = _theta_labels(assets)
    else:
        spec = assets.posterior
        w0 = (np.zeros(spec.m) if cfg["experiment"] == "adr"
              else initial_weights(assets.model, assets.basis, assets.data,
                                   assets.ls_fit.lambda_star))
        theta0 = np.concatenate([assets.ls_fit.lambda_star, w0])
        theta_map = spec.map_estimate(theta_init=theta0)
        if cfg["lis"]["enabled"]:
            lis_settings = LisSettings(cutoff=cfg["lis"]["cutoff"],
                                       max_hessians=cfg["lis"]["max_hessians"],
                                       subspace_steps=cfg["lis"]["subspace_steps"],
                                       seed=cfg["seed"] + 17)
            lis_basis, lis_info = adaptive_global_lis(spec, lis_settings, theta_map=theta_map)
            runio.write_lis_bundle(outdir, lis_basis, lis_info, assets.prior)
            reduced = ReducedPosterior(lis_basis, spec)
            settings = SamplerSettings(algorithm=scfg["algorithm"], n_steps=scfg["n_steps"],
                                       burn_in=scfg["burn_in"],
                                       n_walkers=scfg.get("n_walkers"),
                                       seed=scfg["seed"], stretch=scfg["stretch"],
                                       initial_scale=0.1)
            chain = sample(reduced, lis_basis.reduced_coords(theta_map), settings)
            theta_samples = recombine_samples(lis_basis, chain.flat(), seed=cfg["seed"] + 29)
            sampled_dim_labels = [f"r_{i}" for i in range(lis_basis.rank)]
        else:
            laplace = spec.laplace_approx(theta_map)
            n_walkers = scfg.get("n_walkers") or max(2 * spec.dim, 32)
            n_walkers += n_walkers % 2
            cloud = laplace.sample(n_walkers, np.random.default_rng(cfg["seed"] + 41))
            settings = SamplerSettings(algorithm=scfg["algorithm"], n_steps=scfg["n_steps"],
                                       burn_in=scfg["burn_in"], n_walkers=n_walkers,
                                       seed=scfg["seed"], stretch=scfg["stretch"])
            init = cloud if settings.algorithm == "ensemble" else theta_map
            chain = sample(spec, init, settings)
            theta_samples = chain.flat()
            sampled_dim_labels = _theta_labels(assets)

    # chain artifacts (ESS on the in-memory chain, CSV thinned for size)
    kept_rows = (chain.n_steps - chain.burn_in) * chain.n_walkers
    thin = cfg.get("chain_thin") or max(1, kept_rows // 20000)
    runio.write_chain(outdir, chain, sampled_dim_labels, thin)
    ess_values = {}
    for i, label in enumerate(sampled_dim_labels):
        try:
            ess_values[label] = float(ess(chain, i))
        except Exception:
            ess_values[label] = float("nan")
    finite_ess = [v for v in ess_values.values() if np.isfinite(v)]

    labels = _theta_labels(assets)
    keep_idx = _marginal_subset(labels, p)
    runio.write_marginals(outdir, theta_samples[:, keep_idx],
                          [labels[i] for i in keep_idx])

    lam_samples = theta_samples[:, :p]
    lam_mean = lam_samples.mean(axis=0)

    summary = {
        "experiment": cfg["experiment"],
        "method": cfg["method"],
        "name": cfg.get("name", ""),
        "seed": cfg["seed"],
        "m": int(getattr(assets.basis, "m", 0)),
        "lambda_mean": lam_mean.tolist(),
        "lambda_std": lam_samples.std(axis=0).tolist(),
        "lambda_star": assets.ls_fit.lambda_star.tolist(),
        "abs_err_vs_ls": np.abs(lam_mean - assets.ls_fit.lambda_star).tolist(),
        "acceptance": chain.acceptance,
        "min_ess": min(finite_ess) if finite_ess else float("nan"),
        "ess": ess_values,
        "lis_rank": int(lis_basis.rank) if lis_basis is not None else None,
        "overflow_rejections": int(chain.overflow_rejections),
        "notes": assets.notes,
    }

    if cfg["experiment"] == "adr":
        _adr_outputs(assets, theta_samples, outdir, summary)
    else:
        gx = np.linspace(cfg["predict"]["lo"], cfg["predict"]["hi"], cfg["predict"]["n"])
        if cfg["method"] == "koh":
            table = _koh_bands(assets, lam_samples, gx)
        else:
            thin_bands = max(1, theta_samples.shape[0] // 4000)
            table = pushforward_bands(theta_samples[::thin_bands], assets.model, assets.basis,
                                      gx, assets.data.noise_std, param_dim=p)
        runio.write_bands(outdir, table)
        interp = np.interp(assets.data.x, table.grid, table.pfp_g_mean)
        summary["data_fit_rms"] = float(np.sqrt(np.mean((interp - assets.data.y) ** 2)))
        if cfg["plots"]:
            from . import report

            report.render_band_figure(outdir, assets, table)
            report.render_marginals(outdir, lam_samples, assets.ls_fit.lambda_star)
            if lis_basis is not None:
                report.render_lis_spectrum(outdir, lis_basis)

    summary["runtime_s"] = time.time() - t_start
    runio.write_json(outdir / "summary.json", summary)
    return summary


def _adr_outputs(assets: ExperimentAssets, theta_samples: np.ndarray, outdir: Path,
                 summary: dict) -> None:
    """Source-profile bands and field-error report for the PDE experiment."""
    cfg = assets.config
    model = assets.model
    gx = np.linspace(cfg["predict"]["lo"], cfg["predict"]["hi"], cfg["predict"]["n"])
    phi_g = assets.basis.phi(gx)
    thin = max(1, theta_samples.shape[0] // 4000)
    lam_s = theta_samples[::thin, 0]
    w_s = theta_samples[::thin, 1:]
    gp_vals = w_s @ phi_g.T
    from .models.adr import SRC_COEFF

    full_vals = SRC_COEFF * np.sin(lam_s[:, None] * gx[None, :]) + gp_vals
    runio.write_csv(outdir / "source_bands.csv",
                    ["x", "gp_mean", "gp_std", "full_mean", "full_std",
                     "true_missing", "true_full"],
                    zip(gx, gp_vals.mean(axis=0), gp_vals.std(axis=0),
                        full_vals.mean(axis=0), full_vals.std(axis=0),
                        missing_source_spatial(gx), truth_source_spatial(gx)))
    lam_hat = float(theta_samples[:, 0].mean())
    w_hat = theta_samples[:, 1:].mean(axis=0)
    field_plain = model.predict_field(lam_hat, np.zeros(model.m))
    field_full = model.predict_field(lam_hat, w_hat)
    err_plain = float(np.abs(field_plain - assets.truth_field).max())
    err_full = float(np.abs(field_full - assets.truth_field).max())
    runio.write_json(outdir / "field_errors.json", {
        "lambda_hat": lam_hat,
        "max_abs_error_no_gp": err_plain,
        "max_abs_error_with_gp": err_full,
    })
    summary["field_error_no_gp"] = err_plain
    summary["field_error_with_gp"] = err_full
    pred = model.predict(np.array([lam_hat]), w_hat)
    summary["data_fit_rms"] = float(np.sqrt(np.mean((pred - assets.data.y) ** 2)))
    if cfg["plots"]:
        from . import report

        report.render_adr_source(outdir, gx, gp_vals, full_vals)
        report.render_marginals(outdir, theta_samples[:, :1], assets.ls_fit.lambda_star)


def export_basis(raw_cfg: dict, outdir) -> Path:
    """Build just the eigenbasis of a config and export it (CSV + JSON)."""
    assets = build_experiment(raw_cfg)
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / "basis.csv"
    extra = {}
    if assets.basis.source == "conditioned":
        extra = {"constraint_mode": assets.basis.meta.get("mode"),
                 "lambda_star": assets.basis.meta.get("lambda_star")}
    elif assets.config["method"] == "logp":
        extra = {"constraint_mode": "linearized",
                 "lambda_star": assets.ls_fit.lambda_star.tolist()}
    write_basis(assets.basis, path, extra_meta=extra)
    return path


def ls_fit_only(raw_cfg: dict) -> dict:
    """Dataset + least-squares fit without any posterior sampling."""
    assets = build_experiment(raw_cfg)
    return {
        "lambda_star": assets.ls_fit.lambda_star.tolist(),
        "converged": assets.ls_fit.converged,
        "n_iter": assets.ls_fit.n_iter,
        "objective": assets.ls_fit.objective,
        "grad_norm": assets.ls_fit.grad_norm,
    }


COMPARE_COLUMNS = ["run", "method", "abs_err_vs_ls", "data_fit_rms", "min_ess", "lis_rank"]


def compare_runs(run_dirs) -> list:
    """Cross-run comparison rows; all runs must share the experiment."""
    run_dirs = [Path(d) for d in run_dirs]
    if len(run_dirs) < 2:
        raise ComparisonError("need at least two run directories to compare")
    summaries = []
    for d in run_dirs:
        f = d / "summary.json"
        if not f.exists():
            raise ComparisonError(f"{d} does not contain a completed run (no summary.json)")
        summaries.append(json.loads(f.read_text()))
    experiments = {s["experiment"] for s in summaries}
    if len(experiments) > 1:
        raise ComparisonError(f"runs belong to different experiments: {sorted(experiments)}")
    rows = []
    for d, s in zip(run_dirs, summaries):
        rows.append((d.name, s["method"],
                     float(np.linalg.norm(s["abs_err_vs_ls"])),
                     s.get("data_fit_rms", float("nan")),
                     s.get("min_ess", float("nan")),
                     s.get("lis_rank") if s.get("lis_rank") is not None else ""))
    return rows
