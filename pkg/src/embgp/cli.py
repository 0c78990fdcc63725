"""Command-line entry point.

Verbs:
  run <config.json> [-o DIR]     execute a configured experiment
  compare <dir> <dir> [...]      tabulate completed runs side by side
  basis <config.json> [-o DIR]   export the eigenbasis only
  ls-fit <config.json>           dataset + least-squares fit only

Configs may be file paths or names of the bundled configs (see
``embgp configs``).  EMBGP_THREADS caps the numerical backend's worker
threads and must be honored before numpy loads, so keep imports lazy here.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


def _apply_thread_cap() -> None:
    cap = os.environ.get("EMBGP_THREADS")
    if not cap:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(var, cap)


def _error_json(kind: str, exc: Exception) -> str:
    payload = {"error": kind, "message": str(exc)}
    field = getattr(exc, "field", None)
    if field:
        payload["field"] = field
    return json.dumps(payload)


def _load_config(spec: str) -> dict:
    from .errors import ConfigError

    path = Path(spec)
    if not path.exists():
        bundled = bundled_config_path(spec)
        if bundled is None:
            raise ConfigError(f"config not found: {spec} (not a file or bundled name)")
        path = bundled
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")


def bundled_config_path(name: str):
    from importlib.resources import files

    root = files("embgp") / "configs"
    cand = root / name
    if cand.is_file():
        return cand
    if not name.endswith(".json"):
        cand = root / f"{name}.json"
        if cand.is_file():
            return cand
    return None


def list_bundled_configs() -> list:
    from importlib.resources import files

    root = files("embgp") / "configs"
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".json"))


def cmd_run(args) -> int:
    from .errors import ConfigError, EmbgpError
    from .experiments import run_experiment, validate_config

    try:
        cfg = _load_config(args.config)
        resolved = validate_config(cfg)
    except ConfigError as exc:
        print(_error_json("config", exc), file=sys.stderr)
        return EXIT_CONFIG
    outdir = args.output or resolved.get("name") or "run_out"
    try:
        summary = run_experiment(cfg, outdir)
    except EmbgpError as exc:
        print(_error_json(type(exc).__name__, exc), file=sys.stderr)
        return EXIT_FAILURE
    print(json.dumps({"output_dir": str(outdir),
                      "lambda_mean": summary["lambda_mean"],
                      "lambda_star": summary["lambda_star"],
                      "min_ess": summary["min_ess"],
                      "lis_rank": summary["lis_rank"],
                      "runtime_s": round(summary["runtime_s"], 2)}, indent=2))
    return EXIT_OK


def cmd_compare(args) -> int:
    import csv

    from .errors import ComparisonError
    from .experiments import COMPARE_COLUMNS, compare_runs

    try:
        rows = compare_runs(args.dirs)
    except ComparisonError as exc:
        print(_error_json("comparison", exc), file=sys.stderr)
        return EXIT_FAILURE
    out = sys.stdout
    if args.output:
        out = open(args.output, "w", newline="")
    writer = csv.writer(out)
    writer.writerow(COMPARE_COLUMNS)
    for row in rows:
        writer.writerow(row)
    if args.output:
        out.close()
    return EXIT_OK


def cmd_basis(args) -> int:
    from .errors import ConfigError, EmbgpError
    from .experiments import export_basis

    try:
        cfg = _load_config(args.config)
        path = export_basis(cfg, args.output or "basis_out")
    except ConfigError as exc:
        print(_error_json("config", exc), file=sys.stderr)
        return EXIT_CONFIG
    except EmbgpError as exc:
        print(_error_json(type(exc).__name__, exc), file=sys.stderr)
        return EXIT_FAILURE
    print(json.dumps({"basis_csv": str(path), "header": str(path.with_suffix(".json"))}))
    return EXIT_OK


def cmd_ls_fit(args) -> int:
    from .errors import ConfigError, EmbgpError
    from .experiments import ls_fit_only

    try:
        cfg = _load_config(args.config)
        result = ls_fit_only(cfg)
    except ConfigError as exc:
        print(_error_json("config", exc), file=sys.stderr)
        return EXIT_CONFIG
    except EmbgpError as exc:
        print(_error_json(type(exc).__name__, exc), file=sys.stderr)
        return EXIT_FAILURE
    print(json.dumps(result, indent=2))
    return EXIT_OK


def cmd_configs(args) -> int:
    for name in list_bundled_configs():
        print(name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="embgp",
                                     description="Embedded-GP model-error calibration runner")
    sub = parser.add_subparsers(dest="verb", required=True)

    p_run = sub.add_parser("run", help="execute a configured experiment")
    p_run.add_argument("config", help="config JSON path or bundled config name")
    p_run.add_argument("-o", "--output", help="output directory")
    p_run.set_defaults(fn=cmd_run)

    p_cmp = sub.add_parser("compare", help="compare completed run directories")
    p_cmp.add_argument("dirs", nargs="+", help="run directories")
    p_cmp.add_argument("-o", "--output", help="write CSV here instead of stdout")
    p_cmp.set_defaults(fn=cmd_compare)

    p_basis = sub.add_parser("basis", help="export the eigenbasis of a config")
    p_basis.add_argument("config")
    p_basis.add_argument("-o", "--output", help="output directory")
    p_basis.set_defaults(fn=cmd_basis)

    p_ls = sub.add_parser("ls-fit", help="least-squares parameter fit only")
    p_ls.add_argument("config")
    p_ls.set_defaults(fn=cmd_ls_fit)

    p_cfg = sub.add_parser("configs", help="list bundled configs")
    p_cfg.set_defaults(fn=cmd_configs)
    return parser


def main(argv=None) -> int:
    _apply_thread_cap()
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
