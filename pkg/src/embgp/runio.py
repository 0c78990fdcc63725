"""Deterministic artifact readers/writers for experiment runs.

CSV floats are written with repr (shortest round-trip), so identical inputs
produce byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .gp import Dataset


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_csv(path, header, rows) -> None:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_json(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def write_dataset(outdir: Path, data: Dataset, meta: dict) -> None:
    if data.t is None:
        write_csv(outdir / "dataset.csv", ["x", "y"], zip(data.x, data.y))
    else:
        write_csv(outdir / "dataset.csv", ["x", "t", "y"], zip(data.x, data.t, data.y))
    write_json(outdir / "dataset.json", {"noise_std": data.noise_std, "n": data.n, **meta})


def read_dataset(path) -> Dataset:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    xs, ys, ts = [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        has_t = "t" in header
        for row in reader:
            xs.append(float(row[0]))
            if has_t:
                ts.append(float(row[1]))
                ys.append(float(row[2]))
            else:
                ys.append(float(row[1]))
    return Dataset(np.array(xs), np.array(ys), meta["noise_std"],
                   t=np.array(ts) if ts else None)


def write_chain(outdir: Path, chain, labels, thin: int) -> None:
    """Post-burn-in draws as CSV rows (step, walker, coords..., logpost)."""
    rows = []
    for step in range(chain.burn_in, chain.n_steps, thin):
        for walker in range(chain.n_walkers):
            rows.append((step, walker, *chain.draws[step, walker], chain.log_density[step, walker]))
    write_csv(outdir / "chain.csv", ["step", "walker", *labels, "logpost"], rows)


def write_marginals(outdir: Path, samples: np.ndarray, labels, bins: int = 64) -> None:
    """Histograms as binned counts, one block of rows per coordinate."""
    rows = []
    for j, name in enumerate(labels):
        col = samples[:, j]
        counts, edges = np.histogram(col, bins=bins)
        for b in range(bins):
            rows.append((name, edges[b], edges[b + 1], int(counts[b])))
    write_csv(outdir / "marginals.csv", ["param", "bin_left", "bin_right", "count"], rows)


def write_bands(outdir: Path, table, name: str = "bands.csv") -> None:
    write_csv(outdir / name, table.COLUMNS, table.rows())


def prior_hash(prior) -> str:
    blob = np.concatenate([prior.joint_mean, prior.joint_cov().ravel()]).tobytes()
    return hashlib.sha256(blob).hexdigest()[:16]


def write_lis_bundle(outdir: Path, lis, report, prior) -> None:
    lisdir = outdir / "lis"
    lisdir.mkdir(exist_ok=True)
    write_json(lisdir / "lis.json", {
        "rank": lis.rank,
        "cutoff": lis.cutoff,
        "dim": lis.dim,
        "eigenvalues": lis.eigenvalues.tolist(),
        "prior_hash": prior_hash(prior),
        "hessian_count": report.hessian_count,
        "converged": report.converged,
        "subspace_distances": report.distances,
    })
    for name, mat in (("u_r", lis.u_r), ("w_r", lis.w_r),
                      ("u_perp", lis.u_perp), ("w_perp", lis.w_perp)):
        write_csv(lisdir / f"{name}.csv", [f"c{j}" for j in range(mat.shape[1])], mat)
    write_csv(lisdir / "prior_sqrt.csv", [f"c{j}" for j in range(lis.prior_sqrt.shape[1])],
              lis.prior_sqrt)
    write_csv(lisdir / "prior_mean.csv", ["value"], [(v,) for v in lis.prior_mean])


def read_lis_bundle(lisdir):
    from .lis import LisBasis

    lisdir = Path(lisdir)
    head = json.loads((lisdir / "lis.json").read_text())

    def mat(name):
        with open(lisdir / f"{name}.csv", newline="") as fh:
            reader = csv.reader(fh)
            next(reader)
            return np.array([[float(v) for v in row] for row in reader])

    return LisBasis(head["rank"], mat("u_r"), mat("w_r"), mat("u_perp"), mat("w_perp"),
                    np.array(head["eigenvalues"]), mat("prior_sqrt"),
                    mat("prior_mean").ravel(), head["cutoff"])
