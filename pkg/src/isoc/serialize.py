"""Versioned JSON persistence plus flat CSV exports of the run artifacts.

JSON files are the authoritative formats (models, GT data, run records);
CSVs are companion exports for plotting and spreadsheets.  All writers are
deterministic: sorted keys, fixed indentation, repr-roundtrip floats, so
regenerating a file from the same objects reproduces it byte for byte.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .experiments import SliceScanResult
from .model import CostStructure, FeasibleSet, LqsSystem, SigmaPattern
from .objective import GroundTruthData
from .optimizer import RunRecord

SCHEMA_VERSION = 1


def _write_json(payload: dict, path) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def _check_kind(payload: dict, kind: str) -> None:
    if payload.get("kind") != kind:
        raise ValueError(f"expected a {kind!r} file, got kind={payload.get('kind')!r}")
    version = payload.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema_version {version!r}")


def _arr(a: np.ndarray) -> list:
    return np.asarray(a, dtype=np.float64).tolist()


# ---------------------------------------------------------------------------
# model files


def _pattern_to_dict(p: SigmaPattern) -> dict:
    return {"shape": list(p.shape), "rows": list(p.rows), "cols": list(p.cols)}


def _pattern_from_dict(d: dict) -> SigmaPattern:
    return SigmaPattern(
        shape=tuple(d["shape"]), rows=tuple(d["rows"]), cols=tuple(d["cols"])
    )


@dataclass
class ModelBundle:
    """Deserialized model file: the problem plus optional identification setup.

    identification (when present) carries selector, w_mean, w_cov, box_lower,
    box_upper, and optionally theta_star as plain lists.
    """

    system: LqsSystem
    cost: CostStructure
    identification: dict | None = None

    @property
    def selector(self) -> np.ndarray:
        return np.asarray(self.identification["selector"], dtype=np.float64)

    @property
    def w_mean(self) -> np.ndarray:
        return np.asarray(self.identification["w_mean"], dtype=np.float64)

    @property
    def w_cov(self) -> np.ndarray:
        return np.asarray(self.identification["w_cov"], dtype=np.float64)

    @property
    def theta_star(self) -> np.ndarray | None:
        if self.identification is None or "theta_star" not in self.identification:
            return None
        return np.asarray(self.identification["theta_star"], dtype=np.float64)

    @property
    def box(self) -> FeasibleSet:
        return FeasibleSet(
            lower=np.asarray(self.identification["box_lower"], dtype=np.float64),
            upper=np.asarray(self.identification["box_upper"], dtype=np.float64),
        )

    def make_box(self, upper: float | None = None) -> FeasibleSet:
        if upper is None:
            return self.box
        lower = np.asarray(self.identification["box_lower"], dtype=np.float64)
        return FeasibleSet(lower=lower, upper=np.full(lower.size, float(upper)))


def identification_dict(
    selector: np.ndarray,
    w_mean: np.ndarray,
    w_cov: np.ndarray,
    box: FeasibleSet,
    theta_star: np.ndarray | None = None,
) -> dict:
    d = {
        "selector": _arr(selector),
        "w_mean": _arr(w_mean),
        "w_cov": _arr(w_cov),
        "box_lower": _arr(box.lower),
        "box_upper": _arr(box.upper),
    }
    if theta_star is not None:
        d["theta_star"] = _arr(theta_star)
    return d


def save_model(path, system: LqsSystem, cost: CostStructure,
               identification: dict | None = None) -> None:
    payload = {
        "schema_version": SCHEMA_VERSION,
        "kind": "isoc_model",
        "system": {
            "A": _arr(system.A),
            "B": _arr(system.B),
            "H": _arr(system.H),
            "F": _arr(system.F),
            "G": _arr(system.G),
            "alpha_pattern": _pattern_to_dict(system.alpha_pattern),
            "beta_pattern": _pattern_to_dict(system.beta_pattern),
            "N": int(system.N),
            "x0_mean": _arr(system.x0_mean),
            "x0_cov": _arr(system.x0_cov),
        },
        "cost": {
            "q_n": _arr(cost.q_n),
            "q_q": _arr(cost.q_q) if cost.q_q.size else [],
            "q_q_shape": list(cost.q_q.shape),
            "q_r": _arr(cost.q_r),
        },
    }
    if identification is not None:
        payload["identification"] = identification
    _write_json(payload, path)


def load_model(path) -> ModelBundle:
    payload = _read_json(path)
    _check_kind(payload, "isoc_model")
    s = payload["system"]
    system = LqsSystem(
        A=np.asarray(s["A"], dtype=np.float64),
        B=np.asarray(s["B"], dtype=np.float64),
        H=np.asarray(s["H"], dtype=np.float64),
        F=np.asarray(s["F"], dtype=np.float64),
        G=np.asarray(s["G"], dtype=np.float64),
        alpha_pattern=_pattern_from_dict(s["alpha_pattern"]),
        beta_pattern=_pattern_from_dict(s["beta_pattern"]),
        N=int(s["N"]),
        x0_mean=np.asarray(s["x0_mean"], dtype=np.float64),
        x0_cov=np.asarray(s["x0_cov"], dtype=np.float64),
    )
    c = payload["cost"]
    q_q = np.asarray(c["q_q"], dtype=np.float64)
    if q_q.size == 0:
        q_q = np.zeros(tuple(c["q_q_shape"]))
    cost = CostStructure(
        q_n=np.asarray(c["q_n"], dtype=np.float64),
        q_q=q_q,
        q_r=np.asarray(c["q_r"], dtype=np.float64),
    )
    return ModelBundle(system=system, cost=cost,
                       identification=payload.get("identification"))


# ---------------------------------------------------------------------------
# ground-truth files


def save_gt(path, gt: GroundTruthData, meta: dict | None = None) -> None:
    payload = {
        "schema_version": SCHEMA_VERSION,
        "kind": "isoc_gt",
        "selector": _arr(gt.selector),
        "mean": _arr(gt.mean),
        "cov": _arr(gt.cov),
        "w_mean": _arr(gt.w_mean),
        "w_cov": _arr(gt.w_cov),
        "meta": meta or {},
    }
    _write_json(payload, path)


def load_gt(path) -> tuple[GroundTruthData, dict]:
    payload = _read_json(path)
    _check_kind(payload, "isoc_gt")
    gt = GroundTruthData(
        selector=np.asarray(payload["selector"], dtype=np.float64),
        mean=np.asarray(payload["mean"], dtype=np.float64),
        cov=np.asarray(payload["cov"], dtype=np.float64),
        w_mean=np.asarray(payload["w_mean"], dtype=np.float64),
        w_cov=np.asarray(payload["w_cov"], dtype=np.float64),
    )
    return gt, payload.get("meta", {})


def export_gt_csv(gt: GroundTruthData, mean_path, cov_path) -> None:
    """Flat companions: mean rows (t, channel, value), cov rows (t, row, col, value)."""
    with open(mean_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "channel", "value"])
        for t in range(gt.mean.shape[0]):
            for i in range(gt.nbar):
                w.writerow([t, i, repr(float(gt.mean[t, i]))])
    with open(cov_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "row", "col", "value"])
        for t in range(gt.cov.shape[0]):
            for i in range(gt.nbar):
                for j in range(gt.nbar):
                    w.writerow([t, i, j, repr(float(gt.cov[t, i, j]))])


# ---------------------------------------------------------------------------
# run records


def save_run_record(path, record: RunRecord) -> None:
    _write_json(record.to_dict(), path)


def load_run_record(path) -> RunRecord:
    payload = _read_json(path)
    _check_kind(payload, "isoc_run")
    return RunRecord.from_dict(payload)


def export_run_csv(record: RunRecord, samples_path, starts_path) -> None:
    """Per-sample and per-start tables of one run."""
    dim = record.samples.shape[1]
    with open(samples_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "j_isoc", "filtered_by"] + [f"theta_{i}" for i in range(dim)])
        for k in range(record.k_max):
            w.writerow(
                [k, repr(float(record.j_samples[k])), record.filtered_by[k]]
                + [repr(float(x)) for x in record.samples[k]]
            )
    with open(starts_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["k", "j_start", "j_min", "iterations", "n_evals", "converged",
             "delta_roa", "n_minima_at_decision"]
            + [f"theta_min_{i}" for i in range(dim)]
        )
        for s in record.starts:
            w.writerow(
                [s.k, repr(float(s.j_start)), repr(float(s.j_min)), s.iterations,
                 s.n_evals, int(s.converged), repr(float(s.delta_roa)),
                 s.n_minima_at_decision]
                + [repr(float(x)) for x in s.theta_min]
            )


# ---------------------------------------------------------------------------
# gains and scans


def export_gains_csv(path, gains: np.ndarray) -> None:
    """Time-stacked gain schedule to rows (t, row, col, value)."""
    gains = np.asarray(gains, dtype=np.float64)
    if gains.ndim != 3:
        raise ValueError(f"gains must be (T, rows, cols), got {gains.shape}")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "row", "col", "value"])
        for t in range(gains.shape[0]):
            for i in range(gains.shape[1]):
                for j in range(gains.shape[2]):
                    w.writerow([t, i, j, repr(float(gains[t, i, j]))])


def load_gains_csv(path) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for rec in reader:
            rows.append((int(rec["t"]), int(rec["row"]), int(rec["col"]),
                         float(rec["value"])))
    if not rows:
        raise ValueError(f"no gain entries in {path}")
    T = max(r[0] for r in rows) + 1
    nr = max(r[1] for r in rows) + 1
    nc = max(r[2] for r in rows) + 1
    out = np.zeros((T, nr, nc))
    for t, i, j, v in rows:
        out[t, i, j] = v
    return out


def export_scan_csv(result: SliceScanResult, path) -> None:
    """Slice-scan grid to rows (i_index, j_index, theta_i, theta_j, j_isoc)."""
    steps_i, steps_j = result.j_grid.shape
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i_index", "j_index", "theta_i", "theta_j", "j_isoc"])
        for a in range(steps_i):
            for b in range(steps_j):
                w.writerow([
                    a, b,
                    repr(float(result.values_i[a])),
                    repr(float(result.values_j[b])),
                    repr(float(result.j_grid[a, b])),
                ])


def load_scan_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Read back a scan CSV; returns (values_i, values_j, j_grid)."""
    entries = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            entries.append((int(rec["i_index"]), int(rec["j_index"]),
                            float(rec["theta_i"]), float(rec["theta_j"]),
                            float(rec["j_isoc"])))
    if not entries:
        raise ValueError(f"no scan entries in {path}")
    si = max(e[0] for e in entries) + 1
    sj = max(e[1] for e in entries) + 1
    vi = np.zeros(si)
    vj = np.zeros(sj)
    grid = np.full((si, sj), np.nan)
    for a, b, ti, tj, val in entries:
        vi[a], vj[b], grid[a, b] = ti, tj, val
    return vi, vj, grid


# ---------------------------------------------------------------------------
# aggregate tables

AGGREGATE_COLUMNS = [
    "method", "k_max", "gamma", "v", "box_upper", "repetitions",
    "n_starts_mean", "iterations_mean", "n_converged",
    "j_opt_min", "j_opt_max", "wall_time_mean_s",
]


def write_aggregate_csv(path, rows: list[dict]) -> None:
    """One row per configuration, fixed column order (extra keys are dropped)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(AGGREGATE_COLUMNS)
        for row in rows:
            out = []
            for col in AGGREGATE_COLUMNS:
                val = row.get(col, "")
                out.append(repr(float(val)) if isinstance(val, float) else val)
            w.writerow(out)


def save_aggregate_json(path, rows: list[dict]) -> None:
    _write_json(
        {"schema_version": SCHEMA_VERSION, "kind": "isoc_aggregate", "rows": rows}, path
    )
