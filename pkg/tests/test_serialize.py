"""Serialization: JSON/CSV round trips, schema guards, byte stability."""
from __future__ import annotations

import json

import numpy as np
import pytest

from isoc import (
    IsocObjective,
    LocalSolverConfig,
    TrlConfig,
    slice_scan,
    trlwaroa,
)
from isoc.experiments import generate_gt
from isoc.serialize import (
    SCHEMA_VERSION,
    export_gains_csv,
    export_gt_csv,
    export_run_csv,
    export_scan_csv,
    identification_dict,
    load_gains_csv,
    load_gt,
    load_model,
    load_run_record,
    load_scan_csv,
    save_aggregate_json,
    save_gt,
    save_model,
    save_run_record,
    write_aggregate_csv,
)


@pytest.fixture(scope="module")
def run_record(reaching8, reaching8_objective):
    return trlwaroa(
        reaching8_objective, reaching8.box,
        TrlConfig(k_max=8, gamma=0.7, v=0.7, seed=1),
        LocalSolverConfig(max_iters=10),
    )


def test_model_roundtrip_bytes(tmp_path, reaching8):
    ex = reaching8
    p1 = tmp_path / "model.json"
    p2 = tmp_path / "model2.json"
    ident = identification_dict(ex.selector, ex.w_mean, ex.w_cov, ex.box, ex.theta_star)
    save_model(p1, ex.system, ex.cost, ident)
    bundle = load_model(p1)
    save_model(p2, bundle.system, bundle.cost, bundle.identification)
    assert p1.read_bytes() == p2.read_bytes()
    assert np.array_equal(bundle.system.A, ex.system.A)
    assert np.array_equal(bundle.cost.q_n, ex.cost.q_n)
    assert bundle.system.N == ex.system.N
    assert np.array_equal(bundle.theta_star, ex.theta_star)
    assert np.array_equal(bundle.box.lower, ex.box.lower)


def test_model_kind_guard(tmp_path, reaching8):
    p = tmp_path / "model.json"
    save_model(p, reaching8.system, reaching8.cost)
    payload = json.loads(p.read_text())
    payload["kind"] = "something-else"
    p.write_text(json.dumps(payload))
    with pytest.raises(ValueError, match="kind"):
        load_model(p)


def test_model_schema_version_guard(tmp_path, reaching8):
    p = tmp_path / "model.json"
    save_model(p, reaching8.system, reaching8.cost)
    payload = json.loads(p.read_text())
    payload["schema_version"] = SCHEMA_VERSION + 1
    p.write_text(json.dumps(payload))
    with pytest.raises(ValueError, match="schema"):
        load_model(p)


def test_gt_roundtrip_bytes(tmp_path, reaching8, reaching8_gt):
    p1 = tmp_path / "gt.json"
    p2 = tmp_path / "gt2.json"
    save_gt(p1, reaching8_gt, meta={"mode": "analytic", "seed": 0})
    gt2, meta = load_gt(p1)
    save_gt(p2, gt2, meta=meta)
    assert p1.read_bytes() == p2.read_bytes()
    assert np.array_equal(gt2.mean, reaching8_gt.mean)
    assert np.array_equal(gt2.cov, reaching8_gt.cov)
    assert np.array_equal(gt2.selector, reaching8_gt.selector)
    assert meta["mode"] == "analytic"


def test_gt_regeneration_is_bitwise(tmp_path, reaching8):
    """Generating the GT twice yields byte-identical files."""
    gt_a, _ = generate_gt(reaching8, mode="analytic")
    gt_b, _ = generate_gt(reaching8, mode="analytic")
    pa, pb = tmp_path / "a.json", tmp_path / "b.json"
    save_gt(pa, gt_a)
    save_gt(pb, gt_b)
    assert pa.read_bytes() == pb.read_bytes()


def test_gt_csv_export(tmp_path, reaching8_gt):
    mean_path = tmp_path / "mean.csv"
    cov_path = tmp_path / "cov.csv"
    export_gt_csv(reaching8_gt, mean_path, cov_path)
    mean_lines = mean_path.read_text().strip().splitlines()
    assert mean_lines[0] == "t,channel,value"
    T, nbar = reaching8_gt.mean.shape
    assert len(mean_lines) == 1 + T * nbar
    # values survive the text trip exactly (repr round trip)
    t, ch, v = mean_lines[1 + 2 * nbar + 1].split(",")
    assert float(v) == reaching8_gt.mean[int(t), int(ch)]
    cov_lines = cov_path.read_text().strip().splitlines()
    assert cov_lines[0] == "t,row,col,value"
    assert len(cov_lines) == 1 + T * nbar * nbar


def test_run_record_roundtrip_bytes(tmp_path, run_record):
    p1 = tmp_path / "run.json"
    p2 = tmp_path / "run2.json"
    save_run_record(p1, run_record)
    rec2 = load_run_record(p1)
    save_run_record(p2, rec2)
    assert p1.read_bytes() == p2.read_bytes()
    assert rec2.j_opt == run_record.j_opt
    assert np.array_equal(rec2.theta_opt, run_record.theta_opt)
    assert np.array_equal(rec2.samples, run_record.samples)
    assert rec2.filtered_by == run_record.filtered_by
    assert [s.k for s in rec2.starts] == [s.k for s in run_record.starts]
    assert rec2.local_config == run_record.local_config


def test_run_csv_export(tmp_path, run_record):
    sp = tmp_path / "samples.csv"
    tp = tmp_path / "starts.csv"
    export_run_csv(run_record, sp, tp)
    s_lines = sp.read_text().strip().splitlines()
    assert s_lines[0].startswith("k,j_isoc,filtered_by,theta_0")
    assert len(s_lines) == 1 + run_record.k_max
    t_lines = tp.read_text().strip().splitlines()
    assert t_lines[0].startswith("k,j_start,j_min,iterations,n_evals,converged")
    assert len(t_lines) == 1 + len(run_record.starts)
    # spot check one sample row
    row = s_lines[3].split(",")
    k = int(row[0])
    assert float(row[1]) == run_record.j_samples[k]
    assert row[2] == run_record.filtered_by[k]


def test_gains_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    gains = rng.standard_normal((5, 2, 3))
    p = tmp_path / "L.csv"
    export_gains_csv(p, gains)
    lines = p.read_text().strip().splitlines()
    assert lines[0] == "t,row,col,value"
    assert len(lines) == 1 + 5 * 2 * 3
    back = load_gains_csv(p)
    assert np.array_equal(back, gains)


def test_scan_csv_roundtrip(tmp_path, reaching8, reaching8_objective):
    scan = slice_scan(
        reaching8_objective, reaching8.theta_star, plane=(0, 1), steps=5,
    )
    p = tmp_path / "scan.csv"
    export_scan_csv(scan, p)
    ti, tj, jgrid = load_scan_csv(p)
    assert np.array_equal(ti, scan.values_i)
    assert np.array_equal(tj, scan.values_j)
    assert np.array_equal(jgrid, scan.j_grid)


def test_aggregate_writers(tmp_path):
    rows = [
        {
            "method": "trlwaroa", "k_max": 10, "gamma": 0.7, "v": 0.7,
            "box_upper": 2.0, "repetitions": 2, "seeds": [0, 1],
            "n_starts_mean": 3.5, "n_starts": [3, 4],
            "iterations_mean": 20.0, "n_converged": 2,
            "j_opt_max": -0.99, "j_opt_min": -1.0, "j_opts": [-1.0, -0.99],
            "wall_time_mean_s": 1.0,
        }
    ]
    cp = tmp_path / "agg.csv"
    jp = tmp_path / "agg.json"
    write_aggregate_csv(cp, rows)
    save_aggregate_json(jp, rows)
    lines = cp.read_text().strip().splitlines()
    assert len(lines) == 2
    header = lines[0].split(",")
    assert "method" in header and "j_opt_max" in header
    loaded = json.loads(jp.read_text())
    assert loaded["rows"][0]["method"] == "trlwaroa"
