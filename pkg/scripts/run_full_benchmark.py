#!/usr/bin/env python3
"""Full-scale identification benchmark on the reaching problem.

Runs the filter-parameter sweep at the publication-scale budget
(k_max = 10000, horizon 50, 10 repetitions per cell) and writes run records
plus the aggregate table.  On a single core this takes many hours; pass
--k-max/--reps/--horizon to scale it down.
"""
from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from isoc import ExperimentConfig, IsocObjective
from isoc.experiments import generate_gt, sweep_experiments
from isoc.reaching import build_reaching_example
from isoc.serialize import save_aggregate_json, save_run_record, write_aggregate_csv


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", type=Path, default=Path("benchmark_runs"))
    ap.add_argument("--horizon", type=int, default=50)
    ap.add_argument("--k-max", type=int, default=10000)
    ap.add_argument("--reps", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--gammas", default="0.5,0.6,0.7,0.8")
    ap.add_argument("--vs", default="0.5,0.7,0.9")
    ap.add_argument("--box-uppers", default="2.0")
    args = ap.parse_args(argv)

    gammas = [float(x) for x in args.gammas.split(",")]
    vs = [float(x) for x in args.vs.split(",")]
    box_uppers = [float(x) for x in args.box_uppers.split(",")]

    ex = build_reaching_example(horizon=args.horizon)
    gt, _ = generate_gt(ex, mode="analytic")
    objective = IsocObjective(ex.system, ex.cost, gt)
    base = ExperimentConfig(
        method="trl", k_max=args.k_max, repetitions=args.reps, base_seed=args.seed,
    )

    args.out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    rows = []

    def on_result(res):
        cell = f"g{res.config.gamma}_v{res.config.v}_b{res.aggregate.get('box_upper', 'default')}"
        for i, rec in enumerate(res.records):
            save_run_record(args.out_dir / f"run_{cell}_rep{i}.json", rec)
        rows.append(res.aggregate)
        print(
            f"[{time.time() - t0:8.0f}s] {cell}: "
            f"{res.aggregate['n_converged']}/{res.config.repetitions} converged, "
            f"mean starts {res.aggregate['n_starts_mean']:.1f}",
            flush=True,
        )

    sweep_experiments(objective, ex.make_box, base, gammas, vs, box_uppers, on_result)
    write_aggregate_csv(args.out_dir / "aggregate.csv", rows)
    save_aggregate_json(args.out_dir / "aggregate.json", rows)
    print(f"done in {time.time() - t0:.0f}s; aggregate in {args.out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
