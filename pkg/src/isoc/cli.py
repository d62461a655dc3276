"""Command-line front end.

Subcommands:
  generate-gt   solve the forward problem at theta_star and write GT data
  identify      run inverse identification (single config, repeated seeds)
  sweep         grid of identification configs over gamma, v and box size
  slice-scan    objective values over a 2-parameter slice around a center
  report        regenerate aggregate tables from persisted run records

All commands are deterministic given their flags; `identify` and `sweep`
exit 0 only when every repetition ran to completion.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import serialize
from .experiments import (
    CONVERGED_J_THRESHOLD,
    ExperimentConfig,
    aggregate_records,
    fit_polynomial_surface,
    generate_gt,
    run_identification,
    slice_scan,
)
from .model import FeasibleSet
from .moments import export_moments_csv, propagate_moments
from .objective import IsocObjective
from .optimizer import LocalSolverConfig
from .reaching import build_reaching_example
from .soc import AoConfig, solve_ao


def _parse_floats(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip() != ""]


def _parse_ints(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok.strip() != ""]


def _add_problem_args(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=["reaching"],
                     help="built-in benchmark problem")
    src.add_argument("--model", metavar="FILE",
                     help="model JSON written by generate-gt or save_model")
    p.add_argument("--horizon", type=int, default=None,
                   help="override the preset horizon (number of steps)")
    p.add_argument("--box-upper", type=float, default=None,
                   help="override the search-box upper bound")


class _Problem:
    """Uniform view over a preset or a loaded model file."""

    def __init__(self, args):
        if args.preset is not None:
            kwargs = {}
            if args.horizon is not None:
                kwargs["horizon"] = args.horizon
            if getattr(args, "box_upper", None) is not None:
                kwargs["box_upper"] = args.box_upper
            ex = build_reaching_example(**kwargs)
            self.system, self.cost = ex.system, ex.cost
            self.selector, self.w_mean, self.w_cov = ex.selector, ex.w_mean, ex.w_cov
            self.theta_star, self.box = ex.theta_star, ex.box
            self._example = ex
        else:
            bundle = serialize.load_model(args.model)
            if args.horizon is not None:
                raise SystemExit("--horizon only applies to --preset")
            if bundle.identification is None:
                raise SystemExit(
                    f"{args.model} has no identification section "
                    "(selector, weights, box are required)"
                )
            self.system, self.cost = bundle.system, bundle.cost
            self.selector, self.w_mean, self.w_cov = (
                bundle.selector, bundle.w_mean, bundle.w_cov)
            self.theta_star = bundle.theta_star
            self.box = bundle.box
            if getattr(args, "box_upper", None) is not None:
                self.box = bundle.make_box(args.box_upper)
            self._example = None

    def make_box(self, upper: float | None = None) -> FeasibleSet:
        if upper is None:
            return self.box
        return FeasibleSet(lower=self.box.lower.copy(),
                           upper=np.full(self.box.lower.size, float(upper)))

    def require_theta_star(self) -> np.ndarray:
        if self.theta_star is None:
            raise SystemExit("this command needs theta_star (preset or model "
                             "identification section)")
        return self.theta_star

    def identification_dict(self) -> dict:
        return serialize.identification_dict(
            self.selector, self.w_mean, self.w_cov, self.box,
            theta_star=self.theta_star,
        )


def _load_objective(problem: _Problem, gt_path) -> IsocObjective:
    gt, _ = serialize.load_gt(gt_path)
    return IsocObjective(problem.system, problem.cost, gt)


def _solver_config(args) -> LocalSolverConfig:
    cfg = LocalSolverConfig()
    if getattr(args, "max_iters", None) is not None:
        cfg = LocalSolverConfig(max_iters=args.max_iters)
    return cfg


# ---------------------------------------------------------------------------
# generate-gt


def _cmd_generate_gt(args) -> int:
    problem = _Problem(args)
    problem.require_theta_star()
    gt, meta = generate_gt(
        problem, mode=args.mode, n_rollouts=args.rollouts, seed=args.seed
    )
    serialize.save_gt(args.out, gt, meta=meta)
    print(f"wrote GT ({args.mode}, horizon {problem.system.N}) to {args.out}")
    out = Path(args.out)
    if args.export_csv:
        mean_path = out.with_name(out.stem + "_mean.csv")
        cov_path = out.with_name(out.stem + "_cov.csv")
        serialize.export_gt_csv(gt, mean_path, cov_path)
        print(f"wrote {mean_path} and {cov_path}")
    if args.save_model:
        serialize.save_model(args.save_model, problem.system, problem.cost,
                             identification=problem.identification_dict())
        print(f"wrote model to {args.save_model}")
    if args.export_gains or args.export_moments:
        layout_obj = IsocObjective(problem.system, problem.cost, gt)
        arrays = layout_obj.materialize(problem.theta_star)
        sol = solve_ao(arrays, AoConfig(track_cost=False))
        if args.export_gains:
            gains_dir = Path(args.export_gains)
            gains_dir.mkdir(parents=True, exist_ok=True)
            serialize.export_gains_csv(gains_dir / "L.csv", sol.gains.L)
            serialize.export_gains_csv(gains_dir / "K.csv", sol.gains.K)
            print(f"wrote gain schedules to {gains_dir}")
        if args.export_moments:
            traj = propagate_moments(arrays, sol.gains.L, sol.gains.K)
            export_moments_csv(traj, args.export_moments)
            print(f"wrote moment trajectory to {args.export_moments}")
    return 0


# ---------------------------------------------------------------------------
# identify


def _cmd_identify(args) -> int:
    problem = _Problem(args)
    objective = _load_objective(problem, args.gt)
    config = ExperimentConfig(
        method=args.method, k_max=args.k_max, gamma=args.gamma, v=args.v,
        repetitions=args.reps, base_seed=args.seed, workers=args.workers,
        solver=_solver_config(args),
    )
    out_dir = Path(args.out_dir) if args.out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)

    resume = None
    if args.samples_from:
        prev = serialize.load_run_record(args.samples_from)
        if prev.k_max != config.k_max:
            raise SystemExit(
                f"--samples-from record has k_max={prev.k_max}, requested {config.k_max}"
            )
        resume = (prev.samples, prev.j_samples)
        if config.repetitions != 1 or config.method != "trl":
            raise SystemExit("--samples-from implies --method trl --reps 1")

    records, failures = [], 0
    for rep in range(config.repetitions):
        seed = config.rep_seed(rep)
        try:
            if resume is not None:
                from .optimizer import TrlConfig, trlwaroa

                trl_cfg = TrlConfig(k_max=config.k_max, gamma=config.gamma,
                                    v=config.v, seed=seed, workers=config.workers)
                rec = trlwaroa(objective, problem.box, trl_cfg,
                               solver_cfg=config.solver,
                               samples=resume[0], j_samples=resume[1])
            else:
                rec = run_identification(objective, problem.box, config, rep)
        except Exception as exc:  # keep remaining repetitions running
            failures += 1
            print(f"rep {rep} (seed {seed}): FAILED: {exc}", file=sys.stderr)
            continue
        records.append(rec)
        tag = "converged" if rec.j_opt <= CONVERGED_J_THRESHOLD else "not converged"
        print(f"rep {rep} (seed {seed}): j_opt={rec.j_opt:.6f} "
              f"starts={rec.n_local_solves}/{rec.k_max} "
              f"time={rec.wall_time_s:.1f}s [{tag}]")
        if out_dir:
            stem = f"run_{rec.method}_g{rec.gamma:g}_v{rec.v:g}_seed{rec.seed}"
            serialize.save_run_record(out_dir / f"{stem}.json", rec)
            if args.export_csv:
                serialize.export_run_csv(rec, out_dir / f"{stem}_samples.csv",
                                         out_dir / f"{stem}_starts.csv")
    if records:
        best = min(records, key=lambda r: r.j_opt)
        agg = aggregate_records(records)
        print(f"best j_opt={best.j_opt:.6f} (seed {best.seed}); "
              f"{agg['n_converged']}/{len(records)} repetitions converged")
        if out_dir:
            serialize.save_aggregate_json(out_dir / "aggregate.json", [agg])
    return 1 if failures else 0


# ---------------------------------------------------------------------------
# sweep


def _cmd_sweep(args) -> int:
    problem = _Problem(args)
    objective = _load_objective(problem, args.gt)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    solver = _solver_config(args)
    box_uppers = args.box_uppers or [None]

    rows, failures = [], 0
    for b in box_uppers:
        box = problem.make_box(b)
        for gamma in args.gammas:
            for v in args.vs:
                config = ExperimentConfig(
                    method=args.method, k_max=args.k_max, gamma=gamma, v=v,
                    repetitions=args.reps, base_seed=args.seed,
                    workers=args.workers, solver=solver,
                )
                records = []
                for rep in range(config.repetitions):
                    seed = config.rep_seed(rep)
                    try:
                        rec = run_identification(objective, box, config, rep)
                    except Exception as exc:
                        failures += 1
                        print(f"gamma={gamma} v={v} rep {rep}: FAILED: {exc}",
                              file=sys.stderr)
                        continue
                    records.append(rec)
                    stem = (f"run_{rec.method}_g{gamma:g}_v{v:g}"
                            f"_b{np.max(box.upper):g}_seed{seed}")
                    serialize.save_run_record(out_dir / f"{stem}.json", rec)
                if not records:
                    continue
                agg = aggregate_records(records)
                rows.append(agg)
                print(f"gamma={gamma} v={v} b={np.max(box.upper):g}: "
                      f"starts_mean={agg['n_starts_mean']:.1f} "
                      f"converged={agg['n_converged']}/{agg['repetitions']} "
                      f"j_opt_max={agg['j_opt_max']:.6f}")
    serialize.write_aggregate_csv(out_dir / "aggregate.csv", rows)
    serialize.save_aggregate_json(out_dir / "aggregate.json", rows)
    print(f"wrote {out_dir / 'aggregate.csv'}")
    return 1 if failures else 0


# ---------------------------------------------------------------------------
# slice-scan


def _cmd_slice_scan(args) -> int:
    problem = _Problem(args)
    objective = _load_objective(problem, args.gt)
    if args.center is not None:
        center = np.asarray(_parse_floats(args.center))
    else:
        center = problem.require_theta_star()
    plane = tuple(_parse_ints(args.plane))
    if len(plane) != 2:
        raise SystemExit("--plane needs exactly two comma-separated indices")
    result = slice_scan(objective, center, plane, steps=args.steps)
    serialize.export_scan_csv(result, args.out)
    print(f"wrote {args.steps}x{args.steps} scan of parameters {plane} to {args.out}")
    if args.fit_degree:
        ti, tj = np.meshgrid(result.values_i, result.values_j, indexing="ij")
        fit = fit_polynomial_surface(ti, tj, result.j_grid, degree=args.fit_degree)
        print(f"degree-{args.fit_degree} surface fit: R^2 = {fit.r_squared:.6f}")
    return 0


# ---------------------------------------------------------------------------
# report


def _cmd_report(args) -> int:
    paths: list[Path] = []
    for item in args.runs:
        p = Path(item)
        if p.is_dir():
            paths.extend(sorted(p.glob("run_*.json")))
        else:
            paths.append(p)
    if not paths:
        raise SystemExit("no run records found")
    records = [serialize.load_run_record(p) for p in paths]

    groups: dict[tuple, list] = {}
    for rec in records:
        key = (rec.method, rec.k_max, rec.gamma, rec.v, float(np.max(rec.box_upper)))
        groups.setdefault(key, []).append(rec)
    rows = [aggregate_records(group) for _, group in sorted(groups.items())]
    for row in rows:
        print(f"{row['method']} k_max={row['k_max']} gamma={row['gamma']:g} "
              f"v={row['v']:g} b={row['box_upper']:g}: "
              f"reps={row['repetitions']} starts_mean={row['n_starts_mean']:.1f} "
              f"converged={row['n_converged']} j_opt_max={row['j_opt_max']:.6f} "
              f"t_mean={row['wall_time_mean_s']:.1f}s")
    if args.out_csv:
        serialize.write_aggregate_csv(args.out_csv, rows)
        print(f"wrote {args.out_csv}")
    if args.out_json:
        serialize.save_aggregate_json(args.out_json, rows)
        print(f"wrote {args.out_json}")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="isoc",
        description="inverse stochastic optimal control: GT generation, "
                    "identification runs, landscape scans, reports",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-gt", help="forward-solve at theta_star, write GT data")
    _add_problem_args(p)
    p.add_argument("--out", required=True, help="GT JSON output path")
    p.add_argument("--mode", choices=["analytic", "monte-carlo"], default="analytic")
    p.add_argument("--rollouts", type=int, default=100_000,
                   help="rollout count for monte-carlo mode")
    p.add_argument("--seed", type=int, default=0, help="monte-carlo noise seed")
    p.add_argument("--export-csv", action="store_true",
                   help="also write <out>_mean.csv and <out>_cov.csv")
    p.add_argument("--save-model", metavar="FILE",
                   help="persist the problem (with identification section)")
    p.add_argument("--export-gains", metavar="DIR",
                   help="write L.csv and K.csv at theta_star")
    p.add_argument("--export-moments", metavar="FILE",
                   help="write the closed-loop moment trajectory CSV")
    p.set_defaults(func=_cmd_generate_gt)

    p = sub.add_parser("identify", help="multistart identification against GT data")
    _add_problem_args(p)
    p.add_argument("--gt", required=True, help="GT JSON from generate-gt")
    p.add_argument("--method", choices=["trl", "pms"], default="trl")
    p.add_argument("--k-max", type=int, default=1000)
    p.add_argument("--gamma", type=float, default=0.7)
    p.add_argument("--v", type=float, default=0.7)
    p.add_argument("--seed", type=int, default=0, help="base seed; rep i uses seed+i")
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--max-iters", type=int, default=None,
                   help="local solver iteration cap")
    p.add_argument("--out-dir", help="directory for run-record JSON files")
    p.add_argument("--export-csv", action="store_true",
                   help="also write per-run samples/starts CSVs")
    p.add_argument("--samples-from", metavar="RECORD",
                   help="reuse the sample set (and its objective values) of a "
                        "previous run record")
    p.set_defaults(func=_cmd_identify)

    p = sub.add_parser("sweep", help="grid of identify runs over gamma, v, box size")
    _add_problem_args(p)
    p.add_argument("--gt", required=True)
    p.add_argument("--method", choices=["trl", "pms"], default="trl")
    p.add_argument("--gammas", type=_parse_floats, default=[0.6, 0.7])
    p.add_argument("--vs", type=_parse_floats, default=[0.7])
    p.add_argument("--box-uppers", type=_parse_floats, default=None,
                   help="optional list of upper bounds; default keeps the problem box")
    p.add_argument("--k-max", type=int, default=1000)
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("slice-scan", help="objective over a 2-parameter grid")
    _add_problem_args(p)
    p.add_argument("--gt", required=True)
    p.add_argument("--plane", required=True,
                   help="two 0-based parameter indices, e.g. 0,1")
    p.add_argument("--steps", type=int, default=101)
    p.add_argument("--center", default=None,
                   help="comma-separated center point (default: theta_star)")
    p.add_argument("--fit-degree", type=int, default=None,
                   help="report the R^2 of a polynomial surface fit")
    p.add_argument("--out", required=True, help="scan CSV output path")
    p.set_defaults(func=_cmd_slice_scan)

    p = sub.add_parser("report", help="aggregate persisted run records")
    p.add_argument("--runs", nargs="+", required=True,
                   help="run-record files or directories containing run_*.json")
    p.add_argument("--out-csv", default=None)
    p.add_argument("--out-json", default=None)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
