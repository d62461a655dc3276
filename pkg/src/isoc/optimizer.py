"""Global identification: seeded multistart with distance and RoA filters.

Two drivers over a shared bound-constrained local solver:

- `pure_multistart`: run the local solver from every uniform sample, keep the
  best minimum.
- `trlwaroa`: threshold random linkage with approximated regions of
  attraction.  Every sample gets an objective value upfront; a local solve is
  started only when (a) no strictly better previous sample lies within
  distance alpha (distance filter) and (b) the sample is not inside the
  approximated region of attraction of an already-found minimum (RoA filter,
  hypersphere of radius v * delta_roa around each recorded minimum).

With gamma = 0 and v = 0 both filters are inert and trlwaroa reduces to
pure_multistart, start for start, bitwise.
"""
from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict

import multiprocessing
import numpy as np
from scipy.optimize import minimize
from scipy.special import gammaln

from .model import FeasibleSet
from .objective import IsocObjective, finite_diff_gradient


@dataclass
class LocalSolverConfig:
    """Bound-constrained quasi-Newton settings.

    grad_tol: projected-gradient infinity-norm declaring first-order
    optimality.  step_tol: relative objective-decrease floor.  memory:
    quasi-Newton history length (curvature pairs kept).  Finite differences
    use per-component steps max(rel_step*|theta_i|, abs_step).
    """

    grad_tol: float = 1e-6
    step_tol: float = 1e-11
    max_iters: int = 600
    memory: int = 25
    rel_step: float = 1e-6
    abs_step: float = 1e-8

    def __post_init__(self):
        for name in ("grad_tol", "step_tol", "rel_step", "abs_step"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.memory < 1:
            raise ValueError("memory must be >= 1")


@dataclass
class TrlConfig:
    """Multistart settings: sample budget, filter tuning, seed, parallelism."""

    k_max: int
    gamma: float = 0.7
    v: float = 0.7
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if not (0 <= self.v < 1):
            raise ValueError("v must lie in [0, 1)")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass
class LocalSolveResult:
    theta_min: np.ndarray
    j_min: float
    iterations: int
    n_evals: int
    converged: bool
    j_start: float
    feasible_start: bool
    message: str = ""


@dataclass
class StartRecord:
    """One launched local solve inside a multistart run."""

    k: int
    theta_min: np.ndarray
    j_min: float
    j_start: float
    iterations: int
    n_evals: int
    converged: bool
    delta_roa: float
    n_minima_at_decision: int
    message: str = ""

    def to_dict(self) -> dict:
        d = asdict(self)
        d["theta_min"] = [float(x) for x in self.theta_min]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "StartRecord":
        d = dict(d)
        d["theta_min"] = np.asarray(d["theta_min"], dtype=np.float64)
        return cls(**d)


@dataclass
class RunRecord:
    """Full log of one multistart run; enough to regenerate every report."""

    method: str
    seed: int
    k_max: int
    gamma: float
    v: float
    alpha: float
    workers: int
    box_lower: np.ndarray
    box_upper: np.ndarray
    samples: np.ndarray  # (k_max, theta_dim)
    j_samples: np.ndarray  # (k_max,)
    filtered_by: list[str]  # per sample: none | distance | roa
    starts: list[StartRecord]
    theta_opt: np.ndarray
    j_opt: float
    wall_time_s: float
    local_config: dict = field(default_factory=dict)

    @property
    def n_local_solves(self) -> int:
        return len(self.starts)

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "kind": "isoc_run",
            "method": self.method,
            "seed": self.seed,
            "k_max": self.k_max,
            "gamma": self.gamma,
            "v": self.v,
            "alpha": self.alpha,
            "workers": self.workers,
            "box_lower": [float(x) for x in self.box_lower],
            "box_upper": [float(x) for x in self.box_upper],
            "samples": [[float(x) for x in row] for row in self.samples],
            "j_samples": [float(x) for x in self.j_samples],
            "filtered_by": list(self.filtered_by),
            "starts": [s.to_dict() for s in self.starts],
            "theta_opt": [float(x) for x in self.theta_opt],
            "j_opt": float(self.j_opt),
            "wall_time_s": float(self.wall_time_s),
            "local_config": dict(self.local_config),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        if d.get("kind") != "isoc_run":
            raise ValueError("not a run record payload")
        return cls(
            method=d["method"],
            seed=int(d["seed"]),
            k_max=int(d["k_max"]),
            gamma=float(d["gamma"]),
            v=float(d["v"]),
            alpha=float(d["alpha"]),
            workers=int(d["workers"]),
            box_lower=np.asarray(d["box_lower"], dtype=np.float64),
            box_upper=np.asarray(d["box_upper"], dtype=np.float64),
            samples=np.asarray(d["samples"], dtype=np.float64),
            j_samples=np.asarray(d["j_samples"], dtype=np.float64),
            filtered_by=list(d["filtered_by"]),
            starts=[StartRecord.from_dict(s) for s in d["starts"]],
            theta_opt=np.asarray(d["theta_opt"], dtype=np.float64),
            j_opt=float(d["j_opt"]),
            wall_time_s=float(d["wall_time_s"]),
            local_config=dict(d.get("local_config", {})),
        )


def compute_alpha(gamma: float, box: FeasibleSet) -> float:
    """Distance-filter threshold alpha = gamma * (Gamma(dim/2+1) * prod(widths))^(1/dim).

    Evaluated through log-gamma so high dimensions do not overflow.
    """
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    dim = box.dim
    log_core = (gammaln(dim / 2.0 + 1.0) + np.sum(np.log(box.widths))) / dim
    return float(gamma * np.exp(log_core))


def distance_filter(k: int, samples: np.ndarray, j_values: np.ndarray) -> float:
    """delta^(k): distance to the nearest previous sample with strictly better j.

    Returns inf when sample k is best so far (no predecessor qualifies).
    """
    if k == 0:
        return np.inf
    better = j_values[:k] < j_values[k]
    if not np.any(better):
        return np.inf
    diffs = samples[:k][better] - samples[k]
    return float(np.sqrt(np.min(np.sum(diffs * diffs, axis=1))))


def roa_filter(theta_k: np.ndarray, minima: list[tuple[np.ndarray, float]], v: float) -> bool:
    """True iff theta_k falls strictly inside some recorded-minimum hypersphere.

    Sphere l has radius v * delta_roa_l; boundary points pass (not blocked).
    """
    if v < 0:
        raise ValueError("v must be >= 0")
    for theta_min, delta_roa in minima:
        if np.linalg.norm(theta_k - theta_min) < v * delta_roa:
            return True
    return False


def sampling_success_probability(vol_ratio: float, k_max: int) -> float:
    """P(at least one of k_max uniform samples lands in the target region)."""
    if not (0.0 <= vol_ratio <= 1.0):
        raise ValueError("vol_ratio must lie in [0, 1]")
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    if vol_ratio == 1.0:
        return 1.0
    return float(-np.expm1(k_max * np.log1p(-vol_ratio)))


def draw_samples(box: FeasibleSet, k_max: int, seed: int) -> np.ndarray:
    """The shared sampler of both multistart drivers (PCG64-seeded uniforms)."""
    rng = np.random.default_rng(seed)
    return box.sample(rng, k_max)


# infeasible points cost this much inside the solver so line searches back
# off; records always store the objective's own +1 sentinel
_INFEASIBLE_MERIT = 1e50


def local_solve(
    objective: IsocObjective,
    theta0: np.ndarray,
    box: FeasibleSet,
    cfg: LocalSolverConfig | None = None,
) -> LocalSolveResult:
    """Descend from theta0 inside the box; quasi-Newton with FD gradients.

    The solver works in coordinates phi_i = asinh(theta_i / s_i) with
    s_i = 1e-8 (b_i - a_i): log-like spacing for parameters far above s_i,
    linear through zero.  The identified weights and noise scales span many
    decades, and in raw coordinates that curvature anisotropy defeats a
    quasi-Newton method outright.  The transform is monotone, so the box
    maps to a phi box and every iterate stays feasible.  The minimized merit
    is asinh(j): also monotone (identical minimizers, near-unit slope around
    the j = -1 floor) but bounded-curvature where j blows up, which keeps
    line searches sane across the twelve-decade range of the raw objective.

    Guarantees theta_min in the box and j_min <= j(theta0) + 1e-12.  When the
    objective is infeasible at theta0 there is no descent direction and
    theta0 is returned flagged unconverged.
    """
    if cfg is None:
        cfg = LocalSolverConfig()
    theta0 = np.asarray(theta0, dtype=np.float64).copy()
    if not box.contains(theta0, atol=1e-12):
        raise ValueError("theta0 outside the feasible box")
    session = objective.warm_session()
    f0, ok0 = session.value_and_feasible(theta0)
    if not ok0:
        return LocalSolveResult(
            theta_min=theta0, j_min=f0, iterations=0, n_evals=session.n_evals,
            converged=False, j_start=f0, feasible_start=False,
            message="objective infeasible at start",
        )

    scale = 1e-8 * box.widths
    lo_phi = np.arcsinh(box.lower / scale)
    hi_phi = np.arcsinh(box.upper / scale)

    def to_theta(phi: np.ndarray) -> np.ndarray:
        return box.clip(scale * np.sinh(np.clip(phi, lo_phi, hi_phi)))

    def merit(phi: np.ndarray) -> tuple[float, bool]:
        f, ok = session.value_and_feasible(to_theta(phi))
        return (np.arcsinh(f) if ok else np.arcsinh(_INFEASIBLE_MERIT)), ok

    def fun_and_grad(phi: np.ndarray):
        f, ok = merit(phi)
        if not ok:
            return f, np.zeros_like(phi)  # no usable slope off the plateau
        g = finite_diff_gradient(
            merit, phi, lo_phi, hi_phi,
            rel_step=cfg.rel_step, abs_step=cfg.abs_step, f0=(f, ok),
        )
        return f, g

    # Restart loop: a terminated leg restarts from its endpoint with fresh
    # quasi-Newton memory.  Long anisotropic valleys stall the line search
    # (per-iteration decrease drops below ftol while far from the minimum);
    # a cold restart recovers.  Legs are capped because a reset pays off in
    # its first stretch, and a leg that no longer buys a meaningful merit
    # drop ends the loop: at a genuine minimum the extra leg costs one
    # gradient and makes no progress.
    phi = np.arcsinh(theta0 / scale)
    f_leg, _ = merit(phi)
    iters_left = cfg.max_iters
    res = None
    for _ in range(8):
        leg = minimize(
            fun_and_grad,
            phi,
            jac=True,
            method="L-BFGS-B",
            bounds=list(zip(lo_phi, hi_phi)),
            options={
                "maxiter": min(iters_left, 200),
                "maxcor": cfg.memory,  # deep history pays off under anisotropy
                "ftol": cfg.step_tol,
                "gtol": cfg.grad_tol,
            },
        )
        iters_left -= int(leg.nit)
        res = leg if res is None else res
        res.x, res.message, res.success = leg.x, leg.message, leg.success
        res.nit = cfg.max_iters - iters_left
        improved = f_leg - leg.fun > 1e-7
        phi, f_leg = leg.x, leg.fun
        if iters_left <= 0 or leg.nit == 0 or not improved:
            break
    theta_min = to_theta(res.x)
    val_min = session.evaluate(theta_min)
    j_min = val_min.j_isoc
    if not val_min.feasible or not np.isfinite(j_min) or j_min > f0 + 1e-12:
        return LocalSolveResult(
            theta_min=theta0, j_min=f0, iterations=int(res.nit), n_evals=session.n_evals,
            converged=False, j_start=f0, feasible_start=True,
            message="no descent found; start point returned",
        )
    return LocalSolveResult(
        theta_min=theta_min, j_min=j_min, iterations=int(res.nit),
        n_evals=session.n_evals, converged=bool(res.success), j_start=f0,
        feasible_start=True, message=str(res.message),
    )


# ---- worker-pool plumbing (fork; tasks are pure functions of their args) ----

def _solve_task(args) -> LocalSolveResult:
    objective, theta0, box, cfg = args
    return local_solve(objective, theta0, box, cfg)


def _eval_task(args) -> list[float]:
    objective, thetas = args
    return [objective.evaluate(t).j_isoc for t in thetas]


def _make_pool(workers: int) -> ProcessPoolExecutor:
    return ProcessPoolExecutor(
        max_workers=workers, mp_context=multiprocessing.get_context("fork")
    )


def _evaluate_samples(
    objective: IsocObjective, samples: np.ndarray, workers: int
) -> np.ndarray:
    if workers == 1:
        return np.array([objective.evaluate(t).j_isoc for t in samples])
    chunks = np.array_split(np.arange(samples.shape[0]), workers * 4)
    chunks = [c for c in chunks if c.size]
    with _make_pool(workers) as pool:
        parts = list(pool.map(_eval_task, [(objective, samples[c]) for c in chunks]))
    out = np.empty(samples.shape[0])
    for c, part in zip(chunks, parts):
        out[c] = part
    return out


def _solve_batch(
    objective: IsocObjective,
    thetas: list[np.ndarray],
    box: FeasibleSet,
    cfg: LocalSolverConfig,
    pool: ProcessPoolExecutor | None,
) -> list[LocalSolveResult]:
    if pool is None:
        return [local_solve(objective, t, box, cfg) for t in thetas]
    return list(pool.map(_solve_task, [(objective, t, box, cfg) for t in thetas]))


def _finalize_record(
    method: str,
    box: FeasibleSet,
    trl_cfg: TrlConfig,
    alpha: float,
    samples: np.ndarray,
    j_samples: np.ndarray,
    filtered_by: list[str],
    starts: list[StartRecord],
    solver_cfg: LocalSolverConfig,
    t0: float,
) -> RunRecord:
    if not starts:
        raise RuntimeError("no local solve was started (cannot happen: sample 0 always passes)")
    j_mins = np.array([s.j_min for s in starts])
    best = int(np.argmin(j_mins))
    return RunRecord(
        method=method,
        seed=trl_cfg.seed,
        k_max=trl_cfg.k_max,
        gamma=trl_cfg.gamma,
        v=trl_cfg.v,
        alpha=alpha,
        workers=trl_cfg.workers,
        box_lower=box.lower.copy(),
        box_upper=box.upper.copy(),
        samples=samples,
        j_samples=j_samples,
        filtered_by=filtered_by,
        starts=starts,
        theta_opt=starts[best].theta_min.copy(),
        j_opt=float(j_mins[best]),
        wall_time_s=time.perf_counter() - t0,
        local_config=asdict(solver_cfg),
    )


def pure_multistart(
    objective: IsocObjective,
    box: FeasibleSet,
    k_max: int,
    seed: int,
    solver_cfg: LocalSolverConfig | None = None,
    workers: int = 1,
) -> RunRecord:
    """Local solve from every one of k_max uniform samples; incumbent best wins.

    The recorded per-sample objective values are the solver's start-point
    evaluations (cold, no warm start), identical to what trlwaroa logs.
    """
    solver_cfg = solver_cfg or LocalSolverConfig()
    cfg = TrlConfig(k_max=k_max, gamma=0.0, v=0.0, seed=seed, workers=workers)
    t0 = time.perf_counter()
    samples = draw_samples(box, k_max, seed)
    pool = _make_pool(workers) if workers > 1 else None
    starts: list[StartRecord] = []
    try:
        for lo in range(0, k_max, workers):
            batch = list(range(lo, min(lo + workers, k_max)))
            n_known = len(starts)  # minima visible when the batch was dispatched
            results = _solve_batch(objective, [samples[k] for k in batch], box, solver_cfg, pool)
            for k, res in zip(batch, results):
                starts.append(_start_record(k, samples[k], res, n_minima=n_known))
    finally:
        if pool is not None:
            pool.shutdown()
    j_samples = np.array([s.j_start for s in starts])
    return _finalize_record(
        "pure-multistart", box, cfg, 0.0, samples, j_samples,
        ["none"] * k_max, starts, solver_cfg, t0,
    )


def _start_record(k: int, theta_k: np.ndarray, res: LocalSolveResult, n_minima: int) -> StartRecord:
    return StartRecord(
        k=k,
        theta_min=res.theta_min,
        j_min=res.j_min,
        j_start=res.j_start,
        iterations=res.iterations,
        n_evals=res.n_evals,
        converged=res.converged,
        delta_roa=float(np.linalg.norm(res.theta_min - theta_k)),
        n_minima_at_decision=n_minima,
        message=res.message,
    )


def trlwaroa(
    objective: IsocObjective,
    box: FeasibleSet,
    trl_cfg: TrlConfig,
    solver_cfg: LocalSolverConfig | None = None,
    samples: np.ndarray | None = None,
    j_samples: np.ndarray | None = None,
) -> RunRecord:
    """Filtered multistart: distance filter then RoA filter, sequential decisions.

    All k_max sample objective values are computed upfront (the distance
    filter needs them); pass `samples`/`j_samples` to resume from a persisted
    sample set.  Local solves are dispatched in synchronous batches of
    `workers`; decisions for a sample see the minima of all *completed*
    starts, so workers=1 reproduces the sequential algorithm exactly and any
    fixed worker count is deterministic.
    """
    solver_cfg = solver_cfg or LocalSolverConfig()
    t0 = time.perf_counter()
    if samples is None:
        samples = draw_samples(box, trl_cfg.k_max, trl_cfg.seed)
    else:
        samples = np.asarray(samples, dtype=np.float64)
        if samples.shape != (trl_cfg.k_max, box.dim):
            raise ValueError(f"samples must be ({trl_cfg.k_max}, {box.dim})")
    if j_samples is None:
        j_samples = _evaluate_samples(objective, samples, trl_cfg.workers)
    else:
        j_samples = np.asarray(j_samples, dtype=np.float64)
        if j_samples.shape != (trl_cfg.k_max,):
            raise ValueError("j_samples must match k_max")
    alpha = compute_alpha(trl_cfg.gamma, box)

    filtered_by = ["none"] * trl_cfg.k_max
    starts: list[StartRecord] = []
    minima: list[tuple[np.ndarray, float]] = []
    pending: list[tuple[int, int]] = []  # (sample index, minima known at decision)
    pool = _make_pool(trl_cfg.workers) if trl_cfg.workers > 1 else None

    def flush():
        if not pending:
            return
        results = _solve_batch(
            objective, [samples[k] for k, _ in pending], box, solver_cfg, pool
        )
        for (k, n_known), res in zip(pending, results):
            rec = _start_record(k, samples[k], res, n_minima=n_known)
            starts.append(rec)
            minima.append((rec.theta_min, rec.delta_roa))
        pending.clear()

    try:
        for k in range(trl_cfg.k_max):
            delta_k = distance_filter(k, samples, j_samples)
            if delta_k <= alpha:
                filtered_by[k] = "distance"
                continue
            if roa_filter(samples[k], minima, trl_cfg.v):
                filtered_by[k] = "roa"
                continue
            pending.append((k, len(minima)))
            if len(pending) >= trl_cfg.workers:
                flush()
        flush()
    finally:
        if pool is not None:
            pool.shutdown()
    return _finalize_record(
        "trlwaroa", box, trl_cfg, alpha, samples, j_samples,
        filtered_by, starts, solver_cfg, t0,
    )
