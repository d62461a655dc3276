"""Identification objective: theta -> solver -> moments -> VAF score against GT.

The score is the weighted negative sum of per-channel variance-accounted-for
(VAF) values of the selected mean and covariance trajectories,

    j = -(w_m' m_vaf + w_v' vecs(om_vaf)) / (|w_m|_1 + |w_v|_1),

so a perfect fit scores exactly -1 and j >= -1 always holds for feasible
evaluations.  vecs flattens the full nbar x nbar VAF matrix row-major,
matching the length of w_v.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    CostStructure,
    LqsSystem,
    ProblemArrays,
    StaticArrays,
    ThetaLayout,
    ThetaVector,
    materialize_problem,
)
from .moments import MomentTrajectory, propagate_moments, restrict_moments
from .soc import AoConfig, SocSolverError, solve_ao


class DegenerateChannelError(ValueError):
    """A VAF denominator (temporal variance of a GT channel) is zero."""


@dataclass(frozen=True, eq=False)
class GroundTruthData:
    """Reference moment trajectories of the selected states, with fit weights.

    selector: (nbar, n) matrix M mapping states to measured channels.
    mean: (N+1, nbar) reference means, cov: (N+1, nbar, nbar) reference
    covariances.  w_mean weights the nbar mean channels, w_cov the nbar^2
    row-major entries of the covariance VAF matrix.
    """

    selector: np.ndarray
    mean: np.ndarray
    cov: np.ndarray
    w_mean: np.ndarray
    w_cov: np.ndarray

    def __post_init__(self):
        for name in ("selector", "mean", "cov", "w_mean", "w_cov"):
            arr = np.ascontiguousarray(np.asarray(getattr(self, name), dtype=np.float64))
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")
            object.__setattr__(self, name, arr)
        nbar = self.selector.shape[0]
        T = self.mean.shape[0]
        if self.selector.ndim != 2:
            raise ValueError("selector must be (nbar, n)")
        if self.mean.shape != (T, nbar):
            raise ValueError(f"mean must be (N+1, {nbar}), got {self.mean.shape}")
        if self.cov.shape != (T, nbar, nbar):
            raise ValueError(f"cov must be (N+1, {nbar}, {nbar}), got {self.cov.shape}")
        if self.w_mean.shape != (nbar,):
            raise ValueError(f"w_mean must be ({nbar},), got {self.w_mean.shape}")
        if self.w_cov.shape != (nbar * nbar,):
            raise ValueError(f"w_cov must be ({nbar * nbar},), got {self.w_cov.shape}")
        if np.any(self.w_mean < 0) or np.any(self.w_cov < 0):
            raise ValueError("weights must be nonnegative")
        if self.w_mean.sum() + self.w_cov.sum() <= 0:
            raise ValueError("at least one weight must be positive")
        # weighted channels need nonzero temporal variance, or the VAF
        # denominators are undefined
        den_m = _temporal_sq_dev(self.mean)
        for i in np.nonzero(self.w_mean > 0)[0]:
            if den_m[i] <= 0:
                raise DegenerateChannelError(
                    f"mean channel {i} has zero temporal variance but weight > 0"
                )
        den_v = _temporal_sq_dev(self.cov.reshape(T, nbar * nbar))
        for idx in np.nonzero(self.w_cov > 0)[0]:
            if den_v[idx] <= 0:
                i, j = divmod(int(idx), nbar)
                raise DegenerateChannelError(
                    f"covariance channel ({i},{j}) has zero temporal variance but weight > 0"
                )

    @property
    def nbar(self) -> int:
        return self.selector.shape[0]

    @property
    def horizon(self) -> int:
        return self.mean.shape[0] - 1

    @classmethod
    def from_moments(
        cls,
        traj: MomentTrajectory,
        selector: np.ndarray,
        w_mean: np.ndarray,
        w_cov: np.ndarray,
    ) -> "GroundTruthData":
        mean_bar, cov_bar = restrict_moments(traj, np.asarray(selector, dtype=np.float64))
        return cls(selector=selector, mean=mean_bar, cov=cov_bar, w_mean=w_mean, w_cov=w_cov)


def _temporal_sq_dev(x: np.ndarray) -> np.ndarray:
    """Sum over time of squared deviations from the temporal mean, per column."""
    return np.sum((x - x.mean(axis=0)) ** 2, axis=0)


def vaf_mean(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """Per-channel VAF of a mean trajectory, 1 iff exact match.

    pred and gt are (T, nbar).  Raises DegenerateChannelError when a GT
    channel is constant over time.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape or pred.ndim != 2:
        raise ValueError("pred and gt must both be (T, nbar)")
    den = _temporal_sq_dev(gt)
    for i in np.nonzero(den <= 0)[0]:
        raise DegenerateChannelError(f"mean channel {int(i)} has zero temporal variance")
    num = np.sum((pred - gt) ** 2, axis=0)
    return 1.0 - num / den


def vaf_cov(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """Entrywise VAF of a covariance trajectory; (T, k, k) -> (k, k)."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape or pred.ndim != 3:
        raise ValueError("pred and gt must both be (T, k, k)")
    T, k, _ = gt.shape
    den = _temporal_sq_dev(gt.reshape(T, k * k))
    for idx in np.nonzero(den <= 0)[0]:
        i, j = divmod(int(idx), k)
        raise DegenerateChannelError(f"covariance channel ({i},{j}) has zero temporal variance")
    num = np.sum((pred - gt) ** 2, axis=0).reshape(k * k)
    return (1.0 - num / den).reshape(k, k)


@dataclass
class ObjectiveValue:
    """One objective evaluation; infeasible evaluations carry j_isoc = +1."""

    j_isoc: float
    m_vaf: np.ndarray | None
    om_vaf: np.ndarray | None
    feasible: bool
    sweeps: int = 0
    failure_reason: str = ""


class IsocObjective:
    """Binds (system, cost, GT) into a total, deterministic map theta -> score.

    Evaluation runs solve_ao, propagates the exact moments, restricts them
    through the selector and scores VAF channels against the GT.  Solver
    failures (no fixed point, blow-up, loss of positive definiteness) are
    encoded as feasible=False with j_isoc = +1; they are never raised, so
    line searches stay total.
    """

    def __init__(
        self,
        system: LqsSystem,
        cost: CostStructure,
        gt: GroundTruthData,
        ao_config: AoConfig | None = None,
    ):
        if gt.selector.shape[1] != system.n:
            raise ValueError(
                f"selector maps from n={gt.selector.shape[1]}, system has n={system.n}"
            )
        if gt.horizon != system.N:
            raise ValueError(f"GT horizon {gt.horizon} != system horizon {system.N}")
        self.system = system
        self.cost = cost
        self.gt = gt
        self.ao_config = ao_config or AoConfig(track_cost=False)
        self.static = StaticArrays.from_system(system)
        self.layout = ThetaLayout.from_problem(system, cost)
        # fixed GT-side quantities of the VAF channels
        T = gt.horizon + 1
        nbar = gt.nbar
        self._den_mean = _temporal_sq_dev(gt.mean)
        self._den_cov = _temporal_sq_dev(gt.cov.reshape(T, nbar * nbar))
        self._w = np.concatenate([gt.w_mean, gt.w_cov])
        self._w_total = float(np.sum(np.abs(self._w)))
        self._active = self._w > 0

    @property
    def theta_dim(self) -> int:
        return self.layout.dim

    def materialize(self, theta: np.ndarray) -> ProblemArrays:
        tv = ThetaVector(theta=np.asarray(theta, dtype=np.float64), layout=self.layout)
        return materialize_problem(tv, self.system, self.cost, static=self.static)

    def evaluate(self, theta: np.ndarray, init_K: np.ndarray | None = None) -> ObjectiveValue:
        arrays = self.materialize(theta)
        try:
            sol = solve_ao(arrays, self.ao_config, init_K=init_K)
        except SocSolverError as exc:
            sweeps = getattr(getattr(exc, "report", None), "sweeps", 0) or 0
            return ObjectiveValue(
                j_isoc=1.0, m_vaf=None, om_vaf=None, feasible=False,
                sweeps=sweeps, failure_reason=str(exc),
            )
        traj = propagate_moments(arrays, sol.gains.L, sol.gains.K)
        if not (np.all(np.isfinite(traj.mean)) and np.all(np.isfinite(traj.cov))):
            return ObjectiveValue(
                j_isoc=1.0, m_vaf=None, om_vaf=None, feasible=False,
                sweeps=sol.report.sweeps, failure_reason="moment propagation diverged",
            )
        value = self._score(traj)
        value.sweeps = sol.report.sweeps
        value._last_K = sol.gains.K  # stashed for warm sessions
        return value

    def _score(self, traj: MomentTrajectory) -> ObjectiveValue:
        gt = self.gt
        nbar = gt.nbar
        T = gt.horizon + 1
        pred_mean, pred_cov = restrict_moments(traj, gt.selector)
        num_m = np.sum((pred_mean - gt.mean) ** 2, axis=0)
        num_v = np.sum((pred_cov - gt.cov) ** 2, axis=0).reshape(nbar * nbar)
        with np.errstate(divide="ignore", invalid="ignore"):
            m_vaf = np.where(self._den_mean > 0, 1.0 - num_m / self._den_mean, np.nan)
            v_vaf = np.where(self._den_cov > 0, 1.0 - num_v / self._den_cov, np.nan)
        vafs = np.concatenate([m_vaf, v_vaf])
        j = -float(np.sum(self._w[self._active] * vafs[self._active])) / self._w_total
        if not np.isfinite(j):
            return ObjectiveValue(
                j_isoc=1.0, m_vaf=m_vaf, om_vaf=v_vaf.reshape(nbar, nbar),
                feasible=False, failure_reason="non-finite VAF on a weighted channel",
            )
        return ObjectiveValue(
            j_isoc=j, m_vaf=m_vaf, om_vaf=v_vaf.reshape(nbar, nbar), feasible=True,
        )

    def __call__(self, theta: np.ndarray) -> ObjectiveValue:
        return self.evaluate(theta)

    def value_and_feasible(self, theta: np.ndarray) -> tuple[float, bool]:
        val = self.evaluate(theta)
        return val.j_isoc, val.feasible

    def warm_session(self) -> "WarmSession":
        """Evaluation session that warm-starts AO from the last converged gains.

        Scoped to one local solve: successive probe points differ little, so
        the fixed point is re-reached in a couple of sweeps.  Never shared
        across solves (values stay within AO tolerance of the cold path, and
        fresh sessions keep sample evaluations bitwise reproducible).
        """
        return WarmSession(self)


class WarmSession:
    def __init__(self, objective: IsocObjective):
        self.objective = objective
        self._init_K: np.ndarray | None = None
        self.n_evals = 0

    def evaluate(self, theta: np.ndarray) -> ObjectiveValue:
        self.n_evals += 1
        val = self.objective.evaluate(theta, init_K=self._init_K)
        warm_K = getattr(val, "_last_K", None)
        if warm_K is not None:
            self._init_K = warm_K
        return val

    def value_and_feasible(self, theta: np.ndarray) -> tuple[float, bool]:
        val = self.evaluate(theta)
        return val.j_isoc, val.feasible


def evaluate_j_isoc(
    theta: np.ndarray,
    system: LqsSystem,
    cost: CostStructure,
    gt: GroundTruthData,
    ao_config: AoConfig | None = None,
) -> ObjectiveValue:
    """One-shot functional form of IsocObjective (builds the binding per call)."""
    return IsocObjective(system, cost, gt, ao_config=ao_config).evaluate(theta)


def finite_diff_gradient(
    fun,
    theta: np.ndarray,
    lower: np.ndarray | None = None,
    upper: np.ndarray | None = None,
    rel_step: float = 1e-6,
    abs_step: float = 1e-8,
    f0: tuple[float, bool] | None = None,
    return_mask: bool = False,
):
    """Central-difference gradient with per-component steps h_i = max(rel|x_i|, abs).

    fun(theta) must return (value, feasible).  Components fall back to a
    one-sided difference when a probe leaves the box or evaluates infeasible;
    the optional mask marks those components (True = not a clean central
    difference).  A component with no feasible probe direction gets slope 0.
    """
    theta = np.asarray(theta, dtype=np.float64)
    dim = theta.shape[0]
    grad = np.zeros(dim)
    mask = np.zeros(dim, dtype=bool)
    f_center: tuple[float, bool] | None = f0

    def center() -> tuple[float, bool]:
        nonlocal f_center
        if f_center is None:
            f_center = fun(theta)
        return f_center

    for i in range(dim):
        h = max(rel_step * abs(theta[i]), abs_step)
        up_in = upper is None or theta[i] + h <= upper[i]
        lo_in = lower is None or theta[i] - h >= lower[i]
        f_p = f_m = None
        if up_in:
            probe = theta.copy()
            probe[i] += h
            f_p = fun(probe)
        if lo_in:
            probe = theta.copy()
            probe[i] -= h
            f_m = fun(probe)
        if f_p is not None and f_m is not None and f_p[1] and f_m[1]:
            grad[i] = (f_p[0] - f_m[0]) / (2.0 * h)
            continue
        mask[i] = True
        fc, ok_c = center()
        if ok_c and f_p is not None and f_p[1]:
            grad[i] = (f_p[0] - fc) / h
        elif ok_c and f_m is not None and f_m[1]:
            grad[i] = (fc - f_m[0]) / h
        else:
            grad[i] = 0.0
    if return_mask:
        return grad, mask
    return grad
