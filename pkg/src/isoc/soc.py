"""Stochastic optimal control solver: alternating control and filter passes.

With control-dependent plant noise and state-dependent observation noise the
optimal feedback gains L and filter gains K are mutually coupled.  `solve_ao`
iterates `control_pass` (backward, L given K) and `filter_pass` (forward,
K given L) until the gains stop changing.  In the purely additive-noise case
the coupling vanishes and the pair (LQR gains, Kalman gains) is reached in a
single sweep.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .model import ProblemArrays


class SocSolverError(Exception):
    """Base class for solver failures."""


class GainComputationError(SocSolverError):
    """A pass hit a non-positive-definite inner matrix or a singular solve."""


class AoNonConvergenceError(SocSolverError):
    """Alternating optimization exhausted max_sweeps or produced non-finite gains."""

    def __init__(self, message: str, report: "AoReport | None" = None):
        super().__init__(message)
        self.report = report


@dataclass
class AoConfig:
    """Alternating-optimization settings.

    tol_gains: max-norm change of (L, K) between sweeps declaring convergence.
    init_filter: 'lqg' starts from the Kalman gains of the system with the
    multiplicative noises removed; 'zeros' starts from K = 0.
    track_cost: record the expected cost after every sweep (costs one moment
    propagation per sweep; turn off in hot loops).
    accel_window: history length for Anderson mixing of the filter-gain
    iterates (<= 1 disables).  Mixing only reshapes the iterate path; the
    convergence test always measures a raw sweep, so the accepted fixed
    point satisfies the same tolerance as the plain iteration.
    """

    tol_gains: float = 1e-8
    max_sweeps: int = 100
    init_filter: str = "lqg"
    track_cost: bool = True
    accel_window: int = 4

    def __post_init__(self):
        if self.tol_gains <= 0:
            raise ValueError("tol_gains must be positive")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be >= 1")
        if self.init_filter not in ("lqg", "zeros"):
            raise ValueError("init_filter must be 'lqg' or 'zeros'")


@dataclass
class GainSchedule:
    """Time-indexed gain pair: L (N, m, n), K (N, n, r)."""

    L: np.ndarray
    K: np.ndarray


@dataclass
class AoReport:
    """Per-sweep convergence trace of solve_ao."""

    sweeps: int = 0
    gain_deltas: list[float] = field(default_factory=list)
    expected_costs: list[float] = field(default_factory=list)
    converged: bool = False


@dataclass
class ControlPassResult:
    """Backward-pass output: gains plus the quadratic value decomposition."""

    L: np.ndarray  # (N, m, n)
    Zx: np.ndarray  # (N+1, n, n), state value matrices
    Ze: np.ndarray  # (N+1, n, n), estimation-error value matrices
    z: np.ndarray  # (N+1,), scalar value offsets


@dataclass
class FilterPassResult:
    """Forward-pass output: gains plus conditional second moments."""

    K: np.ndarray  # (N, n, r)
    Pe: np.ndarray  # (N+1, n, n), estimation-error covariance
    Pxh: np.ndarray  # (N+1, n, n), estimate second moment E[xh xh']
    Pxe: np.ndarray  # (N+1, n, n), cross moment E[xh e']


@dataclass
class AoSolution:
    """Converged gains with the final pass outputs and the sweep report."""

    gains: GainSchedule
    Zx: np.ndarray
    Ze: np.ndarray
    z: np.ndarray
    Pe: np.ndarray
    Pxh: np.ndarray
    Pxe: np.ndarray
    report: AoReport


def _check_pd(S: np.ndarray, name: str) -> None:
    try:
        np.linalg.cholesky(0.5 * (S + S.T))
    except np.linalg.LinAlgError as exc:
        raise GainComputationError(f"{name} is not positive definite") from exc


def control_pass(arrays: ProblemArrays, K: np.ndarray) -> ControlPassResult:
    """Optimal feedback gains given filter gains K. Requires R positive definite.

    Also returns the value matrices (Zx, Ze) and scalar offsets z; at gains
    where L is optimal for K the expected cost equals
    x0' Zx[0] x0 + tr((Zx[0]+Ze[0]) x0_cov) + z[0].
    """
    _check_pd(arrays.R, "R")
    st = arrays.static
    try:
        L, Zx, Ze, z = _kernels.control_pass_kernel(
            st.As, st.Bs, st.Hs, arrays.Q, arrays.R, st.F, arrays.sig_u,
            st.G, arrays.sig_x, arrays.om_xi, arrays.om_omega, K,
        )
    except np.linalg.LinAlgError as exc:
        raise GainComputationError(f"control pass failed: {exc}") from exc
    return ControlPassResult(L=L, Zx=Zx, Ze=Ze, z=z)


def filter_pass(arrays: ProblemArrays, L: np.ndarray) -> FilterPassResult:
    """Optimal filter gains given feedback gains L.

    Requires the additive observation-noise covariance to be positive
    definite; the innovation matrix then stays invertible.
    """
    _check_pd(arrays.om_omega, "observation noise covariance")
    st = arrays.static
    try:
        K, Pe, Pxh, Pxe = _kernels.filter_pass_kernel(
            st.As, st.Bs, st.Hs, arrays.om_xi, arrays.om_omega, st.F,
            arrays.sig_u, st.G, arrays.sig_x, st.x0_mean, st.x0_cov, L,
        )
    except np.linalg.LinAlgError as exc:
        raise GainComputationError(f"filter pass failed: {exc}") from exc
    return FilterPassResult(K=K, Pe=Pe, Pxh=Pxh, Pxe=Pxe)


def lqg_filter_gains(arrays: ProblemArrays) -> np.ndarray:
    """Kalman gains of the additive-noise system (multiplicative terms dropped).

    The error covariance is control-independent in that case, so L enters
    nowhere and zeros can be passed.
    """
    st = arrays.static
    zero_u = np.zeros_like(arrays.sig_u)
    zero_x = np.zeros_like(arrays.sig_x)
    L0 = np.zeros((arrays.N, arrays.m, arrays.n))
    _check_pd(arrays.om_omega, "observation noise covariance")
    try:
        K, _, _, _ = _kernels.filter_pass_kernel(
            st.As, st.Bs, st.Hs, arrays.om_xi, arrays.om_omega, st.F,
            zero_u, st.G, zero_x, st.x0_mean, st.x0_cov, L0,
        )
    except np.linalg.LinAlgError as exc:
        raise GainComputationError(f"filter pass failed: {exc}") from exc
    return K


def _mix_iterate(
    K_in: np.ndarray,
    K_out: np.ndarray,
    k_hist: list[np.ndarray],
    g_hist: list[np.ndarray],
    window: int,
) -> np.ndarray:
    """Next filter-gain iterate, Anderson-mixed over the recent history.

    Solves the small least-squares problem on the sweep-map residuals and
    extrapolates; falls back to the plain iterate K_out whenever the
    extrapolation is ill-posed or wild.  Deterministic given the history.
    """
    if window <= 1:
        return K_out
    k_hist.append(K_in.ravel().copy())
    g_hist.append(K_out.ravel().copy())
    if len(k_hist) > window:
        k_hist.pop(0)
        g_hist.pop(0)
    if len(k_hist) < 2:
        return K_out
    F = np.asarray(g_hist) - np.asarray(k_hist)  # residuals, (q, dim)
    dF = np.diff(F, axis=0)
    dG = np.diff(np.asarray(g_hist), axis=0)
    try:
        gamma, *_ = np.linalg.lstsq(dF.T, F[-1], rcond=None)
    except np.linalg.LinAlgError:
        return K_out
    if not np.all(np.isfinite(gamma)) or np.max(np.abs(gamma)) > 10.0:
        return K_out
    mixed = g_hist[-1] - gamma @ dG
    if not np.all(np.isfinite(mixed)):
        return K_out
    return mixed.reshape(K_out.shape)


def solve_ao(
    arrays: ProblemArrays,
    config: AoConfig | None = None,
    init_K: np.ndarray | None = None,
) -> AoSolution:
    """Alternate control and filter passes to the coupled fixed point.

    One sweep = control pass (L from current K) followed by filter pass
    (K from that L).  The sweep delta is the max-norm change of the gain pair
    against the previous sweep (K against the init on the first sweep);
    convergence is declared when it drops below tol_gains.

    Raises AoNonConvergenceError when max_sweeps is exhausted or a pass
    produces non-finite values; the report carries the trace either way.
    """
    if config is None:
        config = AoConfig()
    if init_K is not None:
        K = np.asarray(init_K, dtype=np.float64)
        if K.shape != (arrays.N, arrays.n, arrays.r):
            raise ValueError(f"init_K must have shape {(arrays.N, arrays.n, arrays.r)}")
    elif config.init_filter == "lqg":
        K = lqg_filter_gains(arrays)
    else:
        K = np.zeros((arrays.N, arrays.n, arrays.r))

    report = AoReport()
    prev_L: np.ndarray | None = None
    filt: FilterPassResult | None = None
    ctrl: ControlPassResult | None = None
    k_hist: list[np.ndarray] = []  # mixing inputs
    g_hist: list[np.ndarray] = []  # raw sweep outputs
    for sweep in range(1, config.max_sweeps + 1):
        ctrl = control_pass(arrays, K)
        filt = filter_pass(arrays, ctrl.L)
        if not (np.all(np.isfinite(ctrl.L)) and np.all(np.isfinite(filt.K))):
            report.sweeps = sweep
            raise AoNonConvergenceError("gains diverged to non-finite values", report)
        delta = float(np.max(np.abs(filt.K - K)))
        if prev_L is not None:
            delta = max(delta, float(np.max(np.abs(ctrl.L - prev_L))))
        report.gain_deltas.append(delta)
        if config.track_cost:
            report.expected_costs.append(evaluate_expected_cost(arrays, ctrl.L, filt.K))
        report.sweeps = sweep
        prev_L = ctrl.L
        if delta < config.tol_gains:
            K = filt.K
            report.converged = True
            break
        K = _mix_iterate(K, filt.K, k_hist, g_hist, config.accel_window)
    if not report.converged:
        raise AoNonConvergenceError(
            f"no fixed point within {config.max_sweeps} sweeps "
            f"(last delta {report.gain_deltas[-1]:.3e})",
            report,
        )
    assert ctrl is not None and filt is not None
    return AoSolution(
        gains=GainSchedule(L=ctrl.L, K=filt.K),
        Zx=ctrl.Zx,
        Ze=ctrl.Ze,
        z=ctrl.z,
        Pe=filt.Pe,
        Pxh=filt.Pxh,
        Pxe=filt.Pxe,
        report=report,
    )


def evaluate_expected_cost(arrays: ProblemArrays, L: np.ndarray, K: np.ndarray) -> float:
    """Expected cost under arbitrary gains (L, K), via exact moment propagation.

    Finite and nonnegative whenever Q is PSD and R is PD.
    """
    st = arrays.static
    mean, cov = _kernels.moments_kernel(
        st.As, st.Bs, st.Hs, arrays.om_xi, arrays.om_omega, st.F,
        arrays.sig_u, st.G, arrays.sig_x, st.x0_mean, st.x0_cov, L, K,
    )
    return float(_kernels.expected_cost_kernel(arrays.Q, arrays.R, L, mean, cov))


def value_route_cost(arrays: ProblemArrays, K: np.ndarray) -> tuple[float, ControlPassResult]:
    """Expected cost via the backward value recursion, with L optimal for K.

    Exact only at such (L, K); cross terms between state and estimation error
    cancel there.  Serves as an independent route to cross-check the
    moment-propagation cost at the fixed point.
    """
    ctrl = control_pass(arrays, K)
    st = arrays.static
    m0 = st.x0_mean
    J = float(m0 @ ctrl.Zx[0] @ m0 + np.trace((ctrl.Zx[0] + ctrl.Ze[0]) @ st.x0_cov) + ctrl.z[0])
    return J, ctrl
