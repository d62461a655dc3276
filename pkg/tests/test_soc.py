"""Solver layer: LQG reductions against textbook recursions, AO behavior."""
from __future__ import annotations

import numpy as np
import pytest

from isoc import (
    AoConfig,
    AoNonConvergenceError,
    control_pass,
    evaluate_expected_cost,
    filter_pass,
    lqg_filter_gains,
    propagate_moments,
    solve_ao,
    value_route_cost,
)

import oracles
from support import arrays_from_dict


@pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
@pytest.mark.parametrize("time_varying", [False, True])
def test_lqg_matches_textbook_recursions(seed, time_varying):
    """Without control/state-dependent noise the problem is LQG: the control
    gains must equal the backward Riccati solution (certainty equivalence)
    and the filter gains the Kalman predictor gains."""
    rng = np.random.default_rng(seed)
    d = oracles.make_random_system(rng, multiplicative=False, time_varying=time_varying)
    arrs = arrays_from_dict(d)
    sol = solve_ao(arrs)
    L_ref = oracles.lqr_gains(d["A"], d["B"], d["Q"][:-1], d["R"], d["Q"][-1])
    K_ref, Pe_ref = oracles.kalman_gains(d["A"], d["H"], d["Om_xi"], d["Om_omega"], d["x0_cov"])
    assert np.allclose(sol.gains.L, L_ref, rtol=1e-9, atol=1e-11)
    assert np.allclose(sol.gains.K, K_ref, rtol=1e-9, atol=1e-11)
    assert np.allclose(sol.Pe, Pe_ref, rtol=1e-9, atol=1e-12)


def test_lqg_converges_in_one_sweep():
    rng = np.random.default_rng(7)
    d = oracles.make_random_system(rng, multiplicative=False)
    sol = solve_ao(arrays_from_dict(d))
    assert sol.report.converged
    assert sol.report.sweeps == 1


def test_lqg_cost_matches_moment_oracle():
    """Value-recursion cost at the LQG optimum equals the plain-loop
    moments-then-quadratic-forms computation."""
    rng = np.random.default_rng(11)
    d = oracles.make_random_system(rng, multiplicative=False)
    arrs = arrays_from_dict(d)
    sol = solve_ao(arrs)
    mean, cov = oracles.joint_moments(
        d["A"], d["B"], d["H"], d["F"], d["G"], d["sig_u"], d["sig_x"],
        d["Om_xi"], d["Om_omega"], sol.gains.L, sol.gains.K,
        d["x0_mean"], d["x0_cov"],
    )
    J_ref = oracles.expected_cost(mean, cov, d["Q"], d["R"], sol.gains.L)
    J_value, _ = value_route_cost(arrs, sol.gains.K)
    J_moments = evaluate_expected_cost(arrs, sol.gains.L, sol.gains.K)
    assert np.isclose(J_value, J_ref, rtol=1e-9)
    assert np.isclose(J_moments, J_ref, rtol=1e-9)


@pytest.mark.parametrize("seed", [0, 5, 9])
def test_ao_fixed_point_dual_route_cost(seed):
    """At the alternating fixed point the value recursion (exact when L is
    the minimizer given K) must agree with the moment-propagated cost."""
    rng = np.random.default_rng(seed)
    d = oracles.make_random_system(rng, multiplicative=True)
    arrs = arrays_from_dict(d)
    sol = solve_ao(arrs, AoConfig(tol_gains=1e-12, max_sweeps=500))
    J_value, _ = value_route_cost(arrs, sol.gains.K)
    J_moments = evaluate_expected_cost(arrs, sol.gains.L, sol.gains.K)
    assert np.isclose(J_value, J_moments, rtol=1e-8)


def test_ao_converges_on_reaching(reaching8_arrays):
    sol = solve_ao(reaching8_arrays)
    assert sol.report.converged
    assert sol.report.gain_deltas[-1] < 1e-8
    # expected cost settles monotonically after the first sweep
    costs = np.asarray(sol.report.expected_costs)
    assert np.all(np.diff(costs[1:]) <= 1e-12 * np.abs(costs[1:-1]) + 1e-15)


def test_ao_two_initializations_agree(reaching8_arrays):
    sol_lqg = solve_ao(reaching8_arrays, AoConfig(tol_gains=1e-11, max_sweeps=200))
    sol_zero = solve_ao(
        reaching8_arrays,
        AoConfig(tol_gains=1e-11, max_sweeps=200, init_filter="zeros"),
    )
    assert np.allclose(sol_lqg.gains.L, sol_zero.gains.L, atol=1e-7)
    assert np.allclose(sol_lqg.gains.K, sol_zero.gains.K, atol=1e-7)


def test_ao_warm_init_reaches_same_fixed_point(reaching8_arrays):
    sol = solve_ao(reaching8_arrays)
    warm = solve_ao(reaching8_arrays, init_K=sol.gains.K)
    assert warm.report.sweeps <= 2
    assert np.allclose(warm.gains.L, sol.gains.L, atol=1e-7)


def test_ao_nonconvergence_raises(reaching8_arrays):
    with pytest.raises(AoNonConvergenceError):
        solve_ao(reaching8_arrays, AoConfig(tol_gains=1e-13, max_sweeps=2))


def test_filter_pass_error_covariances_match_moments():
    """Pe, Pxh from the filter recursion are exact second moments of the
    closed loop driven by the K it returns."""
    rng = np.random.default_rng(13)
    d = oracles.make_random_system(rng, multiplicative=True)
    arrs = arrays_from_dict(d)
    sol = solve_ao(arrs, AoConfig(tol_gains=1e-12, max_sweeps=500))
    filt = filter_pass(arrs, sol.gains.L)
    traj = propagate_moments(arrs, sol.gains.L, filt.K)
    n = arrs.n
    for t in range(arrs.N + 1):
        Cxx = traj.cov[t, :n, :n]
        Cxh = traj.cov[t, :n, n:]
        Chh = traj.cov[t, n:, n:]
        mh = traj.mean[t, n:]
        # e = x - xhat has zero mean, so raw and central moments coincide
        Pe_from_moments = Cxx - Cxh - Cxh.T + Chh
        Pxh_from_moments = Chh + np.outer(mh, mh)
        Pxe_from_moments = Cxh.T - Chh
        assert np.allclose(filt.Pe[t], Pe_from_moments, atol=1e-10)
        assert np.allclose(filt.Pxh[t], Pxh_from_moments, atol=1e-10)
        assert np.allclose(filt.Pxe[t], Pxe_from_moments, atol=1e-10)


def test_cross_error_covariance_vanishes_at_fixed_point(reaching8_arrays):
    sol = solve_ao(reaching8_arrays, AoConfig(tol_gains=1e-12, max_sweeps=500))
    assert np.max(np.abs(sol.Pxe)) < 1e-9


def test_lqg_filter_gains_match_kalman_oracle():
    rng = np.random.default_rng(21)
    d = oracles.make_random_system(rng, multiplicative=True)
    arrs = arrays_from_dict(d)
    K_init = lqg_filter_gains(arrs)
    K_ref, _ = oracles.kalman_gains(d["A"], d["H"], d["Om_xi"], d["Om_omega"], d["x0_cov"])
    assert np.allclose(K_init, K_ref, rtol=1e-9, atol=1e-12)


def test_control_pass_gain_shapes(reaching8_arrays):
    arrs = reaching8_arrays
    K0 = lqg_filter_gains(arrs)
    ctrl = control_pass(arrs, K0)
    assert ctrl.L.shape == (arrs.N, arrs.m, arrs.n)
    assert ctrl.Zx.shape == (arrs.N + 1, arrs.n, arrs.n)
    assert np.isfinite(ctrl.z).all()
