"""Model layer: patterns, theta layout, cost/noise assembly, feasible box."""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from isoc import (
    CostStructure,
    FeasibleSet,
    LqsSystem,
    SigmaPattern,
    ThetaLayout,
    ThetaVector,
    assemble_cost,
    assemble_noise,
    materialize_problem,
)


def test_sigma_pattern_diagonal_materialize():
    p = SigmaPattern.diagonal(3)
    assert p.size == 3
    M = p.materialize(np.array([1.0, 2.0, 3.0]))
    assert np.array_equal(M, np.diag([1.0, 2.0, 3.0]))


def test_sigma_pattern_rectangular():
    p = SigmaPattern(shape=(3, 2), rows=(0, 2), cols=(1, 0))
    M = p.materialize(np.array([5.0, 7.0]))
    expect = np.zeros((3, 2))
    expect[0, 1] = 5.0
    expect[2, 0] = 7.0
    assert np.array_equal(M, expect)


def test_sigma_pattern_rejects_duplicates_and_out_of_range():
    with pytest.raises(ValueError, match="duplicate"):
        SigmaPattern(shape=(2, 2), rows=(0, 0), cols=(1, 1))
    with pytest.raises(ValueError, match="outside"):
        SigmaPattern(shape=(2, 2), rows=(0, 2), cols=(0, 0))
    p = SigmaPattern.diagonal(2)
    with pytest.raises(ValueError, match="pattern values"):
        p.materialize(np.ones(3))


def _tiny_system(N=4, n=2, m=1, r=1):
    return LqsSystem(
        A=0.9 * np.eye(n),
        B=np.ones((n, m)),
        H=np.ones((r, n)),
        F=np.eye(m)[None],
        G=np.eye(n)[None],
        alpha_pattern=SigmaPattern.diagonal(n),
        beta_pattern=SigmaPattern.diagonal(r),
        N=N,
        x0_mean=np.zeros(n),
        x0_cov=np.zeros((n, n)),
    )


def test_system_shape_validation():
    with pytest.raises(ValueError, match="A must be"):
        LqsSystem(
            A=np.ones((2, 3)), B=np.ones((2, 1)), H=np.ones((1, 2)),
            F=np.eye(1)[None], G=np.eye(2)[None],
            alpha_pattern=SigmaPattern.diagonal(2),
            beta_pattern=SigmaPattern.diagonal(1),
            N=3, x0_mean=np.zeros(2), x0_cov=np.zeros((2, 2)),
        )
    with pytest.raises(ValueError, match="alpha_pattern"):
        LqsSystem(
            A=np.eye(2), B=np.ones((2, 1)), H=np.ones((1, 2)),
            F=np.eye(1)[None], G=np.eye(2)[None],
            alpha_pattern=SigmaPattern.diagonal(3),
            beta_pattern=SigmaPattern.diagonal(1),
            N=3, x0_mean=np.zeros(2), x0_cov=np.zeros((2, 2)),
        )


def test_system_time_varying_sequences():
    N, n = 3, 2
    A = np.stack([np.eye(n) * (1 + 0.1 * t) for t in range(N)])
    sys_tv = LqsSystem(
        A=A, B=np.ones((n, 1)), H=np.ones((1, n)),
        F=np.eye(1)[None], G=np.eye(n)[None],
        alpha_pattern=SigmaPattern.diagonal(n),
        beta_pattern=SigmaPattern.diagonal(1),
        N=N, x0_mean=np.zeros(n), x0_cov=np.zeros((n, n)),
    )
    assert sys_tv.A_seq().shape == (N, n, n)
    assert np.array_equal(sys_tv.A_seq()[2], np.eye(n) * 1.2)
    const = _tiny_system(N=N, n=n)
    assert const.A_seq().shape == (N, n, n)
    assert np.array_equal(const.A_seq()[0], const.A_seq()[2])


def test_cost_structure_validation():
    with pytest.raises(ValueError, match="q_q state dimension"):
        CostStructure(q_n=np.ones((1, 2)), q_q=np.ones((1, 3, 4)), q_r=np.ones((1, 1)))


def test_theta_layout_and_roundtrip():
    sys_ = _tiny_system()
    cost = CostStructure(
        q_n=np.array([[1.0, 0.0], [0.0, 1.0]]),
        q_q=np.zeros((0, sys_.N, 2)),
        q_r=np.array([[1.0]]),
    )
    layout = ThetaLayout.from_problem(sys_, cost)
    assert layout.dim == 2 + 0 + 1 + 2 + 1 + 1 + 1
    tv = ThetaVector.from_parts(
        layout, s_n=[1.0, 2.0], s_r=[3.0], sig_alpha=[0.1, 0.2],
        sig_beta=[0.3], sig_u=[0.4], sig_x=[0.5],
    )
    assert np.array_equal(tv.s_n, [1.0, 2.0])
    assert np.array_equal(tv.s_r, [3.0])
    assert np.array_equal(tv.sig_alpha, [0.1, 0.2])
    assert np.array_equal(tv.sig_beta, [0.3])
    assert tv.sig_u[0] == 0.4 and tv.sig_x[0] == 0.5
    # slices cover [0, dim) without gaps or overlap
    sl = layout.slices()
    covered = np.zeros(layout.dim, dtype=int)
    for s in sl.values():
        covered[s] += 1
    assert np.all(covered == 1)


def test_theta_vector_length_checked():
    sys_ = _tiny_system()
    cost = CostStructure(q_n=np.ones((1, 2)), q_q=np.zeros((0, 4, 2)), q_r=np.ones((1, 1)))
    layout = ThetaLayout.from_problem(sys_, cost)
    with pytest.raises(ValueError):
        ThetaVector(np.zeros(layout.dim + 1), layout)


def test_assemble_cost_rank_one_sums():
    N = 3
    sys_ = _tiny_system(N=N)
    q_n = np.array([[1.0, 2.0], [0.0, 1.0]])
    q_q = np.array([[[1.0, 0.0]] * N])
    q_r = np.array([[2.0]])
    cost = CostStructure(q_n=q_n, q_q=q_q, q_r=q_r)
    layout = ThetaLayout.from_problem(sys_, cost)
    tv = ThetaVector.from_parts(
        layout, s_n=[0.5, 2.0], s_q=[3.0], s_r=[0.25],
        sig_alpha=[0, 0], sig_beta=[0], sig_u=[0], sig_x=[0],
    )
    Q, R = assemble_cost(tv, cost, N)
    QN_expect = 0.5 * np.outer(q_n[0], q_n[0]) + 2.0 * np.outer(q_n[1], q_n[1])
    assert np.allclose(Q[N], QN_expect)
    assert np.allclose(Q[0], 3.0 * np.outer([1.0, 0.0], [1.0, 0.0]))
    assert np.allclose(R, np.array([[1.0]]))
    # exact symmetry, not just approximate
    for t in range(N + 1):
        assert np.array_equal(Q[t], Q[t].T)


def test_assemble_noise_products():
    sys_ = _tiny_system()
    cost = CostStructure(q_n=np.ones((1, 2)), q_q=np.zeros((0, 4, 2)), q_r=np.ones((1, 1)))
    layout = ThetaLayout.from_problem(sys_, cost)
    tv = ThetaVector.from_parts(
        layout, s_n=[1.0], s_r=[1.0], sig_alpha=[0.1, 0.3],
        sig_beta=[0.2], sig_u=[0.5], sig_x=[0.7],
    )
    nm = assemble_noise(tv, sys_)
    assert np.allclose(nm.om_xi, np.diag([0.01, 0.09]))
    assert np.allclose(nm.om_omega, np.array([[0.04]]))
    assert nm.sig_u[0] == 0.5 and nm.sig_x[0] == 0.7


def test_materialize_problem_consistency(reaching8):
    ex = reaching8
    arrs = materialize_problem(ex.theta_vector(), ex.system, ex.cost)
    assert arrs.n == ex.system.n and arrs.N == ex.system.N
    assert np.allclose(arrs.om_xi, arrs.sigma_alpha @ arrs.sigma_alpha.T)
    assert np.allclose(arrs.om_omega, arrs.sigma_beta @ arrs.sigma_beta.T)
    # raw-vector and ThetaVector entry points agree
    arrs2 = materialize_problem(ex.theta_star, ex.system, ex.cost)
    assert np.array_equal(arrs.Q, arrs2.Q)
    assert np.array_equal(arrs.om_xi, arrs2.om_xi)


def test_feasible_set_basics():
    box = FeasibleSet(lower=np.array([0.0, 1.0]), upper=np.array([2.0, 3.0]))
    assert box.dim == 2
    assert np.array_equal(box.widths, [2.0, 2.0])
    assert box.contains(np.array([1.0, 2.0]))
    assert not box.contains(np.array([-0.1, 2.0]))
    assert box.contains(np.array([-1e-13, 2.0]), atol=1e-12)
    clipped = box.clip(np.array([-5.0, 10.0]))
    assert np.array_equal(clipped, [0.0, 3.0])
    assert np.isclose(box.log_volume(), np.log(4.0))
    with pytest.raises(ValueError, match="exceed"):
        FeasibleSet(lower=np.array([0.0]), upper=np.array([0.0]))


@settings(deadline=None, max_examples=50)
@given(st.integers(min_value=1, max_value=8), st.integers(min_value=0, max_value=2 ** 31 - 1))
def test_feasible_set_sampling_in_bounds(dim, seed):
    rng0 = np.random.default_rng(seed)
    lower = rng0.uniform(-5, 5, size=dim)
    upper = lower + rng0.uniform(0.1, 10, size=dim)
    box = FeasibleSet(lower=lower, upper=upper)
    samples = box.sample(np.random.default_rng(seed), 40)
    assert samples.shape == (40, dim)
    assert np.all(samples >= lower) and np.all(samples <= upper)
    # deterministic in the generator state
    again = box.sample(np.random.default_rng(seed), 40)
    assert np.array_equal(samples, again)


@settings(deadline=None, max_examples=40)
@given(st.floats(min_value=0.1, max_value=10.0), st.integers(min_value=1, max_value=6))
def test_feasible_set_log_volume_scaling(c, dim):
    lower = np.zeros(dim)
    upper = np.ones(dim)
    box = FeasibleSet(lower, upper)
    scaled = FeasibleSet(lower, c * upper)
    assert np.isclose(scaled.log_volume() - box.log_volume(), dim * np.log(c), atol=1e-9)
