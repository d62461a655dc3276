"""Seeded Monte-Carlo rollouts of the closed loop.

Implements the plant, observation and filter equations step by step per
rollout; an independent code path from the exact moment propagation, which it
is tested against.

Reproducibility contract: rollout i draws from a counter-based Philox stream
keyed by (seed, i), so results do not depend on batch size, chunking or the
degree of parallelism.  Per rollout the draw order is fixed: one block of n
standard normals for the initial state, then one (N, p_alpha + c + p_beta + d)
block split column-wise into [alpha | eps_u | beta | eps_x].  The
Gaussian transform is numpy's ziggurat, fixed per numpy release.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ProblemArrays
from .moments import MomentTrajectory


@dataclass(frozen=True, eq=False)
class TrajectoryBatch:
    """Simulated states and filter estimates, (R, N+1, n) each."""

    states: np.ndarray
    estimates: np.ndarray
    seed: int

    def __post_init__(self):
        if self.states.shape != self.estimates.shape or self.states.ndim != 3:
            raise ValueError("states and estimates must both be (R, N+1, n)")

    @property
    def n_rollouts(self) -> int:
        return self.states.shape[0]

    @property
    def horizon(self) -> int:
        return self.states.shape[1] - 1


def _psd_sqrt(S: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root; tolerates zero and singular matrices."""
    w, V = np.linalg.eigh(0.5 * (S + S.T))
    w = np.clip(w, 0.0, None)
    return (V * np.sqrt(w)) @ V.T


def _rollout_noise(seed: int, index: int, N: int, n: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    gen = np.random.Generator(np.random.Philox(key=np.array([seed, index], dtype=np.uint64)))
    z0 = gen.standard_normal(n)
    block = gen.standard_normal((N, width))
    return z0, block


def simulate_batch(
    arrays: ProblemArrays,
    L: np.ndarray,
    K: np.ndarray,
    n_rollouts: int,
    seed: int,
    chunk_size: int = 20000,
) -> TrajectoryBatch:
    """Simulate n_rollouts closed-loop trajectories under gains (L, K).

    Noise generation is per rollout (see module docstring); the dynamics are
    applied vectorized over rollouts in chunks of chunk_size to bound memory.
    """
    st = arrays.static
    N, n, m, r = arrays.N, arrays.n, arrays.m, arrays.r
    p_a = arrays.sigma_alpha.shape[1]
    p_b = arrays.sigma_beta.shape[1]
    c = st.F.shape[0]
    d = st.G.shape[0]
    width = p_a + c + p_b + d
    x0_sqrt = _psd_sqrt(st.x0_cov)

    states = np.zeros((n_rollouts, N + 1, n))
    estimates = np.zeros((n_rollouts, N + 1, n))

    for lo in range(0, n_rollouts, chunk_size):
        hi = min(lo + chunk_size, n_rollouts)
        Rc = hi - lo
        z0 = np.empty((Rc, n))
        noise = np.empty((Rc, N, width))
        for i in range(Rc):
            z0[i], noise[i] = _rollout_noise(seed, lo + i, N, n, width)
        alpha = noise[:, :, :p_a]
        eps_u = noise[:, :, p_a : p_a + c]
        beta = noise[:, :, p_a + c : p_a + c + p_b]
        eps_x = noise[:, :, p_a + c + p_b :]

        X = st.x0_mean + z0 @ x0_sqrt.T
        Xh = np.broadcast_to(st.x0_mean, (Rc, n)).copy()
        states[lo:hi, 0] = X
        estimates[lo:hi, 0] = Xh
        for t in range(N):
            A, B, H = st.As[t], st.Bs[t], st.Hs[t]
            U = -Xh @ L[t].T
            Y = X @ H.T + beta[:, t] @ arrays.sigma_beta.T
            for i in range(d):
                Y += (arrays.sig_x[i] * eps_x[:, t, i])[:, None] * (X @ (H @ st.G[i]).T)
            Xn = X @ A.T + U @ B.T + alpha[:, t] @ arrays.sigma_alpha.T
            for i in range(c):
                Xn += (arrays.sig_u[i] * eps_u[:, t, i])[:, None] * (U @ (B @ st.F[i]).T)
            Xh = Xh @ A.T + U @ B.T + (Y - Xh @ H.T) @ K[t].T
            X = Xn
            states[lo:hi, t + 1] = X
            estimates[lo:hi, t + 1] = Xh

    return TrajectoryBatch(states=states, estimates=estimates, seed=seed)


def estimate_moments(batch: TrajectoryBatch) -> MomentTrajectory:
    """Sample mean and covariance (ddof=1) of the joint [x; xhat] process."""
    joint = np.concatenate([batch.states, batch.estimates], axis=2)
    R, T, k = joint.shape
    if R < 2:
        raise ValueError("need at least two rollouts for sample moments")
    mean = joint.mean(axis=0)
    cov = np.empty((T, k, k))
    for t in range(T):
        Z = joint[:, t, :] - mean[t]
        cov[t] = Z.T @ Z / (R - 1)
    return MomentTrajectory(mean=mean, cov=cov)


def mean_standard_error(values: np.ndarray) -> np.ndarray:
    """Standard error of the sample mean per (t, channel); values is (R, T, k)."""
    R = values.shape[0]
    return values.std(axis=0, ddof=1) / np.sqrt(R)


def bootstrap_cov_standard_error(
    values: np.ndarray, n_boot: int = 200, seed: int = 0
) -> np.ndarray:
    """Bootstrap standard error of each sample-covariance entry.

    values is (R, T, k); returns (T, k, k).  Uses multinomial resampling
    weights against the sufficient statistics, so no per-rollout outer
    products are stored.
    """
    R, T, k = values.shape
    rng = np.random.default_rng(seed)
    covs = np.empty((n_boot, T, k, k))
    for b in range(n_boot):
        w = rng.multinomial(R, np.full(R, 1.0 / R)).astype(np.float64)
        sw = float(w.sum())  # == R
        for t in range(T):
            V = values[:, t, :]
            mu = (w @ V) / sw
            second = (V * w[:, None]).T @ V
            covs[b, t] = (second - sw * np.outer(mu, mu)) / (sw - 1.0)
    return covs.std(axis=0, ddof=1)
