"""Independent reference implementations used to pin down expected values.

Everything here is written straight from textbook definitions with plain
loops, no shared code with the package, so agreement is meaningful.
"""
from __future__ import annotations

import numpy as np


def lqr_gains(A_seq, B_seq, Q_seq, R, QN):
    """Finite-horizon discrete LQR via the textbook backward Riccati recursion.

    A_seq, B_seq: (N, n, n), (N, n, m).  Q_seq: (N, n, n) running state cost,
    R: (m, m), QN: terminal.  Returns gains (N, m, n) with u_t = -L_t x_t.
    """
    N = len(A_seq)
    n = A_seq[0].shape[0]
    m = B_seq[0].shape[1]
    L = np.zeros((N, m, n))
    P = QN.copy()
    for t in range(N - 1, -1, -1):
        A, B = A_seq[t], B_seq[t]
        S = R + B.T @ P @ B
        L[t] = np.linalg.solve(S, B.T @ P @ A)
        P = Q_seq[t] + A.T @ P @ (A - B @ L[t])
        P = 0.5 * (P + P.T)
    return L


def kalman_gains(A_seq, H_seq, Om_xi, Om_omega, P0):
    """Textbook Kalman filter (predict/update form) for x' = Ax + xi, y = Hx + omega.

    Returns (K_pred, Pe_pred): K_pred[t] = A K_filt[t] is the gain of the
    one-step predictor form xhat' = A xhat + K_pred (y - H xhat); Pe_pred[t]
    is the prediction error covariance before the measurement at t.
    """
    N = len(A_seq)
    n = A_seq[0].shape[0]
    r = H_seq[0].shape[0]
    K_pred = np.zeros((N, n, r))
    Pe_pred = np.zeros((N + 1, n, n))
    P = P0.copy()
    for t in range(N):
        A, H = A_seq[t], H_seq[t]
        Pe_pred[t] = P
        S = H @ P @ H.T + Om_omega
        K_filt = P @ H.T @ np.linalg.inv(S)
        K_pred[t] = A @ K_filt
        P_filt = (np.eye(n) - K_filt @ H) @ P @ (np.eye(n) - K_filt @ H).T \
            + K_filt @ Om_omega @ K_filt.T  # Joseph form
        P = A @ P_filt @ A.T + Om_xi
        P = 0.5 * (P + P.T)
    Pe_pred[N] = P
    return K_pred, Pe_pred


def joint_moments(A_seq, B_seq, H_seq, F, G, sig_u, sig_x, Om_xi, Om_omega,
                  L, K, x0_mean, x0_cov):
    """Exact mean/covariance of the joint [x; xhat] closed loop, plain loops.

    Plant: x' = A x + B u + xi + sum_i sig_u_i eps_i B F_i u, u = -L xhat.
    Observation: y = H x + omega + sum_i sig_x_i epshat_i H G_i x.
    Estimator: xhat' = A xhat + B u + K (y - H xhat), xhat_0 = x0_mean.
    """
    N = len(A_seq)
    n = A_seq[0].shape[0]
    mean = np.zeros((N + 1, 2 * n))
    cov = np.zeros((N + 1, 2 * n, 2 * n))
    mean[0, :n] = x0_mean
    mean[0, n:] = x0_mean
    cov[0, :n, :n] = x0_cov
    for t in range(N):
        A, B, H = A_seq[t], B_seq[t], H_seq[t]
        BL = B @ L[t]
        KH = K[t] @ H
        top = np.hstack([A, -BL])
        bot = np.hstack([KH, A - KH - BL])
        Abig = np.vstack([top, bot])
        m = mean[t]
        C = cov[t]
        Exx = C[:n, :n] + np.outer(m[:n], m[:n])
        Ehh = C[n:, n:] + np.outer(m[n:], m[n:])
        noise_x = Om_xi.copy()
        for i in range(len(sig_u)):
            D = B @ F[i] @ L[t]
            noise_x += sig_u[i] ** 2 * D @ Ehh @ D.T
        noise_h = K[t] @ Om_omega @ K[t].T
        for i in range(len(sig_x)):
            D = K[t] @ H @ G[i]
            noise_h += sig_x[i] ** 2 * D @ Exx @ D.T
        mean[t + 1] = Abig @ m
        blk = np.zeros((2 * n, 2 * n))
        blk[:n, :n] = noise_x
        blk[n:, n:] = noise_h
        cov[t + 1] = Abig @ C @ Abig.T + blk
        cov[t + 1] = 0.5 * (cov[t + 1] + cov[t + 1].T)
    return mean, cov


def expected_cost(mean, cov, Q_seq, R, L):
    """E[sum x'Q x + u'R u] from joint moments; u = -L xhat."""
    N = len(L)
    n = mean.shape[1] // 2
    total = 0.0
    for t in range(N + 1):
        Exx = cov[t, :n, :n] + np.outer(mean[t, :n], mean[t, :n])
        total += float(np.trace(Q_seq[t] @ Exx))
        if t < N:
            Ehh = cov[t, n:, n:] + np.outer(mean[t, n:], mean[t, n:])
            total += float(np.trace(R @ L[t] @ Ehh @ L[t].T))
    return total


def vaf_channels(pred, gt):
    """Per-channel VAF across time, loops-and-sums form; pred, gt are (T, k)."""
    T, k = gt.shape
    out = np.zeros(k)
    for j in range(k):
        gbar = sum(gt[t, j] for t in range(T)) / T
        num = sum((pred[t, j] - gt[t, j]) ** 2 for t in range(T))
        den = sum((gt[t, j] - gbar) ** 2 for t in range(T))
        out[j] = 1.0 - num / den
    return out


def make_random_system(rng, n=3, m=2, r=2, N=6, multiplicative=True,
                       x0_random=True, time_varying=False):
    """Small random problem as raw arrays for oracle comparisons.

    Spectral radius of A is scaled to ~0.95 so horizons stay well behaved.
    Returns a dict of plain arrays (not package types).
    """
    def rand_mat(shape, scale=1.0):
        return scale * rng.standard_normal(shape)

    def stabilized(Araw):
        ev = np.max(np.abs(np.linalg.eigvals(Araw)))
        return Araw * (0.95 / ev) if ev > 0.95 else Araw

    if time_varying:
        A = np.stack([stabilized(rand_mat((n, n))) for _ in range(N)])
        B = np.stack([rand_mat((n, m)) for _ in range(N)])
        H = np.stack([rand_mat((r, n)) for _ in range(N)])
    else:
        A = np.broadcast_to(stabilized(rand_mat((n, n))), (N, n, n)).copy()
        B = np.broadcast_to(rand_mat((n, m)), (N, n, m)).copy()
        H = np.broadcast_to(rand_mat((r, n)), (N, r, n)).copy()
    c, d = (1, 1) if multiplicative else (0, 0)
    F = rng.standard_normal((c, m, m)) * 0.3 if c else np.zeros((0, m, m))
    G = rng.standard_normal((d, n, n)) * 0.3 if d else np.zeros((0, n, n))
    sig_u = rng.uniform(0.1, 0.4, size=c)
    sig_x = rng.uniform(0.1, 0.4, size=d)
    Sa = rng.standard_normal((n, n)) * 0.2
    Sb = rng.standard_normal((r, r)) * 0.2
    Om_xi = Sa @ Sa.T + 1e-6 * np.eye(n)
    Om_omega = Sb @ Sb.T + 0.05 * np.eye(r)
    Qd = rng.standard_normal((n, n)) * 0.3
    Q = Qd @ Qd.T
    Q_seq = np.broadcast_to(0.1 * Q, (N + 1, n, n)).copy()
    Q_seq[N] = Q + 0.5 * np.eye(n)
    Rd = rng.standard_normal((m, m)) * 0.3
    R = Rd @ Rd.T + 0.2 * np.eye(m)
    x0_mean = rng.standard_normal(n) if x0_random else np.zeros(n)
    S0 = rng.standard_normal((n, n)) * 0.3
    x0_cov = S0 @ S0.T if x0_random else np.zeros((n, n))
    return dict(A=A, B=B, H=H, F=F, G=G, sig_u=sig_u, sig_x=sig_x,
                Om_xi=Om_xi, Om_omega=Om_omega, Q=Q_seq, R=R,
                x0_mean=x0_mean, x0_cov=x0_cov, N=N, n=n, m=m, r=r)
