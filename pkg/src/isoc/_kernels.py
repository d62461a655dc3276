"""Jitted recursions shared by the solver, moment propagation and cost routines.

Every kernel takes plain contiguous float64 arrays with the time axis leading
(A, B, H are always stacked (N, ., .), constant systems are broadcast by the
callers).  Set NUMBA_DISABLE_JIT=1 to run the identical code as pure numpy.
"""
from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def control_pass_kernel(As, Bs, Hs, Q, R, F, sigu, G, sigx, om_xi, om_om, K):
    """Backward pass: optimal feedback gains L given filter gains K.

    Returns (L, Zx, Ze, z): the state / estimation-error value matrices and
    the scalar value offset z, with Zx[N] = Q[N], Ze[N] = 0, z[N] = 0.
    """
    N = As.shape[0]
    n = As.shape[1]
    m = Bs.shape[2]
    L = np.zeros((N, m, n))
    Zx = np.zeros((N + 1, n, n))
    Ze = np.zeros((N + 1, n, n))
    z = np.zeros(N + 1)
    Zx[N] = Q[N]
    for t in range(N - 1, -1, -1):
        A = As[t]
        B = Bs[t]
        H = Hs[t]
        Zx1 = Zx[t + 1]
        Ze1 = Ze[t + 1]
        Zs = Zx1 + Ze1
        BtZx1 = B.T @ Zx1
        M = R + BtZx1 @ B
        for i in range(F.shape[0]):
            BF = B @ F[i]
            M = M + sigu[i] ** 2 * (BF.T @ Zs @ BF)
        M = 0.5 * (M + M.T)
        Lt = np.linalg.solve(M, BtZx1 @ A)
        L[t] = Lt
        KH = K[t] @ H
        BL = B @ Lt
        AmKH = A - KH
        AtZx1 = A.T @ Zx1
        Ze[t] = AtZx1 @ BL + AmKH.T @ Ze1 @ AmKH
        Zxt = Q[t] + AtZx1 @ (A - BL)
        for i in range(G.shape[0]):
            D = KH @ G[i]
            Zxt = Zxt + sigx[i] ** 2 * (D.T @ Ze1 @ D)
        Zx[t] = Zxt
        z[t] = z[t + 1] + np.trace(Zs @ om_xi) + np.trace(Ze1 @ K[t] @ om_om @ K[t].T)
    return L, Zx, Ze, z


@njit(cache=True)
def filter_pass_kernel(As, Bs, Hs, om_xi, om_om, F, sigu, G, sigx, x0m, x0c, L):
    """Forward pass: optimal filter gains K given feedback gains L.

    Propagates the conditional second moments P^e (estimation error),
    P^xh (estimate) and the cross block P^xe for arbitrary gains; the gain
    K[t] minimises the next-step error covariance.  Returns
    (K, Pe, Pxh, Pxe) with the P arrays stacked over t = 0..N.
    """
    N = As.shape[0]
    n = As.shape[1]
    r = Hs.shape[1]
    K = np.zeros((N, n, r))
    Pe = np.zeros((N + 1, n, n))
    Pxh = np.zeros((N + 1, n, n))
    Pxe = np.zeros((N + 1, n, n))
    Pe[0] = x0c
    Pxh[0] = np.outer(x0m, x0m)
    for t in range(N):
        A = As[t]
        B = Bs[t]
        H = Hs[t]
        Px = Pe[t] + Pxh[t] + Pxe[t] + Pxe[t].T
        W = H @ Pe[t] @ H.T + om_om
        for i in range(G.shape[0]):
            HG = H @ G[i]
            W = W + sigx[i] ** 2 * (HG @ Px @ HG.T)
        W = 0.5 * (W + W.T)
        APeHt = A @ Pe[t] @ H.T
        Kt = np.linalg.solve(W, APeHt.T).T
        K[t] = Kt
        KH = Kt @ H
        AK = A - KH
        AL = A - B @ L[t]
        KWK = Kt @ om_om @ Kt.T
        Ux = np.zeros((n, n))
        for i in range(G.shape[0]):
            KHG = KH @ G[i]
            Ux = Ux + sigx[i] ** 2 * (KHG @ Px @ KHG.T)
        Ue = np.zeros((n, n))
        for i in range(F.shape[0]):
            BFL = B @ F[i] @ L[t]
            Ue = Ue + sigu[i] ** 2 * (BFL @ Pxh[t] @ BFL.T)
        Pe_n = AK @ Pe[t] @ AK.T + om_xi + KWK + Ue + Ux
        Pxh_n = (
            AL @ Pxh[t] @ AL.T
            + KH @ Pe[t] @ KH.T
            + AL @ Pxe[t] @ KH.T
            + KH @ Pxe[t].T @ AL.T
            + KWK
            + Ux
        )
        Pxe_n = AL @ Pxe[t] @ AK.T + KH @ Pe[t] @ AK.T - KWK - Ux
        Pe[t + 1] = 0.5 * (Pe_n + Pe_n.T)
        Pxh[t + 1] = 0.5 * (Pxh_n + Pxh_n.T)
        Pxe[t + 1] = Pxe_n
    return K, Pe, Pxh, Pxe


@njit(cache=True)
def moments_kernel(As, Bs, Hs, om_xi, om_om, F, sigu, G, sigx, x0m, x0c, L, K):
    """Exact mean and covariance of the joint (x, xhat) process under gains (L, K).

    Returns (mean, cov): mean is (N+1, 2n) with x stacked over xhat, cov is
    (N+1, 2n, 2n).
    """
    N = As.shape[0]
    n = As.shape[1]
    mean = np.zeros((N + 1, 2 * n))
    cov = np.zeros((N + 1, 2 * n, 2 * n))
    mean[0, :n] = x0m
    mean[0, n:] = x0m
    cov[0, :n, :n] = x0c
    Abig = np.zeros((2 * n, 2 * n))
    for t in range(N):
        A = As[t]
        B = Bs[t]
        H = Hs[t]
        BL = B @ L[t]
        KH = K[t] @ H
        Abig[:n, :n] = A
        Abig[:n, n:] = -BL
        Abig[n:, :n] = KH
        Abig[n:, n:] = A - KH - BL
        mx = mean[t, :n]
        mh = mean[t, n:]
        mean[t + 1] = Abig @ mean[t]
        Exx = cov[t, :n, :n] + np.outer(mx, mx)
        Ehh = cov[t, n:, n:] + np.outer(mh, mh)
        noise_x = om_xi.copy()
        for i in range(F.shape[0]):
            BFL = B @ F[i] @ L[t]
            noise_x = noise_x + sigu[i] ** 2 * (BFL @ Ehh @ BFL.T)
        noise_h = K[t] @ om_om @ K[t].T
        for i in range(G.shape[0]):
            KHG = KH @ G[i]
            noise_h = noise_h + sigx[i] ** 2 * (KHG @ Exx @ KHG.T)
        Cn = Abig @ cov[t] @ Abig.T
        Cn[:n, :n] += noise_x
        Cn[n:, n:] += noise_h
        cov[t + 1] = 0.5 * (Cn + Cn.T)
    return mean, cov


@njit(cache=True)
def expected_cost_kernel(Q, R, L, mean, cov):
    """Expected quadratic cost under the exact joint moments.

    J = sum_t E[x_t' Q_t x_t] + E[u_t' R u_t] with u_t = -L_t xhat_t,
    terminal term included via Q[N].
    """
    N = L.shape[0]
    n = Q.shape[1]
    J = 0.0
    for t in range(N):
        mx = mean[t, :n]
        Sxx = np.ascontiguousarray(cov[t, :n, :n])
        J += mx @ Q[t] @ mx + np.trace(Q[t] @ Sxx)
        mh = mean[t, n:]
        Ehh = np.ascontiguousarray(cov[t, n:, n:]) + np.outer(mh, mh)
        LE = L[t] @ Ehh @ L[t].T
        J += np.trace(R @ LE)
    mx = mean[N, :n]
    SxxN = np.ascontiguousarray(cov[N, :n, :n])
    J += mx @ Q[N] @ mx + np.trace(Q[N] @ SxxN)
    return J


def warmup() -> None:
    """Compile the kernels on a tiny system (no-op when already cached)."""
    N, n, m, r = 2, 2, 1, 1
    As = np.broadcast_to(np.eye(n), (N, n, n)).copy()
    Bs = np.broadcast_to(np.ones((n, m)), (N, n, m)).copy()
    Hs = np.broadcast_to(np.ones((r, n)), (N, r, n)).copy()
    Q = np.broadcast_to(np.eye(n), (N + 1, n, n)).copy()
    R = np.eye(m)
    F = np.eye(m)[None]
    G = np.eye(n)[None]
    sigu = np.array([0.1])
    sigx = np.array([0.1])
    om_xi = np.eye(n) * 0.01
    om_om = np.eye(r) * 0.01
    x0m = np.zeros(n)
    x0c = np.eye(n) * 0.01
    K0 = np.zeros((N, n, r))
    L, Zx, Ze, z = control_pass_kernel(As, Bs, Hs, Q, R, F, sigu, G, sigx, om_xi, om_om, K0)
    K, Pe, Pxh, Pxe = filter_pass_kernel(As, Bs, Hs, om_xi, om_om, F, sigu, G, sigx, x0m, x0c, L)
    mean, cov = moments_kernel(As, Bs, Hs, om_xi, om_om, F, sigu, G, sigx, x0m, x0c, L, K)
    expected_cost_kernel(Q, R, L, mean, cov)
