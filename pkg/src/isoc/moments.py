"""Exact propagation of the joint (state, estimate) mean and covariance.

The closed loop under gains (L, K) is linear in the stacked vector
[x; xhat] with noise whose covariance depends on the current second moments,
so mean and covariance propagate exactly through a deterministic recursion.
No sampling is involved; the Monte-Carlo simulator provides the independent
cross-check.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .model import ProblemArrays


@dataclass(frozen=True, eq=False)
class MomentTrajectory:
    """Mean (N+1, 2n) and covariance (N+1, 2n, 2n) of [x; xhat] over time."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        if self.mean.ndim != 2 or self.cov.ndim != 3:
            raise ValueError("mean must be (N+1, 2n), cov (N+1, 2n, 2n)")
        if self.cov.shape[0] != self.mean.shape[0] or self.cov.shape[1] != self.mean.shape[1]:
            raise ValueError("mean and cov disagree on shape")
        if self.mean.shape[1] % 2 != 0:
            raise ValueError("stacked dimension must be even")

    @property
    def n(self) -> int:
        return self.mean.shape[1] // 2

    @property
    def horizon(self) -> int:
        return self.mean.shape[0] - 1

    @property
    def mean_x(self) -> np.ndarray:
        return self.mean[:, : self.n]

    @property
    def mean_xhat(self) -> np.ndarray:
        return self.mean[:, self.n :]

    @property
    def cov_xx(self) -> np.ndarray:
        return self.cov[:, : self.n, : self.n]

    @property
    def cov_xhat(self) -> np.ndarray:
        return self.cov[:, self.n :, self.n :]

    @property
    def cov_cross(self) -> np.ndarray:
        """E[(x - Ex)(xhat - Exhat)'] blocks, (N+1, n, n)."""
        return self.cov[:, : self.n, self.n :]


def propagate_moments(arrays: ProblemArrays, L: np.ndarray, K: np.ndarray) -> MomentTrajectory:
    """Propagate the joint moments under fixed gains.

    Covariances stay symmetric PSD by construction; the multiplicative-noise
    contributions enter through the current second moments E[xx'] and
    E[xhat xhat'].
    """
    st = arrays.static
    mean, cov = _kernels.moments_kernel(
        st.As, st.Bs, st.Hs, arrays.om_xi, arrays.om_omega, st.F,
        arrays.sig_u, st.G, arrays.sig_x, st.x0_mean, st.x0_cov, L, K,
    )
    return MomentTrajectory(mean=mean, cov=cov)


def restrict_moments(traj: MomentTrajectory, selector: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Project the state moments through a selector M.

    Returns (M x means, M cov_xx M') with shapes (N+1, nbar) and
    (N+1, nbar, nbar).
    """
    M = np.asarray(selector, dtype=np.float64)
    if M.ndim != 2 or M.shape[1] != traj.n:
        raise ValueError(f"selector must be (nbar, {traj.n}), got {M.shape}")
    mean_bar = traj.mean_x @ M.T
    cov_bar = np.einsum("ij,tjk,lk->til", M, traj.cov_xx, M, optimize=True)
    return mean_bar, cov_bar


_BLOCKS = ("mean_x", "mean_xhat", "cov_xx", "cov_xxhat", "cov_xhatxhat")


def export_moments_csv(traj: MomentTrajectory, path) -> None:
    """Write the trajectory in long form: columns (t, block, row, col, value).

    Mean blocks use col = 0.
    """
    n = traj.n
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "block", "row", "col", "value"])
        for t in range(traj.horizon + 1):
            for i in range(n):
                w.writerow([t, "mean_x", i, 0, repr(traj.mean[t, i])])
            for i in range(n):
                w.writerow([t, "mean_xhat", i, 0, repr(traj.mean[t, n + i])])
            for i in range(n):
                for j in range(n):
                    w.writerow([t, "cov_xx", i, j, repr(traj.cov[t, i, j])])
            for i in range(n):
                for j in range(n):
                    w.writerow([t, "cov_xxhat", i, j, repr(traj.cov[t, i, n + j])])
            for i in range(n):
                for j in range(n):
                    w.writerow([t, "cov_xhatxhat", i, j, repr(traj.cov[t, n + i, n + j])])


def load_moments_csv(path) -> MomentTrajectory:
    """Inverse of export_moments_csv."""
    rows = []
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if header != ["t", "block", "row", "col", "value"]:
            raise ValueError(f"unexpected moments CSV header: {header}")
        for rec in rd:
            rows.append((int(rec[0]), rec[1], int(rec[2]), int(rec[3]), float(rec[4])))
    if not rows:
        raise ValueError("empty moments CSV")
    T = max(r[0] for r in rows) + 1
    n = max(r[2] for r in rows if r[1] == "mean_x") + 1
    mean = np.zeros((T, 2 * n))
    cov = np.zeros((T, 2 * n, 2 * n))
    for t, block, i, j, v in rows:
        if block == "mean_x":
            mean[t, i] = v
        elif block == "mean_xhat":
            mean[t, n + i] = v
        elif block == "cov_xx":
            cov[t, i, j] = v
        elif block == "cov_xxhat":
            cov[t, i, n + j] = v
            cov[t, n + j, i] = v
        elif block == "cov_xhatxhat":
            cov[t, n + i, n + j] = v
        else:
            raise ValueError(f"unknown block {block!r}")
    return MomentTrajectory(mean=mean, cov=cov)
