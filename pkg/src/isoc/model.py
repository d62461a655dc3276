"""Model types for linear-quadratic sensorimotor (LQS) control problems.

An LQS problem couples a discrete-time linear plant with control-dependent
state noise and state-dependent observation noise:

    x_{t+1} = A x_t + B u_t + Sigma_alpha alpha_t + sum_i sigma_u_i eps_i B F_i u_t
    y_t     = H x_t + Sigma_beta beta_t + sum_i sigma_x_i eta_i H G_i x_t

with quadratic cost built from rank-one terms.  The free parameters
(cost weights s and noise scales sigma) live in a flat theta vector with a
fixed ordering; everything structural (A, B, H, F_i, G_i, rank-one cost
directions, noise sparsity patterns) is held by the types below.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


def _as_float_array(x, name: str) -> np.ndarray:
    arr = np.ascontiguousarray(np.asarray(x, dtype=np.float64))
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def _check_symmetric_psd(S: np.ndarray, name: str, tol: float = 1e-10) -> None:
    if not np.allclose(S, S.T, atol=tol):
        raise ValueError(f"{name} must be symmetric")
    w = np.linalg.eigvalsh(0.5 * (S + S.T))
    if w.min() < -tol * max(1.0, w.max()):
        raise ValueError(f"{name} must be positive semidefinite (min eig {w.min():.3e})")


@dataclass(frozen=True)
class SigmaPattern:
    """Sparsity pattern of an additive-noise mixing matrix.

    `shape` is the full matrix shape; `rows`/`cols` list the entries that are
    free parameters (all other entries are zero).  The parameter order in
    theta follows the order of `rows`/`cols`.
    """

    shape: tuple[int, int]
    rows: tuple[int, ...]
    cols: tuple[int, ...]

    def __post_init__(self):
        nr, nc = self.shape
        if len(self.rows) != len(self.cols):
            raise ValueError("rows and cols must have equal length")
        seen = set()
        for r, c in zip(self.rows, self.cols):
            if not (0 <= r < nr and 0 <= c < nc):
                raise ValueError(f"pattern entry ({r},{c}) outside shape {self.shape}")
            if (r, c) in seen:
                raise ValueError(f"duplicate pattern entry ({r},{c})")
            seen.add((r, c))

    @classmethod
    def diagonal(cls, n_rows: int, n_cols: int | None = None) -> "SigmaPattern":
        """Square-by-default diagonal pattern, one parameter per row."""
        if n_cols is None:
            n_cols = n_rows
        k = min(n_rows, n_cols)
        idx = tuple(range(k))
        return cls(shape=(n_rows, n_cols), rows=idx, cols=idx)

    @property
    def size(self) -> int:
        return len(self.rows)

    def materialize(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (self.size,):
            raise ValueError(f"expected {self.size} pattern values, got {values.shape}")
        out = np.zeros(self.shape)
        out[np.array(self.rows, dtype=np.intp), np.array(self.cols, dtype=np.intp)] = values
        return out


@dataclass(frozen=True, eq=False)
class LqsSystem:
    """Plant, observation and multiplicative-noise structure over a fixed horizon.

    A, B, H may be constant (2-d) or time-varying (stacked 3-d with leading
    axis N).  F holds the c control-noise directions (c, m, m); G the d
    observation-noise directions (d, n, n).  x0_cov is the covariance of the
    initial state; the estimator is initialised at x0_mean exactly.
    """

    A: np.ndarray
    B: np.ndarray
    H: np.ndarray
    F: np.ndarray
    G: np.ndarray
    alpha_pattern: SigmaPattern
    beta_pattern: SigmaPattern
    N: int
    x0_mean: np.ndarray
    x0_cov: np.ndarray

    def __post_init__(self):
        for name in ("A", "B", "H", "F", "G", "x0_mean", "x0_cov"):
            object.__setattr__(self, name, _as_float_array(getattr(self, name), name))
        if self.N < 1:
            raise ValueError("horizon N must be >= 1")
        n = self.n
        if self.A.ndim not in (2, 3) or self.A.shape[-2:] != (n, n):
            raise ValueError(f"A must be (n,n) or (N,n,n), got {self.A.shape}")
        if self.B.ndim not in (2, 3) or self.B.shape[-2] != n:
            raise ValueError(f"B must be (n,m) or (N,n,m), got {self.B.shape}")
        if self.H.ndim not in (2, 3) or self.H.shape[-1] != n:
            raise ValueError(f"H must be (r,n) or (N,r,n), got {self.H.shape}")
        for M, name in ((self.A, "A"), (self.B, "B"), (self.H, "H")):
            if M.ndim == 3 and M.shape[0] != self.N:
                raise ValueError(f"time-varying {name} must have leading axis N={self.N}")
        m, r = self.m, self.r
        if self.F.ndim != 3 or self.F.shape[1:] != (m, m):
            raise ValueError(f"F must be stacked (c,m,m), got {self.F.shape}")
        if self.G.ndim != 3 or self.G.shape[1:] != (n, n):
            raise ValueError(f"G must be stacked (d,n,n), got {self.G.shape}")
        if self.alpha_pattern.shape[0] != n:
            raise ValueError("alpha_pattern row count must equal n")
        if self.beta_pattern.shape[0] != r:
            raise ValueError("beta_pattern row count must equal r")
        if self.x0_mean.shape != (n,):
            raise ValueError(f"x0_mean must be (n,), got {self.x0_mean.shape}")
        if self.x0_cov.shape != (n, n):
            raise ValueError(f"x0_cov must be (n,n), got {self.x0_cov.shape}")
        _check_symmetric_psd(self.x0_cov, "x0_cov")

    @property
    def n(self) -> int:
        return self.A.shape[-1]

    @property
    def m(self) -> int:
        return self.B.shape[-1]

    @property
    def r(self) -> int:
        return self.H.shape[-2]

    @property
    def c(self) -> int:
        return self.F.shape[0]

    @property
    def d(self) -> int:
        return self.G.shape[0]

    def _stacked(self, M: np.ndarray) -> np.ndarray:
        if M.ndim == 3:
            return np.ascontiguousarray(M)
        return np.ascontiguousarray(np.broadcast_to(M, (self.N,) + M.shape))

    def A_seq(self) -> np.ndarray:
        return self._stacked(self.A)

    def B_seq(self) -> np.ndarray:
        return self._stacked(self.B)

    def H_seq(self) -> np.ndarray:
        return self._stacked(self.H)


@dataclass(frozen=True, eq=False)
class CostStructure:
    """Rank-one decomposition of the quadratic cost.

    q_n: (S_N, n) terminal directions, Q_N = sum_i s_N_i q_n_i q_n_i'.
    q_q: (S_Q, N, n) running-state directions, time-indexed per term.
    q_r: (S_R, m) control directions, R = sum_i s_R_i q_r_i q_r_i'.
    """

    q_n: np.ndarray
    q_q: np.ndarray
    q_r: np.ndarray

    def __post_init__(self):
        for name in ("q_n", "q_q", "q_r"):
            object.__setattr__(self, name, _as_float_array(getattr(self, name), name))
        if self.q_n.ndim != 2:
            raise ValueError(f"q_n must be (S_N, n), got {self.q_n.shape}")
        if self.q_q.ndim != 3:
            raise ValueError(f"q_q must be (S_Q, N, n), got {self.q_q.shape}")
        if self.q_r.ndim != 2:
            raise ValueError(f"q_r must be (S_R, m), got {self.q_r.shape}")
        if self.q_q.shape[0] > 0 and self.q_q.shape[2] != self.q_n.shape[1]:
            raise ValueError("q_q state dimension must match q_n")

    @classmethod
    def with_constant_running(
        cls, q_n: np.ndarray, q_q_const: np.ndarray, q_r: np.ndarray, N: int
    ) -> "CostStructure":
        """Broadcast constant running directions (S_Q, n) over the horizon."""
        q_q_const = np.asarray(q_q_const, dtype=np.float64)
        if q_q_const.size == 0:
            q_q = np.zeros((0, N, np.asarray(q_n).shape[1]))
        else:
            q_q = np.broadcast_to(q_q_const[:, None, :], (q_q_const.shape[0], N, q_q_const.shape[1])).copy()
        return cls(q_n=np.asarray(q_n), q_q=q_q, q_r=np.asarray(q_r))

    @property
    def s_n_terms(self) -> int:
        return self.q_n.shape[0]

    @property
    def s_q_terms(self) -> int:
        return self.q_q.shape[0]

    @property
    def s_r_terms(self) -> int:
        return self.q_r.shape[0]


@dataclass(frozen=True)
class ThetaLayout:
    """Slot sizes of the flat parameter vector.

    Ordering is fixed: [s_N | s_Q | s_R | Sigma_alpha entries |
    Sigma_beta entries | sigma_u | sigma_x].
    """

    s_n: int
    s_q: int
    s_r: int
    n_alpha: int
    n_beta: int
    c: int
    d: int

    @classmethod
    def from_problem(cls, system: LqsSystem, cost: CostStructure) -> "ThetaLayout":
        return cls(
            s_n=cost.s_n_terms,
            s_q=cost.s_q_terms,
            s_r=cost.s_r_terms,
            n_alpha=system.alpha_pattern.size,
            n_beta=system.beta_pattern.size,
            c=system.c,
            d=system.d,
        )

    @property
    def dim(self) -> int:
        return self.s_n + self.s_q + self.s_r + self.n_alpha + self.n_beta + self.c + self.d

    def _offsets(self) -> list[int]:
        sizes = [self.s_n, self.s_q, self.s_r, self.n_alpha, self.n_beta, self.c, self.d]
        offs = [0]
        for s in sizes:
            offs.append(offs[-1] + s)
        return offs

    def slices(self) -> dict[str, slice]:
        o = self._offsets()
        keys = ["s_n", "s_q", "s_r", "sig_alpha", "sig_beta", "sig_u", "sig_x"]
        return {k: slice(o[i], o[i + 1]) for i, k in enumerate(keys)}


@dataclass(frozen=True, eq=False)
class ThetaVector:
    """Flat parameter vector theta bound to a layout."""

    theta: np.ndarray
    layout: ThetaLayout

    def __post_init__(self):
        object.__setattr__(self, "theta", _as_float_array(self.theta, "theta"))
        if self.theta.shape != (self.layout.dim,):
            raise ValueError(
                f"theta has length {self.theta.shape}, layout expects ({self.layout.dim},)"
            )

    @classmethod
    def from_parts(
        cls,
        layout: ThetaLayout,
        s_n=(),
        s_q=(),
        s_r=(),
        sig_alpha=(),
        sig_beta=(),
        sig_u=(),
        sig_x=(),
    ) -> "ThetaVector":
        theta = np.concatenate(
            [np.asarray(p, dtype=np.float64).ravel() for p in (s_n, s_q, s_r, sig_alpha, sig_beta, sig_u, sig_x)]
            or [np.zeros(0)]
        )
        return cls(theta=theta, layout=layout)

    def _part(self, key: str) -> np.ndarray:
        return self.theta[self.layout.slices()[key]]

    @property
    def s_n(self) -> np.ndarray:
        return self._part("s_n")

    @property
    def s_q(self) -> np.ndarray:
        return self._part("s_q")

    @property
    def s_r(self) -> np.ndarray:
        return self._part("s_r")

    @property
    def sig_alpha(self) -> np.ndarray:
        return self._part("sig_alpha")

    @property
    def sig_beta(self) -> np.ndarray:
        return self._part("sig_beta")

    @property
    def sig_u(self) -> np.ndarray:
        return self._part("sig_u")

    @property
    def sig_x(self) -> np.ndarray:
        return self._part("sig_x")


@dataclass(frozen=True, eq=False)
class FeasibleSet:
    """Axis-aligned box a <= theta <= b with b > a componentwise."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lower", _as_float_array(self.lower, "lower"))
        object.__setattr__(self, "upper", _as_float_array(self.upper, "upper"))
        if self.lower.ndim != 1 or self.lower.shape != self.upper.shape:
            raise ValueError("lower and upper must be 1-d arrays of equal length")
        if not np.all(self.upper > self.lower):
            raise ValueError("upper must exceed lower componentwise")

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, theta: np.ndarray, atol: float = 0.0) -> bool:
        theta = np.asarray(theta, dtype=np.float64)
        return bool(np.all(theta >= self.lower - atol) and np.all(theta <= self.upper + atol))

    def clip(self, theta: np.ndarray) -> np.ndarray:
        """Project onto the box. Idempotent; identity on interior points."""
        return np.clip(np.asarray(theta, dtype=np.float64), self.lower, self.upper)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Uniform i.i.d. samples, shape (size, dim)."""
        return rng.uniform(self.lower, self.upper, size=(size, self.dim))

    def log_volume(self) -> float:
        return float(np.sum(np.log(self.widths)))


@dataclass(frozen=True, eq=False)
class NoiseMatrices:
    """Noise terms of an LQS system materialized at a particular theta."""

    sigma_alpha: np.ndarray  # (n, p_alpha)
    sigma_beta: np.ndarray  # (r, p_beta)
    sig_u: np.ndarray  # (c,)
    sig_x: np.ndarray  # (d,)
    om_xi: np.ndarray  # Sigma_alpha Sigma_alpha', (n, n)
    om_omega: np.ndarray  # Sigma_beta Sigma_beta', (r, r)


def assemble_noise(theta: ThetaVector, system: LqsSystem) -> NoiseMatrices:
    """Materialize noise matrices from the theta slots."""
    sa = system.alpha_pattern.materialize(theta.sig_alpha)
    sb = system.beta_pattern.materialize(theta.sig_beta)
    return NoiseMatrices(
        sigma_alpha=sa,
        sigma_beta=sb,
        sig_u=theta.sig_u.copy(),
        sig_x=theta.sig_x.copy(),
        om_xi=sa @ sa.T,
        om_omega=sb @ sb.T,
    )


def assemble_cost(theta: ThetaVector, cost: CostStructure, N: int) -> tuple[np.ndarray, np.ndarray]:
    """Build stacked cost matrices Q (N+1, n, n) and R (m, m).

    Q[t] for t < N is the running state cost, Q[N] the terminal cost.
    Outputs are exactly symmetric: each rank-one term s * outer(q, q) is.
    """
    n = cost.q_n.shape[1]
    m = cost.q_r.shape[1]
    Q = np.zeros((N + 1, n, n))
    for i in range(cost.s_n_terms):
        Q[N] += theta.s_n[i] * np.outer(cost.q_n[i], cost.q_n[i])
    for i in range(cost.s_q_terms):
        for t in range(N):
            Q[t] += theta.s_q[i] * np.outer(cost.q_q[i, t], cost.q_q[i, t])
    R = np.zeros((m, m))
    for i in range(cost.s_r_terms):
        R += theta.s_r[i] * np.outer(cost.q_r[i], cost.q_r[i])
    return Q, R


@dataclass(frozen=True, eq=False)
class StaticArrays:
    """Theta-independent stacked arrays of a problem, built once and reused."""

    As: np.ndarray  # (N, n, n)
    Bs: np.ndarray  # (N, n, m)
    Hs: np.ndarray  # (N, r, n)
    F: np.ndarray  # (c, m, m)
    G: np.ndarray  # (d, n, n)
    x0_mean: np.ndarray
    x0_cov: np.ndarray

    @classmethod
    def from_system(cls, system: LqsSystem) -> "StaticArrays":
        return cls(
            As=system.A_seq(),
            Bs=system.B_seq(),
            Hs=system.H_seq(),
            F=np.ascontiguousarray(system.F),
            G=np.ascontiguousarray(system.G),
            x0_mean=system.x0_mean.copy(),
            x0_cov=system.x0_cov.copy(),
        )


@dataclass(frozen=True, eq=False)
class ProblemArrays:
    """Everything the recursions need, materialized at one theta."""

    static: StaticArrays
    sigma_alpha: np.ndarray  # (n, p_alpha)
    sigma_beta: np.ndarray  # (r, p_beta)
    sig_u: np.ndarray
    sig_x: np.ndarray
    om_xi: np.ndarray
    om_omega: np.ndarray
    Q: np.ndarray  # (N+1, n, n)
    R: np.ndarray  # (m, m)

    @property
    def N(self) -> int:
        return self.static.As.shape[0]

    @property
    def n(self) -> int:
        return self.static.As.shape[1]

    @property
    def m(self) -> int:
        return self.static.Bs.shape[2]

    @property
    def r(self) -> int:
        return self.static.Hs.shape[1]


def materialize_problem(
    theta: ThetaVector | np.ndarray,
    system: LqsSystem,
    cost: CostStructure,
    static: StaticArrays | None = None,
) -> ProblemArrays:
    """Assemble noise and cost matrices at theta, reusing static arrays if given."""
    if not isinstance(theta, ThetaVector):
        theta = ThetaVector(theta=np.asarray(theta), layout=ThetaLayout.from_problem(system, cost))
    if static is None:
        static = StaticArrays.from_system(system)
    noise = assemble_noise(theta, system)
    Q, R = assemble_cost(theta, cost, system.N)
    return ProblemArrays(
        static=static,
        sigma_alpha=noise.sigma_alpha,
        sigma_beta=noise.sigma_beta,
        sig_u=noise.sig_u,
        sig_x=noise.sig_x,
        om_xi=noise.om_xi,
        om_omega=noise.om_omega,
        Q=Q,
        R=R,
    )
