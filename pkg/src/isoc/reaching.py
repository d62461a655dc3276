"""Planar reaching benchmark: point-mass hand with first-order muscle dynamics.

State x = [pos(2), vel(2), force(2), target(2)], control u = commanded force,
observation y = [pos, vel, force].  The terminal cost penalizes
position-to-target error, velocity and force (two axes each); control effort
is penalized at every step.  Control-dependent plant noise (one direction,
F1 = I2) and state-dependent observation noise (G1 = I8) complete the model.

The identification vector stacks 8 cost weights, 8 + 6 diagonal noise-mixing
entries, and the two multiplicative scales: 24 parameters total.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    CostStructure,
    FeasibleSet,
    LqsSystem,
    SigmaPattern,
    ThetaLayout,
    ThetaVector,
)

# indices of theta slots whose lower bound must stay strictly positive:
# the control-effort weights keep R positive definite, the observation-noise
# diagonal keeps the innovation covariance positive definite
_PD_EPS = 1e-10


@dataclass(frozen=True, eq=False)
class ReachingExample:
    """Fully instantiated benchmark problem: model, cost, GT theta, box, weights."""

    system: LqsSystem
    cost: CostStructure
    layout: ThetaLayout
    theta_star: np.ndarray
    box: FeasibleSet
    selector: np.ndarray
    w_mean: np.ndarray
    w_cov: np.ndarray

    def theta_vector(self, theta: np.ndarray | None = None) -> ThetaVector:
        return ThetaVector(
            theta=self.theta_star if theta is None else np.asarray(theta), layout=self.layout
        )

    def make_box(self, upper: float) -> FeasibleSet:
        """Same lower bounds, constant upper bound; used by the box-size sweeps."""
        return FeasibleSet(lower=self.box.lower.copy(), upper=np.full(self.layout.dim, upper))


def build_reaching_example(
    horizon: int = 50,
    dt: float = 0.01,
    mass: float = 1.0,
    tau: float = 0.04,
    target: tuple[float, float] = (0.1, 0.15),
    box_upper: float = 2.0,
) -> ReachingExample:
    """Construct the planar reaching problem (defaults: 0.5 s at 10 ms steps).

    tau is the muscle low-pass time constant; the commanded force reaches the
    plant through f' = f + dt (u - f) / tau.
    """
    n, m, r = 8, 2, 6
    A = np.eye(n)
    A[0, 2] = A[1, 3] = dt
    A[2, 4] = A[3, 5] = dt / mass
    A[4, 4] = A[5, 5] = 1.0 - dt / tau
    B = np.zeros((n, m))
    B[4, 0] = B[5, 1] = dt / tau
    H = np.zeros((r, n))
    H[:6, :6] = np.eye(6)

    F = np.eye(m)[None, :, :]
    G = np.eye(n)[None, :, :]
    alpha_pattern = SigmaPattern.diagonal(n)
    beta_pattern = SigmaPattern.diagonal(r)

    x0_mean = np.zeros(n)
    x0_mean[6], x0_mean[7] = target
    x0_cov = np.zeros((n, n))

    system = LqsSystem(
        A=A, B=B, H=H, F=F, G=G,
        alpha_pattern=alpha_pattern, beta_pattern=beta_pattern,
        N=horizon, x0_mean=x0_mean, x0_cov=x0_cov,
    )

    # terminal directions: position-to-target (2), velocity (2), force (2)
    q_n = np.zeros((6, n))
    q_n[0, 0], q_n[0, 6] = 1.0, -1.0
    q_n[1, 1], q_n[1, 7] = 1.0, -1.0
    q_n[2, 2] = q_n[3, 3] = 1.0
    q_n[4, 4] = q_n[5, 5] = 1.0
    q_r = np.eye(m)
    cost = CostStructure(q_n=q_n, q_q=np.zeros((0, horizon, n)), q_r=q_r)

    layout = ThetaLayout.from_problem(system, cost)
    s_star = np.array([1.0, 1.0, 0.04, 0.04, 4e-4, 4e-4, 1e-5 / 42.0, 1e-5 / 42.0])
    sigma_star = np.concatenate(
        [np.zeros(8), [0.02, 0.02, 0.2, 0.2, 1.0, 1.0], [0.5], [0.1]]
    )
    theta_star = np.concatenate([s_star, sigma_star])
    assert theta_star.shape == (layout.dim,) == (24,)

    lower = np.zeros(layout.dim)
    lower[6:8] = _PD_EPS  # control-effort weights (R stays PD)
    lower[16:22] = _PD_EPS  # observation-noise diagonal (innovation stays PD)
    box = FeasibleSet(lower=lower, upper=np.full(layout.dim, box_upper))

    selector = np.zeros((4, n))
    selector[:4, :4] = np.eye(4)
    w_mean = np.full(4, 0.9)
    w_cov = np.zeros(16)
    w_cov[[0, 5, 10, 15]] = 0.1  # diagonal slots of the row-major 4x4 grid

    return ReachingExample(
        system=system, cost=cost, layout=layout, theta_star=theta_star,
        box=box, selector=selector, w_mean=w_mean, w_cov=w_cov,
    )
