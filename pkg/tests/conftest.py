"""Shared fixtures: compiled kernels, small reaching instances."""
from __future__ import annotations

import pytest

from isoc import IsocObjective, materialize_problem
from isoc.experiments import generate_gt
from isoc.reaching import build_reaching_example
from isoc._kernels import warmup


@pytest.fixture(scope="session", autouse=True)
def _compiled_kernels():
    warmup()


@pytest.fixture(scope="session")
def reaching8():
    return build_reaching_example(horizon=8)


@pytest.fixture(scope="session")
def reaching8_gt(reaching8):
    gt, meta = generate_gt(reaching8, mode="analytic")
    return gt


@pytest.fixture(scope="session")
def reaching8_objective(reaching8, reaching8_gt):
    ex = reaching8
    return IsocObjective(ex.system, ex.cost, reaching8_gt)


@pytest.fixture(scope="session")
def reaching8_arrays(reaching8):
    ex = reaching8
    return materialize_problem(ex.theta_vector(), ex.system, ex.cost)


@pytest.fixture(scope="session")
def reaching30():
    return build_reaching_example(horizon=30)
