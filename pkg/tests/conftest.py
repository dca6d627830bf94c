"""Shared game fixtures.

Two hand-checked games recur throughout the suite:

* the *scalar trilevel* game — every level owns one variable; the desired
  decision is (2, 1, 3) and the top/middle announcement maps are known in
  closed form (u1 = 12 - u2 - 3*u3, u2 = 4 - u3);
* the *wide-leader* game — the top level owns two variables, so the set of
  optimal top maps is a one-parameter family per lower level.
"""

from __future__ import annotations

import numpy as np
import pytest

from revstack import (
    Dims,
    ExprObjective,
    GameProblem,
    QuadraticObjective,
    parse_formula,
)


def scalar_trilevel() -> GameProblem:
    """J1 = (u1-2)^2+(u2-1)^2+(u3-3)^2, J2 = (u1-1)^2+u2^2+u3^2,
    J3 = u1^2+(u2-2)^2+u3^2."""
    dims = Dims.of(1, 1, 1)
    eye = {(1, 1): np.eye(1), (2, 2): np.eye(1), (3, 3): np.eye(1)}
    J1 = QuadraticObjective.build(dims, eye, l=[[-4], [-2], [-6]], const=14.0)
    J2 = QuadraticObjective.build(dims, eye, l=[[-2], [0], [0]], const=1.0)
    J3 = QuadraticObjective.build(dims, eye, l=[[0], [-4], [0]], const=4.0)
    return GameProblem(dims, (J1, J2, J3))


def scalar_trilevel_expr() -> GameProblem:
    dims = Dims.of(1, 1, 1)
    texts = (
        "(u1 - 2)^2 + (u2 - 1)^2 + (u3 - 3)^2",
        "(u1 - 1)^2 + u2^2 + u3^2",
        "u1^2 + (u2 - 2)^2 + u3^2",
    )
    return GameProblem(
        dims, tuple(ExprObjective(parse_formula(t, dims)) for t in texts))


def wide_leader() -> GameProblem:
    """Top level owns u1 in R^2; desired decision (-5/2, -3/2, -1/2, -1/2)."""
    dims = Dims.of(2, 1, 1)
    eye = {(1, 1): np.eye(2), (2, 2): np.eye(1), (3, 3): np.eye(1)}
    J1 = QuadraticObjective.build(dims, eye, l=[[5, 3], [1], [1]])
    J2 = QuadraticObjective.build(dims, eye, l=[[0, 0], [3], [0]])
    J3 = QuadraticObjective.build(dims, eye, l=[[0, 0], [0], [0]])
    return GameProblem(dims, (J1, J2, J3))


def random_convex_game(seed: int, widths) -> GameProblem:
    """Random quadratic game with strongly convex objectives.

    Diagonal blocks are Gram matrices plus a margin; cross blocks are kept
    small so every objective's full Hessian stays positive definite.
    """
    rng = np.random.default_rng(seed)
    dims = Dims.of(*widths)
    objectives = []
    for _ in range(dims.levels):
        A = {}
        for j in range(1, dims.levels + 1):
            R = rng.standard_normal((dims.m[j - 1], dims.m[j - 1]))
            A[(j, j)] = R @ R.T + (1.0 + rng.random()) * np.eye(dims.m[j - 1])
            for k in range(j + 1, dims.levels + 1):
                A[(j, k)] = 0.3 * rng.standard_normal((dims.m[j - 1], dims.m[k - 1]))
        l = [rng.uniform(-3.0, 3.0, w) for w in dims.m]
        objectives.append(QuadraticObjective.build(dims, A, l=l))
    return GameProblem(dims, tuple(objectives))


# one "criterion N: PASS/FAIL - detail" line per acceptance test, echoed
# in a summary section so plain `pytest -v` runs always show them
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def tri():
    return scalar_trilevel()


@pytest.fixture
def tri_expr():
    return scalar_trilevel_expr()


@pytest.fixture
def wide():
    return wide_leader()
