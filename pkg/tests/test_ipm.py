"""Interior-point SOCP solver: smoke cases, randomized analytic optima,
bit-exact determinism, optional cross-check against cvxpy."""

import math

import numpy as np
import pytest

from cnoma.conic import ConicProgram, aff
from cnoma.ipm import SolveStatus, SolverSettings, solve_socp

try:
    import cvxpy  # noqa: F401

    HAVE_CVXPY = True
except Exception:  # pragma: no cover - environment dependent
    HAVE_CVXPY = False


def test_box_lp():
    prog = ConicProgram()
    x = prog.add_var("x", lb=-1.0, ub=2.0)
    y = prog.add_var("y", lb=0.0, ub=3.0)
    prog.set_objective({x: 1.0, y: -2.0})
    result = solve_socp(prog)
    assert result.status is SolveStatus.OPTIMAL
    assert abs(result.objective - 2.0) <= 1e-6
    assert abs(result.x[0] - 2.0) <= 1e-6 and abs(result.x[1]) <= 1e-6


def test_soc_ball():
    prog = ConicProgram()
    x = prog.add_var("x")
    y = prog.add_var("y")
    prog.set_objective({x: 1.0, y: 1.0})
    prog.add_soc([aff({x: 1.0}), aff({y: 1.0})], aff(const=1.0), name="ball")
    result = solve_socp(prog)
    assert result.status is SolveStatus.OPTIMAL
    assert abs(result.objective - math.sqrt(2.0)) <= 1e-6
    assert abs(result.x[0] - math.sqrt(0.5)) <= 1e-6


def test_rsoc_geometric_mean():
    # maximize y subject to y^2 <= 2 s1 s2, s1 <= 1.5, s2 <= 3
    prog = ConicProgram()
    y = prog.add_var("y", lb=0.0)
    s1 = prog.add_var("s1", lb=0.0, ub=1.5)
    s2 = prog.add_var("s2", lb=0.0, ub=3.0)
    prog.set_objective({y: 1.0})
    prog.add_rsoc([aff({y: 1.0})], aff({s1: 1.0}), aff({s2: 1.0}), name="gm")
    result = solve_socp(prog)
    assert result.status is SolveStatus.OPTIMAL
    assert abs(result.objective - 3.0) <= 1e-6


def test_infeasible_certificate():
    prog = ConicProgram()
    x = prog.add_var("x", lb=0.0)
    prog.set_objective({x: 1.0})
    prog.add_linear({x: 1.0}, -1.0, name="impossible")
    result = solve_socp(prog)
    assert result.status is SolveStatus.INFEASIBLE
    assert result.x is None


def test_status_guarantees_tolerances():
    settings = SolverSettings()
    prog = ConicProgram()
    x = prog.add_var("x", lb=0.0, ub=1.0)
    y = prog.add_var("y", lb=0.0, ub=1.0)
    prog.set_objective({x: 3.0, y: 1.0})
    prog.add_soc([aff({x: 1.0}), aff({y: 1.0})], aff(const=0.75), name="cap")
    result = solve_socp(prog, settings)
    assert result.status is SolveStatus.OPTIMAL
    assert result.feas_residual <= settings.feas_tol
    assert result.gap <= max(settings.gap_tol, 1e-6)


def _random_box_lp(rng):
    n = rng.integers(2, 6)
    lo = rng.uniform(-3.0, 0.0, n)
    hi = lo + rng.uniform(0.5, 4.0, n)
    w = rng.normal(size=n)
    while np.any(np.abs(w) < 1e-3):
        w = rng.normal(size=n)
    prog = ConicProgram()
    for i in range(n):
        prog.add_var(f"x{i}", lb=lo[i], ub=hi[i])
    prog.set_objective({i: w[i] for i in range(n)})
    opt = float(np.sum(np.where(w > 0, w * hi, w * lo)))
    return prog, opt


def _random_ball(rng):
    n = rng.integers(2, 5)
    center = rng.uniform(-2.0, 2.0, n)
    radius = rng.uniform(0.2, 3.0)
    w = rng.normal(size=n)
    while np.linalg.norm(w) < 1e-2:
        w = rng.normal(size=n)
    prog = ConicProgram()
    for i in range(n):
        prog.add_var(f"x{i}")
    prog.set_objective({i: w[i] for i in range(n)})
    prog.add_soc(
        [aff({i: 1.0}, -center[i]) for i in range(n)],
        aff(const=radius),
        name="ball",
    )
    opt = float(w @ center + radius * np.linalg.norm(w))
    return prog, opt


def _random_rsoc(rng):
    a = rng.uniform(0.2, 4.0)
    b = rng.uniform(0.2, 4.0)
    prog = ConicProgram()
    y = prog.add_var("y", lb=0.0)
    s1 = prog.add_var("s1", lb=0.0, ub=a)
    s2 = prog.add_var("s2", lb=0.0, ub=b)
    prog.set_objective({y: 1.0})
    prog.add_rsoc([aff({y: 1.0})], aff({s1: 1.0}), aff({s2: 1.0}), name="gm")
    return prog, math.sqrt(2.0 * a * b)


def test_randomized_known_optima():
    rng = np.random.default_rng(2024)
    builders = (_random_box_lp, _random_ball, _random_rsoc)
    failures = []
    for k in range(200):
        prog, opt = builders[k % 3](rng)
        result = solve_socp(prog)
        scale = max(1.0, abs(opt))
        if result.status is not SolveStatus.OPTIMAL:
            failures.append((k, result.status, opt, None))
        elif abs(result.objective - opt) / scale > 1e-6:
            failures.append((k, result.status, opt, result.objective))
    assert not failures, failures[:5]


def test_bitwise_determinism():
    rng = np.random.default_rng(77)
    prog, _ = _random_ball(rng)
    first = solve_socp(prog)
    second = solve_socp(prog)
    assert first.status is second.status
    assert np.array_equal(first.x, second.x)
    assert first.objective == second.objective
    assert first.iterations == second.iterations


@pytest.mark.skipif(not HAVE_CVXPY, reason="cvxpy not installed")
def test_cross_check_against_cvxpy():
    import cvxpy as cp

    rng = np.random.default_rng(11)
    for _ in range(20):
        n = int(rng.integers(2, 5))
        center = rng.uniform(-1.0, 1.0, n)
        radius = rng.uniform(0.5, 2.0)
        w = rng.normal(size=n)
        ub = center + rng.uniform(0.1, 2.0, n)

        prog = ConicProgram()
        for i in range(n):
            prog.add_var(f"x{i}", ub=ub[i])
        prog.set_objective({i: w[i] for i in range(n)})
        prog.add_soc(
            [aff({i: 1.0}, -center[i]) for i in range(n)],
            aff(const=radius),
            name="ball",
        )
        mine = solve_socp(prog)

        x = cp.Variable(n)
        problem = cp.Problem(
            cp.Maximize(w @ x), [cp.norm(x - center, 2) <= radius, x <= ub]
        )
        problem.solve()
        assert mine.status is SolveStatus.OPTIMAL
        assert problem.status == cp.OPTIMAL
        scale = max(1.0, abs(problem.value))
        assert abs(mine.objective - problem.value) / scale <= 1e-6
