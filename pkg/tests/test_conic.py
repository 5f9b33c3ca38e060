"""Conic modeling layer: canonicalization, validation, exp-chain rows."""

import math

import numpy as np
import pytest

from cnoma.conic import (
    ConicProgram,
    aff,
    canonical_form,
    exp_chain_min,
    exp_cone_rows,
    feas_violation,
    format_program,
    max_violation,
)


def small_program():
    prog = ConicProgram()
    x = prog.add_var("x", lb=0.0, ub=2.0)
    y = prog.add_var("y", lb=-1.0)
    prog.set_objective({x: 1.0, y: 1.0})
    prog.add_linear({x: 1.0, y: 1.0}, 1.5, name="sum")
    prog.add_soc([aff({x: 1.0}), aff({y: 1.0})], aff(const=1.0), name="ball")
    return prog, x, y


def test_canonical_shapes_and_order():
    prog, _, _ = small_program()
    canon = canonical_form(prog.validate())
    # 1 linear row + bounds (x: ub+lb, y: lb) = 4 orthant rows, then a
    # 3-dimensional SOC block [scalar; vec]
    assert canon.l == 4
    assert canon.soc_dims == [3]
    assert canon.G.shape == (7, 2)
    # first row is the explicit linear row
    assert np.allclose(canon.G[0], [1.0, 1.0]) and canon.h[0] == 1.5
    # SOC block: h - Gx = [1, x, y]
    assert np.allclose(canon.h[4:], [1.0, 0.0, 0.0])
    assert np.allclose(canon.G[4:], [[0.0, 0.0], [-1.0, 0.0], [0.0, -1.0]])


def test_feasibility_violation_measures():
    prog, _, _ = small_program()
    canon = canonical_form(prog)
    inside = np.array([0.5, 0.5])
    assert feas_violation(canon, inside) <= 1e-12
    outside = np.array([1.2, 1.2])  # violates both the sum row and the ball
    assert feas_violation(canon, outside) > 0.1
    assert max_violation(prog, outside) == feas_violation(canon, outside)


def test_rsoc_lowering_matches_definition():
    # 2 s1 s2 >= ||v||^2 with s1 = x <= 2, s2 = 3 fixed, v = (y,)
    prog = ConicProgram()
    x = prog.add_var("x", lb=0.0, ub=2.0)
    y = prog.add_var("y")
    prog.set_objective({y: 1.0})
    prog.add_rsoc([aff({y: 1.0})], aff({x: 1.0}), aff(const=3.0), name="rot")
    canon = canonical_form(prog.validate())

    def violation(xv, yv):
        return feas_violation(canon, np.array([xv, yv]))

    # boundary: y^2 = 2*x*3 at x=2 -> y = sqrt(12)
    assert violation(2.0, math.sqrt(12.0) - 1e-9) <= 1e-9
    assert violation(2.0, math.sqrt(12.0) + 1e-3) > 1e-5


def test_validation_errors():
    prog = ConicProgram()
    x = prog.add_var("x", lb=0.0)
    with pytest.raises(ValueError, match="upper bound below lower"):
        prog.add_var("bad", lb=1.0, ub=0.0)
    prog.add_linear({x: 1.0, 5: 2.0}, 1.0, name="dangling")
    with pytest.raises(ValueError, match="out of range"):
        prog.validate()

    prog = ConicProgram()
    x = prog.add_var("x", lb=0.0)
    free = prog.add_var("free")
    prog.add_rsoc([aff({x: 1.0})], aff({free: 1.0}), aff(const=1.0), name="r")
    with pytest.raises(ValueError, match="nonnegativity"):
        prog.validate()


def test_format_program_one_constraint_per_line():
    prog, _, _ = small_program()
    text = format_program(prog)
    lines = text.splitlines()
    assert lines[0].startswith("maximize")
    assert sum(1 for ln in lines if ln.strip().startswith("lin ")) == 1
    assert sum(1 for ln in lines if ln.strip().startswith("soc ")) == 1


def test_exp_chain_structure():
    prog = ConicProgram()
    zeta = prog.add_var("zeta", lb=0.0)
    vth = prog.add_var("vartheta", lb=0.0)
    q = 4
    kappas = exp_cone_rows(prog, zeta, vth, q=q)
    assert len(kappas) == q + 4
    assert prog.num_vars == 2 + q + 4
    # 3 polynomial rows + q squaring rows, plus 2 linear coupling rows
    assert len(prog.soc_rows) == 3 + q
    assert len(prog.linear_rows) == 2
    names = [row.name for row in prog.linear_rows]
    assert names == ["exp-k4", "exp-cap"]
    prog.validate()


def test_exp_chain_q_validation():
    prog = ConicProgram()
    zeta = prog.add_var("zeta", lb=0.0)
    vth = prog.add_var("vartheta", lb=0.0)
    with pytest.raises(ValueError):
        exp_cone_rows(prog, zeta, vth, q=0)
    with pytest.raises(ValueError):
        exp_chain_min(1.0, q=0)


def test_exp_chain_kappa4_exact_at_zero():
    chain = exp_chain_min(0.0, q=4)
    # 25/36 + 1/24 + 19/72 telescopes to exactly one
    assert abs(chain[3] - 1.0) <= 1e-9
    assert abs(chain[-1] - 1.0) <= 1e-9


def test_exp_chain_accuracy_and_minorant():
    for zeta in (0.0, 0.5, 1.0, 2.0, 3.0):
        approx = exp_chain_min(zeta, q=4)[-1]
        exact = math.exp(zeta)
        assert abs(approx - exact) / exact <= 1e-3
    # the chain is a polynomial minorant of exp: the minimal feasible
    # kappa_{q+4} approaches exp(zeta) from below, never overshooting it
    for zeta in np.linspace(0.0, 3.5, 71):
        assert exp_chain_min(float(zeta), q=4)[-1] <= math.exp(zeta) * (1 + 1e-12)
    # deeper chains tighten the (one-sided) relative error
    err_q3 = 1.0 - exp_chain_min(3.0, q=3)[-1] / math.exp(3.0)
    err_q5 = 1.0 - exp_chain_min(3.0, q=5)[-1] / math.exp(3.0)
    assert 0.0 <= err_q5 < err_q3 <= 1e-3
