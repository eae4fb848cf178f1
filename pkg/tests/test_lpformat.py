from __future__ import annotations

import math
import sys
from pathlib import Path

import highspy
import numpy as np
import pytest

from nnplan.compile import compile_base
from nnplan.milp import MilpModel, solve
from nnplan.milp.lpformat import LPFormatError, export_lp, lp_text, read_solution, solve_external
from nnplan.network import Network
from nnplan.problem import LinExpr, PlanningProblem, PwlExpr, VarDecl

GOLDEN = Path(__file__).parent / "golden"
SOLVER = Path(__file__).parent / "highs_solve.py"


def knapsack() -> MilpModel:
    m = MilpModel("knapsack")
    x1, x2 = m.add_var("x1", kind="binary"), m.add_var("x2", kind="binary")
    m.add_constraint({x1: 1.0, x2: 1.0}, "<=", 1.5, "cap")
    m.set_objective({x1: 1.0, x2: 1.0})
    return m


def mixed() -> MilpModel:
    m = MilpModel("mixed")
    a = m.add_var("a", -math.inf, math.inf)
    b = m.add_var("b[1]", 0.1, 2.0 / 3.0)
    c = m.add_var("c", 2.5, 2.5)
    d = m.add_var("1d", kind="binary")
    m.add_constraint({a: 1.0, b: -3.0, d: 0.1}, ">=", -1.0)
    m.add_constraint({a: 1.0, c: 1.0}, "==", 4.0)
    m.add_constraint({b: 1e-3, d: 7.0}, "<=", 12.5)
    m.set_objective({a: 2.0, b: -0.3, d: 1.0}, "min", constant=-1.25)
    return m


def tiny_network_model() -> MilpModel:
    net = Network(1, 1, (np.array([[1.0, -1.0], [0.5, 2.0]]), np.array([[1.0], [0.0], [0.3], [-0.7]])),
                  (np.array([0.0, 0.25]), np.array([0.1])), dropout=0.0, folded=True)
    vars_ = (VarDecl("s", "state", -10.0, 10.0), VarDecl("a", "action", -1.0, 1.0))
    prob = PlanningProblem(vars_, PwlExpr(LinExpr(), ((-1.0, LinExpr.of({"s": 1.0}, -2.0)),), ()),
                           (0.5,), 2)
    model, _ = compile_base(prob, net)
    return model


MODELS = {"knapsack": knapsack, "mixed": mixed, "network": tiny_network_model}


@pytest.mark.parametrize("name", sorted(MODELS))
def test_export_matches_golden_file(name, tmp_path):
    path = tmp_path / f"{name}.lp"
    export_lp(MODELS[name](), path)
    assert path.read_bytes() == (GOLDEN / f"{name}.lp").read_bytes()


@pytest.mark.parametrize("name", sorted(MODELS))
def test_golden_file_reads_in_highs_with_same_optimum(name):
    model = MODELS[name]()
    ours = solve(model)
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    assert h.readModel(str(GOLDEN / f"{name}.lp")) == highspy.HighsStatus.kOk
    h.run()
    assert h.getModelStatus() == highspy.HighsModelStatus.kOptimal
    assert h.getInfo().objective_function_value == pytest.approx(ours.objective, abs=1e-7)


def test_numbers_written_with_full_precision():
    text = lp_text(mixed())
    assert "0.66666666666666663" in text
    assert " a free" in text and " c = 2.5" in text


def test_names_are_sanitized():
    text = lp_text(mixed())
    assert "b_1_" in text and "v_1d" in text


def test_read_solution(tmp_path):
    m = knapsack()
    sol = tmp_path / "k.sol"
    sol.write_text("# solved elsewhere\nstatus optimal\nobjective 1\nx1 1\nx2 0\n")
    r = read_solution(sol, m)
    assert r.status == "optimal" and r.objective == 1.0
    np.testing.assert_array_equal(r.x, [1.0, 0.0])


def test_read_solution_rejects_unknown_variable(tmp_path):
    sol = tmp_path / "k.sol"
    sol.write_text("status optimal\nzz 1\n")
    with pytest.raises(LPFormatError):
        read_solution(sol, knapsack())


@pytest.mark.parametrize("name", sorted(MODELS))
def test_external_solver_bridge(name):
    model = MODELS[name]()
    res = solve_external(model, f"{sys.executable} {SOLVER} {{lp}} {{sol}}")
    assert res.status == "optimal"
    assert res.objective == pytest.approx(solve(model).objective, abs=1e-7)
    assert model.max_violation(res.x) <= 1e-6
