from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nnplan.domains import list_instances, load_instance
from nnplan.problem import (Constraint, DimensionError, LinExpr, PlanningProblem, ProblemError,
                            PwlExpr, VarDecl, check_constraints, evaluate_reward)


def one_reservoir(m=20.0, n=80.0, rmax=100.0):
    vars_ = (VarDecl("l", "state", -math.inf, math.inf), VarDecl("f", "action", 0.0, rmax))
    mid = (m + n) / 2
    reward = PwlExpr(LinExpr(), ((-0.1, LinExpr.of({"l": 1.0}, -mid)),),
                     ((-100.0, LinExpr.of({"l": -1.0}, m)), (-5.0, LinExpr.of({"l": 1.0}, -n))))
    release = Constraint(LinExpr.of({"f": 1.0, "l": -1.0}), "<=", 0.0, "release")
    return PlanningProblem(vars_, reward, (50.0,), 3, (release,))


def one_room():
    vars_ = (VarDecl("p", "state", -math.inf, math.inf), VarDecl("b", "action", 0.0, 20.0))
    reward = PwlExpr(LinExpr.of({"b": -1.0}), ((-10.0, LinExpr.of({"p": 1.0}, -22.5)),),
                     ((-0.1, LinExpr.of({"p": 1.0}, -25.0)), (-0.1, LinExpr.of({"p": -1.0}, 20.0))))
    return PlanningProblem(vars_, reward, (20.0,), 1)


def test_navigation_reward_at_goal_is_zero():
    prob = load_instance("navigation10").problem()
    goal = prob.constants["goal"]
    assert evaluate_reward(prob, goal, [0.0, 0.0]) == 0.0


def test_reservoir_reward_at_midpoint_is_zero():
    assert evaluate_reward(one_reservoir(), [50.0], [0.0]) == 0.0


def test_hvac_reward_hand_value():
    # -(10 |22.5 - 22.5| + 1 * 10 + 0.1 * 0) = -10
    assert evaluate_reward(one_room(), [22.5], [10.0]) == pytest.approx(-10.0, abs=1e-12)


def test_check_constraints_satisfied_release():
    assert check_constraints(one_reservoir(), [50.0], [30.0]) == []


def test_check_constraints_reports_release_slack():
    prob = one_reservoir()
    out = check_constraints(prob, [50.0], [60.0])
    assert len(out) == 1
    assert out[0].constraint == "release"
    assert out[0].slack == pytest.approx(-10.0)


def test_check_constraints_reports_bound_violation():
    vars_ = (VarDecl("x", "state", 0, 10), VarDecl("dx", "action", -0.5, 0.5))
    prob = PlanningProblem(vars_, PwlExpr(), (0.0,), 1)
    out = check_constraints(prob, [1.0], [0.7])
    assert len(out) == 1 and out[0].constraint == "bound:dx"
    assert out[0].slack == pytest.approx(-0.2)


def test_dimension_error_names_variable():
    with pytest.raises(DimensionError) as err:
        evaluate_reward(one_room(), [1.0, 2.0], [0.0])
    assert err.value.variable is not None


def test_undeclared_variable_rejected():
    vars_ = (VarDecl("x", "state", 0, 1), VarDecl("a", "action", 0, 1))
    with pytest.raises(ProblemError):
        PlanningProblem(vars_, PwlExpr(LinExpr.of({"y": 1.0})), (0.0,), 1)


@pytest.mark.parametrize("name", list_instances())
def test_problem_round_trip(name, tmp_path):
    prob = load_instance(name).problem()
    path = tmp_path / "p.json"
    prob.save(path)
    back = PlanningProblem.load(path)
    assert back == prob
    assert back.to_dict() == prob.to_dict()


@pytest.mark.invariant
@given(st.lists(st.floats(-100, 100), min_size=2, max_size=2),
       st.lists(st.floats(-5, 5), min_size=2, max_size=2))
def test_reward_is_pure(state, action):
    prob = load_instance("navigation10").problem()
    first = evaluate_reward(prob, state, action)
    second = evaluate_reward(prob, np.array(state), np.array(action))
    assert first == second


@pytest.mark.invariant
@pytest.mark.parametrize("name", list_instances())
def test_noop_trajectory_satisfies_global_constraints(name):
    inst = load_instance(name)
    prob = inst.problem()
    s = inst.init.copy()
    for _ in range(prob.horizon):
        a = prob.noop_action
        assert check_constraints(prob, s, a) == []
        s = inst.step(s, a)
