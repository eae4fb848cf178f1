"""Factored planning problems with piecewise-linear rewards.

A problem declares state and action variables with box bounds, a per-step
reward, global constraints that hold at every step, optional goal
constraints on the final state, an initial state and a horizon.  The
transition function is supplied separately (a learned network or an exact
simulator).

Variable references in expressions are resolved by context:

* in the reward, action names refer to ``a_t`` and state names to ``s_{t+1}``;
* in global constraints, both refer to step ``t`` (``s_t``, ``a_t``);
* in goal constraints, state names refer to ``s_{H+1}``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

SENSES = ("<=", "==", ">=")


class ProblemError(ValueError):
    """Malformed planning problem or expression."""


class DimensionError(ProblemError):
    def __init__(self, message: str, variable: str | None = None):
        super().__init__(message)
        self.variable = variable


@dataclass(frozen=True)
class VarDecl:
    name: str
    kind: str
    lower: float
    upper: float
    default: float | None = None

    def __post_init__(self):
        if self.kind not in ("state", "action"):
            raise ProblemError(f"variable {self.name!r}: kind must be 'state' or 'action'")
        if not self.name or not self.name.replace("_", "a").isalnum():
            raise ProblemError(f"invalid variable name {self.name!r}")
        if self.lower > self.upper:
            raise ProblemError(f"variable {self.name!r}: lower {self.lower} > upper {self.upper}")
        if self.default is None:
            lo, hi = self.lower, self.upper
            object.__setattr__(self, "default", float(min(max(0.0, lo), hi)))
        if not self.lower <= self.default <= self.upper:
            raise ProblemError(f"variable {self.name!r}: default {self.default} outside bounds")


@dataclass(frozen=True)
class LinExpr:
    """``sum(coef * var) + constant`` over variable names."""

    terms: tuple[tuple[str, float], ...] = ()
    constant: float = 0.0

    @classmethod
    def of(cls, terms: Mapping[str, float] | None = None, constant: float = 0.0) -> LinExpr:
        merged: dict[str, float] = {}
        for name, coef in (terms or {}).items():
            merged[name] = merged.get(name, 0.0) + float(coef)
        return cls(tuple(sorted(merged.items())), float(constant))

    def variables(self) -> set[str]:
        return {name for name, _ in self.terms}

    def evaluate(self, values: Mapping[str, float]) -> float:
        total = self.constant
        for name, coef in self.terms:
            total += coef * values[name]
        return total

    def scaled(self, factor: float) -> LinExpr:
        return LinExpr(tuple((n, c * factor) for n, c in self.terms), self.constant * factor)

    def __add__(self, other: LinExpr) -> LinExpr:
        merged = dict(self.terms)
        for name, coef in other.terms:
            merged[name] = merged.get(name, 0.0) + coef
        return LinExpr.of(merged, self.constant + other.constant)

    def to_dict(self) -> dict:
        return {"terms": {n: c for n, c in self.terms}, "constant": self.constant}

    @classmethod
    def from_dict(cls, data: Mapping) -> LinExpr:
        return cls.of(data.get("terms", {}), data.get("constant", 0.0))


@dataclass(frozen=True)
class PwlExpr:
    """Linear part plus weighted ``|expr|`` and ``max(expr, 0)`` terms."""

    linear: LinExpr = LinExpr()
    abs_terms: tuple[tuple[float, LinExpr], ...] = ()
    max_terms: tuple[tuple[float, LinExpr], ...] = ()

    def variables(self) -> set[str]:
        names = self.linear.variables()
        for _, e in self.abs_terms + self.max_terms:
            names |= e.variables()
        return names

    def evaluate(self, values: Mapping[str, float]) -> float:
        total = self.linear.evaluate(values)
        for coef, e in self.abs_terms:
            total += coef * abs(e.evaluate(values))
        for coef, e in self.max_terms:
            total += coef * max(e.evaluate(values), 0.0)
        return total

    def is_concave(self) -> bool:
        return all(c <= 0 for c, _ in self.abs_terms + self.max_terms)

    def to_dict(self) -> dict:
        return {
            "linear": self.linear.to_dict(),
            "abs": [{"coef": c, "expr": e.to_dict()} for c, e in self.abs_terms],
            "max0": [{"coef": c, "expr": e.to_dict()} for c, e in self.max_terms],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> PwlExpr:
        return cls(
            LinExpr.from_dict(data.get("linear", {})),
            tuple((float(t["coef"]), LinExpr.from_dict(t["expr"])) for t in data.get("abs", [])),
            tuple((float(t["coef"]), LinExpr.from_dict(t["expr"])) for t in data.get("max0", [])),
        )


@dataclass(frozen=True)
class Constraint:
    expr: LinExpr
    sense: str
    rhs: float
    name: str = ""

    def __post_init__(self):
        if self.sense not in SENSES:
            raise ProblemError(f"constraint {self.name!r}: unknown sense {self.sense!r}")

    def slack(self, values: Mapping[str, float]) -> float:
        """Signed slack; negative means violated (equalities report ``-|residual|``)."""
        lhs = self.expr.evaluate(values)
        if self.sense == "<=":
            return self.rhs - lhs
        if self.sense == ">=":
            return lhs - self.rhs
        return -abs(lhs - self.rhs)

    def to_dict(self) -> dict:
        return {"name": self.name, "expr": self.expr.to_dict(), "sense": self.sense, "rhs": self.rhs}

    @classmethod
    def from_dict(cls, data: Mapping) -> Constraint:
        return cls(LinExpr.from_dict(data["expr"]), data["sense"], float(data["rhs"]), data.get("name", ""))


@dataclass(frozen=True)
class Violation:
    constraint: str
    slack: float


@dataclass(frozen=True)
class PlanningProblem:
    vars: tuple[VarDecl, ...]
    reward: PwlExpr
    init: tuple[float, ...]
    horizon: int
    global_constraints: tuple[Constraint, ...] = ()
    goal: tuple[Constraint, ...] = ()
    name: str = ""
    constants: Mapping = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "vars", tuple(self.vars))
        object.__setattr__(self, "init", tuple(float(v) for v in self.init))
        object.__setattr__(self, "global_constraints", tuple(self.global_constraints))
        object.__setattr__(self, "goal", tuple(self.goal))
        self.validate()

    # -- structure -----------------------------------------------------
    @property
    def states(self) -> tuple[VarDecl, ...]:
        return tuple(v for v in self.vars if v.kind == "state")

    @property
    def actions(self) -> tuple[VarDecl, ...]:
        return tuple(v for v in self.vars if v.kind == "action")

    @property
    def state_names(self) -> list[str]:
        return [v.name for v in self.states]

    @property
    def action_names(self) -> list[str]:
        return [v.name for v in self.actions]

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    @property
    def action_lower(self) -> np.ndarray:
        return np.array([v.lower for v in self.actions], dtype=float)

    @property
    def action_upper(self) -> np.ndarray:
        return np.array([v.upper for v in self.actions], dtype=float)

    @property
    def state_lower(self) -> np.ndarray:
        return np.array([v.lower for v in self.states], dtype=float)

    @property
    def state_upper(self) -> np.ndarray:
        return np.array([v.upper for v in self.states], dtype=float)

    @property
    def noop_action(self) -> np.ndarray:
        return np.array([v.default for v in self.actions], dtype=float)

    def var(self, name: str) -> VarDecl:
        for v in self.vars:
            if v.name == name:
                return v
        raise KeyError(name)

    def validate(self) -> None:
        names = [v.name for v in self.vars]
        if len(set(names)) != len(names):
            raise ProblemError("variable names must be unique")
        if self.horizon < 1:
            raise ProblemError("horizon must be a positive integer")
        if len(self.init) != self.n_states:
            raise DimensionError(
                f"init has {len(self.init)} entries, expected {self.n_states} state values")
        declared = set(names)
        for expr_vars, where in [(self.reward.variables(), "reward")] + [
            (c.expr.variables(), f"constraint {c.name!r}") for c in self.global_constraints
        ]:
            unknown = expr_vars - declared
            if unknown:
                raise ProblemError(f"{where} references undeclared variables {sorted(unknown)}")
        actions = set(self.action_names)
        for c in self.goal:
            bad = c.expr.variables() & actions or c.expr.variables() - declared
            if bad:
                raise ProblemError(f"goal constraint {c.name!r} may reference final states only: {sorted(bad)}")

    def with_init(self, state: Sequence[float]) -> PlanningProblem:
        return replace(self, init=tuple(float(x) for x in state))

    def with_horizon(self, horizon: int) -> PlanningProblem:
        return replace(self, horizon=int(horizon))

    def reward_is_nonpositive(self) -> bool:
        """True when the reward is <= 0 for every point of the declared box.

        Requires concave |.| and max(.,0) terms and a linear part whose
        maximum over the declared variable bounds is <= 0.
        """
        if not self.reward.is_concave():
            return False
        top = self.reward.linear.constant
        for name, coef in self.reward.linear.terms:
            v = self.var(name)
            top += coef * (v.upper if coef > 0 else v.lower)
        return bool(top <= 1e-12)

    # -- evaluation helpers ----------------------------------------------
    def _values(self, state, action) -> dict[str, float]:
        state = np.asarray(state, dtype=float).ravel()
        action = np.asarray(action, dtype=float).ravel()
        for vec, decls, label in ((state, self.states, "state"), (action, self.actions, "action")):
            if vec.size != len(decls):
                missing = decls[min(vec.size, len(decls) - 1)].name if decls else None
                raise DimensionError(
                    f"{label} vector has {vec.size} entries, expected {len(decls)}"
                    + (f" (offending variable {missing!r})" if missing else ""),
                    variable=missing,
                )
        values = {d.name: float(x) for d, x in zip(self.states, state)}
        values.update({d.name: float(x) for d, x in zip(self.actions, action)})
        return values

    # -- serialization ----------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "horizon": self.horizon,
            "vars": [
                {"name": v.name, "kind": v.kind, "lower": v.lower, "upper": v.upper, "default": v.default}
                for v in self.vars
            ],
            "init": list(self.init),
            "reward": self.reward.to_dict(),
            "global_constraints": [c.to_dict() for c in self.global_constraints],
            "goal": [c.to_dict() for c in self.goal],
            "constants": dict(self.constants),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> PlanningProblem:
        return cls(
            vars=tuple(
                VarDecl(v["name"], v["kind"], _num(v["lower"]), _num(v["upper"]), v.get("default"))
                for v in data["vars"]
            ),
            reward=PwlExpr.from_dict(data["reward"]),
            init=tuple(data["init"]),
            horizon=int(data["horizon"]),
            global_constraints=tuple(Constraint.from_dict(c) for c in data.get("global_constraints", [])),
            goal=tuple(Constraint.from_dict(c) for c in data.get("goal", [])),
            name=data.get("name", ""),
            constants=data.get("constants", {}),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, default=_json_default))

    @classmethod
    def load(cls, path: str | Path) -> PlanningProblem:
        return cls.from_dict(json.loads(Path(path).read_text()))


def _num(x) -> float:
    if isinstance(x, str):
        return float(x)  # accepts "inf" / "-inf"
    return float(x)


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def evaluate_reward(problem: PlanningProblem, state, action) -> float:
    """Single-step reward ``R(s_{t+1}, a_t)``; ``state`` is the post-transition state."""
    return problem.reward.evaluate(problem._values(state, action))


def total_reward(problem: PlanningProblem, next_states: Iterable, actions: Iterable) -> float:
    return float(sum(evaluate_reward(problem, s, a) for s, a in zip(next_states, actions)))


def check_constraints(problem: PlanningProblem, state, action, tol: float = 1e-9) -> list[Violation]:
    """Action-bound and global-constraint violations at one step."""
    values = problem._values(state, action)
    out: list[Violation] = []
    for decl in problem.actions:
        x = values[decl.name]
        if x < decl.lower - tol:
            out.append(Violation(f"bound:{decl.name}", x - decl.lower))
        elif x > decl.upper + tol:
            out.append(Violation(f"bound:{decl.name}", decl.upper - x))
    for i, c in enumerate(problem.global_constraints):
        s = c.slack(values)
        if s < -tol:
            out.append(Violation(c.name or f"c{i}", s))
    return out


def check_goal(problem: PlanningProblem, final_state, tol: float = 1e-9) -> list[Violation]:
    values = {d.name: float(x) for d, x in zip(problem.states, np.asarray(final_state, float).ravel())}
    out = []
    for i, c in enumerate(problem.goal):
        s = c.slack(values)
        if s < -tol:
            out.append(Violation(c.name or f"goal{i}", s))
    return out


def is_finite_box(lower, upper) -> bool:
    return all(math.isfinite(x) for x in list(lower) + list(upper))
