"""Solver-agnostic MILP container and result type."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

CONTINUOUS = "continuous"
BINARY = "binary"
SENSES = ("<=", "==", ">=")

STATUSES = ("optimal", "gap-reached", "infeasible", "time-limit", "unbounded")


class ModelError(ValueError):
    pass


@dataclass
class MilpVar:
    name: str
    kind: str
    lower: float
    upper: float


@dataclass
class MilpConstraint:
    name: str
    indices: tuple[int, ...]
    coefs: tuple[float, ...]
    sense: str
    rhs: float


class MilpModel:
    """Variables with bounds, sparse linear constraints and a linear objective."""

    def __init__(self, name: str = "model"):
        self.name = name
        self.vars: list[MilpVar] = []
        self.constraints: list[MilpConstraint] = []
        self.objective: dict[int, float] = {}
        self.obj_constant = 0.0
        self.sense = "max"
        self._index: dict[str, int] = {}

    # -- building -------------------------------------------------------
    def add_var(self, name: str, lower: float = 0.0, upper: float = math.inf,
                kind: str = CONTINUOUS) -> int:
        if name in self._index:
            raise ModelError(f"duplicate variable name {name!r}")
        if kind not in (CONTINUOUS, BINARY):
            raise ModelError(f"unknown variable kind {kind!r}")
        lower, upper = float(lower), float(upper)
        if kind == BINARY:
            lower, upper = max(lower, 0.0), min(upper, 1.0)
        if lower > upper or math.isnan(lower) or math.isnan(upper):
            raise ModelError(f"variable {name!r}: empty bound interval [{lower}, {upper}]")
        self.vars.append(MilpVar(name, kind, lower, upper))
        self._index[name] = len(self.vars) - 1
        return len(self.vars) - 1

    def add_constraint(self, coeffs: Mapping[int, float] | Iterable[tuple[int, float]],
                       sense: str, rhs: float, name: str | None = None) -> int:
        if sense not in SENSES:
            raise ModelError(f"unknown sense {sense!r}")
        items = coeffs.items() if isinstance(coeffs, Mapping) else coeffs
        merged: dict[int, float] = {}
        for i, c in items:
            if not 0 <= i < len(self.vars):
                raise ModelError(f"constraint references unknown variable id {i}")
            merged[i] = merged.get(i, 0.0) + float(c)
        merged = {i: c for i, c in merged.items() if c != 0.0}
        if not all(math.isfinite(c) for c in merged.values()) or not math.isfinite(rhs):
            raise ModelError(f"constraint {name!r} has non-finite data")
        idx = tuple(sorted(merged))
        self.constraints.append(MilpConstraint(
            name or f"c{len(self.constraints)}", idx, tuple(merged[i] for i in idx), sense, float(rhs)))
        return len(self.constraints) - 1

    def set_objective(self, coeffs: Mapping[int, float], sense: str = "max", constant: float = 0.0):
        if sense not in ("max", "min"):
            raise ModelError("objective sense must be 'max' or 'min'")
        merged: dict[int, float] = {}
        for i, c in coeffs.items():
            merged[i] = merged.get(i, 0.0) + float(c)
        self.objective = {i: c for i, c in merged.items() if c != 0.0}
        self.sense = sense
        self.obj_constant = float(constant)

    def set_bounds(self, i: int, lower: float, upper: float) -> None:
        v = self.vars[i]
        if lower > upper:
            raise ModelError(f"variable {v.name!r}: empty bound interval [{lower}, {upper}]")
        v.lower, v.upper = float(lower), float(upper)

    def copy(self) -> MilpModel:
        return copy.deepcopy(self)

    # -- queries ----------------------------------------------------------
    def var_index(self, name: str) -> int:
        return self._index[name]

    @property
    def n_vars(self) -> int:
        return len(self.vars)

    @property
    def n_constraints(self) -> int:
        return len(self.constraints)

    @property
    def binary_indices(self) -> np.ndarray:
        return np.array([i for i, v in enumerate(self.vars) if v.kind == BINARY], dtype=int)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.array([v.lower for v in self.vars], float),
                np.array([v.upper for v in self.vars], float))

    def objective_vector(self) -> np.ndarray:
        c = np.zeros(self.n_vars)
        for i, v in self.objective.items():
            c[i] = v
        return c

    def constraint_matrix(self) -> tuple[np.ndarray, list[str], np.ndarray]:
        A = np.zeros((self.n_constraints, self.n_vars))
        for r, con in enumerate(self.constraints):
            A[r, list(con.indices)] = con.coefs
        return A, [c.sense for c in self.constraints], np.array([c.rhs for c in self.constraints], float)

    def evaluate(self, x) -> float:
        x = np.asarray(x, float)
        return self.obj_constant + sum(c * x[i] for i, c in self.objective.items())

    def max_violation(self, x, int_tol: float = 1e-6) -> float:
        """Largest bound, row or integrality violation of a point."""
        x = np.asarray(x, float)
        worst = 0.0
        for i, v in enumerate(self.vars):
            worst = max(worst, v.lower - x[i], x[i] - v.upper)
            if v.kind == BINARY:
                worst = max(worst, abs(x[i] - round(x[i])) - int_tol)
        for con in self.constraints:
            lhs = sum(c * x[i] for i, c in zip(con.indices, con.coefs))
            if con.sense == "<=":
                worst = max(worst, lhs - con.rhs)
            elif con.sense == ">=":
                worst = max(worst, con.rhs - lhs)
            else:
                worst = max(worst, abs(lhs - con.rhs))
        return worst

    def check(self) -> None:
        for v in self.vars:
            if v.kind == BINARY and (v.lower < 0 or v.upper > 1):
                raise ModelError(f"binary {v.name!r} has bounds outside [0, 1]")
        for i, c in self.objective.items():
            if not math.isfinite(c):
                raise ModelError("objective has non-finite coefficients")

    def relaxed(self) -> MilpModel:
        """Copy with binaries relaxed to continuous [0, 1] (current bounds kept)."""
        m = self.copy()
        for v in m.vars:
            v.kind = CONTINUOUS
        return m

    def __repr__(self):
        return (f"MilpModel({self.name!r}, vars={self.n_vars}, binaries={len(self.binary_indices)}, "
                f"constraints={self.n_constraints})")


@dataclass
class SolveResult:
    status: str
    x: np.ndarray | None = None
    objective: float = float("nan")
    bound: float = float("nan")
    gap: float = float("inf")
    nodes: int = 0
    wall_time: float = 0.0
    lp_iterations: int = 0
    limit: str | None = None
    trace: list = field(default_factory=list, repr=False)

    @property
    def has_incumbent(self) -> bool:
        return self.x is not None

    def value(self, model: MilpModel, name: str) -> float:
        return float(self.x[model.var_index(name)])


def relative_gap(bound: float, objective: float) -> float:
    return abs(bound - objective) / max(abs(objective), 1e-9)
