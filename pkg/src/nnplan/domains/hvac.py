"""Room temperature control with heat exchange between adjacent rooms.

``p'_r = p_r + dt / C_r * (b_r + sum over neighbours q of (p_q - p_r) / R_rq)``
with heating inputs ``0 <= b_r <= b_max``.
"""

from __future__ import annotations

import numpy as np

from nnplan import autodiff as ad
from nnplan.domains.base import Domain, DomainError, batched
from nnplan.problem import LinExpr, PlanningProblem, PwlExpr, VarDecl


def conduction_matrix(n: int, edges) -> np.ndarray:
    """``K`` with ``(p @ K)_r = sum_q (p_q - p_r) / R_rq``."""
    K = np.zeros((n, n))
    for i, j, R in edges:
        if i == j:
            raise DomainError("a room cannot be adjacent to itself")
        g = 1.0 / float(R)
        K[j, i] += g
        K[i, j] += g
        K[i, i] -= g
        K[j, j] -= g
    return K


def step_hvac(temps, heats, capacity, dt: float, edges) -> np.ndarray:
    temps = np.asarray(temps, float)
    heats = np.asarray(heats, float)
    K = conduction_matrix(temps.shape[-1], edges)
    return temps + dt / np.asarray(capacity, float) * (heats + temps @ K)


class HVAC(Domain):
    kind = "hvac"

    def validate(self):
        c = self.constants
        n = len(c["capacity"])
        if len(self.init) != n:
            raise DomainError("init needs one temperature per room")
        for i, j, R in c["edges"]:
            if not (0 <= i < n and 0 <= j < n) or R <= 0:
                raise DomainError(f"bad adjacency entry {(i, j, R)}")
        if min(c["capacity"]) <= 0:
            raise DomainError("heat capacities must be positive")

    @property
    def n_states(self):
        return len(self.constants["capacity"])

    @property
    def n_actions(self):
        return self.n_states

    @property
    def midpoint(self) -> float:
        return (self.constants["comfort"][0] + self.constants["comfort"][1]) / 2.0

    @batched
    def step(self, state, action, check: bool = True):
        c = self.constants
        return step_hvac(state, action, c["capacity"], c["dt"], c["edges"])

    def step_graph(self, state, action):
        c = self.constants
        K = conduction_matrix(self.n_states, c["edges"])
        gain = c["dt"] / np.asarray(c["capacity"], float)
        return ad.add(state, ad.mul(ad.add(action, ad.matmul(state, K)), gain))

    def problem(self, init=None, horizon=None) -> PlanningProblem:
        c = self.constants
        n = self.n_states
        lo_b, hi_b = c.get("temp_bounds", [-np.inf, np.inf])
        m, top = c["comfort"]
        vars_ = [VarDecl(f"p{r + 1}", "state", float(lo_b), float(hi_b)) for r in range(n)]
        vars_ += [VarDecl(f"b{r + 1}", "action", 0.0, float(c["bmax"])) for r in range(n)]
        linear = LinExpr.of({f"b{r + 1}": -float(c["heat_cost"]) for r in range(n)})
        abs_terms, max_terms = [], []
        for r in range(n):
            p = f"p{r + 1}"
            abs_terms.append((-10.0, LinExpr.of({p: 1.0}, -self.midpoint)))
            max_terms.append((-0.1, LinExpr.of({p: 1.0}, -float(top))))
            max_terms.append((-0.1, LinExpr.of({p: -1.0}, float(m))))
        return PlanningProblem(tuple(vars_), PwlExpr(linear, tuple(abs_terms), tuple(max_terms)),
                               tuple(self.init if init is None else init),
                               int(horizon or self.horizon), (), (), self.name, dict(c))

    def baseline(self, state):
        """Full heat in every room colder than the middle of the comfort range."""
        state = np.asarray(state, float)
        return np.where(state < self.midpoint, float(self.constants["bmax"]), 0.0)

    def project_action(self, state, action):
        return np.clip(np.asarray(action, float), 0.0, float(self.constants["bmax"]))

    def sample_range(self):
        lo, hi = self.constants["sample_range"]
        n = self.n_states
        return np.full(n, float(lo)), np.full(n, float(hi))
