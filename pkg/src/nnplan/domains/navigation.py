"""Point navigation in a square maze whose centre slows movement down.

``P' = clip(P + dP * (2 / (1 + exp(-2 d)) - 0.99), p_min, p_max)`` where ``d``
is the Euclidean distance from ``P`` to the centre of the maze.
"""

from __future__ import annotations

import numpy as np

from nnplan import autodiff as ad
from nnplan.domains.base import Domain, DomainError, batched
from nnplan.problem import LinExpr, PlanningProblem, PwlExpr, VarDecl


def slowdown(distance):
    return 2.0 / (1.0 + np.exp(-2.0 * np.asarray(distance, float))) - 0.99


def step_navigation(pos, move, center, pmin: float, pmax: float) -> np.ndarray:
    pos = np.asarray(pos, float)
    move = np.asarray(move, float)
    d = np.linalg.norm(pos - np.asarray(center, float), axis=-1, keepdims=True)
    return np.clip(pos + move * slowdown(d), pmin, pmax)


class Navigation(Domain):
    kind = "navigation"

    def validate(self):
        c = self.constants
        if len(self.init) != 2 or len(c["goal"]) != 2 or len(c["center"]) != 2:
            raise DomainError("navigation is two-dimensional")
        if not c["pmin"] < c["pmax"] or not c["dmin"] < c["dmax"]:
            raise DomainError("empty maze or move range")
        if not all(c["pmin"] <= v <= c["pmax"] for v in c["center"]):
            raise DomainError("the centre must lie inside the maze")

    n_states = 2
    n_actions = 2

    @batched
    def step(self, state, action, check: bool = True):
        c = self.constants
        return step_navigation(state, action, c["center"], c["pmin"], c["pmax"])

    def step_graph(self, state, action):
        c = self.constants
        diff = ad.add(state, -np.asarray(c["center"], float))
        dist = ad.sqrt(ad.matmul(ad.square(diff), np.ones((2, 1))))
        mult = ad.add(ad.scale(ad.sigmoid(ad.scale(dist, 2.0)), 2.0), -0.99)
        return ad.clip(ad.add(state, ad.mul(action, mult)), c["pmin"], c["pmax"])

    def problem(self, init=None, horizon=None) -> PlanningProblem:
        c = self.constants
        margin = float(c.get("bound_margin", 0.0))
        lo, hi = c["pmin"] - margin, c["pmax"] + margin
        vars_ = (VarDecl("x", "state", lo, hi), VarDecl("y", "state", lo, hi),
                 VarDecl("dx", "action", float(c["dmin"]), float(c["dmax"])),
                 VarDecl("dy", "action", float(c["dmin"]), float(c["dmax"])))
        gx, gy = c["goal"]
        reward = PwlExpr(LinExpr(), ((-1.0, LinExpr.of({"x": 1.0}, -float(gx))),
                                     (-1.0, LinExpr.of({"y": 1.0}, -float(gy)))), ())
        return PlanningProblem(vars_, reward, tuple(self.init if init is None else init),
                               int(horizon or self.horizon), (), (), self.name, dict(c))

    def baseline(self, state):
        """Head straight for the goal, as far as one move allows."""
        c = self.constants
        return np.clip(np.asarray(c["goal"], float) - np.asarray(state, float),
                       c["dmin"], c["dmax"])

    def project_action(self, state, action):
        c = self.constants
        return np.clip(np.asarray(action, float), c["dmin"], c["dmax"])

    def sample_range(self):
        c = self.constants
        return np.full(2, float(c["pmin"])), np.full(2, float(c["pmax"]))
