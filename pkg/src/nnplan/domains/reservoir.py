"""Reservoir control: water levels with evaporation and cascading releases.

``l'_r = l_r + sum of releases from upstream reservoirs - f_r - e_r`` with
evaporation ``e_r = 0.5 * sin(0.5 * l_r) * 0.1`` and releases ``0 <= f_r <= l_r``.
"""

from __future__ import annotations

import numpy as np

from nnplan import autodiff as ad
from nnplan.domains.base import ConstraintViolation, Domain, DomainError, batched
from nnplan.problem import Constraint, LinExpr, PlanningProblem, PwlExpr, VarDecl

FLOW_TOL = 1e-9


def evaporation(levels):
    return 0.5 * np.sin(0.5 * np.asarray(levels, float)) * 0.1


def inflow_matrix(downstream, n: int) -> np.ndarray:
    """``D[u, r] = 1`` when reservoir ``u`` releases into ``r``."""
    D = np.zeros((n, n))
    for u, r in enumerate(downstream):
        if r is not None and r >= 0:
            D[u, r] = 1.0
    return D


def step_reservoir(levels, flows, downstream, check: bool = True) -> np.ndarray:
    """Exact level update for arrays of shape ``(..., n)``.

    With ``check`` the release constraint ``0 <= f <= l`` is enforced (a
    level pushed below zero by evaporation admits only ``f = 0``).
    """
    levels = np.asarray(levels, float)
    flows = np.asarray(flows, float)
    n = levels.shape[-1]
    if check:
        bad = (flows < -FLOW_TOL) | (flows > np.maximum(levels, 0.0) + FLOW_TOL)
        if bad.any():
            idx = sorted(set(np.nonzero(bad)[-1].tolist()))
            raise ConstraintViolation(f"release outside [0, level] for reservoir(s) {idx}", idx)
    D = inflow_matrix(downstream, n)
    return levels + flows @ D - flows - evaporation(levels)


class Reservoir(Domain):
    kind = "reservoir"

    def validate(self):
        c = self.constants
        n = len(c["downstream"])
        for key in ("rmax", "lower", "upper", "capacity"):
            if len(c[key]) != n:
                raise DomainError(f"reservoir constant {key!r} needs {n} entries")
        if len(self.init) != n:
            raise DomainError("init needs one level per reservoir")
        # acyclic: following downstream links must terminate
        for start in range(n):
            seen, r = set(), start
            while r is not None and r >= 0:
                if r in seen:
                    raise DomainError("reservoir topology has a cycle")
                seen.add(r)
                r = c["downstream"][r]

    @property
    def n_states(self):
        return len(self.constants["downstream"])

    @property
    def n_actions(self):
        return self.n_states

    @property
    def midpoints(self):
        c = self.constants
        return (np.asarray(c["lower"], float) + np.asarray(c["upper"], float)) / 2.0

    @batched
    def step(self, state, action, check: bool = True):
        return step_reservoir(state, action, self.constants["downstream"], check)

    def step_graph(self, state, action):
        D = inflow_matrix(self.constants["downstream"], self.n_states)
        evap = ad.scale(ad.sin(ad.scale(state, 0.5)), 0.05)
        return ad.sub(ad.add(state, ad.sub(ad.matmul(action, D), action)), evap)

    def problem(self, init=None, horizon=None) -> PlanningProblem:
        c = self.constants
        n = self.n_states
        lo_b, hi_b = c.get("level_bounds", [-np.inf, np.inf])
        vars_ = [VarDecl(f"l{r + 1}", "state", float(lo_b), float(hi_b)) for r in range(n)]
        vars_ += [VarDecl(f"f{r + 1}", "action", 0.0, float(c["rmax"][r])) for r in range(n)]
        mid = self.midpoints
        abs_terms, max_terms = [], []
        for r in range(n):
            l = f"l{r + 1}"
            abs_terms.append((-0.1, LinExpr.of({l: 1.0}, -mid[r])))
            max_terms.append((-100.0, LinExpr.of({l: -1.0}, float(c["lower"][r]))))
            max_terms.append((-5.0, LinExpr.of({l: 1.0}, -float(c["upper"][r]))))
        cons = [Constraint(LinExpr.of({f"f{r + 1}": 1.0, f"l{r + 1}": -1.0}), "<=", 0.0,
                           f"release{r + 1}") for r in range(n)]
        return PlanningProblem(tuple(vars_), PwlExpr(LinExpr(), tuple(abs_terms), tuple(max_terms)),
                               tuple(self.init if init is None else init),
                               int(horizon or self.horizon), tuple(cons), (), self.name,
                               dict(c))

    def baseline(self, state):
        """Release whatever exceeds the middle of the desired range."""
        state = np.asarray(state, float)
        rmax = np.asarray(self.constants["rmax"], float)
        f = np.clip(state - self.midpoints, 0.0, None)
        return np.minimum(np.minimum(f, rmax), np.maximum(state, 0.0))

    def project_action(self, state, action):
        rmax = np.asarray(self.constants["rmax"], float)
        top = np.minimum(rmax, np.maximum(np.asarray(state, float), 0.0))
        return np.clip(np.asarray(action, float), 0.0, top)

    def sample_action(self, rng, state):
        """``f ~ U[0, min(l, l - e(l), r_max)]`` per reservoir.

        The extra ``l - e(l)`` cap keeps exploration levels non-negative, so
        every generated row also satisfies ``f <= l`` at the next step.
        """
        state = np.atleast_2d(np.asarray(state, float))
        rmax = np.asarray(self.constants["rmax"], float)
        top = np.minimum(rmax, np.maximum(np.minimum(state, state - evaporation(state)), 0.0))
        return rng.random(state.shape) * top

    def sample_range(self):
        cap = np.asarray(self.constants["capacity"], float)
        return np.zeros_like(cap), cap
