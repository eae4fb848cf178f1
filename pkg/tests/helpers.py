"""Shared builders and independent oracles for the test suite."""

from __future__ import annotations

import itertools
import math
from dataclasses import replace

import numpy as np
from scipy.optimize import linprog

from nnplan.milp import MilpModel
from nnplan.network import Network, fold_standardization, init_network
from nnplan.problem import LinExpr, PlanningProblem, PwlExpr, VarDecl


def random_net(rng: np.random.Generator, n_states: int, n_actions: int, hidden=(),
               folded: bool = True, bias_scale: float = 0.3, seed: int = 0) -> Network:
    """Glorot net with random biases and random standardization statistics."""
    n = n_states + n_actions
    net = init_network(n_states, n_actions, tuple(int(h) for h in hidden), seed=seed, dropout=0.0,
                       mean=rng.normal(size=n), std=rng.uniform(0.5, 2.0, n))
    net = replace(net, biases=tuple(b + rng.normal(scale=bias_scale, size=b.shape)
                                    for b in net.biases))
    return fold_standardization(net) if folded else net


def tiny_problem(rng: np.random.Generator, n_states: int, n_actions: int, horizon: int,
                 action_box=(-1.0, 1.0), with_max: bool = True) -> PlanningProblem:
    """Free states, boxed actions and a concave piecewise-linear reward."""
    lo, hi = action_box
    vars_ = [VarDecl(f"s{i}", "state", -math.inf, math.inf) for i in range(n_states)]
    vars_ += [VarDecl(f"a{j}", "action", lo, hi) for j in range(n_actions)]
    abs_terms = tuple((-float(rng.uniform(0.5, 2.0)), LinExpr.of({f"s{i}": 1.0}, float(rng.normal())))
                      for i in range(n_states))
    max_terms = ()
    if with_max:
        max_terms = ((-float(rng.uniform(0.5, 2.0)),
                      LinExpr.of({f"s{n_states - 1}": 1.0, "a0": -1.0}, float(rng.normal()))),)
    linear = LinExpr.of({"s0": float(rng.normal()), "a0": float(rng.normal())})
    return PlanningProblem(tuple(vars_), PwlExpr(linear, abs_terms, max_terms),
                           tuple(rng.normal(size=n_states)), horizon)


def linprog_oracle(c, A, senses, rhs, lower, upper, maximize: bool = True):
    """(status, objective) from HiGHS via scipy."""
    A = np.atleast_2d(np.asarray(A, float))
    senses = list(senses)
    ub, bu, eq, be = [], [], [], []
    for row, s, b in zip(A, senses, rhs):
        if s == "<=":
            ub.append(row), bu.append(b)
        elif s == ">=":
            ub.append(-row), bu.append(-b)
        else:
            eq.append(row), be.append(b)
    c = np.asarray(c, float)
    res = linprog(-c if maximize else c,
                  A_ub=np.array(ub) if ub else None, b_ub=bu or None,
                  A_eq=np.array(eq) if eq else None, b_eq=be or None,
                  bounds=list(zip(lower, upper)), method="highs")
    status = {0: "optimal", 2: "infeasible", 3: "unbounded"}.get(res.status, "error")
    if status != "optimal":
        return status, math.nan
    return status, float(-res.fun if maximize else res.fun)


def enumerate_milp(model: MilpModel):
    """Best objective over every binary assignment, LP over the continuous rest."""
    A, senses, rhs = model.constraint_matrix()
    c = model.objective_vector()
    lo, up = model.bounds()
    maximize = model.sense == "max"
    bins = model.binary_indices
    cont = np.setdiff1d(np.arange(model.n_vars), bins)
    best = -math.inf if maximize else math.inf
    for assign in itertools.product((0.0, 1.0), repeat=len(bins)):
        xb = np.array(assign)
        shift = A[:, bins] @ xb if len(rhs) else np.zeros(0)
        fixed = float(c[bins] @ xb) + model.obj_constant
        if len(cont):
            status, val = linprog_oracle(c[cont], A[:, cont] if len(rhs) else np.zeros((0, len(cont))),
                                         senses, np.asarray(rhs) - shift, lo[cont], up[cont],
                                         maximize)
            if status == "unbounded":
                return "unbounded", math.inf if maximize else -math.inf
            if status != "optimal":
                continue
        else:
            lhs = shift - np.asarray(rhs)
            ok = all((s == "<=" and v <= 1e-9) or (s == ">=" and v >= -1e-9) or
                     (s == "==" and abs(v) <= 1e-9) for s, v in zip(senses, lhs))
            if not ok:
                continue
            val = 0.0
        total = val + fixed
        best = max(best, total) if maximize else min(best, total)
    if not math.isfinite(best):
        return "infeasible", math.nan
    return "optimal", best


def central_diff(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    x = np.array(x, float)
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        up, dn = x.copy(), x.copy()
        up[idx] += h
        dn[idx] -= h
        g[idx] = (f(up) - f(dn)) / (2 * h)
    return g


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """Largest relative error over coordinates whose analytic value exceeds ``floor``."""
    a, n = np.ravel(analytic), np.ravel(numeric)
    mask = np.abs(a) > floor
    if not mask.any():
        return 0.0
    return float(np.max(np.abs(a[mask] - n[mask]) / np.maximum(np.abs(a[mask]), np.abs(n[mask]))))
