"""Compilation of planning over a learned ReLU network into a MILP.

Per step ``t`` the folded network reads ``[Y_t, X_t]``; every hidden unit
``g`` gets a continuous output ``P`` and an activation indicator ``P'``
linked by per-unit big-M constraints::

    P <= M P'               P <= M (1 - P') + pre       P >= pre,  P >= 0

and each output unit defines ``Y_{t+1} = pre``.  Bias units are constants.
``M`` is the interval-arithmetic bound on ``|pre|`` propagated from the
variable bounds.

The strengthened variant splits every input with a negative lower bound into
positive and negative parts with an indicator, and adds per unit the valid
inequality that ``P`` is at most the sum of the nonnegative contributions to
its pre-activation (positive weights on positive parts, negative weights on
negative parts, positive weights on earlier units, and a positive bias
gated by the unit's own indicator).

Rewards ``c * |e|`` and ``c * max(e, 0)`` with ``c <= 0`` are linearized with
one auxiliary variable and two inequalities each.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from nnplan.milp import BINARY, MilpModel, solve
from nnplan.milp.model import SolveResult
from nnplan.network import Network, forward
from nnplan.plan import PlanResult
from nnplan.problem import LinExpr, PlanningProblem

logger = logging.getLogger(__name__)


class CompileError(ValueError):
    pass


class InfeasibleProblem(RuntimeError):
    pass


@dataclass
class Bounds:
    """Per-step variable intervals.

    ``action_*`` have shape ``(H, |A|)`` for ``a_1..a_H`` and ``state_*`` have
    shape ``(H + 1, |S|)`` for ``s_1..s_{H+1}``.
    """

    action_lower: np.ndarray
    action_upper: np.ndarray
    state_lower: np.ndarray
    state_upper: np.ndarray
    action_source: np.ndarray = None
    state_source: np.ndarray = None

    def __post_init__(self):
        for name in ("action_lower", "action_upper", "state_lower", "state_upper"):
            setattr(self, name, np.array(getattr(self, name), dtype=float))
        if self.action_source is None:
            self.action_source = np.full(self.action_lower.shape, "declared", dtype=object)
        if self.state_source is None:
            self.state_source = np.full(self.state_lower.shape, "declared", dtype=object)

    @property
    def horizon(self) -> int:
        return len(self.action_lower)

    @classmethod
    def declared(cls, problem: PlanningProblem, horizon: int | None = None) -> Bounds:
        H = horizon or problem.horizon
        al = np.tile(problem.action_lower, (H, 1))
        au = np.tile(problem.action_upper, (H, 1))
        sl = np.tile(problem.state_lower, (H + 1, 1))
        su = np.tile(problem.state_upper, (H + 1, 1))
        sl[0] = su[0] = problem.init
        return cls(al, au, sl, su)

    def envelope(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Time-uniform hull ``(action_lo, action_hi, state_lo, state_hi)``."""
        return (self.action_lower.min(0), self.action_upper.max(0),
                self.state_lower.min(0), self.state_upper.max(0))

    def copy(self) -> Bounds:
        return Bounds(self.action_lower.copy(), self.action_upper.copy(), self.state_lower.copy(),
                      self.state_upper.copy(), self.action_source.copy(), self.state_source.copy())

    def to_dict(self) -> dict:
        return {k: np.asarray(getattr(self, k)).tolist() for k in
                ("action_lower", "action_upper", "state_lower", "state_upper",
                 "action_source", "state_source")}


@dataclass
class SignSplit:
    plus: int
    minus: int
    indicator: int


@dataclass
class EncodingVars:
    horizon: int
    X: np.ndarray                   # (H, |A|) variable ids
    Y: np.ndarray                   # (H + 1, |S|)
    P: list                         # [t][layer] -> ids of ReLU outputs
    Pb: list                        # [t][layer] -> ids of activation binaries
    big_m: list                     # [t][layer] -> M per unit
    pre_lower: list                 # [t][layer] -> interval of each pre-activation
    pre_upper: list
    state_lower: np.ndarray         # effective bounds used for Y
    state_upper: np.ndarray
    action_lower: np.ndarray
    action_upper: np.ndarray
    reward_aux: list = field(default_factory=list)   # (t, kind, coef, LinExpr, var id)
    x_split: dict = field(default_factory=dict)      # (t, action index) -> SignSplit
    y_split: dict = field(default_factory=dict)      # (t, state index) -> SignSplit
    strengthened: bool = False


# -- interval arithmetic ------------------------------------------------------

def _affine_interval(lo, hi, w, b):
    wp, wn = np.maximum(w, 0.0), np.minimum(w, 0.0)
    with np.errstate(invalid="ignore"):
        low = b + _safe_dot(lo, wp) + _safe_dot(hi, wn)
        high = b + _safe_dot(hi, wp) + _safe_dot(lo, wn)
    return low, high


def _safe_dot(v, w):
    """``v @ w`` where ``0 * inf`` counts as 0."""
    v = np.asarray(v, float)
    out = np.zeros(w.shape[1])
    for i in range(len(v)):
        row = w[i]
        nz = row != 0
        if nz.any():
            out[nz] += v[i] * row[nz]
    return out


def step_intervals(net: Network, s_lo, s_hi, a_lo, a_hi):
    """Pre-activation intervals of every layer for boxed inputs.

    Returns ``(pre_lo, pre_hi)`` lists with one array per layer; the last
    entry is the output (next-state) interval.
    """
    lo = np.concatenate([s_lo, a_lo])
    hi = np.concatenate([s_hi, a_hi])
    pre_lo, pre_hi = [], []
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        l, h = _affine_interval(lo, hi, w, b)
        pre_lo.append(l)
        pre_hi.append(h)
        if k < net.n_layers - 1:
            lo = np.concatenate([lo, np.maximum(l, 0.0)])
            hi = np.concatenate([hi, np.maximum(h, 0.0)])
    return pre_lo, pre_hi


def propagate(net: Network, bounds: Bounds):
    """Forward interval propagation intersected with the given state bounds.

    Returns ``(state_lo, state_hi, pre_lo, pre_hi)`` where the pre-activation
    lists are indexed ``[t][layer]``.
    """
    H = bounds.horizon
    sl, su = bounds.state_lower.copy(), bounds.state_upper.copy()
    pre_lo, pre_hi = [], []
    for t in range(H):
        pl, ph = step_intervals(net, sl[t], su[t], bounds.action_lower[t], bounds.action_upper[t])
        pre_lo.append(pl)
        pre_hi.append(ph)
        nl, nh = np.maximum(sl[t + 1], pl[-1]), np.minimum(su[t + 1], ph[-1])
        empty = nl > nh
        # an empty intersection means no trajectory fits the declared bounds; keep
        # the declared box so the solver reports infeasibility
        sl[t + 1] = np.where(empty, sl[t + 1], nl)
        su[t + 1] = np.where(empty, su[t + 1], nh)
    return sl, su, pre_lo, pre_hi


# -- compilation -------------------------------------------------------------------

def _check_inputs(problem: PlanningProblem, net: Network, H: int, bounds: Bounds):
    if not net.folded and net.mean is not None:
        raise CompileError("network must be folded to accept raw inputs")
    if net.n_states != problem.n_states or net.n_actions != problem.n_actions:
        raise CompileError(
            f"network has {net.n_states} states / {net.n_actions} actions, problem has "
            f"{problem.n_states} / {problem.n_actions}")
    if bounds.horizon != H:
        raise CompileError(f"bounds cover {bounds.horizon} steps, horizon is {H}")
    for c, _ in problem.reward.abs_terms + problem.reward.max_terms:
        if c > 0:
            raise CompileError("reward terms |.| and max(.,0) need non-positive coefficients "
                               "to be linearized without binaries")


def compile_base(problem: PlanningProblem, net: Network, horizon: int | None = None,
                 bounds: Bounds | None = None, fallback_m: float | None = None,
                 name: str | None = None) -> tuple[MilpModel, EncodingVars]:
    """Big-M encoding of the learned planning problem (maximization)."""
    return _compile(problem, net, horizon, bounds, fallback_m, False, name)


def compile_strengthened(problem: PlanningProblem, net: Network, horizon: int | None = None,
                         bounds: Bounds | None = None, fallback_m: float | None = None,
                         name: str | None = None) -> tuple[MilpModel, EncodingVars]:
    """Base encoding plus sign splits and the per-unit upper-bound inequality."""
    return _compile(problem, net, horizon, bounds, fallback_m, True, name)


def _compile(problem, net, horizon, bounds, fallback_m, strengthen, name):
    H = int(horizon or problem.horizon)
    bounds = bounds if bounds is not None else Bounds.declared(problem, H)
    _check_inputs(problem, net, H, bounds)
    al, au = bounds.action_lower, bounds.action_upper
    if not (np.all(np.isfinite(al)) and np.all(np.isfinite(au))) and fallback_m is None:
        bad = sorted({problem.action_names[j] for j in range(problem.n_actions)
                      if not (np.all(np.isfinite(al[:, j])) and np.all(np.isfinite(au[:, j])))})
        raise CompileError(f"action(s) {bad} are unbounded, so big-M values are undefined; "
                           "declare bounds or pass fallback_m")
    sl, su, pre_lo, pre_hi = propagate(net, bounds)
    init = np.asarray(problem.init, float)
    sl[0] = su[0] = init

    m = MilpModel(name or (problem.name or "plan") + ("-strengthened" if strengthen else "-base"))
    snames, anames = problem.state_names, problem.action_names
    nS, nA = problem.n_states, problem.n_actions
    X = np.array([[m.add_var(f"X[{a},{t + 1}]", al[t, j], au[t, j]) for j, a in enumerate(anames)]
                  for t in range(H)], dtype=int).reshape(H, nA)
    Y = np.array([[m.add_var(f"Y[{s},{t + 1}]", sl[t, i], su[t, i]) for i, s in enumerate(snames)]
                  for t in range(H + 1)], dtype=int).reshape(H + 1, nS)

    # initial state
    for i in range(nS):
        m.add_constraint({Y[0, i]: 1.0}, "==", init[i], f"init[{snames[i]}]")

    P, Pb, big_m = [], [], []
    for t in range(H):
        feats = list(Y[t]) + list(X[t])
        P_t, Pb_t, M_t = [], [], []
        for k, (w, b) in enumerate(zip(net.weights, net.biases)):
            lo_k, hi_k = pre_lo[t][k], pre_hi[t][k]
            if k == net.n_layers - 1:
                for i in range(nS):
                    coeffs = {Y[t + 1, i]: 1.0}
                    for f, wf in zip(feats, w[:, i]):
                        if wf != 0.0:
                            coeffs[f] = coeffs.get(f, 0.0) - wf
                    m.add_constraint(coeffs, "==", float(b[i]), f"out[{snames[i]},{t + 1}]")
                break
            width = w.shape[1]
            Ms = np.maximum(np.abs(lo_k), np.abs(hi_k))
            if fallback_m is not None:
                Ms = np.where(np.isfinite(Ms), Ms, fallback_m)
            p_ids, pb_ids = [], []
            for j in range(width):
                tag = f"{k + 1}.{j + 1},{t + 1}"
                Mj = float(max(Ms[j], 1e-9))
                p = m.add_var(f"P[{tag}]", 0.0, max(float(min(hi_k[j], Mj)), 0.0))
                pb_lo = 1.0 if lo_k[j] > 0 else 0.0
                pb_hi = 0.0 if hi_k[j] < 0 else 1.0
                pb = m.add_var(f"Pb[{tag}]", pb_lo, pb_hi, BINARY)
                pre = {}
                for f, wf in zip(feats, w[:, j]):
                    if wf != 0.0:
                        pre[f] = pre.get(f, 0.0) + float(wf)
                bj = float(b[j])
                m.add_constraint({p: 1.0, pb: -Mj}, "<=", 0.0, f"act[{tag}]")
                row = {p: 1.0, pb: Mj}
                for f, wf in pre.items():
                    row[f] = row.get(f, 0.0) - wf
                m.add_constraint(row, "<=", Mj + bj, f"on[{tag}]")
                row = {p: 1.0}
                for f, wf in pre.items():
                    row[f] = row.get(f, 0.0) - wf
                m.add_constraint(row, ">=", bj, f"lb[{tag}]")
                p_ids.append(p)
                pb_ids.append(pb)
            P_t.append(np.array(p_ids, dtype=int))
            Pb_t.append(np.array(pb_ids, dtype=int))
            M_t.append(np.asarray(Ms, float))
            feats = feats + p_ids
        P.append(P_t)
        Pb.append(Pb_t)
        big_m.append(M_t)

    enc = EncodingVars(H, X, Y, P, Pb, big_m, pre_lo, pre_hi, sl, su, al.copy(), au.copy(),
                       strengthened=strengthen)

    # global constraints at every step, goal constraints on the final state
    for t in range(H):
        ref = _refs(problem, Y[t], X[t])
        for ci, c in enumerate(problem.global_constraints):
            _add_linear(m, c.expr, ref, c.sense, c.rhs, f"C{ci}[{t + 1}]")
    ref_goal = _refs(problem, Y[H], None)
    for gi, c in enumerate(problem.goal):
        _add_linear(m, c.expr, ref_goal, c.sense, c.rhs, f"G{gi}")

    # objective: sum of rewards on (s_{t+1}, a_t)
    obj: dict[int, float] = {}
    const = 0.0
    rw = problem.reward
    for t in range(H):
        ref = _refs(problem, Y[t + 1], X[t])
        const += rw.linear.constant
        for nm, c in rw.linear.terms:
            obj[ref[nm]] = obj.get(ref[nm], 0.0) + c
        for kind, terms in (("abs", rw.abs_terms), ("max0", rw.max_terms)):
            for i, (c, e) in enumerate(terms):
                if c == 0.0:
                    continue
                z = m.add_var(f"R{kind}[{i + 1},{t + 1}]", 0.0, math.inf)
                _add_linear(m, e, ref, "<=", 0.0, f"R{kind}+[{i + 1},{t + 1}]", extra={z: -1.0})
                if kind == "abs":
                    _add_linear(m, e.scaled(-1.0), ref, "<=", 0.0, f"R{kind}-[{i + 1},{t + 1}]",
                                extra={z: -1.0})
                obj[z] = obj.get(z, 0.0) + c
                enc.reward_aux.append((t, kind, c, e, z))
    m.set_objective(obj, "max", const)

    if strengthen:
        _strengthen(m, net, enc, snames, anames)
    return m, enc


def _refs(problem: PlanningProblem, y_ids, x_ids) -> dict[str, int]:
    ref = {s: int(i) for s, i in zip(problem.state_names, y_ids)}
    if x_ids is not None:
        ref.update({a: int(i) for a, i in zip(problem.action_names, x_ids)})
    return ref


def _add_linear(m: MilpModel, expr: LinExpr, ref, sense, rhs, name, extra=None):
    coeffs: dict[int, float] = dict(extra or {})
    for nm, c in expr.terms:
        coeffs[ref[nm]] = coeffs.get(ref[nm], 0.0) + c
    m.add_constraint(coeffs, sense, rhs - expr.constant, name)


def _split(m: MilpModel, var: int, lo: float, hi: float, tag: str) -> SignSplit:
    plus = m.add_var(f"{tag}+", 0.0, max(hi, 0.0))
    minus = m.add_var(f"{tag}-", min(lo, 0.0), 0.0)
    ind = m.add_var(f"{tag}'", 0.0, 1.0, BINARY)
    m.add_constraint({var: 1.0, plus: -1.0, minus: -1.0}, "==", 0.0, f"split[{tag}]")
    m.add_constraint({var: 1.0, ind: -hi}, "<=", 0.0, f"pos[{tag}]")
    m.add_constraint({var: 1.0, ind: lo}, ">=", lo, f"neg[{tag}]")
    m.add_constraint({plus: 1.0, ind: -hi}, "<=", 0.0, f"plus[{tag}]")
    m.add_constraint({minus: 1.0, ind: lo}, ">=", lo, f"minus[{tag}]")
    return SignSplit(plus, minus, ind)


def _strengthen(m: MilpModel, net: Network, enc: EncodingVars, snames, anames) -> None:
    H = enc.horizon
    for t in range(H):
        for j, a in enumerate(anames):
            lo, hi = enc.action_lower[t, j], enc.action_upper[t, j]
            if lo < 0:
                enc.x_split[(t, j)] = _split(m, int(enc.X[t, j]), lo, hi, f"X[{a},{t + 1}]")
    for t in range(H + 1):
        for i, s in enumerate(snames):
            lo, hi = enc.state_lower[t, i], enc.state_upper[t, i]
            if lo < 0:
                enc.y_split[(t, i)] = _split(m, int(enc.Y[t, i]), lo, hi, f"Y[{s},{t + 1}]")

    nS, nA = len(snames), len(anames)
    for t in range(H):
        for k in range(net.n_layers - 1):
            w, b = net.weights[k], net.biases[k]
            for j in range(w.shape[1]):
                row: dict[int, float] = {int(enc.P[t][k][j]): -1.0}

                def put(v, c):
                    row[int(v)] = row.get(int(v), 0.0) + float(c)

                for i in range(nS):
                    wi = w[i, j]
                    sp = enc.y_split.get((t, i))
                    if wi > 0:
                        put(enc.Y[t, i] if sp is None else sp.plus, wi)
                    elif wi < 0 and sp is not None:
                        put(sp.minus, wi)
                for a in range(nA):
                    wi = w[nS + a, j]
                    sp = enc.x_split.get((t, a))
                    if wi > 0:
                        put(enc.X[t, a] if sp is None else sp.plus, wi)
                    elif wi < 0 and sp is not None:
                        put(sp.minus, wi)
                offset = nS + nA
                for kk in range(k):
                    for jj, f in enumerate(enc.P[t][kk]):
                        wi = w[offset + jj, j]
                        if wi > 0:
                            put(f, wi)
                    offset += len(enc.P[t][kk])
                if b[j] > 0:
                    put(enc.Pb[t][k][j], b[j])
                m.add_constraint(row, ">=", 0.0, f"ub[{k + 1}.{j + 1},{t + 1}]")


# -- helpers on compiled models ---------------------------------------------------

def fix_actions(model: MilpModel, enc: EncodingVars, actions) -> MilpModel:
    """Copy of the model with every ``X`` pinned by an equality constraint."""
    actions = np.asarray(actions, float).reshape(enc.X.shape)
    pinned = model.copy()
    for t in range(enc.horizon):
        for j in range(enc.X.shape[1]):
            pinned.add_constraint({int(enc.X[t, j]): 1.0}, "==", float(actions[t, j]),
                                  f"pin[{j + 1},{t + 1}]")
    return pinned


def extract_plan(result: SolveResult, enc: EncodingVars, horizon: int | None = None) -> PlanResult:
    if not result.has_incumbent:
        raise CompileError(f"no incumbent to extract (solver status {result.status!r})")
    H = horizon or enc.horizon
    x = result.x
    actions = x[enc.X[:H]]
    states = x[enc.Y[:H + 1]]
    diag = {"status": result.status, "bound": result.bound, "gap": result.gap,
            "nodes": result.nodes, "wall_time": result.wall_time,
            "lp_iterations": result.lp_iterations, "limit": result.limit}
    return PlanResult(np.array(actions), np.array(states), float(result.objective), diag)


def assignment_from_actions(problem: PlanningProblem, net: Network, model: MilpModel,
                            enc: EncodingVars, actions) -> np.ndarray:
    """Complete variable vector induced by rolling ``actions`` through the net.

    The point satisfies every encoding row by construction; whether it also
    respects the (possibly tightened) bounds and the problem constraints is
    left to the caller, e.g. via ``model.max_violation``.
    """
    H = enc.horizon
    actions = np.asarray(actions, float).reshape(H, problem.n_actions)
    x = np.zeros(model.n_vars)
    s = np.asarray(problem.init, float)
    x[enc.Y[0]] = s
    for t in range(H):
        x[enc.X[t]] = actions[t]
        nxt, hidden = forward(net, s, actions[t], return_hidden=True)
        for k, z in enumerate(hidden):
            x[enc.P[t][k]] = z
            x[enc.Pb[t][k]] = (z > 0).astype(float)
            # stable units keep their fixed indicator even at z == 0
            fixed = model_lower(model, enc.Pb[t][k])
            x[enc.Pb[t][k]] = np.maximum(x[enc.Pb[t][k]], fixed)
        x[enc.Y[t + 1]] = nxt
        s = nxt
    for t, kind, _, e, z in enc.reward_aux:
        ref = dict(zip(problem.state_names, x[enc.Y[t + 1]]))
        ref.update(zip(problem.action_names, x[enc.X[t]]))
        v = e.evaluate(ref)
        x[z] = abs(v) if kind == "abs" else max(v, 0.0)
    for (t, j), sp in enc.x_split.items():
        _fill_split(x, sp, x[enc.X[t, j]])
    for (t, i), sp in enc.y_split.items():
        _fill_split(x, sp, x[enc.Y[t, i]])
    return x


def model_lower(model: MilpModel, ids) -> np.ndarray:
    return np.array([model.vars[int(i)].lower for i in ids], float)


def _fill_split(x: np.ndarray, sp: SignSplit, v: float) -> None:
    x[sp.plus] = max(v, 0.0)
    x[sp.minus] = min(v, 0.0)
    x[sp.indicator] = 1.0 if v > 0 else 0.0


# -- bound preprocessing --------------------------------------------------------------

@dataclass
class PreprocessBudget:
    time_limit: float = 2.0
    node_limit: int = 500


def preprocess_bounds(problem: PlanningProblem, net: Network, horizon: int | None = None,
                      budget: PreprocessBudget | None = None, bounds: Bounds | None = None,
                      fallback_m: float | None = None) -> Bounds:
    """Tighten per-step bounds with min/max subproblems over the base encoding.

    Each subproblem runs under ``budget`` and contributes its best dual
    bound, which is valid whether or not it was solved to optimality.
    Actions are processed before states, each in increasing ``t``; the model
    is recompiled after every step so tightened bounds shrink later big-M
    values.
    """
    H = int(horizon or problem.horizon)
    budget = budget or PreprocessBudget()
    cur = (bounds or Bounds.declared(problem, H)).copy()
    # start from interval-propagated state bounds (always valid)
    sl, su, _, _ = propagate(net, cur)
    cur.state_lower[1:], cur.state_upper[1:] = sl[1:], su[1:]

    def tighten(ids_of, lo_arr, hi_arr, src, t, count):
        model, enc = compile_base(problem, net, H, cur, fallback_m)
        ids = ids_of(enc)
        for j in range(count):
            var = int(ids[t, j])
            new = []
            for sense in ("min", "max"):
                model.set_objective({var: 1.0}, sense)
                res = solve(model, time_limit=budget.time_limit, node_limit=budget.node_limit,
                            record_trace=False)
                if res.status == "infeasible":
                    raise InfeasibleProblem(
                        f"no trajectory of the learned model satisfies the constraints "
                        f"(while bounding {model.vars[var].name})")
                if res.status == "unbounded" or not math.isfinite(res.bound):
                    new.append(None)
                    continue
                slack = 1e-7 * (1.0 + abs(res.bound))
                new.append(res.bound - slack if sense == "min" else res.bound + slack)
            lo, hi = new
            if lo is not None:
                lo_arr[t, j] = min(max(lo_arr[t, j], lo), hi_arr[t, j])
            if hi is not None:
                hi_arr[t, j] = max(min(hi_arr[t, j], hi), lo_arr[t, j])
            src[t, j] = "preprocessed"

    for t in range(H):
        tighten(lambda e: e.X, cur.action_lower, cur.action_upper, cur.action_source, t,
                problem.n_actions)
    for t in range(1, H + 1):
        tighten(lambda e: e.Y, cur.state_lower, cur.state_upper, cur.state_source, t,
                problem.n_states)
    cur.state_source[0] = "preprocessed"
    return cur


def plan_milp(problem: PlanningProblem, net: Network, *, encoding: str = "strengthened",
              preprocess: bool = False, rel_gap: float = 1e-6, time_limit: float | None = 60.0,
              node_limit: int | None = None, budget: PreprocessBudget | None = None,
              external_solver: str | None = None, start_actions=None) -> PlanResult:
    """Compile, optionally preprocess, solve and extract a plan in one call.

    ``start_actions`` is a list of ``(H, |A|)`` action sequences whose
    induced assignments seed the search with an incumbent when feasible.
    """
    timings = {}
    t0 = time.perf_counter()
    bounds = None
    if preprocess:
        bounds = preprocess_bounds(problem, net, problem.horizon, budget)
    timings["preprocess"] = time.perf_counter() - t0
    t1 = time.perf_counter()
    compiler = {"base": compile_base, "strengthened": compile_strengthened}[encoding]
    model, enc = compiler(problem, net, problem.horizon, bounds)
    timings["compile"] = time.perf_counter() - t1
    t2 = time.perf_counter()
    if external_solver:
        from nnplan.milp.lpformat import solve_external
        res = solve_external(model, external_solver)
    else:
        starts = [assignment_from_actions(problem, net, model, enc, a)
                  for a in (start_actions or [])]
        lo, hi = model.bounds()
        a_lo, a_hi = lo[enc.X], hi[enc.X]

        def rollout_heuristic(x):
            # roll the relaxation's actions through the network
            acts = np.clip(x[enc.X], a_lo, a_hi)
            return assignment_from_actions(problem, net, model, enc, acts)

        res = solve(model, time_limit=time_limit, rel_gap=rel_gap, node_limit=node_limit,
                    record_trace=False, start=starts or None, heuristic=rollout_heuristic)
    timings["solve"] = time.perf_counter() - t2
    if not res.has_incumbent:
        raise InfeasibleProblem(f"MILP solve ended with status {res.status!r} and no incumbent")
    plan = extract_plan(res, enc)
    plan.diagnostics.update(timings=timings, n_vars=model.n_vars,
                            n_binaries=int(len(model.binary_indices)),
                            n_constraints=model.n_constraints, encoding=encoding)
    return plan
