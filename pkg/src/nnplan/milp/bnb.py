"""Best-bound branch and bound over the warm-started simplex.

Nodes only differ in binary bounds, so a single :class:`SimplexEngine`
follows the search and re-optimizes each node with the dual simplex from
the previous node's basis.
"""

from __future__ import annotations

import heapq
import logging
import math
import time
from dataclasses import dataclass

import numpy as np

from nnplan.milp.model import MilpModel, SolveResult, relative_gap
from nnplan.milp.simplex import SimplexEngine

logger = logging.getLogger(__name__)

INT_TOL = 1e-6
PRUNE_TOL = 1e-9
HEURISTIC_EVERY = 100
OPTIMAL_GAP = 1e-6
START_TOL = 1e-6
PROPAGATE_PASSES = 20
FEAS_TOL = 1e-9


@dataclass
class SolveOptions:
    time_limit: float | None = None
    rel_gap: float = 1e-6
    node_limit: int | None = None
    record_trace: bool = True


@dataclass
class LPRelaxation:
    status: str
    x: np.ndarray | None
    objective: float
    basis: np.ndarray | None
    iterations: int = 0


class _Checker:
    """Vectorized version of ``MilpModel.max_violation``."""

    def __init__(self, model: MilpModel):
        self.A, senses, self.rhs = model.constraint_matrix()
        senses = np.array(senses)
        self.le, self.ge, self.eq = senses == "<=", senses == ">=", senses == "=="
        self.lo, self.up = model.bounds()
        self.binaries = model.binary_indices
        self.n = model.n_vars

    def __call__(self, x: np.ndarray, int_tol: float = 1e-6) -> float:
        if x.shape != (self.n,) or not np.all(np.isfinite(x)):
            return math.inf
        lhs = self.A @ x - self.rhs
        worst = max(0.0, float(np.max(self.lo - x, initial=0.0)),
                    float(np.max(x - self.up, initial=0.0)),
                    float(np.max(lhs[self.le], initial=0.0)),
                    float(np.max(-lhs[self.ge], initial=0.0)),
                    float(np.max(np.abs(lhs[self.eq]), initial=0.0)))
        xb = x[self.binaries]
        return max(worst, float(np.max(np.abs(xb - np.round(xb)), initial=0.0)) - int_tol)


class _Propagator:
    """Activity-based bound tightening over the rows of a model.

    Every row is read as ``sum a_j x_j <= b`` (``>=`` rows negated, equality
    rows both ways).  The minimum activity of the other terms bounds each
    variable; binaries are rounded to the nearest admissible integer.
    Continuous bounds are relaxed by a small margin so round-off never cuts
    off a feasible point.
    """

    def __init__(self, model: MilpModel):
        A, senses, rhs = model.constraint_matrix()
        r, c = np.nonzero(A)
        v = A[r, c]
        sense = np.array(senses)[r] if len(r) else np.zeros(0, str)
        rows, cols, vals, b = [], [], [], []
        n_rows = 0
        for flip, keep in ((1.0, sense != ">="), (-1.0, sense != "<=")):
            if not keep.any():
                continue
            # renumber rows of this orientation densely
            used, local = np.unique(r[keep], return_inverse=True)
            rows.append(local + n_rows)
            cols.append(c[keep])
            vals.append(flip * v[keep])
            b.append(flip * rhs[used])
            n_rows += len(used)
        self.n_rows = n_rows
        self.R = np.concatenate(rows) if rows else np.zeros(0, int)
        self.C = np.concatenate(cols) if cols else np.zeros(0, int)
        self.V = np.concatenate(vals) if vals else np.zeros(0)
        self.B = np.concatenate(b) if b else np.zeros(0)
        self.is_bin = np.zeros(model.n_vars, bool)
        self.is_bin[model.binary_indices] = True
        self.pos = self.V > 0

    def __call__(self, lo: np.ndarray, up: np.ndarray, passes: int = PROPAGATE_PASSES) -> bool:
        """Tighten ``lo``/``up`` in place; False when the box is proven infeasible."""
        R, C, V, pos = self.R, self.C, self.V, self.pos
        if not len(R):
            return bool(np.all(lo <= up + FEAS_TOL))
        with np.errstate(invalid="ignore"):
            return self._run(lo, up, passes)

    def _run(self, lo: np.ndarray, up: np.ndarray, passes: int) -> bool:
        R, C, V, pos = self.R, self.C, self.V, self.pos
        for _ in range(passes):
            term = np.where(pos, V * lo[C], V * up[C])
            inf = ~np.isfinite(term)
            term = np.where(inf, 0.0, term)
            act = np.bincount(R, term, self.n_rows)
            n_inf = np.bincount(R, inf, self.n_rows)
            scale = 1.0 + np.bincount(R, np.abs(term), self.n_rows)
            if np.any((n_inf == 0) & (act > self.B + FEAS_TOL * scale)):
                return False
            ok = (n_inf[R] - inf) == 0
            if not ok.any():
                break
            rest = act[R] - term
            limit = (self.B[R] - rest)[ok] / V[ok]
            cols, p = C[ok], pos[ok]
            margin = FEAS_TOL * scale[R][ok] / np.abs(V[ok])
            new_up = up.copy()
            new_lo = lo.copy()
            np.minimum.at(new_up, cols[p], limit[p] + margin[p])
            np.maximum.at(new_lo, cols[~p], limit[~p] - margin[~p])
            b = self.is_bin
            new_up[b] = np.floor(new_up[b] + 1e-6)
            new_lo[b] = np.ceil(new_lo[b] - 1e-6)
            # ignore negligible continuous moves
            width = 1e-7 * (1.0 + np.abs(up))
            tight_up = new_up < up - np.where(b, 0.5, width)
            width = 1e-7 * (1.0 + np.abs(lo))
            tight_lo = new_lo > lo + np.where(b, 0.5, width)
            if not (tight_up.any() or tight_lo.any()):
                break
            up[tight_up] = new_up[tight_up]
            lo[tight_lo] = new_lo[tight_lo]
            cross = lo > up
            if cross.any():
                gap = lo[cross] - up[cross]
                if np.any(gap > 1e-6 * (1.0 + np.abs(up[cross]))) or np.any(b[cross]):
                    return False
                mid = 0.5 * (lo[cross] + up[cross])
                lo[cross] = up[cross] = mid
        return True


def _engine(model: MilpModel) -> tuple[SimplexEngine, float]:
    """Engine maximizing ``sign * c``; the sign maps results back."""
    A, senses, rhs = model.constraint_matrix()
    lo, up = model.bounds()
    sign = 1.0 if model.sense == "max" else -1.0
    eng = SimplexEngine(A, senses, rhs, sign * model.objective_vector(), lo, up, maximize=True)
    return eng, sign


def solve_lp_relaxation(model: MilpModel) -> LPRelaxation:
    """Optimum of the model with every binary relaxed to its [0, 1] box."""
    model.check()
    eng, sign = _engine(model)
    res = eng.solve()
    if res.status != "optimal":
        return LPRelaxation(res.status, None, math.nan, None, res.iterations)
    return LPRelaxation("optimal", res.x, model.evaluate(res.x), eng.basis.copy(), res.iterations)


def _key(bound: float) -> float:
    """Heap priority: the bound rounded up to ~9 significant digits.

    Rounding makes nearly equal bounds tie (ties go depth first) and rounding
    up keeps the heap top a valid dual bound.
    """
    if not math.isfinite(bound) or bound == 0.0:
        return bound
    scale = 10.0 ** (8 - int(math.floor(math.log10(abs(bound)))))
    return math.ceil(bound * scale) / scale + 1e-15 * abs(bound)


def _fractional(x: np.ndarray, binaries: np.ndarray) -> np.ndarray:
    vals = x[binaries]
    return np.abs(vals - np.round(vals))


def solve(model: MilpModel, options: SolveOptions | None = None, start=None, heuristic=None,
          **kw) -> SolveResult:
    """Solve a MILP to optimality, a relative gap target, or a limit.

    Keyword arguments override fields of ``options``
    (``time_limit``, ``rel_gap``, ``node_limit``, ``record_trace``).
    ``start`` is an optional point, or list of points, used as initial
    incumbent when feasible within ``START_TOL``; infeasible starts are
    ignored.  ``heuristic(x)`` is called with node LP points and may return
    a candidate point, which is used under the same feasibility check.
    """
    opts = options or SolveOptions()
    if kw:
        opts = SolveOptions(**{**opts.__dict__, **kw})
    model.check()
    clock0 = time.perf_counter()
    eng, sign = _engine(model)
    binaries = model.binary_indices
    root_lo, root_up = model.bounds()
    const = model.obj_constant

    def report(v: float) -> float:
        return sign * v + const

    def elapsed() -> float:
        return time.perf_counter() - clock0

    def finish(status, x=None, inc=-math.inf, bound=math.inf, nodes=0, limit=None, trace=None):
        objective = report(inc) if x is not None else math.nan
        b = report(bound) if math.isfinite(bound) else sign * bound
        gap = relative_gap(b, objective) if x is not None and math.isfinite(b) else math.inf
        return SolveResult(status, x, objective, b, gap, nodes, elapsed(), eng.iterations,
                           limit, trace or [])

    # propagated continuous bounds only serve to fix binaries; the LP keeps
    # the declared continuous bounds so margins never leak into solutions
    model_lo, model_up = root_lo.copy(), root_up.copy()

    def lp_box(lo: np.ndarray, up: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        l, u = model_lo.copy(), model_up.copy()
        l[binaries], u[binaries] = lo[binaries], up[binaries]
        return l, u

    propagate = _Propagator(model)
    if not propagate(root_lo, root_up):
        return finish("infeasible", bound=-math.inf)
    root = eng.solve(*lp_box(root_lo, root_up))
    if root.status == "infeasible":
        return finish("infeasible", bound=-math.inf)
    if root.status == "unbounded":
        return finish("unbounded")
    if root.status != "optimal":
        raise RuntimeError(f"root relaxation failed: {root.status}")

    inc_x: np.ndarray | None = None
    inc = -math.inf
    trace: list[tuple[int, float, float]] = []

    def beats(value: float) -> bool:
        return inc_x is None or value > inc + PRUNE_TOL * (1.0 + abs(inc))

    def try_incumbent(x: np.ndarray, value: float) -> None:
        nonlocal inc_x, inc
        if beats(value):
            x = x.copy()
            x[binaries] = np.round(x[binaries])
            inc_x, inc = x, value

    def rounding_heuristic(x: np.ndarray, lo: np.ndarray, up: np.ndarray) -> None:
        if binaries.size == 0:
            return
        lo2, up2 = lo.copy(), up.copy()
        r = np.clip(np.round(x[binaries]), lo[binaries], up[binaries])
        lo2[binaries] = up2[binaries] = r
        res = eng.solve(lower=lo2, upper=up2)
        if res.status == "optimal":
            try_incumbent(res.x, res.objective)

    checker = _Checker(model) if (start is not None or heuristic is not None) else None

    def offer(x0) -> None:
        if x0 is None:
            return
        x0 = np.asarray(x0, float)
        if checker(x0) <= START_TOL:
            try_incumbent(x0, sign * (model.evaluate(x0) - const))
        else:
            logger.debug("ignoring infeasible start point")

    if start is not None:
        for x0 in ([start] if np.ndim(start) == 1 else list(start)):
            offer(x0)

    # heap items: (-parent_bound, -depth, node_id, lower, upper); equal bounds
    # are explored depth first so the search dives towards incumbents
    heap: list = [(-_key(root.objective), 0, 0, root_lo, root_up, root.objective)]
    next_id = 1
    nodes = 0
    lost_bound = -math.inf  # bound of nodes the LP could not resolve
    first = True

    def global_bound() -> float:
        open_best = -heap[0][0] if heap else -math.inf
        return max(open_best, lost_bound, inc)

    status, limit = None, None
    while heap:
        bound = global_bound()
        if inc_x is not None:
            gap = relative_gap(report(bound), report(inc))
            if gap <= min(opts.rel_gap, OPTIMAL_GAP):
                status = "optimal"
                break
            if gap <= opts.rel_gap:
                status = "gap-reached"
                break
        if opts.time_limit is not None and elapsed() >= opts.time_limit:
            status, limit = "time-limit", "time"
            break
        if opts.node_limit is not None and nodes >= opts.node_limit:
            status, limit = "time-limit", "nodes"
            break

        _, neg_depth, node_id, lo, up, parent = heapq.heappop(heap)
        if not beats(parent):
            continue
        nodes += 1
        if first:
            res, first = root, False
        else:
            cutoff = inc if inc_x is not None else None
            res = eng.solve(*lp_box(lo, up), cutoff=cutoff)
        if res.status == "optimal":
            z = res.objective
            if beats(z):
                frac = _fractional(res.x, binaries)
                if frac.size == 0 or frac.max() <= INT_TOL:
                    try_incumbent(res.x, z)
                else:
                    if nodes == 1 or nodes % HEURISTIC_EVERY == 0:
                        rounding_heuristic(res.x, *lp_box(lo, up))
                    if heuristic is not None:
                        offer(heuristic(res.x))
                    k = int(binaries[np.argmax(frac)])
                    z_child = min(z, parent)
                    near = float(np.round(res.x[k]))
                    for val in (near, 1.0 - near):
                        clo, cup = lo.copy(), up.copy()
                        clo[k] = cup[k] = val
                        if not propagate(clo, cup):
                            continue
                        heapq.heappush(heap, (-_key(z_child), neg_depth - 1, next_id, clo, cup,
                                              z_child))
                        next_id += 1
        elif res.status in ("iteration-limit",):
            lost_bound = max(lost_bound, parent)
        if opts.record_trace:
            trace.append((nodes, report(inc) if inc_x is not None else math.nan,
                          report(global_bound())))

    if status is None:
        # tree exhausted
        if inc_x is None:
            return finish("infeasible", bound=-math.inf, nodes=nodes, trace=trace)
        if lost_bound > inc:
            status = "gap-reached" if relative_gap(report(lost_bound), report(inc)) <= opts.rel_gap \
                else "time-limit"
            return finish(status, inc_x, inc, lost_bound, nodes, trace=trace)
        return finish("optimal", inc_x, inc, inc, nodes, trace=trace)
    return finish(status, inc_x, inc, global_bound(), nodes, limit, trace)
