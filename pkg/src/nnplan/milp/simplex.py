"""Dense bounded-variable simplex.

The engine keeps the tableau ``T = B^-1 [A | I]`` between calls so a
sequence of LPs that differ only in variable bounds (branch and bound) or in
the cost vector (bound preprocessing) is warm-started from the previous
basis.  Bound changes are re-optimized by the dual simplex, cost changes by
the primal simplex; anything else falls back to a composite phase 1.

Rows are ``A x + s = b`` with one logical ``s`` per row whose bounds encode
the sense: ``<=`` -> ``s >= 0``, ``>=`` -> ``s <= 0``, ``==`` -> ``s = 0``.
All costs are minimized; :meth:`SimplexEngine.solve` reports the objective
of the original sense.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

AT_LOWER, AT_UPPER, FREE, BASIC = 0, 1, 2, 3

FEAS_TOL = 1e-7
DUAL_TOL = 1e-9
PIVOT_TOL = 1e-9
REFACTOR_EVERY = 250
DEGENERATE_LIMIT = 50


class SimplexError(RuntimeError):
    pass


@dataclass
class LPResult:
    status: str
    x: np.ndarray | None
    objective: float
    iterations: int


class SimplexEngine:
    def __init__(self, A, senses, rhs, cost, lower, upper, maximize: bool = False):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        m, n = A.shape if A.size else (len(rhs), len(cost))
        if A.size == 0:
            A = np.zeros((m, n))
        self.m, self.n, self.N = m, n, n + m
        self.full = np.hstack([A, np.eye(m)])
        self.b = np.asarray(rhs, dtype=float).copy()
        self.maximize = maximize
        self.lo = np.empty(self.N)
        self.up = np.empty(self.N)
        self.lo[:n], self.up[:n] = np.asarray(lower, float), np.asarray(upper, float)
        for i, s in enumerate(senses):
            self.lo[n + i], self.up[n + i] = {"<=": (0.0, math.inf), ">=": (-math.inf, 0.0),
                                             "==": (0.0, 0.0)}[s]
        self.cost = np.zeros(self.N)
        self.set_cost(cost)
        self.iterations = 0
        self._cold_start()

    # -- setup ------------------------------------------------------------
    def _cold_start(self) -> None:
        self.basis = np.arange(self.n, self.N)
        self.status = np.full(self.N, AT_LOWER)
        self.status[self.basis] = BASIC
        self.T = self.full.copy()
        self.bbar = self.b.copy()
        self.x = np.zeros(self.N)
        self._since_refactor = 0
        self._place_nonbasics()
        self._recompute_basics()
        self._recompute_duals()

    def set_cost(self, cost) -> None:
        c = np.asarray(cost, dtype=float)
        self.cost[:] = 0.0
        self.cost[: self.n] = -c if self.maximize else c
        if hasattr(self, "T"):
            self._recompute_duals()

    def set_bounds(self, lower, upper) -> None:
        self.lo[: self.n] = lower
        self.up[: self.n] = upper

    def _place_nonbasics(self) -> None:
        """Move every nonbasic variable onto a finite bound matching its status."""
        lo, up, st = self.lo, self.up, self.status
        nb = st != BASIC
        fin_lo, fin_up = np.isfinite(lo), np.isfinite(up)
        want_up = nb & (st == AT_UPPER)
        want_lo = nb & (st == AT_LOWER)
        free = nb & (st == FREE)
        st[want_up & ~fin_up & fin_lo] = AT_LOWER
        st[want_lo & ~fin_lo & fin_up] = AT_UPPER
        st[free & fin_lo] = AT_LOWER
        st[free & ~fin_lo & fin_up] = AT_UPPER
        st[nb & ~fin_lo & ~fin_up] = FREE
        at_lo = nb & (st == AT_LOWER)
        at_up = nb & (st == AT_UPPER)
        self.x[at_lo] = lo[at_lo]
        self.x[at_up] = up[at_up]
        self.x[nb & (st == FREE)] = 0.0

    def _recompute_basics(self) -> None:
        xn = self.x.copy()
        xn[self.basis] = 0.0
        self.x[self.basis] = self.bbar - self.T @ xn

    def _recompute_duals(self) -> None:
        self.d = self.cost - self.cost[self.basis] @ self.T
        self.d[self.basis] = 0.0

    def refactor(self) -> None:
        B = self.full[:, self.basis]
        try:
            self.T = np.linalg.solve(B, self.full)
            self.bbar = np.linalg.solve(B, self.b)
        except np.linalg.LinAlgError:
            self._cold_start()
            return
        self.T[:, self.basis] = np.eye(self.m)
        self._since_refactor = 0
        self._recompute_basics()
        self._recompute_duals()

    # -- pivoting -----------------------------------------------------------
    def _pivot(self, r: int, q: int) -> None:
        T = self.T
        piv = T[r, q]
        T[r] /= piv
        self.bbar[r] /= piv
        col = T[:, q].copy()
        col[r] = 0.0
        rows = np.flatnonzero(col)
        prow = T[r]
        cols = np.flatnonzero(prow)
        if rows.size:
            # the tableau stays sparse for these models: update only the block
            # where both the pivot column and the pivot row are nonzero
            if rows.size * cols.size < 0.25 * T.size:
                T[np.ix_(rows, cols)] -= np.outer(col[rows], prow[cols])
            else:
                T -= np.outer(col, prow)
            self.bbar[rows] -= col[rows] * self.bbar[r]
        T[:, q] = 0.0
        T[r, q] = 1.0
        dq = self.d[q]
        if dq != 0.0:
            self.d[cols] -= dq * prow[cols]
        self.d[q] = 0.0
        self.basis[r] = q
        self.status[q] = BASIC
        self.iterations += 1
        self._since_refactor += 1
        if self._since_refactor >= REFACTOR_EVERY:
            self.refactor()

    def _infeasibility(self):
        xb = self.x[self.basis]
        lo, up = self.lo[self.basis], self.up[self.basis]
        tol_lo = FEAS_TOL * (1.0 + np.abs(np.where(np.isfinite(lo), lo, 0.0)))
        tol_up = FEAS_TOL * (1.0 + np.abs(np.where(np.isfinite(up), up, 0.0)))
        below = xb < lo - tol_lo
        above = xb > up + tol_up
        return below, above

    def primal_feasible(self) -> bool:
        below, above = self._infeasibility()
        return not (below.any() or above.any())

    def objective_min(self) -> float:
        return float(self.cost @ self.x)

    # -- primal simplex ---------------------------------------------------------
    def _primal(self, phase1: bool, max_iter: int) -> str:
        bland = False
        degenerate = 0
        start = self.iterations
        fixed = self.lo == self.up
        while True:
            if self.iterations - start > max_iter:
                return "iteration-limit"
            if phase1:
                below, above = self._infeasibility()
                if not (below.any() or above.any()):
                    return "feasible"
                cb = below * -1.0 + above * 1.0
                d = -(cb @ self.T)
                d[self.basis] = 0.0
            else:
                d = self.d
            st = self.status
            cand = (st != BASIC) & ~fixed & (
                ((st == AT_LOWER) & (d < -DUAL_TOL)) | ((st == AT_UPPER) & (d > DUAL_TOL))
                | ((st == FREE) & (np.abs(d) > DUAL_TOL)))
            idx = np.flatnonzero(cand)
            if idx.size == 0:
                return "infeasible" if phase1 else "optimal"
            q = int(idx[0]) if bland else int(idx[np.argmax(np.abs(d[idx]))])
            delta = 1.0 if d[q] < 0 else -1.0
            rate = delta * self.T[:, q]
            xb = self.x[self.basis]
            lo, up = self.lo[self.basis], self.up[self.basis]
            limit = np.full(self.m, math.inf)
            dec = rate > PIVOT_TOL
            inc = rate < -PIVOT_TOL
            if phase1:
                b_below, b_above = self._infeasibility()
                # decreasing: feasible rows stop at lower; rows above upper stop at upper
                m1 = dec & ~b_below & ~b_above & np.isfinite(lo)
                limit[m1] = (xb[m1] - lo[m1]) / rate[m1]
                m2 = dec & b_above
                limit[m2] = (xb[m2] - up[m2]) / rate[m2]
                m3 = inc & ~b_below & ~b_above & np.isfinite(up)
                limit[m3] = (up[m3] - xb[m3]) / -rate[m3]
                m4 = inc & b_below
                limit[m4] = (lo[m4] - xb[m4]) / -rate[m4]
                target = np.where(dec, np.where(b_above, up, lo), np.where(b_below, lo, up))
            else:
                m1 = dec & np.isfinite(lo)
                limit[m1] = (xb[m1] - lo[m1]) / rate[m1]
                m3 = inc & np.isfinite(up)
                limit[m3] = (up[m3] - xb[m3]) / -rate[m3]
                target = np.where(dec, lo, up)
            np.maximum(limit, 0.0, out=limit)
            own = self.up[q] - self.lo[q]
            t_row = limit.min() if self.m else math.inf
            if not math.isfinite(t_row) and not math.isfinite(own):
                if phase1:
                    raise SimplexError("phase 1 unbounded direction")
                return "unbounded"
            if own <= t_row:
                t = own
                self.x[self.basis] = xb - rate * t
                if st[q] == AT_LOWER:
                    st[q], self.x[q] = AT_UPPER, self.up[q]
                else:
                    st[q], self.x[q] = AT_LOWER, self.lo[q]
            else:
                t = t_row
                ties = np.flatnonzero(limit <= t + 1e-12)
                if bland:
                    r = int(ties[np.argmin(self.basis[ties])])
                else:
                    r = int(ties[np.argmax(np.abs(rate[ties]))])
                p = self.basis[r]
                self.x[self.basis] = xb - rate * t
                self.x[q] = self.x[q] + delta * t
                leave_val = target[r]
                self._pivot(r, q)
                self.x[p] = leave_val
                self.status[p] = AT_LOWER if (leave_val == self.lo[p]) else AT_UPPER
                if self._since_refactor == 0:
                    self._recompute_basics()
            if t <= 1e-12:
                degenerate += 1
                if degenerate > DEGENERATE_LIMIT:
                    bland = True
            else:
                degenerate = 0
                bland = False

    # -- dual simplex ---------------------------------------------------------------
    def _make_dual_feasible(self) -> bool:
        d, st = self.d, self.status
        nb = (st != BASIC) & (self.lo != self.up)
        wrong_lo = nb & (st == AT_LOWER) & (d < -DUAL_TOL)
        wrong_up = nb & (st == AT_UPPER) & (d > DUAL_TOL)
        wrong_free = nb & (st == FREE) & (np.abs(d) > DUAL_TOL)
        if wrong_free.any() or (wrong_lo & ~np.isfinite(self.up)).any() or \
                (wrong_up & ~np.isfinite(self.lo)).any():
            return False
        if wrong_lo.any() or wrong_up.any():
            st[wrong_lo] = AT_UPPER
            self.x[wrong_lo] = self.up[wrong_lo]
            st[wrong_up] = AT_LOWER
            self.x[wrong_up] = self.lo[wrong_up]
            self._recompute_basics()
        return True

    def _dual(self, max_iter: int, cutoff: float) -> str:
        start = self.iterations
        stall = 0
        last_obj = -math.inf
        fixed = self.lo == self.up
        while True:
            if self.iterations - start > max_iter:
                return "iteration-limit"
            below, above = self._infeasibility()
            xb = self.x[self.basis]
            lo, up = self.lo[self.basis], self.up[self.basis]
            viol = np.where(below, lo - xb, 0.0) + np.where(above, xb - up, 0.0)
            if not viol.any():
                return "optimal"
            obj = self.objective_min()
            if obj > cutoff:
                return "cutoff"
            if obj <= last_obj + 1e-12:
                stall += 1
            else:
                stall = 0
            last_obj = max(last_obj, obj)
            if stall > DEGENERATE_LIMIT:
                rows = np.flatnonzero(viol)
                r = int(rows[np.argmin(self.basis[rows])])
            else:
                r = int(np.argmax(viol))
            p = self.basis[r]
            increase = bool(below[r])
            row = self.T[r]
            st = self.status
            nb = (st != BASIC) & ~fixed
            if increase:
                elig = nb & (((st == AT_LOWER) & (row < -PIVOT_TOL)) | ((st == AT_UPPER) & (row > PIVOT_TOL))
                             | ((st == FREE) & (np.abs(row) > PIVOT_TOL)))
            else:
                elig = nb & (((st == AT_LOWER) & (row > PIVOT_TOL)) | ((st == AT_UPPER) & (row < -PIVOT_TOL))
                             | ((st == FREE) & (np.abs(row) > PIVOT_TOL)))
            cols = np.flatnonzero(elig)
            if cols.size == 0:
                return "infeasible"
            ratios = np.abs(self.d[cols]) / np.abs(row[cols])
            best = ratios.min()
            ties = cols[ratios <= best + 1e-12]
            q = int(ties[np.argmax(np.abs(row[ties]))])
            target = self.lo[p] if increase else self.up[p]
            dx_q = -(target - self.x[p]) / row[q]
            self.x[self.basis] -= self.T[:, q] * dx_q
            self.x[q] += dx_q
            self._pivot(r, q)
            self.x[p] = target
            self.status[p] = AT_LOWER if increase else AT_UPPER
            if self._since_refactor == 0:
                self._recompute_basics()

    # -- driver -------------------------------------------------------------------
    def solve(self, lower=None, upper=None, cost=None, cutoff: float | None = None,
              max_iter: int | None = None) -> LPResult:
        """Re-optimize after optional bound / cost changes.

        ``cutoff`` is in the caller's objective sense: the dual simplex stops
        early with status ``"cutoff"`` once the LP value provably cannot beat
        it (cannot exceed it when maximizing).
        """
        if lower is not None or upper is not None:
            self.set_bounds(self.lo[: self.n] if lower is None else lower,
                            self.up[: self.n] if upper is None else upper)
        if cost is not None:
            self.set_cost(cost)
        if np.any(self.lo > self.up):
            return LPResult("infeasible", None, math.nan, 0)
        max_iter = max_iter or 50 * (self.m + self.n) + 1000
        start = self.iterations
        cut_min = math.inf if cutoff is None else (-cutoff if self.maximize else cutoff)
        self._place_nonbasics()
        self._recompute_basics()

        status = None
        for attempt in range(3):
            if self.primal_feasible():
                status = self._primal(False, max_iter)
            elif self._make_dual_feasible():
                status = self._dual(max_iter, cut_min)
                if status == "optimal":
                    status = self._primal(False, max_iter)
            else:
                status = self._primal(True, max_iter)
                if status == "feasible":
                    status = self._primal(False, max_iter)
            if status in ("iteration-limit",) and attempt == 0:
                self._cold_start()
                continue
            if status == "optimal" and not self._verified():
                self.refactor()
                continue
            break
        iters = self.iterations - start
        if status != "optimal":
            return LPResult(status, None, math.nan, iters)
        z = self.objective_min()
        return LPResult("optimal", self.x[: self.n].copy(), -z if self.maximize else z, iters)

    def _verified(self) -> bool:
        resid = self.full @ self.x - self.b
        scale = 1.0 + np.abs(self.b).max(initial=0.0)
        return bool(np.abs(resid).max(initial=0.0) <= 1e-9 * scale and self.primal_feasible())


def solve_lp(c, A, senses, rhs, lower, upper, maximize=False) -> LPResult:
    """One-shot LP solve."""
    return SimplexEngine(A, senses, rhs, c, lower, upper, maximize).solve()
