"""Planning by gradient descent through the unrolled horizon.

A batch of action sequences is rolled out through a differentiable
transition, per-step rewards are summed into a return ``v_i`` per sequence
and the actions are updated with RMSProp-scaled gradients of
``L = sum_i L_i``, where ``L_i = v_i**2`` (or ``-v_i``).  Actions are clipped
into their bounds after every update, and the best sequence seen over all
instances and epochs is returned.
"""

from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np

from nnplan import autodiff as ad
from nnplan.network import Network, forward, step_graph
from nnplan.plan import PlanResult
from nnplan.problem import LinExpr, PlanningProblem

logger = logging.getLogger(__name__)


class GradPlanError(RuntimeError):
    pass


class Transition(Protocol):
    n_states: int
    n_actions: int

    def step(self, state: np.ndarray, action: np.ndarray) -> np.ndarray: ...

    def step_graph(self, state: ad.Node, action: ad.Node) -> ad.Node: ...


class LearnedTransition:
    """Adapter exposing a network through the transition protocol."""

    def __init__(self, net: Network):
        self.net = net
        self.n_states, self.n_actions = net.n_states, net.n_actions

    def step(self, state, action):
        return forward(self.net, state, action)

    def step_graph(self, state, action):
        return step_graph(self.net, state, action)


def as_transition(model) -> Transition:
    return LearnedTransition(model) if isinstance(model, Network) else model


@dataclass
class GradConfig:
    batch: int = 32
    rate: float = 0.05
    epochs: int = 1000
    seed: int = 0
    loss: str = "squared"
    decay: float = 0.9
    eps: float = 1e-8
    scale_by_range: bool = True
    init: np.ndarray | None = None      # warm start for instance 0, shape (H, |A|)


@dataclass
class GradTrace:
    epochs: list[int] = field(default_factory=list)
    best_v: list[float] = field(default_factory=list)
    mean_v: list[float] = field(default_factory=list)

    def append(self, epoch: int, best: float, mean: float) -> None:
        self.epochs.append(epoch)
        self.best_v.append(best)
        self.mean_v.append(mean)

    def write_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "best_v", "mean_v"])
            for row in zip(self.epochs, self.best_v, self.mean_v):
                w.writerow([row[0], repr(float(row[1])), repr(float(row[2]))])


def project_actions(actions, lower, upper) -> np.ndarray:
    """Elementwise clip into ``[lower, upper]`` (broadcast over leading axes)."""
    return np.minimum(np.maximum(np.asarray(actions, float), lower), upper)


def select_best(values) -> int:
    """Index of the largest finite return; ties go to the lowest index."""
    v = np.asarray(values, float)
    finite = np.isfinite(v)
    if not finite.any():
        raise GradPlanError("no instance has a finite return")
    return int(np.argmax(np.where(finite, v, -np.inf)))


# -- graph construction ----------------------------------------------------------

def _lin_coefs(expr: LinExpr, index: dict[str, int], width: int) -> np.ndarray:
    c = np.zeros(width)
    for name, coef in expr.terms:
        c[index[name]] += coef
    return c


def reward_graph(problem: PlanningProblem, state: ad.Node, action: ad.Node) -> ad.Node:
    """Per-row reward of ``(s_{t+1}, a_t)`` batches as a tape node of shape (B,)."""
    names = problem.state_names + problem.action_names
    index = {n: i for i, n in enumerate(names)}
    x = ad.concat([state, action], axis=-1)
    rw = problem.reward
    out = ad.add(ad.matmul(x, _lin_coefs(rw.linear, index, len(names))), rw.linear.constant)
    for coef, e in rw.abs_terms:
        inner = ad.add(ad.matmul(x, _lin_coefs(e, index, len(names))), e.constant)
        out = ad.add(out, ad.scale(ad.abs_(inner), coef))
    for coef, e in rw.max_terms:
        inner = ad.add(ad.matmul(x, _lin_coefs(e, index, len(names))), e.constant)
        out = ad.add(out, ad.scale(ad.relu(inner), coef))
    return out


def reward_batch(problem: PlanningProblem, state: np.ndarray, action: np.ndarray) -> np.ndarray:
    tape = ad.Tape()
    return reward_graph(problem, tape.constant(state), tape.constant(action)).value


def build_rollout(problem: PlanningProblem, transition, actions: np.ndarray):
    """Record the unrolled horizon for a ``(B, H, |A|)`` action batch.

    Returns ``(tape, leaves, v)`` with one ``(B, |A|)`` leaf per step and the
    per-instance return node ``v`` of shape ``(B,)``.
    """
    tr = as_transition(transition)
    actions = np.asarray(actions, float)
    B, H, _ = actions.shape
    tape = ad.Tape()
    leaves = [tape.leaf(actions[:, t, :]) for t in range(H)]
    s = tape.constant(np.broadcast_to(np.asarray(problem.init, float), (B, problem.n_states)))
    v = None
    for t in range(H):
        s = tr.step_graph(s, leaves[t])
        r = reward_graph(problem, s, leaves[t])
        v = r if v is None else ad.add(v, r)
    return tape, leaves, v


def rollout_returns(problem: PlanningProblem, transition, actions: np.ndarray):
    """Returns and visited states of a ``(B, H, |A|)`` batch, without a tape."""
    tr = as_transition(transition)
    actions = np.asarray(actions, float)
    B, H, _ = actions.shape
    s = np.broadcast_to(np.asarray(problem.init, float), (B, problem.n_states))
    states = [s]
    v = np.zeros(B)
    for t in range(H):
        s = tr.step(s, actions[:, t, :])
        v = v + reward_batch(problem, s, actions[:, t, :])
        states.append(s)
    return v, np.stack(states, axis=1)


# -- planner -----------------------------------------------------------------------

def _bounds(problem: PlanningProblem):
    lo, hi = problem.action_lower, problem.action_upper
    span = np.where(np.isfinite(hi - lo), hi - lo, 2.0)
    init_lo = np.where(np.isfinite(lo), lo, np.where(np.isfinite(hi), hi - 2.0, -1.0))
    return lo, hi, span, init_lo


def plan_gradient(problem: PlanningProblem, transition, horizon: int | None = None,
                  config: GradConfig | None = None, **kw) -> PlanResult:
    """Optimize a batch of action sequences and return the best one.

    ``transition`` is a :class:`Network` or any object with ``step`` and
    ``step_graph``.  Keyword arguments override ``config`` fields.
    """
    cfg = config or GradConfig()
    if kw:
        cfg = GradConfig(**{**cfg.__dict__, **kw})
    if cfg.batch < 1 or cfg.epochs < 0:
        raise GradPlanError("batch must be >= 1 and epochs >= 0")
    H = int(horizon or problem.horizon)
    if H != problem.horizon:
        problem = problem.with_horizon(H)
    loss_kind = cfg.loss
    if loss_kind not in ("squared", "negated"):
        raise GradPlanError(f"unknown loss {loss_kind!r}")
    if loss_kind == "squared" and not problem.reward_is_nonpositive():
        warnings.warn("reward is not non-positive by construction; minimizing v**2 would not "
                      "maximize it, using the negated return instead", RuntimeWarning)
        loss_kind = "negated"

    rng = np.random.default_rng(cfg.seed)
    lo, hi, span, init_lo = _bounds(problem)
    nA = problem.n_actions
    A = init_lo + rng.random((cfg.batch, H, nA)) * span
    if cfg.init is not None:
        A[0] = np.asarray(cfg.init, float).reshape(H, nA)
    A = project_actions(A, lo, hi)
    step_scale = span if cfg.scale_by_range else np.ones(nA)

    sq = np.zeros_like(A)
    alive = np.ones(cfg.batch, bool)
    best_v, best_i, best_epoch, best_A = -math.inf, -1, -1, None
    trace = GradTrace()

    for epoch in range(cfg.epochs + 1):
        tape, leaves, v_node = build_rollout(problem, transition, A)
        v = np.asarray(v_node.value, float)
        newly = alive & ~np.isfinite(v)
        if newly.any():
            logger.warning("epoch %d: halting %d instance(s) with non-finite return",
                           epoch, int(newly.sum()))
            alive &= ~newly
        if not alive.any():
            raise GradPlanError(f"all {cfg.batch} instances became non-finite by epoch {epoch}")
        vv = np.where(alive, v, -np.inf)
        i = select_best(vv)
        if vv[i] > best_v:
            best_v, best_i, best_epoch, best_A = float(vv[i]), i, epoch, A[i].copy()
        trace.append(epoch, best_v, float(np.mean(v[alive])))
        if epoch == cfg.epochs:
            break
        vm = ad.mul(v_node, alive.astype(float))
        loss = ad.sum_(ad.square(vm)) if loss_kind == "squared" else ad.scale(ad.sum_(vm), -1.0)
        grads = np.stack(ad.grad(tape, loss, leaves), axis=1)
        grads[~alive] = 0.0
        sq = cfg.decay * sq + (1.0 - cfg.decay) * grads * grads
        A = A - cfg.rate * step_scale * grads / (np.sqrt(sq) + cfg.eps)
        A = project_actions(A, lo, hi)

    best_A = project_actions(best_A, lo, hi)
    v_check, states = rollout_returns(problem, transition, best_A[None])
    diag = {"planner": "grad", "best_instance": best_i, "best_epoch": best_epoch,
            "epochs": cfg.epochs, "batch": cfg.batch, "loss": loss_kind,
            "alive": int(alive.sum()), "trace": trace}
    return PlanResult(best_A, states[0], float(v_check[0]), diag)
