"""Common interface of the exact simulators."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from nnplan import autodiff as ad
from nnplan.problem import PlanningProblem


class DomainError(ValueError):
    pass


class ConstraintViolation(DomainError):
    def __init__(self, message: str, indices: list[int]):
        super().__init__(message)
        self.indices = indices


@dataclass
class Domain:
    """A concrete instance: constants, start state and horizon.

    Subclasses implement the dynamics on batched arrays (``step``) and on
    tape nodes (``step_graph``), the baseline policy and feasibility
    projection, and build the matching :class:`PlanningProblem`.
    """

    name: str
    horizon: int
    init: np.ndarray
    constants: dict = field(default_factory=dict)

    kind = "abstract"

    def __post_init__(self):
        self.init = np.asarray(self.init, dtype=float)
        self.validate()

    # -- to be provided by subclasses ---------------------------------------------
    def validate(self) -> None:  # pragma: no cover - overridden
        pass

    @property
    def n_states(self) -> int:
        raise NotImplementedError

    @property
    def n_actions(self) -> int:
        raise NotImplementedError

    def step(self, state, action, check: bool = True) -> np.ndarray:
        raise NotImplementedError

    def step_graph(self, state: ad.Node, action: ad.Node) -> ad.Node:
        raise NotImplementedError

    def problem(self, init=None, horizon: int | None = None) -> PlanningProblem:
        raise NotImplementedError

    def baseline(self, state) -> np.ndarray:
        raise NotImplementedError

    def project_action(self, state, action) -> np.ndarray:
        raise NotImplementedError

    def sample_range(self) -> tuple[np.ndarray, np.ndarray]:
        """Box from which exploration episodes draw their start states."""
        raise NotImplementedError

    # -- shared helpers -----------------------------------------------------------------
    def noop(self) -> np.ndarray:
        return np.zeros(self.n_actions)

    def reward(self, next_state, action) -> np.ndarray | float:
        """Exact per-step reward on batched ``(s_{t+1}, a_t)``."""
        from nnplan.gradplan import reward_batch

        s = np.atleast_2d(np.asarray(next_state, float))
        a = np.atleast_2d(np.asarray(action, float))
        r = reward_batch(self.problem(), s, a)
        return float(r[0]) if np.ndim(next_state) == 1 else r

    def sample_state(self, rng: np.random.Generator, n: int) -> np.ndarray:
        lo, hi = self.sample_range()
        return lo + rng.random((n, len(lo))) * (hi - lo)

    def sample_action(self, rng: np.random.Generator, state) -> np.ndarray:
        """Uniform action in the bounds, projected onto the feasible set."""
        state = np.atleast_2d(state)
        p = self.problem()
        lo, hi = p.action_lower, p.action_upper
        a = lo + rng.random((len(state), len(lo))) * (hi - lo)
        return self.project_action(state, a)

    def simulate(self, actions, init=None) -> np.ndarray:
        """States ``s_1..s_{H+1}`` of the exact dynamics."""
        s = np.asarray(self.init if init is None else init, float)
        out = [s]
        for a in np.asarray(actions, float):
            s = self.step(s, a)
            out.append(s)
        return np.array(out)

    def to_dict(self) -> dict:
        return {"domain": self.kind, "name": self.name, "horizon": self.horizon,
                "init": self.init.tolist(), "constants": _plain(self.constants)}

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    def with_init(self, init) -> Domain:
        return type(self)(self.name, self.horizon, np.asarray(init, float), dict(self.constants))


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def batched(fn):
    """Let a ``(B, n)`` step function accept single vectors too."""
    def wrapper(self, state, action, *args, **kw):
        single = np.ndim(state) == 1 and np.ndim(action) == 1
        s = np.atleast_2d(np.asarray(state, float))
        a = np.atleast_2d(np.asarray(action, float))
        out = fn(self, s, a, *args, **kw)
        return out[0] if single else out
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper
