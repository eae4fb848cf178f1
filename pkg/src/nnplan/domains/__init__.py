"""Benchmark domains: exact simulators, baselines, instances and data generation."""

from __future__ import annotations

import json
import math
from importlib import resources
from pathlib import Path

import numpy as np

from nnplan.dataset import Dataset
from nnplan.domains.base import ConstraintViolation, Domain, DomainError
from nnplan.domains.hvac import HVAC, step_hvac
from nnplan.domains.navigation import Navigation, step_navigation
from nnplan.domains.reservoir import Reservoir, step_reservoir

DOMAINS = {cls.kind: cls for cls in (Reservoir, HVAC, Navigation)}
POLICIES = ("uniform-random", "epsilon-baseline")
EPSILON = 0.3

__all__ = ["ConstraintViolation", "DOMAINS", "Domain", "DomainError", "HVAC", "Navigation",
           "POLICIES", "Reservoir", "baseline_policy", "from_dict", "generate_data",
           "list_instances", "load_instance", "project_action", "step_hvac",
           "step_navigation", "step_reservoir"]


def from_dict(data: dict) -> Domain:
    try:
        cls = DOMAINS[data["domain"]]
    except KeyError:
        raise DomainError(f"unknown domain {data.get('domain')!r}") from None
    return cls(data["name"], int(data["horizon"]), np.asarray(data["init"], float),
               dict(data["constants"]))


def _instance_dir():
    return resources.files("nnplan.domains") / "instances"


def list_instances() -> list[str]:
    return sorted(p.name[:-5] for p in _instance_dir().iterdir() if p.name.endswith(".json"))


def load_instance(name_or_path: str | Path) -> Domain:
    """Load a bundled instance by name or any instance JSON file by path."""
    path = Path(name_or_path)
    if path.suffix == ".json" and path.exists():
        text = path.read_text()
    else:
        entry = _instance_dir() / f"{name_or_path}.json"
        if not entry.is_file():
            raise DomainError(f"no instance named {name_or_path!r}; have {list_instances()}")
        text = entry.read_text()
    return from_dict(json.loads(text))


def baseline_policy(instance: Domain, state) -> np.ndarray:
    return instance.baseline(state)


def project_action(instance: Domain, state, action) -> np.ndarray:
    return instance.project_action(state, action)


def generate_data(instance: Domain, policy: str = "uniform-random", n: int = 10000,
                  seed: int = 0, episode_length: int | None = None) -> Dataset:
    """Roll out exploration episodes in the exact simulator.

    Each episode restarts from a state drawn uniformly from the instance's
    sampling box, so the data covers the state space rather than one
    trajectory.  ``epsilon-baseline`` follows the baseline policy but takes a
    uniform random action with probability 0.3.
    """
    if policy not in POLICIES:
        raise DomainError(f"unknown exploration policy {policy!r}; choose from {POLICIES}")
    if n < 1:
        raise DomainError("need at least one transition")
    rng = np.random.default_rng(seed)
    L = int(episode_length or instance.horizon)
    episodes = math.ceil(n / L)
    s = instance.sample_state(rng, episodes)
    S, A, N = [], [], []
    for _ in range(L):
        a = instance.sample_action(rng, s)
        if policy == "epsilon-baseline":
            greedy = instance.project_action(s, instance.baseline(s))
            take = rng.random(len(s)) >= EPSILON
            a = np.where(take[:, None], greedy, a)
        nxt = instance.step(s, a)
        S.append(s)
        A.append(a)
        N.append(nxt)
        s = nxt
    # episode-major rows; the last episode may be cut short
    S, A, N = (np.stack(X, axis=1).reshape(-1, X[0].shape[1])[:n] for X in (S, A, N))
    meta = {"domain": instance.kind, "instance": instance.name, "policy": policy, "seed": seed,
            "episode_length": L}
    return Dataset(S, A, N, meta)
