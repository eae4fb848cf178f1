"""Planner output shared by the MILP and gradient planners."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class PlanResult:
    actions: np.ndarray          # (H, |A|)
    states: np.ndarray           # (H + 1, |S|) predicted by the learned model
    objective: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return len(self.actions)

    @property
    def first_action(self) -> np.ndarray:
        return self.actions[0]
