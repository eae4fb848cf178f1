"""Transition datasets ``(s, a, s')`` with CSV storage.

The CSV header is ``s1..sN,a1..aM,s1'..sN'``; provenance metadata lives in a
``<file>.meta.json`` sidecar.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DatasetError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Dataset:
    states: np.ndarray
    actions: np.ndarray
    next_states: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        s = np.atleast_2d(np.asarray(self.states, dtype=float))
        a = np.atleast_2d(np.asarray(self.actions, dtype=float))
        n = np.atleast_2d(np.asarray(self.next_states, dtype=float))
        if not (len(s) == len(a) == len(n)):
            raise DatasetError("states, actions and next states need the same number of rows")
        if s.shape[1] != n.shape[1]:
            raise DatasetError("state and next-state widths differ")
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(a)) and np.all(np.isfinite(n))):
            raise DatasetError("dataset contains non-finite values")
        object.__setattr__(self, "states", s)
        object.__setattr__(self, "actions", a)
        object.__setattr__(self, "next_states", n)
        meta = dict(self.metadata)
        meta["rows"] = len(s)
        object.__setattr__(self, "metadata", meta)

    def __len__(self) -> int:
        return len(self.states)

    @property
    def n_states(self) -> int:
        return self.states.shape[1]

    @property
    def n_actions(self) -> int:
        return self.actions.shape[1]

    @property
    def inputs(self) -> np.ndarray:
        return np.hstack([self.states, self.actions])

    def subset(self, idx) -> Dataset:
        return Dataset(self.states[idx], self.actions[idx], self.next_states[idx], dict(self.metadata))

    def header(self) -> list[str]:
        ns, na = self.n_states, self.n_actions
        return ([f"s{i}" for i in range(1, ns + 1)] + [f"a{i}" for i in range(1, na + 1)]
                + [f"s{i}'" for i in range(1, ns + 1)])

    def save_csv(self, path: str | Path) -> None:
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.header())
            for row in np.hstack([self.states, self.actions, self.next_states]):
                writer.writerow([repr(float(v)) for v in row])
        Path(str(path) + ".meta.json").write_text(json.dumps(self.metadata, indent=2))

    @classmethod
    def load_csv(cls, path: str | Path) -> Dataset:
        path = Path(path)
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = np.array([[float(v) for v in r] for r in reader if r], dtype=float)
        ns = sum(1 for h in header if h.startswith("s") and not h.endswith("'"))
        na = sum(1 for h in header if h.startswith("a"))
        if len(header) != 2 * ns + na:
            raise DatasetError(f"unexpected header {header}")
        rows = rows.reshape(-1, len(header))
        meta_path = Path(str(path) + ".meta.json")
        meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
        return cls(rows[:, :ns], rows[:, ns:ns + na], rows[:, ns + na:], meta)
