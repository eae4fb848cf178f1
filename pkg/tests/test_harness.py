from __future__ import annotations

import csv
import json

import numpy as np
import pytest

from nnplan.domains import load_instance
from nnplan.harness import (SUITE_COLUMNS, ExperimentSpec, HarnessError, resimulate, run_online,
                            run_suite, train_for_instance)
from nnplan.network import save_network
from nnplan.training import TrainConfig


@pytest.fixture(scope="module")
def reservoir_net(tmp_path_factory):
    inst = load_instance("reservoir3")
    net = train_for_instance(inst, TrainConfig(hidden=(4,), dropout=0.0, epochs=15, rate=1e-2,
                                               final_rate=1e-4), n=2000)
    path = tmp_path_factory.mktemp("nets") / "reservoir3.json"
    save_network(net, path)
    return net, str(path)


def test_baseline_run_is_deterministic():
    spec = ExperimentSpec("hvac3", "baseline")
    a, b = run_online(spec), run_online(spec)
    assert a.total_return == b.total_return
    assert np.array_equal(a.actions, b.actions)
    assert a.horizon == load_instance("hvac3").horizon


@pytest.mark.parametrize("planner", ["baseline", "grad", "milp-strengthened-gap20"])
def test_return_matches_resimulation_and_bounds(planner, reservoir_net):
    net, _ = reservoir_net
    inst = load_instance("reservoir3")
    opts = {"epochs": 30, "batch": 8} if planner == "grad" else \
        {"node_limit": 50} if planner.startswith("milp") else {}
    rec = run_online(ExperimentSpec("reservoir3", planner, horizon=3, options=opts), net=net)
    assert rec.total_return == resimulate(inst, rec)
    prob = inst.problem()
    assert np.all(rec.actions >= prob.action_lower) and np.all(rec.actions <= prob.action_upper)
    for step in rec.steps:
        assert np.all(np.asarray(step.action) <= np.maximum(step.state, 0.0) + 1e-9)


def test_gap20_solves_respect_gap(reservoir_net):
    net, _ = reservoir_net
    rec = run_online(ExperimentSpec("reservoir3", "milp-strengthened-gap20", horizon=4,
                                    options={"time_limit": 30}), net=net)
    for step in rec.steps:
        d = step.diagnostics
        assert step.fallback or d["status"] == "time-limit" or d["gap"] <= 0.2


def test_spec_validation():
    with pytest.raises(HarnessError):
        ExperimentSpec("hvac3", "milp-strengthened-gap20", options={"rel_gap": 0.1})
    with pytest.raises(HarnessError):
        ExperimentSpec("hvac3", "grad", options={"node_limit": 3})
    with pytest.raises(HarnessError):
        ExperimentSpec("hvac3", "annealing")
    with pytest.raises(HarnessError):
        run_online(ExperimentSpec("hvac3", "grad"))


def test_phase_times_recorded(reservoir_net):
    net, _ = reservoir_net
    rec = run_online(ExperimentSpec("reservoir3", "milp-base", horizon=2,
                                    options={"node_limit": 20}), net=net)
    assert set(rec.phase_times) == {"compile", "preprocess", "solve", "simulate"}
    assert rec.phase_times["compile"] > 0 and rec.phase_times["simulate"] > 0


def test_suite_schema_and_reproducibility(reservoir_net, tmp_path):
    _, path = reservoir_net
    specs = [ExperimentSpec("reservoir3", "baseline", seeds=(0, 1)),
             ExperimentSpec("reservoir3", "grad", network=path, horizon=3, seeds=(0,),
                            options={"epochs": 20, "batch": 4})]
    records = run_suite(specs, tmp_path / "out")
    assert len(records) == 3
    with (tmp_path / "out.csv").open() as fh:
        reader = csv.DictReader(fh)
        assert tuple(reader.fieldnames) == SUITE_COLUMNS
        rows = list(reader)
    assert len(rows) == 3
    payload = json.loads((tmp_path / "out.json").read_text())
    assert payload["columns"] == list(SUITE_COLUMNS) and len(payload["runs"]) == 3
    again = run_suite(specs)
    assert [r.total_return for r in again] == [r.total_return for r in records]
