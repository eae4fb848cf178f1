from __future__ import annotations

import json
import subprocess
import sys

import pytest

from nnplan.cli import main


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    main(["gen-data", "--instance", "reservoir3", "--n", "400", "--seed", "1",
          "--out", str(d / "data.csv")])
    main(["train", "--data", str(d / "data.csv"), "--hidden", "4", "--epochs", "3",
          "--dropout", "0", "--out", str(d / "net.json")])
    return d


def test_gen_data_and_train_outputs(workdir):
    assert (workdir / "data.csv").read_text().splitlines()[0] == "s1,s2,s3,a1,a2,a3,s1',s2',s3'"
    assert json.loads((workdir / "net.json").read_text())["standardization"] == "folded"


def test_plan_with_lp_export(workdir):
    out, lp = workdir / "plan.json", workdir / "model.lp"
    main(["plan", "--instance", "reservoir3", "--horizon", "2", "--network", str(workdir / "net.json"),
          "--export-lp", str(lp), "--node-limit", "50", "--out", str(out)])
    plan = json.loads(out.read_text())
    assert len(plan["actions"]) == 2 and len(plan["actions"][0]) == 3
    assert lp.read_text().startswith("\\ nnplan LP export")


def test_plan_grad_and_bounds(workdir):
    main(["plan-grad", "--instance", "navigation8", "--true-dynamics", "--epochs", "5",
          "--batch", "4", "--trace", str(workdir / "trace.csv"), "--out", str(workdir / "g.json")])
    assert len(json.loads((workdir / "g.json").read_text())["actions"]) == 8
    assert (workdir / "trace.csv").read_text().startswith("epoch")
    main(["bounds", "--instance", "reservoir3", "--horizon", "1", "--network",
          str(workdir / "net.json"), "--budget-nodes", "20", "--out", str(workdir / "b.json")])
    assert "state_lower" in json.loads((workdir / "b.json").read_text())


def test_run_online_with_config_file(workdir, capsys):
    cfg = workdir / "run.json"
    cfg.write_text(json.dumps({"instance": "hvac3", "planner": "baseline", "seeds": [0, 1]}))
    main(["--config", str(cfg), "run-online", "--out", str(workdir / "online")])
    assert (workdir / "online.csv").read_text().count("\n") == 3
    assert "hvac3 baseline seed=1" in capsys.readouterr().out


def test_config_rejects_unknown_keys(workdir):
    cfg = workdir / "bad.json"
    cfg.write_text(json.dumps({"instance": "hvac3", "planer": "baseline"}))
    with pytest.raises(SystemExit):
        main(["--config", str(cfg), "run-online"])


def test_run_suite(workdir):
    specs = workdir / "specs.json"
    specs.write_text(json.dumps({"experiments": [
        {"instance": "navigation8", "planner": "baseline", "seeds": [0]},
        {"instance": "reservoir3", "planner": "grad", "network": str(workdir / "net.json"),
         "horizon": 2, "options": {"epochs": 5, "batch": 2}}]}))
    main(["run-suite", "--specs", str(specs), "--out", str(workdir / "suite")])
    assert (workdir / "suite.csv").read_text().count("\n") == 3


def test_console_entry_point_help():
    proc = subprocess.run([sys.executable, "-m", "nnplan.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for cmd in ("gen-data", "train", "plan", "run-online", "run-suite", "bounds"):
        assert cmd in proc.stdout
