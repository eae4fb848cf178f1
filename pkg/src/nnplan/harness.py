"""Online replanning loop and experiment suites.

Every run starts from the instance's initial state.  At step ``t`` the
planner optimizes over the remaining ``H - t`` steps from the observed true
state, the first action is executed in the exact simulator and the loop
repeats.  Failed planning calls fall back to the no-op action.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from nnplan.compile import CompileError, InfeasibleProblem, PreprocessBudget, plan_milp
from nnplan.domains import ConstraintViolation, Domain, generate_data, load_instance
from nnplan.gradplan import GradConfig, GradPlanError, plan_gradient
from nnplan.network import Network, fold_standardization, load_network
from nnplan.training import TrainConfig, train

logger = logging.getLogger(__name__)

PLANNERS = ("milp-base", "milp-strengthened", "milp-strengthened-gap20", "grad", "baseline")
MILP_OPTIONS = {"time_limit", "node_limit", "rel_gap", "preprocess", "budget_time",
                "budget_nodes"}
GRAD_OPTIONS = {"epochs", "batch", "rate", "loss", "warm_start", "decay"}
SUITE_COLUMNS = ("instance", "planner", "seed", "return", "wall_time", "mean_call_time",
                 "n_calls", "fallbacks", "violations")
DEFAULT_TIME_LIMIT = 60.0
ACTION_TOL = 1e-9


class HarnessError(ValueError):
    pass


@dataclass
class ExperimentSpec:
    instance: str
    planner: str
    network: str | None = None
    horizon: int | None = None
    seeds: tuple[int, ...] = (0,)
    options: dict = field(default_factory=dict)
    output: str | None = None

    def __post_init__(self):
        self.seeds = tuple(int(s) for s in self.seeds)
        self.validate()

    def validate(self) -> None:
        if self.planner not in PLANNERS:
            raise HarnessError(f"unknown planner {self.planner!r}; choose from {PLANNERS}")
        allowed = (MILP_OPTIONS if self.planner.startswith("milp") else
                   GRAD_OPTIONS if self.planner == "grad" else set())
        if self.planner == "milp-strengthened-gap20":
            allowed = allowed - {"rel_gap"}
        bad = set(self.options) - allowed
        if bad:
            raise HarnessError(f"option(s) {sorted(bad)} are not valid for planner {self.planner!r}")
        if not self.seeds:
            raise HarnessError("need at least one evaluation seed")
        if self.horizon is not None and self.horizon < 1:
            raise HarnessError("horizon must be positive")

    @property
    def model_based(self) -> bool:
        return self.planner != "baseline"

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentSpec:
        return cls(**{**data, "seeds": tuple(data.get("seeds", (0,)))})

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        return d


@dataclass
class StepRecord:
    t: int
    state: list[float]
    action: list[float]
    reward: float
    call_time: float
    fallback: bool = False
    projected: bool = False
    diagnostics: dict = field(default_factory=dict)


@dataclass
class RunRecord:
    instance: str
    planner: str
    seed: int
    steps: list[StepRecord] = field(default_factory=list)
    final_state: list[float] = field(default_factory=list)
    phase_times: dict = field(default_factory=lambda: {
        "compile": 0.0, "preprocess": 0.0, "solve": 0.0, "simulate": 0.0})
    wall_time: float = 0.0
    violations: list[str] = field(default_factory=list)

    @property
    def horizon(self) -> int:
        return len(self.steps)

    @property
    def total_return(self) -> float:
        return float(sum(s.reward for s in self.steps))

    @property
    def actions(self) -> np.ndarray:
        return np.array([s.action for s in self.steps])

    @property
    def rewards(self) -> np.ndarray:
        return np.array([s.reward for s in self.steps])

    @property
    def call_times(self) -> list[float]:
        return [s.call_time for s in self.steps]

    @property
    def mean_call_time(self) -> float:
        return float(np.mean(self.call_times)) if self.steps else 0.0

    @property
    def fallbacks(self) -> int:
        return sum(s.fallback for s in self.steps)

    def row(self) -> dict:
        return {"instance": self.instance, "planner": self.planner, "seed": self.seed,
                "return": self.total_return, "wall_time": self.wall_time,
                "mean_call_time": self.mean_call_time, "n_calls": len(self.steps),
                "fallbacks": self.fallbacks, "violations": len(self.violations)}

    def to_dict(self) -> dict:
        d = asdict(self)
        d["return"] = self.total_return
        d["mean_call_time"] = self.mean_call_time
        return d


# -- model preparation --------------------------------------------------------

def train_for_instance(instance: Domain, config: TrainConfig | None = None, n: int = 20000,
                       policy: str = "uniform-random", seed: int = 0) -> Network:
    """Generate exploration data, train a network and fold its input scaling."""
    data = generate_data(instance, policy, n, seed)
    return fold_standardization(train(data, config or TrainConfig()).network)


def _resolve_network(spec: ExperimentSpec, net: Network | None) -> Network | None:
    if not spec.model_based:
        return None
    if net is None:
        if spec.network is None:
            raise HarnessError(f"planner {spec.planner!r} needs a trained network")
        net = load_network(spec.network)
    return net if net.folded else fold_standardization(net)


# -- one planning call ------------------------------------------------------------

def _plan_milp(spec, problem, net, previous, record: RunRecord):
    opts = spec.options
    encoding = "base" if spec.planner == "milp-base" else "strengthened"
    rel_gap = 0.2 if spec.planner == "milp-strengthened-gap20" else opts.get("rel_gap", 1e-6)
    budget = PreprocessBudget(opts.get("budget_time", 2.0), opts.get("budget_nodes", 500))
    H, nA = problem.horizon, problem.n_actions
    starts = [np.tile(problem.noop_action, (H, 1))]
    if previous is not None and len(previous) > H:
        starts.append(previous[1:H + 1])
    plan = plan_milp(problem, net, encoding=encoding, preprocess=bool(opts.get("preprocess")),
                     rel_gap=rel_gap, time_limit=opts.get("time_limit", DEFAULT_TIME_LIMIT),
                     node_limit=opts.get("node_limit"), budget=budget,
                     start_actions=[s.reshape(H, nA) for s in starts])
    for phase in ("compile", "preprocess", "solve"):
        record.phase_times[phase] += plan.diagnostics["timings"][phase]
    d = plan.diagnostics
    diag = {k: d[k] for k in ("status", "gap", "nodes", "bound", "limit")}
    return plan.actions, diag


def _plan_grad(spec, problem, net, previous, seed, record: RunRecord):
    opts = spec.options
    cfg = GradConfig(batch=opts.get("batch", 32), rate=opts.get("rate", 0.05),
                     epochs=opts.get("epochs", 1000), seed=seed,
                     loss=opts.get("loss", "squared"), decay=opts.get("decay", 0.9))
    H = problem.horizon
    if opts.get("warm_start", True) and previous is not None and len(previous) > H:
        cfg.init = previous[1:H + 1]
    t0 = time.perf_counter()
    plan = plan_gradient(problem, net, config=cfg)
    record.phase_times["solve"] += time.perf_counter() - t0
    d = plan.diagnostics
    return plan.actions, {"best_epoch": d["best_epoch"], "epochs": d["epochs"],
                          "objective": plan.objective}


# -- online loop ----------------------------------------------------------------------

def run_online(spec: ExperimentSpec, instance: Domain | None = None, net: Network | None = None,
               seed: int | None = None) -> RunRecord:
    """Replan from every observed true state and execute the first action."""
    inst = instance or load_instance(spec.instance)
    net = _resolve_network(spec, net)
    seed = spec.seeds[0] if seed is None else int(seed)
    H = int(spec.horizon or inst.horizon)
    rec = RunRecord(inst.name, spec.planner, seed)
    start = time.perf_counter()
    s = inst.init.copy()
    base_problem = inst.problem()
    lo, hi = base_problem.action_lower, base_problem.action_upper
    previous = None
    for t in range(H):
        problem = inst.problem(init=s, horizon=H - t)
        t0 = time.perf_counter()
        fallback, diag = False, {}
        try:
            if spec.planner == "baseline":
                plan = np.asarray(inst.baseline(s), float)[None]
                if np.any(plan[0] < lo - ACTION_TOL) or np.any(plan[0] > hi + ACTION_TOL):
                    raise AssertionError(f"baseline action {plan[0]} leaves the declared bounds")
            elif spec.planner == "grad":
                plan, diag = _plan_grad(spec, problem, net, previous, seed, rec)
            else:
                plan, diag = _plan_milp(spec, problem, net, previous, rec)
        except (InfeasibleProblem, CompileError, GradPlanError) as exc:
            logger.warning("step %d: planning failed (%s); executing the no-op action", t, exc)
            plan, fallback = np.tile(problem.noop_action, (H - t, 1)), True
            diag = {"error": str(exc)}
        call_time = time.perf_counter() - t0
        previous = None if fallback else np.asarray(plan, float)

        t1 = time.perf_counter()
        a = np.asarray(plan[0], float)
        feasible = inst.project_action(s, a)
        projected = not np.allclose(feasible, a, rtol=0.0, atol=ACTION_TOL)
        if projected:
            rec.violations.append(f"step {t}: action {a.tolist()} projected to {feasible.tolist()}")
        try:
            nxt = inst.step(s, feasible)
        except ConstraintViolation as exc:  # projection should make this unreachable
            rec.violations.append(f"step {t}: {exc}")
            feasible = problem.noop_action
            nxt = inst.step(s, feasible, check=False)
        r = float(inst.reward(nxt, feasible))
        rec.phase_times["simulate"] += time.perf_counter() - t1
        rec.steps.append(StepRecord(t, s.tolist(), feasible.tolist(), r, call_time, fallback,
                                    projected, diag))
        s = nxt
    rec.final_state = s.tolist()
    rec.wall_time = time.perf_counter() - start
    return rec


def resimulate(instance: Domain, record: RunRecord) -> float:
    """Return of the recorded actions replayed in the exact simulator."""
    s = instance.init.copy()
    total = 0.0
    for a in record.actions:
        s = instance.step(s, a)
        total += float(instance.reward(s, a))
    return total


# -- suites ----------------------------------------------------------------------------

def _run_one(args) -> RunRecord:
    spec, seed = args
    return run_online(spec, seed=seed)


def run_suite(specs: list[ExperimentSpec], output: str | Path | None = None,
              jobs: int = 1) -> list[RunRecord]:
    """Run every (spec, seed) pair and optionally write ``<output>.csv`` and ``.json``."""
    work = [(spec, seed) for spec in specs for seed in spec.seeds]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            records = list(pool.map(_run_one, work))
    else:
        records = [_run_one(w) for w in work]
    if output is not None:
        write_results(records, output)
    return records


def write_results(records: list[RunRecord], output: str | Path) -> None:
    out = Path(output)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.with_suffix(".csv").open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SUITE_COLUMNS)
        w.writeheader()
        for r in records:
            w.writerow(r.row())
    payload = {"columns": list(SUITE_COLUMNS), "rows": [r.row() for r in records],
               "runs": [r.to_dict() for r in records]}
    out.with_suffix(".json").write_text(json.dumps(payload, indent=2, default=_json_default))


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return str(obj)


def load_specs(path: str | Path) -> list[ExperimentSpec]:
    """Experiment list from a JSON file: a list of specs or ``{"experiments": [...]}``."""
    data = json.loads(Path(path).read_text())
    items = data["experiments"] if isinstance(data, dict) else data
    return [ExperimentSpec.from_dict(d) for d in items]
