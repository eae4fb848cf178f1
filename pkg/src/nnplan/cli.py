"""Command line entry point: ``nnplan <subcommand> [options]``.

Every option can also come from a JSON run-config passed with ``--config``;
keys are option names with dashes replaced by underscores, and explicit
command line flags win over the file.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from nnplan.compile import (PreprocessBudget, compile_base, compile_strengthened,
                            plan_milp, preprocess_bounds)
from nnplan.dataset import Dataset
from nnplan.domains import POLICIES, generate_data, load_instance
from nnplan.gradplan import GradConfig, plan_gradient
from nnplan.harness import PLANNERS, ExperimentSpec, load_specs, run_online, run_suite, \
    write_results
from nnplan.milp.lpformat import export_lp
from nnplan.network import fold_standardization, load_network, save_network
from nnplan.problem import PlanningProblem
from nnplan.training import TrainConfig, train


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.split(",") if t.strip())


def _add_target(p: argparse.ArgumentParser) -> None:
    p.add_argument("--instance", help="bundled instance name or instance JSON file")
    p.add_argument("--problem", help="planning problem JSON file (alternative to --instance)")
    p.add_argument("--horizon", type=int)


def _problem(args) -> PlanningProblem:
    if args.problem:
        prob = PlanningProblem.load(args.problem)
    elif args.instance:
        prob = load_instance(args.instance).problem()
    else:
        raise SystemExit("need --instance or --problem")
    return prob.with_horizon(args.horizon) if args.horizon else prob


def _net(path: str):
    net = load_network(path)
    return net if net.folded else fold_standardization(net)


def _dump(obj, path: str | None) -> None:
    text = json.dumps(obj, indent=2, default=lambda o: o.tolist() if hasattr(o, "tolist") else str(o))
    if path:
        Path(path).write_text(text + "\n")
    else:
        print(text)


# -- subcommands ------------------------------------------------------------------

def cmd_gen_data(args) -> None:
    data = generate_data(load_instance(args.instance), args.policy, args.n, args.seed)
    data.save_csv(args.out)
    print(f"wrote {len(data)} transitions to {args.out}")


def cmd_train(args) -> None:
    data = Dataset.load_csv(args.data)
    cfg = TrainConfig(hidden=_ints(args.hidden), l2=args.l2, dropout=args.dropout,
                      epochs=args.epochs, rate=args.rate, final_rate=args.final_rate,
                      batch_size=args.batch_size, seed=args.seed, split_seed=args.split_seed)
    res = train(data, cfg)
    net = res.network if args.no_fold else fold_standardization(res.network)
    save_network(net, args.out)
    print(f"best epoch {res.best_epoch}, test MSE {res.test_mse:.6g}; saved to {args.out}")
    if args.history:
        _dump(res.history, args.history)


def cmd_plan(args) -> None:
    prob = _problem(args)
    net = _net(args.network)
    if args.export_lp:
        compiler = compile_base if args.encoding == "base" else compile_strengthened
        model, _ = compiler(prob, net)
        export_lp(model, args.export_lp)
        print(f"wrote {args.export_lp}")
        if args.export_only:
            return
    budget = PreprocessBudget(args.budget_time, args.budget_nodes)
    plan = plan_milp(prob, net, encoding=args.encoding, preprocess=args.preprocess == "on",
                     rel_gap=args.gap, time_limit=args.time_limit, node_limit=args.node_limit,
                     budget=budget, external_solver=args.external_solver,
                     start_actions=[np.tile(prob.noop_action, (prob.horizon, 1))])
    _dump({"actions": plan.actions, "states": plan.states, "objective": plan.objective,
           "diagnostics": plan.diagnostics}, args.out)


def cmd_plan_grad(args) -> None:
    prob = _problem(args)
    if args.true_dynamics:
        if not args.instance:
            raise SystemExit("--true-dynamics needs --instance")
        transition = load_instance(args.instance)
    else:
        transition = _net(args.network)
    cfg = GradConfig(batch=args.batch, rate=args.rate, epochs=args.epochs, seed=args.seed,
                     loss=args.loss)
    plan = plan_gradient(prob, transition, config=cfg)
    trace = plan.diagnostics.pop("trace")
    if args.trace:
        trace.write_csv(args.trace)
    _dump({"actions": plan.actions, "states": plan.states, "objective": plan.objective,
           "diagnostics": plan.diagnostics}, args.out)


def cmd_bounds(args) -> None:
    prob = _problem(args)
    b = preprocess_bounds(prob, _net(args.network), prob.horizon,
                          PreprocessBudget(args.budget_time, args.budget_nodes))
    _dump(b.to_dict(), args.out)


def _spec_from_args(args) -> ExperimentSpec:
    options = json.loads(args.options) if isinstance(args.options, str) else dict(args.options or {})
    return ExperimentSpec(args.instance, args.planner, args.network, args.horizon,
                          tuple(args.seeds), options, args.out)


def cmd_run_online(args) -> None:
    spec = _spec_from_args(args)
    records = [run_online(spec, seed=s) for s in spec.seeds]
    for r in records:
        print(f"{r.instance} {r.planner} seed={r.seed} return={r.total_return:.6g} "
              f"fallbacks={r.fallbacks} violations={len(r.violations)}")
    if args.out:
        write_results(records, args.out)


def cmd_run_suite(args) -> None:
    specs = load_specs(args.specs)
    records = run_suite(specs, args.out, jobs=args.jobs)
    for r in records:
        print(f"{r.instance} {r.planner} seed={r.seed} return={r.total_return:.6g} "
              f"mean call {r.mean_call_time:.3g}s")


# -- parser -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nnplan", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON run-config supplying option defaults")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    parser.subcommands = sub

    p = sub.add_parser("gen-data", help="roll out an exploration policy in a simulator")
    p.add_argument("--instance", required=True)
    p.add_argument("--policy", choices=POLICIES, default="uniform-random")
    p.add_argument("--n", type=int, default=100000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="fit a transition network to a dataset CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--hidden", default="32", help="comma separated widths, empty for linear")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--rate", type=float, default=1e-3)
    p.add_argument("--final-rate", type=float)
    p.add_argument("--dropout", type=float, default=0.1)
    p.add_argument("--l2", type=float, default=1e-6)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--no-fold", action="store_true", help="keep the input standardization")
    p.add_argument("--history", help="write per-epoch losses to this JSON file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("plan", help="one-shot MILP plan over the learned model")
    _add_target(p)
    p.add_argument("--network", required=True)
    p.add_argument("--encoding", choices=("base", "strengthened"), default="strengthened")
    p.add_argument("--preprocess", choices=("on", "off"), default="off")
    p.add_argument("--budget-time", type=float, default=2.0)
    p.add_argument("--budget-nodes", type=int, default=500)
    p.add_argument("--gap", type=float, default=1e-6, help="relative gap target")
    p.add_argument("--time-limit", type=float, default=60.0)
    p.add_argument("--node-limit", type=int)
    p.add_argument("--export-lp", help="also write the model in LP format")
    p.add_argument("--export-only", action="store_true", help="stop after --export-lp")
    p.add_argument("--external-solver",
                   help="command with {lp} and {sol} placeholders used instead of the built-in solver")
    p.add_argument("--out")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("plan-grad", help="one-shot gradient plan")
    _add_target(p)
    p.add_argument("--network")
    p.add_argument("--true-dynamics", action="store_true",
                   help="differentiate through the exact simulator instead of a network")
    p.add_argument("--epochs", type=int, default=1000)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--rate", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--loss", choices=("squared", "negated"), default="squared")
    p.add_argument("--trace", help="write the per-epoch best-so-far trace CSV")
    p.add_argument("--out")
    p.set_defaults(func=cmd_plan_grad)

    p = sub.add_parser("bounds", help="bound preprocessing only")
    _add_target(p)
    p.add_argument("--network", required=True)
    p.add_argument("--budget-time", type=float, default=2.0)
    p.add_argument("--budget-nodes", type=int, default=500)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("run-online", help="online replanning against the exact simulator")
    p.add_argument("--instance", required=True)
    p.add_argument("--planner", choices=PLANNERS, required=True)
    p.add_argument("--network")
    p.add_argument("--horizon", type=int)
    p.add_argument("--seeds", type=_ints, default=(0,))
    p.add_argument("--options", default="{}", help="planner options as a JSON object")
    p.add_argument("--out", help="results path stem (.csv and .json are written)")
    p.set_defaults(func=cmd_run_online)

    p = sub.add_parser("run-suite", help="run a JSON list of experiments")
    p.add_argument("--specs", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_run_suite)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        config = json.loads(Path(known.config).read_text())
        choices = parser.subcommands.choices
        command = next((a for a in argv if a in choices), None)
        if command is None:
            parser.error("a subcommand is required")
        sub = choices[command]
        dests = {a.dest: a for a in sub._actions}
        unknown = set(config) - set(dests)
        if unknown:
            parser.error(f"unknown run-config key(s) {sorted(unknown)} for {command}")
        for key in config:
            dests[key].required = False
        sub.set_defaults(**config)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    args.func(args)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
