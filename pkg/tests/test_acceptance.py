"""Acceptance criteria 1-10.  Each test prints one PASS/FAIL line."""

from __future__ import annotations

import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from nnplan import autodiff as ad
from nnplan.compile import compile_base, compile_strengthened, fix_actions, plan_milp
from nnplan.domains import generate_data, load_instance
from nnplan.gradplan import GradConfig, build_rollout, plan_gradient, rollout_returns
from nnplan.harness import ExperimentSpec, run_online
from nnplan.milp import MilpModel, solve, solve_lp_relaxation
from nnplan.network import fold_standardization, forward, forward_graph, rollout
from nnplan.problem import total_reward
from nnplan.training import TrainConfig, train
from helpers import (central_diff, enumerate_milp, max_rel_error, random_net, tiny_problem)

TESTS = Path(__file__).parent


@pytest.fixture
def report(capsys):
    def emit(n: int, title: str, ok: bool, detail: str) -> bool:
        with capsys.disabled():
            print(f"\nACCEPTANCE {n:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
        return ok
    return emit


# -- shared trained models ---------------------------------------------------------

LINEAR = TrainConfig(hidden=(), dropout=0.0, l2=0.0, epochs=100, rate=1e-2, final_rate=1e-5)
PLANNING = {
    "reservoir3": TrainConfig(hidden=(8,), dropout=0.0, l2=0.0, epochs=100, rate=1e-2, final_rate=1e-5),
    "hvac3": TrainConfig(hidden=(8,), dropout=0.0, l2=0.0, epochs=100, rate=1e-2, final_rate=1e-5),
    "navigation10": TrainConfig(hidden=(8, 8), dropout=0.0, l2=0.0, epochs=100, rate=1e-2,
                                final_rate=1e-5),
}


@pytest.fixture(scope="session")
def planning_nets():
    nets = {}
    for name, cfg in PLANNING.items():
        data = generate_data(load_instance(name), "uniform-random", 20000, seed=0)
        nets[name] = fold_standardization(train(data, cfg).network)
    return nets


# -- 1 ------------------------------------------------------------------------------

def test_1_milp_network_equivalence(report):
    rng = np.random.default_rng(0)
    t0 = time.perf_counter()
    worst = 0.0
    for trial in range(50):
        nS, nA, H = int(rng.integers(1, 5)), int(rng.integers(1, 3)), int(rng.integers(1, 4))
        hidden = tuple(rng.integers(1, 17, size=rng.integers(0, 3)))
        net = random_net(rng, nS, nA, hidden, seed=trial)
        prob = tiny_problem(rng, nS, nA, H)
        acts = rng.uniform(-1, 1, (H, nA))
        model, enc = compile_base(prob, net)
        res = solve(fix_actions(model, enc, acts))
        states = rollout(net, prob.init, acts)
        ref = total_reward(prob, states[1:], acts)
        worst = max(worst, abs(res.objective - ref) if res.status == "optimal" else np.inf)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-6 and elapsed < 120
    assert report(1, "MILP objective vs network rollout, 50 nets", ok,
                  f"max |diff| {worst:.2e} (tol 1e-6), {elapsed:.1f}s (limit 120s)")


# -- 2 ------------------------------------------------------------------------------

def test_2_encoding_agreement(report):
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    worst_opt, worst_lp = 0.0, -np.inf
    for trial in range(20):
        nS, nA, H = int(rng.integers(1, 3)), int(rng.integers(1, 3)), int(rng.integers(1, 4))
        hidden = tuple(rng.integers(2, 7, size=rng.integers(1, 3)))
        net = random_net(rng, nS, nA, hidden, seed=100 + trial)
        prob = tiny_problem(rng, nS, nA, H, action_box=(-1.0, float(rng.uniform(0.5, 2.0))))
        base, _ = compile_base(prob, net)
        strong, _ = compile_strengthened(prob, net)
        rb, rs = solve(base), solve(strong)
        assert rb.status == rs.status == "optimal"
        worst_opt = max(worst_opt, abs(rb.objective - rs.objective))
        lb, ls = solve_lp_relaxation(base), solve_lp_relaxation(strong)
        worst_lp = max(worst_lp, ls.objective - lb.objective)
    elapsed = time.perf_counter() - t0
    ok = worst_opt <= 1e-6 and worst_lp <= 1e-9 and elapsed < 300
    assert report(2, "strengthened vs base encoding, 20 instances", ok,
                  f"max optimum diff {worst_opt:.2e} (tol 1e-6), "
                  f"max LP(strong) - LP(base) {worst_lp:.2e} (must be <= 0), {elapsed:.1f}s")


# -- 3 ------------------------------------------------------------------------------

def random_milp(rng, n_bin: int) -> MilpModel:
    nc = int(rng.integers(0, 3))
    n, m = n_bin + nc, int(rng.integers(2, 8))
    mod = MilpModel("acceptance")
    for i in range(n_bin):
        mod.add_var(f"b{i}", kind="binary")
    for i in range(nc):
        mod.add_var(f"x{i}", -3.0, 3.0)
    A = rng.normal(size=(m, n)).round(2)
    rhs = rng.uniform(0, 3, m).round(2)
    for i in range(m):
        mod.add_constraint({j: A[i, j] for j in range(n)}, "<=", float(rhs[i]))
    c = rng.normal(size=n)
    mod.set_objective({j: c[j] for j in range(n)}, "max" if rng.random() < 0.5 else "min")
    return mod


def test_3_branch_and_bound_vs_enumeration(report):
    rng = np.random.default_rng(11)
    sizes = [12, 12, 11, 10, 10, 9, 9, 8, 8, 7, 7, 6, 6, 5, 5, 4, 3, 3, 2, 1]
    models = [random_milp(rng, nb) for nb in sizes]
    t0 = time.perf_counter()
    results = [solve(m) for m in models]
    elapsed = time.perf_counter() - t0
    worst, mismatched = 0.0, 0
    for m, r in zip(models, results):
        status, value = enumerate_milp(m)
        if status != r.status:
            mismatched += 1
        elif status == "optimal":
            worst = max(worst, abs(value - r.objective))
    ok = mismatched == 0 and worst <= 1e-7 and elapsed < 60
    assert report(3, "B&B vs exhaustive enumeration, 20 MILPs (<= 12 binaries)", ok,
                  f"{mismatched} status mismatches, max |diff| {worst:.2e} (tol 1e-7), "
                  f"solver time {elapsed:.1f}s (limit 60s)")


# -- 4 ------------------------------------------------------------------------------

def test_4_gradient_integrity(report):
    rng = np.random.default_rng(4)
    t0 = time.perf_counter()
    worst_net = worst_graph = 0.0
    for trial in range(20):
        nS, nA = int(rng.integers(1, 4)), int(rng.integers(1, 3))
        hidden = tuple(rng.integers(2, 9, size=rng.integers(1, 3)))
        net = random_net(rng, nS, nA, hidden, seed=trial)
        x0 = rng.normal(size=(3, nS + nA))
        w = rng.normal(size=(3, nS))
        f = lambda v: float(np.sum(w * forward(net, v[:, :nS], v[:, nS:])))
        tape = ad.Tape()
        x = tape.leaf(x0)
        (g,) = ad.grad(tape, ad.sum_(ad.mul(forward_graph(net, x), w)), [x])
        worst_net = max(worst_net, max_rel_error(g, central_diff(f, x0)))
    for trial in range(20):
        nS, nA = int(rng.integers(1, 4)), int(rng.integers(1, 3))
        net = random_net(rng, nS, nA, tuple(rng.integers(2, 9, size=rng.integers(1, 3))),
                         seed=50 + trial)
        prob = tiny_problem(rng, nS, nA, 5)
        acts = rng.uniform(-1, 1, (1, 5, nA))
        tape, leaves, v = build_rollout(prob, net, acts)
        g = np.stack(ad.grad(tape, ad.sum_(v), leaves), axis=1)
        f = lambda a: float(rollout_returns(prob, net, a)[0][0])
        worst_graph = max(worst_graph, max_rel_error(g, central_diff(f, acts)))
    elapsed = time.perf_counter() - t0
    ok = worst_net < 1e-4 and worst_graph < 1e-4 and elapsed < 60
    assert report(4, "reverse mode vs central differences", ok,
                  f"nets {worst_net:.2e}, H=5 graphs {worst_graph:.2e} (tol 1e-4), {elapsed:.1f}s")


# -- 5 ------------------------------------------------------------------------------

def test_5_fold_identity(report):
    rng = np.random.default_rng(5)
    t0 = time.perf_counter()
    worst = 0.0
    for trial in range(10):
        nS, nA = int(rng.integers(1, 5)), int(rng.integers(1, 3))
        net = random_net(rng, nS, nA, tuple(rng.integers(1, 17, size=rng.integers(0, 3))),
                         folded=False, seed=trial)
        folded = fold_standardization(net)
        s, a = rng.normal(scale=4, size=(100, nS)), rng.normal(scale=4, size=(100, nA))
        xs = net.standardize(np.concatenate([s, a], axis=1))
        ref = forward(net, xs[:, :nS], xs[:, nS:], standardize=False)
        worst = max(worst, float(np.max(np.abs(forward(folded, s, a) - ref))))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and elapsed < 10
    assert report(5, "folded vs standardized forward, 10 nets x 100 inputs", ok,
                  f"max |diff| {worst:.2e} (tol 1e-9), {elapsed:.2f}s")


# -- 6 ------------------------------------------------------------------------------

@pytest.mark.slow
def test_6_learning_ordering(report):
    t0 = time.perf_counter()
    nav = generate_data(load_instance("navigation10"), "uniform-random", 20000, seed=0)
    nav_lin = train(nav, LINEAR).test_mse
    nav_deep = train(nav, TrainConfig(hidden=(32, 32), dropout=0.0, l2=0.0, epochs=100,
                                      rate=3e-3, final_rate=1e-5)).test_mse
    res = generate_data(load_instance("reservoir4"), "uniform-random", 20000, seed=0)
    res_lin = train(res, LINEAR).test_mse
    res_deep = train(res, TrainConfig(hidden=(64,), dropout=0.0, l2=0.0, epochs=200,
                                      rate=3e-3, final_rate=1e-6)).test_mse
    elapsed = time.perf_counter() - t0
    ok = nav_deep < 0.5 * nav_lin and res_deep < 0.5 * res_lin and elapsed < 1800
    assert report(6, "learned-model test MSE ordering (2x10^4 samples)", ok,
                  f"navigation10 2-hidden {nav_deep:.3g} vs linear {nav_lin:.3g} "
                  f"(ratio {nav_deep / nav_lin:.2f}); reservoir4 1-hidden {res_deep:.3g} vs linear "
                  f"{res_lin:.3g} (ratio {res_deep / res_lin:.2f}); need < 0.5; {elapsed:.0f}s")


# -- 7 ------------------------------------------------------------------------------

@pytest.mark.slow
def test_7_planners_vs_baseline(report, planning_nets):
    lines, passed = [], 0
    for name in ("navigation10", "reservoir3", "hvac3"):
        net = planning_nets[name]
        base = run_online(ExperimentSpec(name, "baseline")).total_return
        milp = run_online(ExperimentSpec(name, "milp-strengthened", options={"time_limit": 10.0}),
                          net=net).total_return
        grad = run_online(ExperimentSpec(name, "grad", options={"epochs": 300}),
                          net=net).total_return
        ok = milp >= base and grad >= base
        passed += ok
        lines.append(f"{name} baseline {base:.2f} milp {milp:.2f} grad {grad:.2f} "
                     f"[{'ok' if ok else 'below baseline'}]")
    ok = passed >= 2
    assert report(7, "online planners >= baseline on at least 2 of 3 domains", ok,
                  "; ".join(lines))


# -- 8 ------------------------------------------------------------------------------

def test_8_gradient_within_20_percent_of_milp(report, planning_nets):
    net = planning_nets["reservoir3"]
    prob = load_instance("reservoir3").problem().with_horizon(3)
    milp = plan_milp(prob, net, encoding="strengthened", time_limit=None, rel_gap=1e-9)
    grad = plan_gradient(prob, net, config=GradConfig(batch=32, epochs=1000, seed=0))
    # the gradient plan respects the action bounds; check it is feasible in the learned model too
    feasible = all(np.all(a <= np.maximum(s, 0.0) + 1e-9)
                   for s, a in zip(grad.states[:-1], grad.actions))
    ratio = abs(milp.objective - grad.objective) / abs(milp.objective)
    ok = milp.diagnostics["status"] == "optimal" and ratio <= 0.2 and \
        grad.objective <= milp.objective + 1e-6
    assert report(8, "gradient plan vs proven MILP optimum (reservoir3, H=3, learned model)", ok,
                  f"MILP {milp.objective:.4f} ({milp.diagnostics['status']}), grad "
                  f"{grad.objective:.4f}, relative shortfall {ratio:.3f} (limit 0.2), "
                  f"grad plan satisfies f <= l: {feasible}")


# -- 9 ------------------------------------------------------------------------------

def test_9_more_epochs_better(report):
    inst = load_instance("navigation10")
    prob = inst.problem()
    wins, lines = 0, []
    for seed in range(5):
        short = plan_gradient(prob, inst, config=GradConfig(epochs=20, seed=seed)).objective
        long = plan_gradient(prob, inst, config=GradConfig(epochs=320, seed=seed)).objective
        wins += long > short
        lines.append(f"{short:.2f}->{long:.2f}")
    ok = wins >= 3
    assert report(9, "navigation10 true dynamics: 320 epochs beats 20 epochs", ok,
                  f"{wins}/5 seeds improved ({', '.join(lines)})")


# -- 10 -----------------------------------------------------------------------------

@pytest.mark.slow
def test_10_invariant_suites(report):
    t0 = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-m", "invariant",
                           "-p", "no:cacheprovider", str(TESTS)],
                          capture_output=True, text=True, cwd=TESTS.parent)
    elapsed = time.perf_counter() - t0
    summary = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-300:]
    ok = proc.returncode == 0 and elapsed < 600
    assert report(10, "invariant property suites", ok, f"{summary} ({elapsed:.0f}s, limit 600s)")
