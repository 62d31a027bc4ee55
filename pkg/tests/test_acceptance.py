"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line with its timing."""

import json
import time
from pathlib import Path

import numpy as np
import pytest

from pnlab import cli
from pnlab.corpus import TestCorpus, default_corpus, members_1d
from pnlab.dynamics import decay_study, detect_blowup, random_ghidaglia_sweep
from pnlab.embeddings import check_eta_chain, check_gradient_split, default_suite, power_by_laplacian, run_inequality
from pnlab.experiments import MANIFEST, inventory
from pnlab.grid import Grid, GridFunction, first_eigenpair, gradient, laplacian
from pnlab.solver import (
    ProblemSpec,
    SolverConfig,
    l2q_distance,
    regularized_kernel_velocity,
    run_trajectory,
    solve_elliptic_regularized,
    solve_scalar_two_point,
)
from pnlab.spaces import PnParams, metric_s1, metric_s_delta, s1_seminorm, s_delta_core, s_delta_seminorm

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
SINE = lambda x: np.sin(np.pi * x)
BUMP = lambda x: x**2 * (1 - x) ** 2
BUMP2 = lambda x, y: x**2 * (1 - x) ** 2 * y**2 * (1 - y) ** 2


@pytest.fixture
def report(capsys):
    """Yield ``check(n, ok, detail, budget_s)``; prints the verdict line at teardown with the elapsed time."""
    state = {}
    start = time.perf_counter()

    def check(n, ok, detail, budget):
        state.update(n=n, ok=bool(ok), detail=detail, budget=budget)

    yield check
    elapsed = time.perf_counter() - start
    if state:
        ok = state["ok"] and elapsed < state["budget"]
        with capsys.disabled():
            print(f"\ncriterion {state['n']}: {'PASS' if ok else 'FAIL'} ({elapsed:.1f}s < {state['budget']}s) {state['detail']}")


def _orders(errs, ns):
    hs = [1.0 / (n + 1) for n in ns]
    return [float(np.log(errs[i] / errs[i + 1]) / np.log(hs[i] / hs[i + 1])) for i in range(len(ns) - 1)]


def test_criterion_1_stencil_orders(report):
    t0 = time.perf_counter()
    ns = [100, 200, 400]
    lap, grad = [], []
    for n in ns:
        g = Grid.uniform(n)
        u = g.sample(SINE)
        lap.append(np.max(np.abs(laplacian(u).values + np.pi**2 * u.values)))
        grad.append(np.max(np.abs(gradient(u)[0].values - g.sample(lambda x: np.pi * np.cos(np.pi * x)).values)))
    orders = _orders(lap, ns) + _orders(grad, ns)
    ok = all(1.8 <= p <= 2.2 for p in orders)
    report(1, ok, f"orders {np.round(orders, 3).tolist()} in [1.8, 2.2]", 5)
    assert ok and time.perf_counter() - t0 < 5


def test_criterion_2_homogeneity_and_metrics(report):
    t0 = time.perf_counter()
    g = Grid.uniform(15, dim=2)
    u = g.sample(lambda x, y: np.sin(np.pi * x) * np.sin(2 * np.pi * y) + x * y * (1 - x) * (1 - y))
    worst = 0.0
    for p in (PnParams(1, 2), PnParams(0.5, 3), PnParams(2, 2)):
        for f in (s1_seminorm, s_delta_seminorm, s_delta_core):
            for lam in (-2.0, -1.0, 0.5, 3.0):
                worst = max(worst, abs(f(lam * u, p) / (abs(lam) * f(u, p)) - 1))
    rng = np.random.default_rng(11)
    g1 = Grid.uniform(20)
    p, p1 = PnParams(1.0, 2.0), PnParams(0.0, 3.0)
    axiom_fail = 0
    for _ in range(100):
        a, b, c = (GridFunction(g1, rng.standard_normal(20) * rng.uniform(0.1, 3)) for _ in range(3))
        for kind in ("full", "s0"):
            for d in (lambda x, y: metric_s1(x, y, p, kind), lambda x, y: metric_s_delta(x, y, p, p1, kind)):
                axiom_fail += d(a, a) != 0 or d(a, b) != d(b, a) or d(a, c) > d(a, b) + d(b, c) + 1e-12
    ok = worst <= 1e-10 and axiom_fail == 0
    report(2, ok, f"homogeneity rel err {worst:.1e} <= 1e-10, metric axiom failures {axiom_fail}", 10)
    assert ok and time.perf_counter() - t0 < 10


def test_criterion_3_identities(report):
    t0 = time.perf_counter()
    orders = {}
    orders["3.6 1d sin"] = check_eta_chain(SINE, PnParams(2, 2), Grid.uniform(49), levels=4).orders
    orders["3.6 1d bump"] = check_eta_chain(BUMP, PnParams(1, 2), Grid.uniform(49), levels=4).orders
    orders["3.6 2d bump"] = check_eta_chain(BUMP2, PnParams(1, 2), Grid.uniform(15, dim=2), levels=3).orders
    for theta, variant in [(0.5, "general"), (2 / 3, "general"), (2 / 3, "theta23")]:
        orders[f"4.2 1d theta={theta:.3g} {variant}"] = check_gradient_split(BUMP, 1.0, theta, Grid.uniform(49), 4, variant).orders
        orders[f"4.2 2d theta={theta:.3g} {variant}"] = check_gradient_split(BUMP2, 1.0, theta, Grid.uniform(15, dim=2), 3,
                                                                          variant).orders
    low = min(min(o) for o in orders.values())
    ok = low >= 1.5
    report(3, ok, f"min masked L2 order {low:.3f} >= 1.5 over {len(orders)} cases", 30)
    assert ok and time.perf_counter() - t0 < 30


def test_criterion_4_inequality_suite(report):
    t0 = time.perf_counter()
    corpora = {1: default_corpus(Grid.uniform(99)), 2: default_corpus(Grid.uniform(31, dim=2))}
    n_funcs = sum(len(c) for c in corpora.values())
    violations, drift = [], 0.0
    for dim, corpus in corpora.items():
        for ineq in default_suite(dim):
            rep = run_inequality(ineq, corpus, levels=3)
            drift = max(drift, rep.drift)
            if rep.violation:
                violations.append(f"{dim}d:{ineq.id}")
    sin1 = [m for m in members_1d() if m.id == "sin1"]
    lhs, (rhs,) = power_by_laplacian(1.0, 2.0).terms(TestCorpus.from_members(Grid.uniform(199), sin1).functions[0])
    ratio_err = abs(lhs / rhs * np.pi**4 - 1)
    ok = n_funcs >= 30 and not violations and drift < 0.25 and ratio_err <= 0.01
    report(4, ok, f"{n_funcs} functions, violations {violations}, max drift {drift:.3f} < 0.25, "
                  f"sin ratio rel err {ratio_err:.1e} <= 1e-2", 180)
    assert ok and time.perf_counter() - t0 < 180


def test_criterion_5_solver_consistency(report):
    t0 = time.perf_counter()
    g = Grid.uniform(49)
    spec = ProblemSpec(rho=1.0, mu=0.5, b0=0.1, domain=g, T=0.5,
                       h=lambda t, gr: 10.0 * np.sin(np.pi * gr.coordinates()[0]))
    trs = {m: run_trajectory(spec, SolverConfig(m, dt=0.005, m=8)) for m in ("semi-implicit", "implicit-newton", "galerkin")}
    names = list(trs)
    gaps = [l2q_distance(trs[a], trs[b]) for i, a in enumerate(names) for b in names[i + 1:]]

    def exact(t, gr):
        return np.exp(-t) * np.sin(np.pi * gr.coordinates()[0])

    def h(t, gr):
        u = exact(t, gr)
        return -u + np.abs(u) * np.pi**2 * u + 0.1 * np.abs(u) ** 1.5

    errs = []
    for n in (19, 39, 79):
        gr = Grid.uniform(n)
        dt = 4.0 / (n + 1) ** 2  # dt ~ h², so O(dt + h²) shows as second order in h
        ms = ProblemSpec(rho=1.0, mu=0.5, b0=0.1, domain=gr, T=0.5, h=h, u0=GridFunction(gr, exact(0, gr)))
        tr = run_trajectory(ms, SolverConfig("semi-implicit", dt=dt))
        errs.append(np.sqrt(np.sum((tr.final.values - exact(0.5, gr)) ** 2) * gr.cell_volume))
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    ok = max(gaps) <= 0.02 and all(3.2 <= r <= 4.8 for r in ratios)
    report(5, ok, f"max pairwise rel L2(Q) gap {max(gaps):.4f} <= 0.02, "
                  f"manufactured error ratios {np.round(ratios, 2).tolist()} ~ 4 (h halved, dt quartered)", 60)
    assert ok and time.perf_counter() - t0 < 60


def test_criterion_6_regularization(report):
    t0 = time.perf_counter()
    g = Grid.uniform(49)
    spec = ProblemSpec(rho=1.0, mu=0.5, b0=0.1, domain=g, T=0.5,
                       h=lambda t, gr: 10.0 * np.sin(np.pi * gr.coordinates()[0]))
    ref = run_trajectory(spec, SolverConfig("implicit-newton", dt=0.0005))
    fam = solve_elliptic_regularized(spec, SolverConfig("elliptic-regularized", dt=0.005,
                                                        epsilon_schedule=(0.1, 0.05, 0.025, 0.0125)))
    dist = [l2q_distance(ref, fam.trajectories[e], relative=False) for e in (0.1, 0.05, 0.025, 0.0125)]
    ts = np.linspace(0, 1, 4001)
    f0 = np.cos(3 * ts) + ts**2
    v = np.gradient(solve_scalar_two_point(f0, ts, 0.1), ts, edge_order=2)
    kernel_gap = float(np.max(np.abs(v - regularized_kernel_velocity(f0, 0.1, ts, ts))))
    ok = all(b < a for a, b in zip(dist, dist[1:])) and kernel_gap <= 1e-4
    report(6, ok, f"distances {np.round(dist, 4).tolist()} strictly decreasing, kernel gap {kernel_gap:.1e} <= 1e-4", 120)
    assert ok and time.perf_counter() - t0 < 120


def test_criterion_7_ghidaglia(report):
    t0 = time.perf_counter()
    reps = random_ghidaglia_sweep(100, seed=0)
    bad = sum(r.violations for r in reps)
    report(7, bad == 0, f"{bad} violations over {len(reps)} draws (margin 1e-8)", 10)
    assert bad == 0 and time.perf_counter() - t0 < 10


@pytest.mark.parametrize("rho", [1.0, 2.0])
def test_criterion_8_decay(report, rho):
    t0 = time.perf_counter()
    g = Grid.uniform(49)
    spec = ProblemSpec(rho=rho, domain=g, T=20.0, u0=g.sample(SINE))
    rec = decay_study(run_trajectory(spec, SolverConfig(dt=0.01, record_stride=100)), spec)
    ok = abs(rec.slope + 2 / rho) <= 0.3
    report(8, ok, f"rho={rho:g}: slope {rec.slope:.3f} vs {-2 / rho:g} +- 0.3", 60)
    assert ok and time.perf_counter() - t0 < 60


def test_criterion_9_regimes(report):
    t0 = time.perf_counter()
    g = Grid.uniform(49)
    eig = first_eigenpair(g)
    sups = []
    for dt in (0.01, 0.005):
        tr = run_trajectory(ProblemSpec(rho=1.0, domain=g, T=10.0, u0=eig.v1, b=4.0), SolverConfig(dt=dt))
        st = detect_blowup(tr, eig.v1, 1.0)
        sups.append((st.status, st.sup_phi))
    bounded = all(s == "bounded" for s, _ in sups) and abs(sups[0][1] / sups[1][1] - 1) <= 0.01
    tr = run_trajectory(ProblemSpec(rho=1.0, domain=g, T=10.0, u0=eig.v1, b=2 * np.pi**2), SolverConfig(dt=0.01))
    blow = detect_blowup(tr, eig.v1, 1.0)
    ok = bounded and blow.status == "blow-up-detected" and blow.monotone_v1_growth
    report(9, ok, f"b=4: {sups[0][0]}, sup phi {sups[0][1]:.5f} / {sups[1][1]:.5f} under dt halving; "
                  f"b=2pi^2: {blow.status} at t={blow.t_star}, monotone <u,v1> {blow.monotone_v1_growth}", 120)
    assert ok and time.perf_counter() - t0 < 120


def test_criterion_10_cli_contract(report, tmp_path):
    t0 = time.perf_counter()
    codes = {}
    for d in ("a", "b"):
        codes[f"solve-{d}"] = cli.main(["solve", "--config", str(CONFIGS / "solve.toml"), "--out", str(tmp_path / d),
                                        "--seed", "42"])
    same = inventory(tmp_path / "a") == inventory(tmp_path / "b") and all(
        (tmp_path / "a" / k).read_bytes() == (tmp_path / "b" / k).read_bytes() for k in inventory(tmp_path / "a"))
    same &= json.loads((tmp_path / "a" / MANIFEST).read_text())["files"] == json.loads(
        (tmp_path / "b" / MANIFEST).read_text())["files"]
    for name, sub, cfg in [("passing", "verify", "verify.toml"), ("violating", "verify", "verify_broken.toml"),
                           ("blow-up", "blowup", "blowup.toml")]:
        codes[name] = cli.main([sub, "--config", str(CONFIGS / cfg), "--out", str(tmp_path / name)])
    expected = {"solve-a": 0, "solve-b": 0, "passing": 0, "violating": 1, "blow-up": 0}
    ok = same and codes == expected
    report(10, ok, f"byte-identical reruns {same}, exit codes {codes}", 120)
    assert ok and time.perf_counter() - t0 < 120
