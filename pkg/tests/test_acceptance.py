"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The lines are collected and printed again in pytest's terminal summary.
Running this file directly (``python tests/test_acceptance.py``) also works.
Criteria 6 and 8 run full-size NSGA-II and take most of the time; NSGA-II
runs and model solves are shared between criteria 6, 7 and 8.
"""

import filecmp
import json
import math
import time
from functools import lru_cache

import numpy as np
import pytest

import oracles
from pbftaging.cli import main as cli_main
from pbftaging.ctmc import build_generator
from pbftaging.indicators import hypervolume_2d
from pbftaging.metrics import evaluate
from pbftaging.moea import (
    Bounds,
    ModelEvaluator,
    RunConfig,
    crowding_distance,
    fast_nondominated_sort,
    nsga2_run,
    random_search,
    sbx_crossover,
)
from pbftaging.params import RESPONSE_TIME_WEIGHTS, SystemParams
from pbftaging.sim import SimConfig, compare, simulate
from pbftaging.steady import SolverOptions, solve_stationary

RESULTS: list[str] = []

OPT_NODES = (12, 15, 20)
OPT_SEEDS = (1, 2, 3)
HV_SEEDS = tuple(range(1, 21))
BUDGET = 10_000


def report(number: int, ok: bool, detail: str) -> None:
    line = f"CRITERION {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line, flush=True)


@lru_cache(maxsize=None)
def evaluator(n_total: int) -> ModelEvaluator:
    return ModelEvaluator(SystemParams(n_total=n_total), weights=RESPONSE_TIME_WEIGHTS)


@lru_cache(maxsize=None)
def nsga(n_total: int, seed: int):
    cfg = RunConfig(pop_size=50, generations=200, seed=seed)
    assert cfg.budget == BUDGET
    return nsga2_run(evaluator(n_total), Bounds(), cfg)


def test_c01_six_state_oracle():
    t0 = time.perf_counter()
    p = SystemParams(f=0, n_total=1, k_capacity=1)
    space, Q = build_generator(p)
    pi = solve_stationary(space, Q).pi
    expected = oracles.six_state_pi(p.lam, p.mu_h, p.xi, p.mu_r, p.beta_w)
    err = max(abs(pi[space.index(s)] - v) for s, v in expected.items())
    secs = time.perf_counter() - t0
    ok = err <= 1e-10 and secs < 1
    report(1, ok, f"max |pi - hand solve| = {err:.2e} (tol 1e-10), {secs:.2f}s (< 1s)")
    assert ok


def test_c02_mm1k_reduction():
    t0 = time.perf_counter()
    r = evaluate(SystemParams(xi=0.0, beta_h=0.0))
    secs = time.perf_counter() - t0
    ok = (
        abs(r.mean_queue - 3.8045) <= 1e-3
        and abs(r.p_drop - 0.002327) <= 1e-5
        and abs(r.t_resp - 0.9533) <= 1e-3
        and secs < 5
    )
    report(2, ok, f"E[Q]={r.mean_queue:.6f} P_drop={r.p_drop:.6f} T_resp={r.t_resp:.6f} ms, {secs:.2f}s (< 5s)")
    assert ok


def test_c03_solver_cross_check():
    t0 = time.perf_counter()
    space, Q = build_generator(SystemParams())
    d = solve_stationary(space, Q, SolverOptions(method="direct")).pi
    i = solve_stationary(space, Q, SolverOptions(method="iterative")).pi
    secs = time.perf_counter() - t0
    gap = float(np.max(np.abs(d - i)))
    ok = len(space) == 2856 and gap <= 1e-8 and secs < 30
    report(3, ok, f"{len(space)} states, max |direct - iterative| = {gap:.2e} (tol 1e-8), {secs:.1f}s (< 30s)")
    assert ok


def test_c04_simulation_cross_validation():
    t0 = time.perf_counter()
    p = SystemParams()
    analytical = evaluate(p)
    inside = []
    for seed in range(1, 6):
        cmp = compare(simulate(p, SimConfig(horizon=1e6, seed=seed)), analytical)
        inside.append(cmp.n_consistent)
    secs = time.perf_counter() - t0
    ok = all(n >= 6 for n in inside) and secs < 120
    report(4, ok, f"metrics inside 95% CI per seed 1..5: {inside} (need >= 6 of 7 each), {secs:.1f}s (< 120s)")
    assert ok


def _monotone(values, direction):
    return all(direction * (b - a) >= -1e-12 for a, b in zip(values, values[1:]))


def test_c05_trend_suite():
    t0 = time.perf_counter()
    sweeps = {
        "n_total": (list(range(10, 26)), +1),
        "mu_r": ([1, 5, 10], +1),
        "beta_w": ([3, 8, 15], +1),
        "beta_h": ([0.2, 2, 20], -1),
    }
    problems = []
    for name, (values, direction) in sweeps.items():
        reps = [evaluate(SystemParams().with_updates(**{name: v})) for v in values]
        if not _monotone([r.availability for r in reps], direction):
            problems.append(f"availability vs {name}")
        for metric in ("t_resp", "p_drop"):
            if not _monotone([getattr(r, metric) for r in reps], -direction):
                problems.append(f"{metric} vs {name}")
    top = evaluate(SystemParams(n_total=25, mu_r=10, beta_h=0.2))
    if not 0.92 <= top.availability <= 0.98:
        problems.append("availability band at N=25")
    if top.p_drop > 0.02:
        problems.append("p_drop at N=25")
    secs = time.perf_counter() - t0
    ok = not problems and secs < 120
    report(
        5, ok,
        f"trend violations: {problems or 'none'}; N=25 availability={top.availability:.4f} "
        f"in [0.92, 0.98], p_drop={top.p_drop:.4f} <= 0.02, {secs:.1f}s (< 120s)",
    )
    assert ok


def test_c06_optimizer_beats_random():
    outcomes = []
    for n in OPT_NODES:
        for seed in OPT_SEEDS:
            ours = nsga(n, seed)
            assert ours.evaluations == BUDGET
            base = random_search(evaluator(n), Bounds(), BUDGET, seed)
            outcomes.append((n, seed, ours.chosen.scalarized, base.scalarized))
    wins = [o for o in outcomes if o[2] <= o[3]]
    ok = len(wins) == len(outcomes)
    detail = "; ".join(f"N={n} s{s}: {a:.4f} vs {b:.4f}" for n, s, a, b in outcomes)
    report(6, ok, f"NSGA-II vs random best weighted objective, {len(wins)}/{len(outcomes)} not worse: {detail}")
    assert ok


def test_c07_reported_optimum():
    chosen = nsga(15, 1).chosen
    mu_r, beta_h, beta_w = chosen.genes
    ok = mu_r >= 9.5
    report(7, ok, f"chosen mu_r={mu_r:.4f} (need >= 9.5); beta_h={beta_h:.4f}, beta_w={beta_w:.4f} reported only")
    assert ok


def test_c08_hypervolume_grows():
    improved = 0
    for seed in HV_SEEDS:
        hist = nsga(15, seed).history
        improved += hist[-1].hv >= hist[0].hv
    ok = improved >= math.ceil(0.95 * len(HV_SEEDS))
    report(8, ok, f"final HV >= initial HV in {improved}/{len(HV_SEEDS)} runs (need >= 95%)")
    assert ok


def _cli_artifacts(root, tag):
    out = root / tag
    cfg = root / "small.json"
    cfg.write_text(json.dumps({"model": {"n_total": 10, "k_capacity": 8}}))
    commands = [
        ["evaluate", "--out", str(out / "evaluate")],
        ["evaluate", "--format", "csv", "--out", str(out / "evaluate")],
        ["sweep", "--contrast", "mu_r=1,5,10", "--out", str(out / "sweep")],
        ["sweep", "--param", "beta_h", "--values", "0.2,2,20", "--format", "json", "--out", str(out / "sweep")],
        ["simulate", "--horizon", "5e4", "--seed", "11", "--trace", str(out / "trace.csv"), "--trace-limit", "500",
         "--out", str(out / "simulate")],
        ["optimize", "--config", str(cfg), "--pop", "10", "--generations", "6", "--seed", "4",
         "--out", str(out / "optimize")],
    ]
    for argv in commands:
        assert cli_main(argv) == 0, argv
    return out


def test_c09_determinism(tmp_path, capsys):
    a = _cli_artifacts(tmp_path, "a")
    b = _cli_artifacts(tmp_path, "b")
    capsys.readouterr()
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    same = [f for f in files if filecmp.cmp(a / f, b / f, shallow=False)]
    assert cli_main(["validate"]) == 0
    first = capsys.readouterr().out
    assert cli_main(["validate"]) == 0
    stdout_same = first == capsys.readouterr().out
    ok = len(files) >= 8 and len(same) == len(files) and stdout_same
    report(9, ok, f"{len(same)}/{len(files)} CSV/JSON artifacts byte-identical across reruns; validate stdout identical: {stdout_same}")
    assert ok


def test_c10_operator_oracles():
    rng = np.random.default_rng(0)
    x1, x2 = np.array([2.0, 5.0, 4.0]), np.array([8.0, 1.0, 14.0])
    c1, c2 = sbx_crossover(x1, x2, 20, rng, Bounds(), psi=0.0)
    sbx_ok = np.array_equal(c1, (x1 + x2) / 2) and np.array_equal(c2, (x1 + x2) / 2)
    cd = crowding_distance([(0, 1), (0.5, 0.5), (1, 0)]).tolist()
    cd_ok = cd == [math.inf, 2.0, math.inf]
    hv = hypervolume_2d([(0.25, 0.75), (0.5, 0.5), (0.75, 0.25)], (1, 1))
    hv_ok = hv == 0.375
    sort_ok = 0
    for seed in range(200):
        r = np.random.default_rng(seed)
        pts = [tuple(p) for p in r.random((int(r.integers(2, 40)), 2)).round(1).tolist()]
        sort_ok += [sorted(f) for f in fast_nondominated_sort(pts)] == oracles.brute_force_fronts(pts)
    ok = sbx_ok and cd_ok and hv_ok and sort_ok == 200
    report(10, ok, f"SBX psi=0 mean: {sbx_ok}; crowding {cd}; HV {hv!r}; sort matches brute force on {sort_ok}/200 sets")
    assert ok


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-s"]))
