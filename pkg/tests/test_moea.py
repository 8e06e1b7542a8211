import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from pbftaging.moea import (
    Bounds,
    Evaluation,
    Individual,
    ModelEvaluator,
    RunConfig,
    best_so_far,
    crowded_winner,
    crowding_distance,
    dominates,
    fast_nondominated_sort,
    nsga2_run,
    polynomial_mutation,
    quantize,
    random_search,
    sbx_crossover,
)
from pbftaging.params import SystemParams

BOUNDS = Bounds()


def toy(genes):
    """Cheap stand-in with a known trade-off: cost grows with mu_r, delay shrinks."""
    mu_r, beta_h, beta_w = genes
    cost = mu_r + 0.1 * beta_h + 0.1 * beta_w
    delay = 10.0 / mu_r + 0.05 * beta_h + 1.0 / beta_w
    return Evaluation(cost, delay, 0.1 * cost + 0.9 * delay, True)


def test_sbx_zero_spread_gives_mean():
    x1, x2 = np.array([2.0, 5.0, 4.0]), np.array([8.0, 1.0, 14.0])
    c1, c2 = sbx_crossover(x1, x2, 20, np.random.default_rng(0), BOUNDS, psi=0.0)
    assert np.array_equal(c1, (x1 + x2) / 2) and np.array_equal(c2, (x1 + x2) / 2)


def test_sbx_unit_spread_copies_parents():
    x1, x2 = np.array([2.0, 5.0, 4.0]), np.array([8.0, 1.0, 14.0])
    c1, c2 = sbx_crossover(x1, x2, 20, np.random.default_rng(0), BOUNDS, psi=1.0)
    assert np.array_equal(c1, x1) and np.array_equal(c2, x2)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=50, deadline=None)
def test_sbx_children_in_bounds_and_mean_preserving(seed):
    rng = np.random.default_rng(seed)
    # parents far from the edges of a huge box, so no child is clipped
    wide = Bounds(low=(0.0, 0.0, 0.0), high=(2e6, 2e6, 2e6))
    x1, x2 = rng.uniform(BOUNDS.lo, BOUNDS.hi) + 1e6, rng.uniform(BOUNDS.lo, BOUNDS.hi) + 1e6
    c1, c2 = sbx_crossover(x1, x2, 20, rng, wide)
    assert np.allclose(c1 + c2, x1 + x2, rtol=0, atol=1e-6)
    x1, x2 = x1 - 1e6, x2 - 1e6
    c1, c2 = sbx_crossover(x1, x2, 20, rng, BOUNDS)
    for c in (c1, c2):
        assert np.all(c >= BOUNDS.lo) and np.all(c <= BOUNDS.hi)


def test_mutation_respects_bounds_and_probability():
    rng = np.random.default_rng(1)
    x = np.array([1.0, 30.0, 9.0])
    for _ in range(2000):
        y = polynomial_mutation(x, 20, 1.0, BOUNDS, rng)
        assert np.all(y >= BOUNDS.lo) and np.all(y <= BOUNDS.hi)
    assert np.array_equal(polynomial_mutation(x, 20, 0.0, BOUNDS, rng), x)


def test_mutation_is_unbiased_mid_range():
    b = Bounds(low=(0.0, 0.0, 0.0), high=(1.0, 1.0, 1.0))
    rng = np.random.default_rng(2024)
    x = np.array([0.5, 0.5, 0.5])
    moves = np.array([polynomial_mutation(x, 20, 1.0, b, rng)[0] - 0.5 for _ in range(100_000)])
    assert abs(moves.mean()) <= 3 * moves.std(ddof=1) / math.sqrt(len(moves))
    assert np.count_nonzero(moves) > 99_000


def test_crowding_example():
    assert crowding_distance([(0, 1), (0.5, 0.5), (1, 0)]).tolist() == [math.inf, 2.0, math.inf]


def test_crowding_small_and_flat():
    assert crowding_distance([(0, 1), (1, 0)]).tolist() == [math.inf, math.inf]
    d = crowding_distance([(0, 1), (0.5, 1), (1, 1)])
    assert d.tolist() == [math.inf, 1.0, math.inf]


def test_dominance():
    assert dominates((1, 1), (1, 2))
    assert not dominates((1, 1), (1, 1))
    assert not dominates((0, 2), (1, 1))


@pytest.mark.parametrize("seed", range(200))
def test_sort_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 60))
    # coarse integer grid so ties and duplicates show up
    pts = [tuple(p) for p in rng.integers(0, 8, size=(n, 2)).tolist()]
    got = [sorted(f) for f in fast_nondominated_sort(pts)]
    assert got == oracles.brute_force_fronts(pts)


@given(st.lists(st.tuples(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6)), max_size=40))
@settings(max_examples=100, deadline=None)
def test_sort_property(pts):
    assert [sorted(f) for f in fast_nondominated_sort(pts)] == oracles.brute_force_fronts(pts)


def test_sort_with_infinite_points():
    fronts = fast_nondominated_sort([(1, 1), (math.inf, math.inf), (math.inf, math.inf), (0, 2)])
    assert fronts == [[0, 3], [1, 2]]


def test_crowded_comparison():
    a = Individual((1, 1, 1), (1, 1), 1, rank=0, crowding=0.5)
    b = Individual((1, 1, 1), (1, 1), 1, rank=1, crowding=9.0)
    c = Individual((1, 1, 1), (1, 1), 1, rank=0, crowding=math.inf)
    assert crowded_winner(a, b) is a and crowded_winner(b, a) is a
    assert crowded_winner(a, c) is c
    assert crowded_winner(a, a) is a


def test_bounds_validation():
    with pytest.raises(ValueError):
        Bounds(low=(5, 0.1, 3), high=(1, 30, 15))
    with pytest.raises(ValueError):
        Bounds(low=(1, -1, 3))
    with pytest.raises(ValueError):
        RunConfig(pop_size=7)


def test_run_budget_and_history():
    cfg = RunConfig(pop_size=20, generations=15, seed=3)
    calls = []

    def counted(g):
        calls.append(g)
        return toy(g)

    res = nsga2_run(counted, BOUNDS, cfg)
    assert res.evaluations == len(calls) == cfg.budget == 300
    assert [r.generation for r in res.history] == list(range(15))
    assert all(0 <= r.hv <= 1.21 for r in res.history)
    assert len(res.population) == 20
    assert all(m.rank == 0 for m in res.front.members)
    assert res.chosen.scalarized == min(m.scalarized for m in res.front.members)
    objs = res.front.objectives()
    assert not any(dominates(a, b) for a in objs for b in objs)


def test_run_is_deterministic():
    cfg = RunConfig(pop_size=20, generations=10, seed=5)
    a, b = nsga2_run(toy, BOUNDS, cfg), nsga2_run(toy, BOUNDS, cfg)
    assert [m.genes for m in a.population] == [m.genes for m in b.population]
    assert a.history == b.history
    c = nsga2_run(toy, BOUNDS, RunConfig(pop_size=20, generations=10, seed=6))
    assert [m.genes for m in a.population] != [m.genes for m in c.population]


def test_run_independent_of_map_order():
    cfg = RunConfig(pop_size=12, generations=6, seed=2)

    def reversed_map(fn, items):
        items = list(items)
        out = [fn(x) for x in reversed(items)]
        return list(reversed(out))

    a, b = nsga2_run(toy, BOUNDS, cfg), nsga2_run(toy, BOUNDS, cfg, map_fn=reversed_map)
    assert [m.genes for m in a.population] == [m.genes for m in b.population]


def test_run_survives_failed_individuals():
    def flaky(g):
        if g[0] < 4:
            return Evaluation(math.inf, math.inf, math.inf, False)
        return toy(g)

    res = nsga2_run(flaky, BOUNDS, RunConfig(pop_size=16, generations=10, seed=1))
    assert all(math.isfinite(m.scalarized) for m in res.front.members)
    assert all(math.isfinite(r.hv) for r in res.history)


def test_hv_improves_on_toy_problem():
    res = nsga2_run(toy, BOUNDS, RunConfig(pop_size=20, generations=30, seed=1))
    assert res.history[-1].hv >= res.history[0].hv


def test_random_search_prefix_property():
    runs = list(best_so_far(toy, BOUNDS, 500, seed=9))
    assert all(b <= a for a, b in zip(runs, runs[1:]))
    for budget in (1, 10, 100, 500):
        assert random_search(toy, BOUNDS, budget, seed=9).scalarized == runs[budget - 1]
    with pytest.raises(ValueError):
        random_search(toy, BOUNDS, 0)


def test_model_evaluator_memoizes():
    ev = ModelEvaluator(SystemParams(n_total=10, k_capacity=8))
    a = ev((5.0, 1.0, 8.0))
    b = ev((5.0000001, 1.0, 8.0))
    assert a == b and a.ok
    assert ev.requests == 2 and ev.solves == 1


def test_model_evaluator_rejects_slow_repair():
    ev = ModelEvaluator(SystemParams(xi=2.0, n_total=10, k_capacity=8))
    res = ev((1.5, 1.0, 8.0))
    assert not res.ok and math.isinf(res.scalarized)


def test_quantize():
    assert quantize([1.23456789, 2, 3]) == (1.234568, 2.0, 3.0)


def _ind(cost, delay, weighted):
    return Individual((1.0, 1.0, 1.0), (cost, delay), weighted)


def test_truncation_keeps_best_weighted_member():
    from pbftaging.moea import _truncate

    # five mutually non-dominated points; the weighted best sits in a crowded spot
    merged = [_ind(0, 10, 9), _ind(1, 9, 1), _ind(1.1, 8.9, 8), _ind(5, 5, 7), _ind(10, 0, 9)]
    plain = _truncate(merged, 4)
    assert all(ind.scalarized != 1 for ind in plain)
    kept = _truncate(merged, 4, keep_best_weighted=True)
    assert kept[0] is merged[1] and len(kept) == 4


def test_truncation_keeps_dominated_elite():
    from pbftaging.moea import _truncate

    merged = [_ind(0, 0, 5), _ind(1, 1, 0.5), _ind(2, 2, 6), _ind(3, 3, 7)]
    assert merged[1] in _truncate(merged, 2, keep_best_weighted=True)
    assert merged[1] in _truncate(merged, 2)  # it is in the second front anyway
    assert merged[1] not in _truncate(merged, 1)


def test_best_weighted_never_lost():
    res = nsga2_run(toy, BOUNDS, RunConfig(pop_size=12, generations=25, seed=4))
    best = [h.best_scalarized for h in res.history]
    assert all(b <= a for a, b in zip(best, best[1:]))
    plain = nsga2_run(toy, BOUNDS, RunConfig(pop_size=12, generations=25, seed=4, keep_best_weighted=False))
    assert plain.evaluations == res.evaluations
