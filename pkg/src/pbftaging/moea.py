"""NSGA-II over repair and migration rates.

Decision vector: ``(mu_r, beta_h, beta_w)``. Objectives, both minimised:
total maintenance cost and mean response time. The weighted sum of the cost
terms and response time picks one member of the final front, ranks
random-search samples and, by default, is kept elitist: the best weighted
individual seen so far always survives selection.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np

from .indicators import hypervolume_2d, normalize, spacing
from .metrics import evaluate
from .params import CostParams, ObjectiveWeights, SystemParams

log = logging.getLogger(__name__)

GENE_NAMES = ("mu_r", "beta_h", "beta_w")
DECIMALS = 6


@dataclass(frozen=True)
class Bounds:
    low: tuple[float, float, float] = (1.0, 0.1, 3.0)
    high: tuple[float, float, float] = (10.0, 30.0, 15.0)

    def __post_init__(self):
        if len(self.low) != 3 or len(self.high) != 3:
            raise ValueError("bounds need one (low, high) pair per gene")
        if any(lo >= hi for lo, hi in zip(self.low, self.high)):
            raise ValueError("every lower bound must be below its upper bound")
        if self.low[1] < 0 or self.low[2] < 0:
            raise ValueError("migration rates cannot be negative")

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.low, dtype=float)

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.high, dtype=float)

    def clip(self, x) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=float), self.lo, self.hi)


def quantize(x) -> tuple[float, ...]:
    return tuple(float(v) for v in np.round(np.asarray(x, dtype=float), DECIMALS))


@dataclass
class Individual:
    genes: tuple[float, float, float]
    objectives: tuple[float, float]  # (total_cost, t_resp)
    scalarized: float
    rank: int = -1
    crowding: float = 0.0

    def as_row(self) -> dict:
        return {
            **dict(zip(GENE_NAMES, self.genes)),
            "total_cost": self.objectives[0],
            "t_resp": self.objectives[1],
            "rank": self.rank,
            "crowding": self.crowding,
        }


@dataclass(frozen=True)
class RunConfig:
    pop_size: int = 50
    generations: int = 200
    eta_c: float = 20.0
    eta_m: float = 20.0
    p_c: float = 0.9
    p_m: float = 1.0 / 3.0
    seed: int = 1
    hv_reference: tuple[float, float] = (1.1, 1.1)
    keep_best_weighted: bool = True  # elitism on the weighted objective; False gives plain NSGA-II

    def __post_init__(self):
        if self.pop_size < 4 or self.pop_size % 2:
            raise ValueError("population size must be even and at least 4")
        if self.generations < 1:
            raise ValueError("need at least one generation")
        if not (0 <= self.p_c <= 1 and 0 <= self.p_m <= 1):
            raise ValueError("probabilities must lie in [0, 1]")

    @property
    def budget(self) -> int:
        return self.pop_size * self.generations


class Evaluation(NamedTuple):
    total_cost: float
    t_resp: float
    scalarized: float
    ok: bool


class ModelEvaluator:
    """Maps genes to objectives by solving the chain, with memoisation.

    Genes are rounded to 6 decimals before lookup. Any failure (invalid
    rates, solver trouble, no admitted traffic) yields infinite objectives.
    """

    def __init__(
        self,
        params: SystemParams | None = None,
        costs: CostParams | None = None,
        weights: ObjectiveWeights | None = None,
    ):
        self.params = params or SystemParams()
        self.costs = costs or CostParams()
        self.weights = weights or ObjectiveWeights()
        self._cache: dict[tuple[float, ...], Evaluation] = {}
        self.requests = 0

    @property
    def solves(self) -> int:
        return len(self._cache)

    def __call__(self, genes) -> Evaluation:
        key = quantize(genes)
        self.requests += 1
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        result = self._solve(key)
        self._cache[key] = result
        return result

    def _solve(self, genes: tuple[float, ...]) -> Evaluation:
        mu_r, beta_h, beta_w = genes
        if not mu_r > self.params.xi or beta_h < 0 or beta_w < 0:
            log.warning("genes %s violate mu_r > xi or non-negative migration", genes)
            return Evaluation(math.inf, math.inf, math.inf, False)
        try:
            rep = evaluate(
                self.params.with_updates(mu_r=mu_r, beta_h=beta_h, beta_w=beta_w),
                self.costs,
                self.weights,
            )
        except Exception as exc:  # any failure is a bad individual, not a bad run
            log.warning("evaluation failed for %s: %s", genes, exc)
            return Evaluation(math.inf, math.inf, math.inf, False)
        vals = (rep.total_cost, rep.t_resp, rep.scalarized)
        if not all(math.isfinite(v) for v in vals):
            return Evaluation(math.inf, math.inf, math.inf, False)
        return Evaluation(*vals, True)


Evaluator = Callable[[Sequence[float]], Evaluation]


def sbx_crossover(x1, x2, eta_c: float, rng: np.random.Generator, bounds: Bounds, psi=None):
    """Simulated binary crossover, gene by gene.

    The spread factor ``psi`` is drawn from the usual SBX density with index
    ``eta_c`` unless given; children are clipped to the bounds.
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if psi is None:
        u = rng.random(x1.shape)
        psi = np.where(
            u <= 0.5,
            (2.0 * u) ** (1.0 / (eta_c + 1.0)),
            (1.0 / (2.0 * (1.0 - u))) ** (1.0 / (eta_c + 1.0)),
        )
    psi = np.broadcast_to(np.asarray(psi, dtype=float), x1.shape)
    c1 = 0.5 * ((1.0 + psi) * x1 + (1.0 - psi) * x2)
    c2 = 0.5 * ((1.0 - psi) * x1 + (1.0 + psi) * x2)
    return bounds.clip(c1), bounds.clip(c2)


def polynomial_mutation(x, eta_m: float, p_m: float, bounds: Bounds, rng: np.random.Generator) -> np.ndarray:
    """Bounded polynomial mutation (Deb and Goyal), each gene with probability ``p_m``."""
    y = np.array(x, dtype=float)
    lo, hi = bounds.lo, bounds.hi
    span = hi - lo
    power = 1.0 / (eta_m + 1.0)
    for i in range(len(y)):
        if rng.random() >= p_m:
            continue
        u = rng.random()
        d1 = (y[i] - lo[i]) / span[i]
        d2 = (hi[i] - y[i]) / span[i]
        if u < 0.5:
            val = 2.0 * u + (1.0 - 2.0 * u) * (1.0 - d1) ** (eta_m + 1.0)
            dq = val**power - 1.0
        else:
            val = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * (1.0 - d2) ** (eta_m + 1.0)
            dq = 1.0 - val**power
        y[i] += dq * span[i]
    return bounds.clip(y)


def dominates(a, b) -> bool:
    a = np.asarray(a)
    b = np.asarray(b)
    return bool(np.all(a <= b) and np.any(a < b))


def fast_nondominated_sort(objectives) -> list[list[int]]:
    """Split points into successive non-dominated fronts (minimisation)."""
    F = np.asarray(objectives, dtype=float)
    n = len(F)
    if n == 0:
        return []
    le = np.all(F[:, None, :] <= F[None, :, :], axis=2)
    lt = np.any(F[:, None, :] < F[None, :, :], axis=2)
    dom = le & lt  # dom[i, j]: i dominates j
    remaining_dominators = dom.sum(axis=0)
    current = np.flatnonzero(remaining_dominators == 0)
    fronts = []
    while len(current):
        fronts.append(current.tolist())
        remaining_dominators = remaining_dominators - dom[current].sum(axis=0)
        remaining_dominators[current] = -1
        current = np.flatnonzero(remaining_dominators == 0)
    return fronts


def crowding_distance(objectives) -> np.ndarray:
    F = np.asarray(objectives, dtype=float).reshape(len(objectives), -1)
    n = len(F)
    dist = np.zeros(n)
    if n <= 2:
        dist[:] = np.inf
        return dist
    for k in range(F.shape[1]):
        order = np.argsort(F[:, k], kind="stable")
        vals = F[order, k]
        dist[order[0]] = dist[order[-1]] = np.inf
        if not (np.isfinite(vals[0]) and np.isfinite(vals[-1])):
            continue
        span = vals[-1] - vals[0]
        if span <= 0:
            continue
        dist[order[1:-1]] += (vals[2:] - vals[:-2]) / span
    return dist


def crowded_winner(a: Individual, b: Individual) -> Individual:
    """Lower rank wins, then larger crowding; ``a`` keeps any remaining tie."""
    if a.rank != b.rank:
        return a if a.rank < b.rank else b
    if b.crowding > a.crowding:
        return b
    return a


def tournament_select(population: Sequence[Individual], rng: np.random.Generator) -> Individual:
    if len(population) == 1:
        return population[0]
    i, j = rng.choice(len(population), size=2, replace=False)
    return crowded_winner(population[i], population[j])


def assign_rank_and_crowding(population: Sequence[Individual]) -> list[list[int]]:
    objs = [ind.objectives for ind in population]
    fronts = fast_nondominated_sort(objs)
    for rank, front in enumerate(fronts):
        cd = crowding_distance([objs[i] for i in front])
        for i, d in zip(front, cd):
            population[i].rank = rank
            population[i].crowding = float(d)
    return fronts


def _individual(genes, ev: Evaluation) -> Individual:
    return Individual(quantize(genes), (ev.total_cost, ev.t_resp), ev.scalarized)


def _truncate(merged: list[Individual], size: int, keep_best_weighted: bool = False) -> list[Individual]:
    """Environmental selection: whole fronts first, then by crowding.

    With ``keep_best_weighted`` the member with the lowest weighted objective
    survives even when crowding or rank would drop it.
    """
    fronts = fast_nondominated_sort([ind.objectives for ind in merged])
    chosen: list[int] = []
    if keep_best_weighted:
        elite = min(range(len(merged)), key=lambda i: (merged[i].scalarized, i))
        chosen.append(elite)
        fronts = [[i for i in f if i != elite] for f in fronts]
    for front in fronts:
        if len(chosen) + len(front) <= size:
            chosen.extend(front)
            if len(chosen) == size:
                break
            continue
        cd = crowding_distance([merged[i].objectives for i in front])
        order = sorted(range(len(front)), key=lambda k: (-cd[k], front[k]))
        chosen.extend(front[k] for k in order[: size - len(chosen)])
        break
    return [merged[i] for i in chosen]


@dataclass(frozen=True)
class GenerationRecord:
    generation: int
    hv: float
    spacing: float
    best_scalarized: float


@dataclass
class ParetoFront:
    members: list[Individual]
    history: list[GenerationRecord] = field(default_factory=list)

    def objectives(self) -> np.ndarray:
        return np.array([m.objectives for m in self.members], dtype=float).reshape(-1, 2)


@dataclass
class RunResult:
    front: ParetoFront
    chosen: Individual
    population: list[Individual]
    fronts_by_generation: list[np.ndarray]
    normalization: tuple[np.ndarray, np.ndarray]
    evaluations: int

    @property
    def history(self) -> list[GenerationRecord]:
        return self.front.history


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def _offspring_pair(pop, bounds: Bounds, cfg: RunConfig, rng: np.random.Generator):
    a = tournament_select(pop, rng)
    b = tournament_select(pop, rng)
    if rng.random() < cfg.p_c:
        c1, c2 = sbx_crossover(a.genes, b.genes, cfg.eta_c, rng, bounds)
    else:
        c1, c2 = np.array(a.genes), np.array(b.genes)
    c1 = polynomial_mutation(c1, cfg.eta_m, cfg.p_m, bounds, rng)
    c2 = polynomial_mutation(c2, cfg.eta_m, cfg.p_m, bounds, rng)
    return quantize(c1), quantize(c2)


def nsga2_run(
    evaluator: Evaluator,
    bounds: Bounds | None = None,
    config: RunConfig | None = None,
    map_fn: Callable = map,
) -> RunResult:
    """Run NSGA-II.

    ``config.generations`` counts evaluated populations, the random initial
    one included, so the run costs ``pop_size * generations`` evaluations.
    Every offspring pair draws from its own stream keyed by
    ``(seed, generation, pair)``, so results do not depend on how ``map_fn``
    schedules evaluations.
    """
    bounds = bounds or Bounds()
    cfg = config or RunConfig()
    n = cfg.pop_size

    init_rng = _rng(cfg.seed, 0)
    genes = [quantize(init_rng.uniform(bounds.lo, bounds.hi)) for _ in range(n)]
    pop = [_individual(g, ev) for g, ev in zip(genes, map_fn(evaluator, genes))]
    evaluations = n
    assign_rank_and_crowding(pop)

    snapshots = [[ind.objectives for ind in pop]]
    front_objs = [np.array([ind.objectives for ind in pop if ind.rank == 0])]
    best = [min(ind.scalarized for ind in pop)]
    prev_front_best = min(ind.scalarized for ind in pop if ind.rank == 0)

    for gen in range(1, cfg.generations):
        child_genes: list[tuple[float, ...]] = []
        for k in range(n // 2):
            child_genes.extend(_offspring_pair(pop, bounds, cfg, _rng(cfg.seed, gen, k)))
        children = [_individual(g, ev) for g, ev in zip(child_genes, map_fn(evaluator, child_genes))]
        evaluations += len(children)
        pop = _truncate(pop + children, n, cfg.keep_best_weighted)
        assign_rank_and_crowding(pop)

        snapshots.append([ind.objectives for ind in pop])
        front_objs.append(np.array([ind.objectives for ind in pop if ind.rank == 0]))
        best.append(min(ind.scalarized for ind in pop))
        front_best = min(ind.scalarized for ind in pop if ind.rank == 0)
        if front_best > prev_front_best:
            log.debug("generation %d: best weighted value on the front rose %g -> %g", gen, prev_front_best, front_best)
        prev_front_best = front_best

    everything = np.array([o for snap in snapshots for o in snap], dtype=float)
    finite = everything[np.all(np.isfinite(everything), axis=1)]
    if len(finite):
        low, high = finite.min(axis=0), finite.max(axis=0)
    else:
        low, high = np.zeros(2), np.ones(2)

    history = []
    for gen, objs in enumerate(front_objs):
        objs = objs[np.all(np.isfinite(objs), axis=1)] if len(objs) else objs.reshape(0, 2)
        scaled = normalize(objs, low, high)
        history.append(GenerationRecord(gen, hypervolume_2d(scaled, cfg.hv_reference), spacing(scaled), best[gen]))

    members = [ind for ind in pop if ind.rank == 0]
    chosen = min(members, key=lambda ind: ind.scalarized)
    return RunResult(
        front=ParetoFront(members, history),
        chosen=chosen,
        population=pop,
        fronts_by_generation=front_objs,
        normalization=(low, high),
        evaluations=evaluations,
    )


def random_search(evaluator: Evaluator, bounds: Bounds | None = None, budget: int = 10_000, seed: int = 1) -> Individual:
    """Best of ``budget`` uniform samples by weighted objective.

    Samples are drawn one after another from a single stream, so a smaller
    budget with the same seed sees a prefix of the same samples.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    bounds = bounds or Bounds()
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(budget):
        g = quantize(rng.uniform(bounds.lo, bounds.hi))
        cand = _individual(g, evaluator(g))
        if best is None or cand.scalarized < best.scalarized:
            best = cand
    return best


def best_so_far(evaluator: Evaluator, bounds: Bounds, budget: int, seed: int) -> Iterable[float]:
    """Running minimum of the weighted objective along a random-search stream."""
    rng = np.random.default_rng(seed)
    current = math.inf
    for _ in range(budget):
        current = min(current, evaluator(quantize(rng.uniform(bounds.lo, bounds.hi))).scalarized)
        yield current
