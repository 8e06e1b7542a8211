"""Steady-state performance, availability and cost measures."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph

from .ctmc import StateSpace, SystemState, build_generator, enumerate_states, node_generator
from .params import CostParams, ObjectiveWeights, SystemParams, ensure_valid
from .steady import (
    SolverOptions,
    StationaryDistribution,
    level_residual,
    solve_levels,
    solve_stationary,
)


class DegenerateThroughput(ArithmeticError):
    """No transaction is ever admitted, so the mean response time is undefined."""


@dataclass(frozen=True)
class MetricsReport:
    mean_queue: float
    p_drop: float
    t_resp: float
    availability: float
    mean_h: float
    mean_w: float
    mean_r: float
    x_host: float
    x_repair: float
    x_migr: float
    total_cost: float
    scalarized: float

    def to_dict(self) -> dict[str, float]:
        return asdict(self)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


def mean_queue_length(pi: np.ndarray, space: StateSpace) -> float:
    return float(pi @ space.q)


def drop_probability(pi: np.ndarray, space: StateSpace) -> float:
    return float(pi[space.q == space.k_capacity].sum())


def response_time(mean_queue: float, p_drop: float, lam: float) -> float:
    """Mean time in system of admitted transactions, by Little's law."""
    throughput = lam * (1.0 - p_drop)
    if throughput <= 0:
        raise DegenerateThroughput(f"admitted throughput is {throughput!r}")
    return mean_queue / throughput


def availability(pi: np.ndarray, space: StateSpace, f: int) -> float:
    return float(pi[space.h >= 3 * f + 1].sum())


def mean_pool_sizes(pi: np.ndarray, space: StateSpace) -> tuple[float, float, float]:
    return float(pi @ space.h), float(pi @ space.w), float(pi @ space.r)


def cost_components(
    params: SystemParams, costs: CostParams, mean_h: float, mean_w: float
) -> tuple[float, float, float]:
    x_host = mean_h * costs.c_h + mean_w * costs.c_w
    x_repair = params.mu_r * costs.c_r
    x_migr = params.beta_h * costs.c_hw + params.beta_w * costs.c_wh
    return x_host, x_repair, x_migr


def scalarize(
    x_host: float, x_repair: float, x_migr: float, t_resp: float, weights: ObjectiveWeights
) -> float:
    return (
        x_host * weights.w1
        + x_repair * weights.w2
        + x_migr * weights.w3
        + t_resp * weights.residual
    )


def scalarized_objective(report: MetricsReport, weights: ObjectiveWeights) -> float:
    return scalarize(report.x_host, report.x_repair, report.x_migr, report.t_resp, weights)


def _node_chain_irreducible(node_q: np.ndarray) -> bool:
    adj = sp.csr_matrix(node_q > 0)
    ncomp, _ = csgraph.connected_components(adj, directed=True, connection="strong")
    return ncomp == 1


def stationary(params: SystemParams, method: str = "auto") -> tuple[StateSpace, StationaryDistribution]:
    """Stationary distribution for ``params`` starting from all nodes hot.

    ``auto`` uses the level solver when the whole chain is irreducible and
    the sparse direct solve on the reachable closed class otherwise. The
    whole chain is irreducible exactly when the node chain is and both queue
    rates are positive: from any state the queue can be drained in a serving
    phase and refilled anywhere else.
    """
    ensure_valid(params)
    if method in ("auto", "levels"):
        space = enumerate_states(params)
        node_q = node_generator(params, space)
        if _node_chain_irreducible(node_q):
            up = np.full(space.n_phases, float(params.lam))
            down = np.where(space.phase_h >= params.quorum, float(params.mu_h), 0.0)
            pi2 = solve_levels(node_q, up, down, space.levels)
            res = level_residual(pi2, node_q, up, down)
            if res <= SolverOptions().tol:
                pi = pi2.ravel()
                return space, StationaryDistribution(pi, "levels", 0, res, np.arange(len(space)))
        method = "direct"
    space, Q = build_generator(params)
    start = SystemState(params.n_total, 0, 0, 0)
    return space, solve_stationary(space, Q, SolverOptions(method=method, start=start))


def metrics_from_distribution(
    pi: np.ndarray,
    space: StateSpace,
    params: SystemParams,
    costs: CostParams,
    weights: ObjectiveWeights,
) -> MetricsReport:
    eq = mean_queue_length(pi, space)
    pd = drop_probability(pi, space)
    t = response_time(eq, pd, params.lam)
    h, w, r = mean_pool_sizes(pi, space)
    x_host, x_repair, x_migr = cost_components(params, costs, h, w)
    return MetricsReport(
        mean_queue=eq,
        p_drop=pd,
        t_resp=t,
        availability=availability(pi, space, params.f),
        mean_h=h,
        mean_w=w,
        mean_r=r,
        x_host=x_host,
        x_repair=x_repair,
        x_migr=x_migr,
        total_cost=x_host + x_repair + x_migr,
        scalarized=scalarize(x_host, x_repair, x_migr, t, weights),
    )


def evaluate(
    params: SystemParams,
    costs: CostParams | None = None,
    weights: ObjectiveWeights | None = None,
    method: str = "auto",
) -> MetricsReport:
    """Build the chain, solve it and compute every measure."""
    costs = costs or CostParams()
    weights = weights or ObjectiveWeights()
    ensure_valid(params, costs, weights)
    space, dist = stationary(params, method)
    return metrics_from_distribution(dist.pi, space, params, costs, weights)


def mm1k_closed_form(lam: float, mu: float, k: int) -> dict[str, float]:
    """Mean number, blocking probability and admitted sojourn time of M/M/1/K."""
    rho = lam / mu
    if np.isclose(rho, 1.0):
        eq = k / 2.0
        pk = 1.0 / (k + 1)
    else:
        eq = rho / (1 - rho) - (k + 1) * rho ** (k + 1) / (1 - rho ** (k + 1))
        pk = (1 - rho) * rho**k / (1 - rho ** (k + 1))
    return {"mean_queue": eq, "p_drop": pk, "t_resp": eq / (lam * (1 - pk))}

