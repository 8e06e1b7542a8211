"""Discrete-event simulation of the pool system, used as an oracle.

The simulator races exponential clocks for the six events and keeps an
explicit FCFS queue of arrival times, so response time is measured per
transaction instead of through Little's law. Time averages use batch means
over the post-warmup window.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import stats

from .ctmc import EventKind, SystemState
from .metrics import MetricsReport
from .params import SystemParams

CHUNK = 1 << 19

METRICS = ("mean_queue", "p_drop", "t_resp", "availability", "mean_h", "mean_w", "mean_r")

DROP = 6  # trace code for an arrival that found the queue full
EVENT_NAMES = [
    "Arrival",
    "ConsensusCompletion",
    "Failure",
    "RepairCompletion",
    "HpMigration",
    "WpMigration",
    "Drop",
]


class InsufficientSamples(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    horizon: float = 1e6
    warmup: float | None = None  # None means horizon / 10
    seed: int = 1
    batch_count: int = 20
    initial_state: SystemState | None = None  # None means (N, 0, 0, 0)
    trace_limit: int = 0  # events written to the trace; 0 disables it

    @property
    def warmup_time(self) -> float:
        return self.horizon / 10 if self.warmup is None else self.warmup

    def check(self) -> None:
        if not self.horizon > self.warmup_time >= 0:
            raise ValueError(f"need horizon > warmup >= 0, got {self.horizon} and {self.warmup_time}")
        if self.batch_count < 2:
            raise ValueError("batch_count must be at least 2")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")


@dataclass(frozen=True)
class Estimate:
    mean: float
    half_width: float

    @property
    def low(self) -> float:
        return self.mean - self.half_width

    @property
    def high(self) -> float:
        return self.mean + self.half_width


@dataclass(frozen=True)
class SimReport:
    estimates: dict[str, Estimate]
    event_counts: dict[str, int]
    arrivals: int
    dropped: int
    completions: int
    total_time: float
    measured_time: float
    batch_values: dict[str, np.ndarray] = field(repr=False, default_factory=dict)

    def __getitem__(self, name: str) -> Estimate:
        return self.estimates[name]

    def to_dict(self) -> dict:
        return {
            "estimates": {k: {"mean": e.mean, "half_width": e.half_width} for k, e in self.estimates.items()},
            "event_counts": dict(self.event_counts),
            "arrivals": self.arrivals,
            "dropped": self.dropped,
            "completions": self.completions,
            "total_time": self.total_time,
            "measured_time": self.measured_time,
        }


@njit(cache=True)
def _rates(h, w, r, q, lam, mu_h, xi, mu_r, beta_h, beta_w, quorum, k, out):
    # out[0] is the arrival clock; at q == k it fires as a drop
    out[0] = lam
    out[1] = mu_h if (h >= quorum and q > 0) else 0.0
    out[2] = h * xi if h > 0 else 0.0
    out[3] = mu_r if r > 0 else 0.0
    out[4] = beta_h if h > quorum else 0.0
    out[5] = beta_w if w > 0 else 0.0


@njit(cache=True)
def _accumulate(t0, t1, h, w, r, q, quorum, edges, acc):
    # acc columns: time, q-area, h-area, w-area, r-area, available-time
    nb = len(edges) - 1
    if t1 <= edges[0]:
        return
    lo = max(t0, edges[0])
    b = int((lo - edges[0]) / (edges[nb] - edges[0]) * nb)
    if b >= nb:
        b = nb - 1
    while b > 0 and edges[b] > lo:
        b -= 1
    while b < nb - 1 and edges[b + 1] <= lo:
        b += 1
    while lo < t1 and b < nb:
        hi = min(t1, edges[b + 1])
        if hi > lo:
            d = hi - lo
            acc[b, 0] += d
            acc[b, 1] += q * d
            acc[b, 2] += h * d
            acc[b, 3] += w * d
            acc[b, 4] += r * d
            if h >= quorum:
                acc[b, 5] += d
        lo = hi
        b += 1


@njit(cache=True)
def _batch_of(t, edges):
    nb = len(edges) - 1
    if t < edges[0]:
        return -1
    b = int((t - edges[0]) / (edges[nb] - edges[0]) * nb)
    if b >= nb:
        b = nb - 1
    while b > 0 and edges[b] > t:
        b -= 1
    while b < nb - 1 and edges[b + 1] <= t:
        b += 1
    return b


@njit(cache=True)
def _run_chunk(st, ring, rates_in, quorum, k, edges, acc, counts, u, trace, ntrace):
    """Advance the simulation using the uniforms in ``u``.

    ``st`` holds [t, h, w, r, q, head, done]; count columns are arrivals,
    drops, completions, sojourn sum. Returns the number of rows of ``u`` used.
    """
    lam, mu_h, xi, mu_r, beta_h, beta_w = rates_in[0], rates_in[1], rates_in[2], rates_in[3], rates_in[4], rates_in[5]
    horizon = edges[len(edges) - 1]
    t = st[0]
    h = int(st[1])
    w = int(st[2])
    r = int(st[3])
    q = int(st[4])
    head = int(st[5])
    rates = np.zeros(6)
    used = 0
    n = u.shape[0]
    while used < n:
        _rates(h, w, r, q, lam, mu_h, xi, mu_r, beta_h, beta_w, quorum, k, rates)
        total = rates[0] + rates[1] + rates[2] + rates[3] + rates[4] + rates[5]
        if total <= 0.0:
            _accumulate(t, horizon, h, w, r, q, quorum, edges, acc)
            t = horizon
            st[6] = 1.0
            break
        t_next = t - np.log(1.0 - u[used, 0]) / total
        if t_next >= horizon:
            _accumulate(t, horizon, h, w, r, q, quorum, edges, acc)
            t = horizon
            st[6] = 1.0
            used += 1
            break
        _accumulate(t, t_next, h, w, r, q, quorum, edges, acc)
        t = t_next
        pick = u[used, 1] * total
        used += 1
        kind = 5
        c = 0.0
        for e in range(6):
            c += rates[e]
            if pick < c:
                kind = e
                break
        while rates[kind] <= 0.0:  # guard against rounding past the last enabled clock
            kind -= 1
        b = _batch_of(t, edges)
        code = kind
        if kind == 0:
            if q < k:
                ring[(head + q) % k] = t
                q += 1
                if b >= 0:
                    counts[b, 0] += 1
            else:
                code = 6
                if b >= 0:
                    counts[b, 0] += 1
                    counts[b, 1] += 1
        elif kind == 1:
            arrived = ring[head]
            head = (head + 1) % k
            q -= 1
            if b >= 0:
                counts[b, 2] += 1
                counts[b, 3] += t - arrived
        elif kind == 2:
            h -= 1
            r += 1
        elif kind == 3:
            r -= 1
            w += 1
        elif kind == 4:
            h -= 1
            w += 1
        else:
            h += 1
            w -= 1
        if b >= 0:
            counts[b, 4 + code] += 1
        if ntrace[0] < trace.shape[0]:
            i = ntrace[0]
            trace[i, 0] = t
            trace[i, 1] = code
            trace[i, 2] = h
            trace[i, 3] = w
            trace[i, 4] = r
            trace[i, 5] = q
            ntrace[0] += 1
    st[0] = t
    st[1] = h
    st[2] = w
    st[3] = r
    st[4] = q
    st[5] = head
    return used


def enabled_rates(state: SystemState | tuple, params: SystemParams) -> dict[EventKind, float]:
    """Clocks the simulator runs in ``state``, keyed by the event they fire.

    A dropped arrival leaves the state unchanged and is left out, so the
    result is comparable with the chain's outgoing transitions.
    """
    h, w, r, q = state
    out = np.zeros(6)
    _rates(h, w, r, q, params.lam, params.mu_h, params.xi, params.mu_r,
           params.beta_h, params.beta_w, params.quorum, params.k_capacity, out)
    if q >= params.k_capacity:
        out[0] = 0.0
    return {EventKind(i): float(v) for i, v in enumerate(out) if v > 0}


def _check_params(params: SystemParams) -> None:
    if params.n_total < 0 or params.k_capacity < 1 or params.f < 0:
        raise ValueError("invalid sizes")
    for name in ("lam", "mu_h", "xi", "mu_r", "beta_h", "beta_w"):
        v = getattr(params, name)
        if not np.isfinite(v) or v < 0:
            raise ValueError(f"{name} must be non-negative and finite")


@dataclass
class SimRun:
    """A finished run: the report plus the raw trace, if one was requested."""

    report: SimReport
    trace: np.ndarray


def run(params: SystemParams, config: SimConfig | None = None) -> SimRun:
    config = config or SimConfig()
    config.check()
    _check_params(params)
    start = config.initial_state or SystemState(params.n_total, 0, 0, 0)
    start = SystemState(*start)
    if sum(start[:3]) != params.n_total or min(start) < 0 or start.q > params.k_capacity:
        raise ValueError(f"initial state {start} is not a valid state")

    nb = config.batch_count
    warm = config.warmup_time
    edges = np.linspace(warm, config.horizon, nb + 1)
    acc = np.zeros((nb, 6))
    counts = np.zeros((nb, 4 + 7))
    # transactions already queued at time 0 count as arriving at 0
    ring = np.zeros(max(params.k_capacity, 1))
    st = np.array([0.0, start.h, start.w, start.r, start.q, 0, 0.0])
    rates_in = np.array([params.lam, params.mu_h, params.xi, params.mu_r, params.beta_h, params.beta_w], dtype=float)
    trace = np.zeros((config.trace_limit, 6))
    ntrace = np.zeros(1, dtype=np.int64)
    rng = np.random.default_rng(config.seed)
    while st[6] == 0.0:
        u = rng.random((CHUNK, 2))
        _run_chunk(st, ring, rates_in, params.quorum, params.k_capacity, edges, acc, counts, u, trace, ntrace)
    return SimRun(_report(acc, counts, config, warm), trace[: ntrace[0]])


def simulate(params: SystemParams, config: SimConfig | None = None) -> SimReport:
    return run(params, config).report


def _report(acc: np.ndarray, counts: np.ndarray, config: SimConfig, warm: float) -> SimReport:
    nb = config.batch_count
    span = acc[:, 0]
    with np.errstate(invalid="ignore", divide="ignore"):
        batch = {
            "mean_queue": acc[:, 1] / span,
            "p_drop": counts[:, 1] / counts[:, 0],
            "t_resp": counts[:, 3] / counts[:, 2],
            "availability": acc[:, 5] / span,
            "mean_h": acc[:, 2] / span,
            "mean_w": acc[:, 3] / span,
            "mean_r": acc[:, 4] / span,
        }
    total_time = span.sum()
    arrivals = int(counts[:, 0].sum())
    dropped = int(counts[:, 1].sum())
    completions = int(counts[:, 2].sum())
    with np.errstate(invalid="ignore", divide="ignore"):
        point = {
            "mean_queue": acc[:, 1].sum() / total_time,
            "p_drop": dropped / arrivals if arrivals else float("nan"),
            "t_resp": counts[:, 3].sum() / completions if completions else float("nan"),
            "availability": acc[:, 5].sum() / total_time,
            "mean_h": acc[:, 2].sum() / total_time,
            "mean_w": acc[:, 3].sum() / total_time,
            "mean_r": acc[:, 4].sum() / total_time,
        }
    estimates = {}
    for name in METRICS:
        vals = batch[name][np.isfinite(batch[name])]
        if len(vals) >= 2:
            hw = float(stats.t.ppf(0.975, len(vals) - 1) * vals.std(ddof=1) / np.sqrt(len(vals)))
        else:
            hw = float("nan")
        estimates[name] = Estimate(float(point[name]), hw)
    event_counts = {EVENT_NAMES[i]: int(counts[:, 4 + i].sum()) for i in range(7)}
    return SimReport(
        estimates=estimates,
        event_counts=event_counts,
        arrivals=arrivals,
        dropped=dropped,
        completions=completions,
        total_time=config.horizon,
        measured_time=float(total_time),
        batch_values=batch,
    )


def write_trace_csv(trace: np.ndarray, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh)
        out.writerow(["time_ms", "event_kind", "h", "w", "r", "q"])
        for row in trace:
            out.writerow([repr(float(row[0])), EVENT_NAMES[int(row[1])], *(int(x) for x in row[2:])])


@dataclass(frozen=True)
class MetricCheck:
    name: str
    analytical: float
    simulated: float
    half_width: float
    consistent: bool
    rel_error: float


@dataclass(frozen=True)
class ComparisonReport:
    checks: tuple[MetricCheck, ...]

    @property
    def n_consistent(self) -> int:
        return sum(c.consistent for c in self.checks)

    @property
    def all_consistent(self) -> bool:
        return all(c.consistent for c in self.checks)

    def __getitem__(self, name: str) -> MetricCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            c.name: {
                "analytical": c.analytical,
                "simulated": c.simulated,
                "half_width": c.half_width,
                "consistent": c.consistent,
                "rel_error": c.rel_error,
            }
            for c in self.checks
        }


def compare(sim: SimReport, analytical: MetricsReport, atol: float = 1e-9) -> ComparisonReport:
    """Flag each metric whose analytical value lies inside the simulator's 95% CI."""
    if not sim.measured_time > 0:
        raise InsufficientSamples("insufficient samples: the post-warmup window is empty")
    checks = []
    for name in METRICS:
        a = float(getattr(analytical, name))
        est = sim.estimates[name]
        ok = bool(np.isfinite(est.mean) and np.isfinite(est.half_width)
                  and abs(est.mean - a) <= est.half_width + atol)
        rel = abs(est.mean - a) / abs(a) if a != 0 else abs(est.mean - a)
        checks.append(MetricCheck(name, a, est.mean, est.half_width, ok, float(rel)))
    return ComparisonReport(tuple(checks))
