"""State space and generator matrix of the hot/warm/repair pool chain.

A state is ``(h, w, r, q)``: nodes in the hot, warm and repair pools and the
number of transactions held by the hot pool. States are ordered
lexicographically by ``(h, r, q)`` so that ``q`` is the innermost index; the
steady-state block solver relies on that layout.
"""

from __future__ import annotations

import enum
import threading
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, NamedTuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph

from .params import SystemParams, ensure_valid

MAX_STATES = 10**7


class StateSpaceTooLarge(RuntimeError):
    pass


class EventKind(enum.IntEnum):
    ARRIVAL = 0
    CONSENSUS_COMPLETION = 1
    FAILURE = 2
    REPAIR_COMPLETION = 3
    HP_MIGRATION = 4
    WP_MIGRATION = 5


class SystemState(NamedTuple):
    h: int
    w: int
    r: int
    q: int


class Transition(NamedTuple):
    source: int
    target: int
    rate: float
    kind: EventKind


def count_states(n_total: int, k_capacity: int) -> int:
    return (n_total + 1) * (n_total + 2) // 2 * (k_capacity + 1)


class StateSpace:
    """All states with ``h + w + r == N`` and ``0 <= q <= K``."""

    def __init__(self, n_total: int, k_capacity: int):
        self.n_total = n_total
        self.k_capacity = k_capacity
        n = n_total
        hs, rs = [], []
        for h in range(n + 1):
            for r in range(n - h + 1):
                hs.append(h)
                rs.append(r)
        self.phase_h = np.array(hs, dtype=np.int64)
        self.phase_r = np.array(rs, dtype=np.int64)
        self.phase_w = n - self.phase_h - self.phase_r
        # first phase index for each h
        self._h_offset = np.concatenate(([0], np.cumsum(n + 1 - np.arange(n + 1))))
        for a in (self.phase_h, self.phase_r, self.phase_w):
            a.setflags(write=False)

    @property
    def n_phases(self) -> int:
        return len(self.phase_h)

    @property
    def levels(self) -> int:
        return self.k_capacity + 1

    def __len__(self) -> int:
        return self.n_phases * self.levels

    def __repr__(self) -> str:
        return f"StateSpace(N={self.n_total}, K={self.k_capacity}, states={len(self)})"

    def phase_index(self, h, r):
        return self._h_offset[h] + r

    def index(self, state: SystemState | tuple) -> int:
        h, w, r, q = state
        if h < 0 or w < 0 or r < 0 or h + w + r != self.n_total or not 0 <= q <= self.k_capacity:
            raise KeyError(f"{tuple(state)} is not in {self!r}")
        return int(self.phase_index(h, r)) * self.levels + q

    def state_at(self, i: int) -> SystemState:
        if not 0 <= i < len(self):
            raise IndexError(i)
        p, q = divmod(int(i), self.levels)
        return SystemState(int(self.phase_h[p]), int(self.phase_w[p]), int(self.phase_r[p]), q)

    def __iter__(self):
        for i in range(len(self)):
            yield self.state_at(i)

    @cached_property
    def h(self) -> np.ndarray:
        return self._per_state(self.phase_h)

    @cached_property
    def w(self) -> np.ndarray:
        return self._per_state(self.phase_w)

    @cached_property
    def r(self) -> np.ndarray:
        return self._per_state(self.phase_r)

    @cached_property
    def q(self) -> np.ndarray:
        out = np.tile(np.arange(self.levels, dtype=np.int64), self.n_phases)
        out.setflags(write=False)
        return out

    def _per_state(self, per_phase: np.ndarray) -> np.ndarray:
        out = np.repeat(per_phase, self.levels)
        out.setflags(write=False)
        return out


_space_cache: dict[tuple[int, int], StateSpace] = {}
_space_lock = threading.Lock()


def enumerate_states(params: SystemParams, max_states: int = MAX_STATES) -> StateSpace:
    """Return the (cached) state space for ``params.n_total`` and ``params.k_capacity``."""
    key = (params.n_total, params.k_capacity)
    space = _space_cache.get(key)
    if space is not None:
        return space
    size = count_states(*key)
    if size > max_states:
        raise StateSpaceTooLarge(f"{size} states exceeds the ceiling of {max_states}")
    with _space_lock:
        space = _space_cache.get(key)
        if space is None:
            space = StateSpace(*key)
            _space_cache[key] = space
    return space


def failure_rate(h, xi):
    """Total failure rate of the hot pool: every hot node fails independently."""
    return h * xi


# Guard predicates, (h, w, r, q, quorum, K) -> bool. Swappable for fault injection.
Guard = Callable[[int, int, int, int, int, int], bool]

GUARDS: dict[EventKind, Guard] = {
    EventKind.ARRIVAL: lambda h, w, r, q, b, k: q < k,
    EventKind.CONSENSUS_COMPLETION: lambda h, w, r, q, b, k: h >= b and q > 0,
    EventKind.FAILURE: lambda h, w, r, q, b, k: h > 0,
    EventKind.REPAIR_COMPLETION: lambda h, w, r, q, b, k: r > 0,
    EventKind.HP_MIGRATION: lambda h, w, r, q, b, k: h > b,
    EventKind.WP_MIGRATION: lambda h, w, r, q, b, k: w > 0,
}

_MOVES = {
    EventKind.ARRIVAL: (0, 0, 0, 1),
    EventKind.CONSENSUS_COMPLETION: (0, 0, 0, -1),
    EventKind.FAILURE: (-1, 0, 1, 0),
    EventKind.REPAIR_COMPLETION: (0, 1, -1, 0),
    EventKind.HP_MIGRATION: (-1, 1, 0, 0),
    EventKind.WP_MIGRATION: (1, -1, 0, 0),
}


def event_rate(kind: EventKind, state: SystemState, params: SystemParams) -> float:
    if kind is EventKind.ARRIVAL:
        return params.lam
    if kind is EventKind.CONSENSUS_COMPLETION:
        return params.mu_h
    if kind is EventKind.FAILURE:
        return failure_rate(state.h, params.xi)
    if kind is EventKind.REPAIR_COMPLETION:
        return params.mu_r
    if kind is EventKind.HP_MIGRATION:
        return params.beta_h
    return params.beta_w


def transitions_from(
    state: SystemState | tuple,
    params: SystemParams,
    space: StateSpace | None = None,
    guards: dict[EventKind, Guard] = GUARDS,
) -> list[Transition]:
    """List the outgoing transitions of one state.

    An arrival at a full queue is dropped and leaves the state unchanged, so
    it produces no entry. Zero-rate events are omitted as well.
    """
    state = SystemState(*state)
    if space is None:
        space = enumerate_states(params)
    src = space.index(state)
    b, k = params.quorum, params.k_capacity
    out = []
    for kind in EventKind:
        if not guards[kind](state.h, state.w, state.r, state.q, b, k):
            continue
        rate = event_rate(kind, state, params)
        if rate <= 0:
            continue
        dh, dw, dr, dq = _MOVES[kind]
        target = SystemState(state.h + dh, state.w + dw, state.r + dr, state.q + dq)
        out.append(Transition(src, space.index(target), float(rate), kind))
    return out


@dataclass(frozen=True)
class _EventArrays:
    source: np.ndarray
    target: np.ndarray
    scale: np.ndarray | None  # per-source multiplier of the base rate, None means 1


_structure_cache: dict[tuple[int, int, int], dict[EventKind, _EventArrays]] = {}


def _event_structure(space: StateSpace, quorum: int) -> dict[EventKind, _EventArrays]:
    key = (space.n_total, space.k_capacity, quorum)
    cached = _structure_cache.get(key)
    if cached is not None:
        return cached
    h, w, r, q = space.h, space.w, space.r, space.q
    k = space.k_capacity
    idx = np.arange(len(space), dtype=np.int64)

    def shifted(mask, dh, dr, dq):
        src = idx[mask]
        tgt = space.phase_index(h[mask] + dh, r[mask] + dr) * space.levels + q[mask] + dq
        return src, tgt

    masks = {
        EventKind.ARRIVAL: (q < k, (0, 0, 1)),
        EventKind.CONSENSUS_COMPLETION: ((h >= quorum) & (q > 0), (0, 0, -1)),
        EventKind.FAILURE: (h > 0, (-1, 1, 0)),
        EventKind.REPAIR_COMPLETION: (r > 0, (0, -1, 0)),
        EventKind.HP_MIGRATION: (h > quorum, (-1, 0, 0)),
        EventKind.WP_MIGRATION: (w > 0, (1, 0, 0)),
    }
    out = {}
    for kind, (mask, (dh, dr, dq)) in masks.items():
        src, tgt = shifted(mask, dh, dr, dq)
        scale = h[mask].astype(float) if kind is EventKind.FAILURE else None
        out[kind] = _EventArrays(src, tgt, scale)
    _structure_cache[key] = out
    return out


def _base_rates(params: SystemParams) -> dict[EventKind, float]:
    return {
        EventKind.ARRIVAL: params.lam,
        EventKind.CONSENSUS_COMPLETION: params.mu_h,
        EventKind.FAILURE: params.xi,
        EventKind.REPAIR_COMPLETION: params.mu_r,
        EventKind.HP_MIGRATION: params.beta_h,
        EventKind.WP_MIGRATION: params.beta_w,
    }


def build_generator(params: SystemParams, max_states: int = MAX_STATES):
    """Assemble the infinitesimal generator.

    Returns ``(space, Q)`` with ``Q`` a CSR matrix whose off-diagonal entries
    are transition rates and whose rows sum to zero.
    """
    ensure_valid(params)
    space = enumerate_states(params, max_states)
    structure = _event_structure(space, params.quorum)
    rows, cols, vals = [], [], []
    for kind, rate in _base_rates(params).items():
        if rate <= 0:
            continue
        ev = structure[kind]
        data = np.full(len(ev.source), float(rate)) if ev.scale is None else ev.scale * rate
        keep = data > 0
        rows.append(ev.source[keep])
        cols.append(ev.target[keep])
        vals.append(data[keep])
    return space, _assemble(len(space), rows, cols, vals)


def _assemble(n, rows, cols, vals) -> sp.csr_matrix:
    rows = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    cols = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
    vals = np.concatenate(vals) if vals else np.zeros(0)
    off = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    exit_rate = np.asarray(off.sum(axis=1)).ravel()
    Q = (off - sp.diags(exit_rate, format="csr")).tocsr()
    Q.sort_indices()
    return Q


def build_generator_reference(
    params: SystemParams, guards: dict[EventKind, Guard] = GUARDS
) -> tuple[StateSpace, sp.csr_matrix]:
    """Slow state-by-state assembly from :func:`transitions_from`.

    Used as an independent check on :func:`build_generator`.
    """
    space = enumerate_states(params)
    rows, cols, vals = [], [], []
    for state in space:
        for t in transitions_from(state, params, space, guards):
            rows.append(t.source)
            cols.append(t.target)
            vals.append(t.rate)
    arr = lambda x, dt: np.asarray(x, dtype=dt)  # noqa: E731
    return space, _assemble(
        len(space), [arr(rows, np.int64)], [arr(cols, np.int64)], [arr(vals, float)]
    )


def node_generator(params: SystemParams, space: StateSpace | None = None) -> np.ndarray:
    """Dense generator of the node pools alone (phases ``(h, w, r)``).

    Node moves never depend on the queue, so this is the same block at every
    queue level.
    """
    if space is None:
        space = enumerate_states(params)
    h, w, r = space.phase_h, space.phase_w, space.phase_r
    m = space.n_phases
    b = params.quorum
    Qn = np.zeros((m, m))
    src = np.arange(m)

    def put(mask, dh, dr, rate):
        if np.isscalar(rate) and rate <= 0:
            return
        i = src[mask]
        j = space.phase_index(h[mask] + dh, r[mask] + dr)
        Qn[i, j] += rate if np.isscalar(rate) else rate[mask]

    put(h > 0, -1, 1, failure_rate(h.astype(float), params.xi))
    put(r > 0, 0, -1, params.mu_r)
    put(h > b, -1, 0, params.beta_h)
    put(w > 0, 1, 0, params.beta_w)
    Qn[src, src] = 0.0
    Qn[src, src] = -Qn.sum(axis=1)
    return Qn


def to_matrix_market(Q: sp.spmatrix, path) -> None:
    """Write ``Q`` in MatrixMarket coordinate format with 1-based indices."""
    coo = sp.coo_matrix(Q)
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        fh.write(f"{coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for i in order:
            fh.write(f"{coo.row[i] + 1} {coo.col[i] + 1} {float(coo.data[i])!r}\n")


@dataclass(frozen=True)
class ReachabilityReport:
    start: int
    reachable: np.ndarray
    closed_classes: tuple[np.ndarray, ...]
    stalled_classes: tuple[int, ...]  # positions in closed_classes with no state at h >= 3f+1

    @property
    def single_class(self) -> bool:
        return len(self.closed_classes) == 1

    @property
    def irreducible(self) -> bool:
        return self.single_class and len(self.closed_classes[0]) == len(self.reachable)

    @property
    def recurrent(self) -> np.ndarray:
        if not self.closed_classes:
            return np.zeros(0, dtype=np.int64)
        return np.sort(np.concatenate(self.closed_classes))


def reachability_report(
    space: StateSpace | None,
    Q: sp.spmatrix,
    start: SystemState | tuple | int | None = None,
    quorum: int | None = None,
) -> ReachabilityReport:
    """Find what is reachable from ``start`` and its closed communicating classes.

    ``start`` defaults to every node hot and an empty queue (index 0 for a
    bare matrix without a state space). With ``quorum`` given, closed classes
    where consensus can never run are listed in ``stalled_classes``.
    """
    if start is None:
        start = 0 if space is None else SystemState(space.n_total, 0, 0, 0)
    s = start if isinstance(start, (int, np.integer)) else space.index(start)
    adj = sp.csr_matrix(Q, copy=True)
    adj.setdiag(0)
    adj.eliminate_zeros()
    order = csgraph.breadth_first_order(adj, s, directed=True, return_predecessors=False)
    reachable = np.sort(order)
    sub = adj[reachable][:, reachable]
    ncomp, labels = csgraph.connected_components(sub, directed=True, connection="strong")
    coo = sub.tocoo()
    leaves = labels[coo.row] != labels[coo.col]
    open_comp = np.zeros(ncomp, dtype=bool)
    open_comp[labels[coo.row[leaves]]] = True
    closed = []
    for c in range(ncomp):
        if not open_comp[c]:
            closed.append(reachable[labels == c])
    closed.sort(key=lambda a: int(a[0]))
    stalled = ()
    if quorum is not None and space is not None:
        stalled = tuple(i for i, cls in enumerate(closed) if not np.any(space.h[cls] >= quorum))
    return ReachabilityReport(int(s), reachable, tuple(closed), stalled)
