"""Stationary distribution of the pool chain.

Three solvers are provided and cross-checked in the tests:

* ``direct``: sparse LU of the balance equations with one equation replaced
  by a pin on a recurrent state, then normalised;
* ``iterative``: power iteration on the uniformised chain;
* ``levels``: block elimination over queue levels, exploiting that node moves
  are the same at every level and queue moves only change ``q`` by one.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as sla

from .ctmc import ReachabilityReport, StateSpace, SystemState, reachability_report


class SolverError(RuntimeError):
    pass


class NonConvergence(SolverError):
    pass


class MultipleRecurrentClasses(SolverError):
    pass


class SingularSystem(SolverError):
    pass


@dataclass(frozen=True)
class SolverOptions:
    method: str = "direct"
    tol: float = 1e-10  # accepted max |pi Q|
    iter_tol: float = 1e-12  # max-norm change that stops power iteration
    max_iter: int = 10**6
    renormalize_every: int = 100
    uniformization_margin: float = 1.01
    start: SystemState | None = None


@dataclass(frozen=True)
class StationaryDistribution:
    pi: np.ndarray
    method: str
    iterations: int = 0
    residual: float = 0.0
    support: np.ndarray | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.pi)


def residual(pi: np.ndarray, Q: sp.spmatrix) -> float:
    return float(np.max(np.abs(Q.T @ pi))) if len(pi) else 0.0


def _pinned_solve(QT: sp.csr_matrix, pin: int) -> np.ndarray:
    A = QT.tolil()
    A.rows[pin] = [pin]
    A.data[pin] = [1.0]
    b = np.zeros(QT.shape[0])
    b[pin] = 1.0
    try:
        x = sla.splu(A.tocsc()).solve(b)
    except RuntimeError as exc:  # superLU raises RuntimeError on exact singularity
        raise SingularSystem(str(exc)) from exc
    if not np.all(np.isfinite(x)):
        raise SingularSystem("non-finite solution")
    x = np.clip(x, 0.0, None)
    total = x.sum()
    if total <= 0:
        raise SingularSystem("solution has no mass")
    return x / total


def _direct(Q: sp.csr_matrix) -> np.ndarray:
    n = Q.shape[0]
    if n == 1:
        return np.ones(1)
    QT = Q.T.tocsr()
    # Any recurrent state can be pinned, but pinning one with tiny mass loses
    # all precision. Start at the slowest state (long holding times tend to
    # carry mass) and re-pin at the heaviest state until it stops moving.
    pin = int(np.argmin(-Q.diagonal()))
    for _ in range(4):
        x = _pinned_solve(QT, pin)
        heaviest = int(np.argmax(x))
        if heaviest == pin:
            break
        pin = heaviest
    return x


def _iterative(Q: sp.csr_matrix, opts: SolverOptions, x0: np.ndarray | None = None) -> tuple[np.ndarray, int]:
    n = Q.shape[0]
    Lam = opts.uniformization_margin * float(np.max(-Q.diagonal()))
    if Lam <= 0:
        return np.full(n, 1.0 / n), 0
    # pi P = pi + (pi Q) / Lam, applied through the transpose
    PT = (sp.identity(n, format="csr") + Q / Lam).T.tocsr()
    x = np.full(n, 1.0 / n) if x0 is None else x0 / x0.sum()
    for k in range(1, opts.max_iter + 1):
        nxt = PT @ x
        if k % opts.renormalize_every == 0:
            nxt /= nxt.sum()
        if np.max(np.abs(nxt - x)) <= opts.iter_tol:
            nxt /= nxt.sum()
            return nxt, k
        x = nxt
    raise NonConvergence(f"power iteration did not converge in {opts.max_iter} iterations")


def solve_stationary(
    space: StateSpace | None,
    Q: sp.spmatrix,
    options: SolverOptions | None = None,
    reach: ReachabilityReport | None = None,
) -> StationaryDistribution:
    """Solve ``pi Q = 0`` with ``sum(pi) = 1``.

    Only the closed class reachable from the start state carries mass; every
    other state gets zero. Raises :class:`MultipleRecurrentClasses` when more
    than one closed class is reachable, since the answer would then depend on
    the start.
    """
    opts = options or SolverOptions()
    Q = sp.csr_matrix(Q)
    if reach is None:
        reach = reachability_report(space, Q, opts.start)
    if not reach.single_class:
        where = reach.start if space is None else space.state_at(reach.start)
        raise MultipleRecurrentClasses(f"{len(reach.closed_classes)} closed classes reachable from {where}")
    support = reach.closed_classes[0]
    n = Q.shape[0]
    whole = len(support) == n
    sub = Q if whole else Q[support][:, support]

    iterations = 0
    if opts.method == "direct":
        x = _direct(sub)
    elif opts.method == "iterative":
        x, iterations = _iterative(sub, opts)
    elif opts.method == "levels":
        if not whole or space is None:
            raise SolverError("the levels method needs an irreducible chain on a pool state space")
        x = _levels_from_generator(space, Q).ravel()
    else:
        raise ValueError(f"unknown method {opts.method!r}")

    pi = np.zeros(n)
    pi[support] = x
    res = residual(pi, Q)
    if res > opts.tol:
        raise SolverError(f"residual {res:.3e} above tolerance {opts.tol:.1e} ({opts.method})")
    return StationaryDistribution(pi, opts.method, iterations, res, support)


def solve_levels(node_q: np.ndarray, up: np.ndarray, down: np.ndarray, levels: int) -> np.ndarray:
    """Block elimination for a chain whose levels are the queue length.

    ``node_q`` is the phase generator shared by every level, ``up[p]`` the rate
    from level ``q`` to ``q+1`` in phase ``p`` and ``down[p]`` the rate from
    ``q`` to ``q-1``. Returns ``pi`` shaped ``(phases, levels)``. The chain
    must be irreducible.

    From the top level down, ``pi_q = pi_{q-1} R_q`` with
    ``R_q = -diag(up) M_q^{-1}`` and ``M_q = L_q + R_{q+1} diag(down)``. Only
    the columns of phases with ``down > 0`` ("on" phases) change between
    levels, so the "off" block is inverted once and each level only needs a
    Schur complement the size of the on set.
    """
    m = node_q.shape[0]
    K = levels - 1
    if K == 0:
        x = _pin_solve(node_q)
        return (x / x.sum())[:, None]
    on = np.flatnonzero(down > 0)
    off = np.flatnonzero(down <= 0)
    if len(on) == 0:
        raise SingularSystem("no phase can serve; the queue only grows")
    n_on, n_off = len(on), len(off)
    A_of = node_q[np.ix_(on, off)]
    fo_base = node_q[np.ix_(off, on)]
    oo_base = node_q[np.ix_(on, on)]

    def off_inverse(extra):
        A = node_q[np.ix_(off, off)]
        A[np.diag_indices(n_off)] -= extra
        return la.inv(A, check_finite=False) if n_off else np.zeros((0, 0))

    # top level has no arrivals; every interior level shares the same off block
    Y_top, Y_mid = off_inverse(0.0), off_inverse(up[off])
    Z_top, Z_mid = A_of @ Y_top, A_of @ Y_mid

    store = [None] * (K + 1)
    R_on = None  # columns "on" of R_{q+1}
    for q in range(K, 0, -1):
        top = q == K
        Y, Z = (Y_top, Z_top) if top else (Y_mid, Z_mid)
        A_fo = fo_base.copy()
        A_oo = oo_base.copy()
        A_oo[np.diag_indices(n_on)] -= down[on] + (0.0 if top else up[on])
        if R_on is not None:
            A_fo += R_on[off] * down[on]
            A_oo += R_on[on] * down[on]
        W = Y @ A_fo
        try:
            S_inv = la.inv(A_oo - A_of @ W, check_finite=False)
        except la.LinAlgError as exc:
            raise SingularSystem(str(exc)) from exc
        store[q] = (Y, Z, W, S_inv)
        X = np.empty((m, n_on))
        X[on] = S_inv
        X[off] = -W @ S_inv
        R_on = -up[:, None] * X

    M0 = node_q.copy()
    M0[np.diag_indices(m)] -= up
    M0[:, on] += R_on * down[on]
    pis = np.empty((levels, m))
    pis[0] = _pin_solve(M0)
    for q in range(1, K + 1):
        # solve pi_q M_q = -(pi_{q-1} * up) blockwise
        Y, Z, W, S_inv = store[q]
        b = -(pis[q - 1] * up)
        x_on = (b[on] - b[off] @ W) @ S_inv
        pis[q, on] = x_on
        pis[q, off] = b[off] @ Y - x_on @ Z
    pis = np.clip(pis, 0.0, None)
    pis /= pis.sum()
    return pis.T


def level_residual(pi: np.ndarray, node_q: np.ndarray, up: np.ndarray, down: np.ndarray) -> float:
    """``max |pi Q|`` for the level-structured generator, ``pi`` shaped ``(phases, levels)``."""
    P = pi.T
    K = P.shape[0] - 1
    out = P @ node_q
    out -= P * up
    out[K] += P[K] * up  # no arrivals leave the top level
    out[1:] -= P[1:] * down
    out[1:] += P[:-1] * up
    out[:-1] += P[1:] * down
    return float(np.max(np.abs(out)))


def _pin_solve(M: np.ndarray) -> np.ndarray:
    """Solve ``x M = 0`` up to scale, pinning one component to one.

    The first pass pins the last component; a second pass pins the largest
    component of the first answer, which keeps precision when the first pin
    has tiny mass.
    """
    x = _pin_solve_at(M, M.shape[0] - 1)
    return _pin_solve_at(M, int(np.argmax(np.abs(x))))


def _pin_solve_at(M: np.ndarray, pin: int) -> np.ndarray:
    A = M.T.copy()
    A[pin, :] = 0.0
    A[pin, pin] = 1.0
    b = np.zeros(M.shape[0])
    b[pin] = 1.0
    try:
        x = la.solve(A, b, check_finite=False)
    except la.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    if not np.all(np.isfinite(x)):
        raise SingularSystem("non-finite solution")
    return x


def _levels_from_generator(space: StateSpace, Q: sp.csr_matrix) -> np.ndarray:
    L = space.levels
    lvl0 = np.arange(space.n_phases) * L
    node_q = Q[lvl0][:, lvl0].toarray()
    np.fill_diagonal(node_q, 0.0)
    np.fill_diagonal(node_q, -node_q.sum(axis=1))
    if L > 1:
        up = np.asarray(Q[lvl0, lvl0 + 1]).ravel()
        down = np.asarray(Q[lvl0 + 1, lvl0]).ravel()
    else:
        up = down = np.zeros(space.n_phases)
    return solve_levels(node_q, up, down, L)


def write_distribution_csv(space: StateSpace, dist: StationaryDistribution, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh)
        out.writerow(["h", "w", "r", "q", "probability"])
        for i, p in enumerate(dist.pi):
            out.writerow([*space.state_at(i), repr(float(p))])
