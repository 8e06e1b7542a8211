"""Built-in oracle checks behind ``pbftaging validate``."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import ctmc
from .ctmc import EventKind, build_generator, build_generator_reference, transitions_from
from .metrics import evaluate, mm1k_closed_form
from .params import SystemParams
from .sim import SimConfig, compare, enabled_rates, simulate
from .steady import SolverOptions, solve_stationary


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def faulty_guards() -> dict:
    """Guard table with hot-pool migration allowed at exactly 3f+1 nodes."""
    guards = dict(ctmc.GUARDS)
    guards[EventKind.HP_MIGRATION] = lambda h, w, r, q, b, k: h >= b
    return guards


def six_state_generator(p: SystemParams) -> np.ndarray:
    """Generator for N=1, K=1, f=0 written out entry by entry.

    Order: (0,1,0,0) (0,1,0,1) (0,0,1,0) (0,0,1,1) (1,0,0,0) (1,0,0,1),
    which is the package's own (h, r, q) order.
    """
    lam, mu_h, xi, mu_r, beta_w = p.lam, p.mu_h, p.xi, p.mu_r, p.beta_w
    Q = np.zeros((6, 6))
    W0, W1, R0, R1, H0, H1 = range(6)
    Q[H0, H1] = lam
    Q[H0, R0] = xi
    Q[H1, H0] = mu_h
    Q[H1, R1] = xi
    Q[R0, R1] = lam
    Q[R0, W0] = mu_r
    Q[R1, W1] = mu_r
    Q[W0, W1] = lam
    Q[W0, H0] = beta_w
    Q[W1, H1] = beta_w
    Q -= np.diag(Q.sum(axis=1))
    return Q


def check_six_state(guards) -> str:
    p = SystemParams(f=0, n_total=1, k_capacity=1)
    Qh = six_state_generator(p)
    A = Qh.T.copy()
    A[-1] = 1.0
    b = np.zeros(6)
    b[-1] = 1.0
    expected = np.linalg.solve(A, b)
    space, Q = build_generator(p)
    got = solve_stationary(space, Q).pi
    err = float(np.max(np.abs(got - expected)))
    assert err <= 1e-10, f"max error {err:.2e}"
    return f"max |pi - pi_hand| = {err:.1e}"


def check_mm1k(guards) -> str:
    p = SystemParams(xi=0.0, beta_h=0.0)
    rep = evaluate(p)
    exact = mm1k_closed_form(p.lam, p.mu_h, p.k_capacity)
    errs = {k: abs(getattr(rep, k) - v) for k, v in exact.items()}
    assert max(errs.values()) <= 1e-8, f"errors {errs}"
    return "E[Q], P_drop, T_resp within 1e-8 of M/M/1/K"


def check_generator(guards) -> str:
    p = SystemParams()
    _, Q = build_generator(p)
    rows = float(np.max(np.abs(np.asarray(Q.sum(axis=1)).ravel())))
    assert rows <= 1e-12, f"row sum {rows:.2e}"
    off = Q.copy()
    off.setdiag(0)
    assert off.min() >= 0, "negative off-diagonal rate"
    _, Qref = build_generator_reference(p, guards)
    diff = abs(Q - Qref).max() if Q.shape == Qref.shape else np.inf
    assert diff == 0, f"vectorised and state-by-state generators differ by {diff:g}"
    return f"row sums <= {rows:.1e}; both assemblies identical"


def check_simulator_guards(guards) -> str:
    p = SystemParams()
    space = ctmc.enumerate_states(p)
    for state in space:
        chain = {t.kind: t.rate for t in transitions_from(state, p, space, guards)}
        assert chain == enabled_rates(state, p), f"enabled events differ at {state}"
    return f"same enabled events in all {len(space)} states"


def check_solvers(guards) -> str:
    p = SystemParams()
    space, Q = build_generator(p)
    a = solve_stationary(space, Q, SolverOptions(method="direct")).pi
    b = solve_stationary(space, Q, SolverOptions(method="iterative")).pi
    err = float(np.max(np.abs(a - b)))
    assert err <= 1e-8, f"direct and iterative differ by {err:.2e}"
    return f"direct vs iterative max diff {err:.1e}"


def check_simulation(guards) -> str:
    p = SystemParams()
    cmp = compare(simulate(p, SimConfig(horizon=1e5, seed=1)), evaluate(p))
    assert cmp.n_consistent >= 6, f"only {cmp.n_consistent}/7 metrics inside the CI"
    return f"{cmp.n_consistent}/7 metrics inside the 95% CI"


CHECKS: list[tuple[str, Callable]] = [
    ("six-state brute force", check_six_state),
    ("M/M/1/K reduction", check_mm1k),
    ("generator well-formed and equivalent", check_generator),
    ("simulator guard equivalence", check_simulator_guards),
    ("direct vs iterative solver", check_solvers),
    ("short simulation cross-check", check_simulation),
]


def run_checks(inject_fault: bool = False) -> list[CheckResult]:
    guards = faulty_guards() if inject_fault else ctmc.GUARDS
    results = []
    for name, fn in CHECKS:
        t0 = time.perf_counter()
        try:
            detail = fn(guards)
            passed = True
        except AssertionError as exc:
            detail, passed = str(exc), False
        except Exception as exc:  # a crash is a failed check, not a crashed suite
            detail, passed = f"{type(exc).__name__}: {exc}", False
        results.append(CheckResult(name, passed, detail, time.perf_counter() - t0))
    return results
