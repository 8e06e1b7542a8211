"""Model parameters for the pooled PBFT system.

Holds the node-pool rates, queue capacity, maintenance costs and objective
weights, plus the defaults the rest of the package falls back to. Rates are
per millisecond.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any


@dataclass(frozen=True)
class SystemParams:
    """Rates and sizes of the hot/warm/repair pool model.

    ``k_capacity`` counts every transaction held by the hot pool, including
    the one currently being agreed on.
    """

    f: int = 3
    n_total: int = 15
    k_capacity: int = 20
    lam: float = 4.0
    mu_h: float = 5.0
    xi: float = 0.5
    mu_r: float = 10.0
    beta_h: float = 0.2
    beta_w: float = 8.0

    @property
    def quorum(self) -> int:
        return 3 * self.f + 1

    def with_updates(self, **changes: Any) -> "SystemParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class CostParams:
    c_h: float = 5.0
    c_w: float = 3.0
    c_r: float = 2.0
    c_hw: float = 1.0
    c_wh: float = 1.5


@dataclass(frozen=True)
class ObjectiveWeights:
    """Weights on host, repair and migration cost.

    Whatever is left of 1 after the three weights goes to response time.
    """

    w1: float = 0.2
    w2: float = 0.2
    w3: float = 0.2

    @property
    def residual(self) -> float:
        return 1.0 - (self.w1 + self.w2 + self.w3)


# Leans almost entirely on response time; used for the reported-optimum runs.
RESPONSE_TIME_WEIGHTS = ObjectiveWeights(0.02, 0.02, 0.02)


def default_params() -> tuple[SystemParams, CostParams]:
    return SystemParams(), CostParams()


@dataclass(frozen=True)
class Violation:
    name: str
    message: str


@dataclass(frozen=True)
class ValidationResult:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def names(self) -> list[str]:
        return [v.name for v in self.violations]

    def __bool__(self) -> bool:
        return self.ok


class ParameterError(ValueError):
    """Raised when a parameter set fails validation at a hard boundary."""

    def __init__(self, result: ValidationResult):
        self.result = result
        super().__init__("; ".join(f"{v.name}: {v.message}" for v in result.violations))


def _finite(x: float) -> bool:
    return isinstance(x, (int, float)) and math.isfinite(x)


def validate(
    params: SystemParams,
    costs: CostParams | None = None,
    weights: ObjectiveWeights | None = None,
) -> ValidationResult:
    """Check every parameter constraint and report each one that fails."""
    out: list[Violation] = []

    def bad(name: str, message: str) -> None:
        out.append(Violation(name, message))

    p = params
    if not isinstance(p.f, int) or p.f < 0:
        bad("f ≥ 0", f"f must be a non-negative integer, got {p.f!r}")
    if not isinstance(p.k_capacity, int) or p.k_capacity < 1:
        bad("K ≥ 1", f"queue capacity must be an integer ≥ 1, got {p.k_capacity!r}")
    if not isinstance(p.n_total, int) or p.n_total < 0:
        bad("N ≥ 0", f"node count must be a non-negative integer, got {p.n_total!r}")
    elif isinstance(p.f, int) and p.n_total < p.quorum:
        bad("N ≥ 3f+1", f"N={p.n_total} is below the quorum 3f+1={p.quorum}")
    for name in ("lam", "mu_h"):
        v = getattr(p, name)
        if not _finite(v) or v <= 0:
            bad(f"{name} > 0", f"{name} must be positive and finite, got {v!r}")
    for name in ("xi", "mu_r", "beta_h", "beta_w"):
        v = getattr(p, name)
        if not _finite(v) or v < 0:
            bad(f"{name} ≥ 0", f"{name} must be non-negative and finite, got {v!r}")

    if costs is not None:
        for fld in fields(costs):
            v = getattr(costs, fld.name)
            if not _finite(v) or v < 0:
                bad(f"{fld.name} ≥ 0", f"cost {fld.name} must be non-negative, got {v!r}")

    if weights is not None:
        ws = (weights.w1, weights.w2, weights.w3)
        for name, v in zip(("w1", "w2", "w3"), ws):
            if not _finite(v) or v < 0:
                bad(f"{name} ≥ 0", f"weight {name} must be non-negative, got {v!r}")
        if all(_finite(v) for v in ws) and sum(ws) > 1.0 + 1e-12:
            bad("Σϖ ≤ 1", f"weights sum to {sum(ws):g}, above 1")

    return ValidationResult(tuple(out))


def ensure_valid(params: SystemParams, costs=None, weights=None) -> None:
    result = validate(params, costs, weights)
    if not result.ok:
        raise ParameterError(result)


# config file keys -> SystemParams attribute names
_MODEL_KEYS = {
    "f": "f",
    "n_total": "n_total",
    "k_capacity": "k_capacity",
    "lambda": "lam",
    "mu_h": "mu_h",
    "xi": "xi",
    "mu_r": "mu_r",
    "beta_h": "beta_h",
    "beta_w": "beta_w",
}
_INT_KEYS = {"f", "n_total", "k_capacity"}


@dataclass(frozen=True)
class Config:
    model: SystemParams = field(default_factory=SystemParams)
    costs: CostParams = field(default_factory=CostParams)
    weights: ObjectiveWeights = field(default_factory=ObjectiveWeights)

    def validate(self) -> ValidationResult:
        return validate(self.model, self.costs, self.weights)

    def to_dict(self) -> dict:
        model = {key: getattr(self.model, attr) for key, attr in _MODEL_KEYS.items()}
        return {"model": model, "costs": asdict(self.costs), "weights": asdict(self.weights)}


def _section(raw: dict, name: str) -> dict:
    sec = raw.get(name, {})
    if not isinstance(sec, dict):
        raise ValueError(f"config section {name!r} must be an object")
    return sec


def config_from_dict(raw: dict) -> Config:
    """Build a Config, falling back to defaults for anything missing.

    Unknown keys are rejected so that typos do not silently use a default.
    """
    model_raw = _section(raw, "model")
    unknown = set(model_raw) - set(_MODEL_KEYS)
    if unknown:
        raise ValueError(f"unknown model keys: {sorted(unknown)}")
    model_kwargs = {}
    for key, value in model_raw.items():
        if key in _INT_KEYS:
            if isinstance(value, float) and value.is_integer():
                value = int(value)
        model_kwargs[_MODEL_KEYS[key]] = value

    costs_raw = _section(raw, "costs")
    cost_names = {f.name for f in fields(CostParams)}
    if set(costs_raw) - cost_names:
        raise ValueError(f"unknown cost keys: {sorted(set(costs_raw) - cost_names)}")
    weights_raw = _section(raw, "weights")
    weight_names = {f.name for f in fields(ObjectiveWeights)}
    if set(weights_raw) - weight_names:
        raise ValueError(f"unknown weight keys: {sorted(set(weights_raw) - weight_names)}")

    return Config(
        model=SystemParams(**model_kwargs),
        costs=CostParams(**costs_raw),
        weights=ObjectiveWeights(**weights_raw),
    )


def load_config(path: str | Path | None) -> Config:
    if path is None:
        return Config()
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ValueError("config root must be a JSON object")
    return config_from_dict(raw)
