import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from pbftaging.params import (
    Config,
    CostParams,
    ObjectiveWeights,
    ParameterError,
    SystemParams,
    config_from_dict,
    default_params,
    ensure_valid,
    load_config,
    validate,
)


def test_defaults_match_table():
    params, costs = default_params()
    assert (params.f, params.n_total, params.k_capacity) == (3, 15, 20)
    assert (params.lam, params.mu_h, params.xi) == (4, 5, 0.5)
    assert (params.mu_r, params.beta_h, params.beta_w) == (10, 0.2, 8)
    assert (costs.c_h, costs.c_w, costs.c_r, costs.c_hw, costs.c_wh) == (5, 3, 2, 1, 1.5)
    assert params.quorum == 10


def test_defaults_are_valid():
    params, costs = default_params()
    assert validate(params, costs, ObjectiveWeights()).ok


def test_too_few_nodes():
    result = validate(SystemParams(n_total=9, f=3))
    assert not result.ok
    assert result.names() == ["N ≥ 3f+1"]


def test_weights_above_one():
    result = validate(SystemParams(), CostParams(), ObjectiveWeights(0.5, 0.5, 0.5))
    assert result.names() == ["Σϖ ≤ 1"]


@pytest.mark.parametrize(
    "change, name",
    [
        ({"lam": 0.0}, "lam > 0"),
        ({"mu_h": -1.0}, "mu_h > 0"),
        ({"xi": -0.1}, "xi ≥ 0"),
        ({"beta_w": float("nan")}, "beta_w ≥ 0"),
        ({"k_capacity": 0}, "K ≥ 1"),
        ({"f": -1}, "f ≥ 0"),
    ],
)
def test_each_violation_is_named(change, name):
    assert name in validate(SystemParams(**change)).names()


def test_several_violations_reported_together():
    result = validate(SystemParams(n_total=2, lam=-1), CostParams(c_h=-1), ObjectiveWeights(1, 1, 1))
    assert set(result.names()) == {"N ≥ 3f+1", "lam > 0", "c_h ≥ 0", "Σϖ ≤ 1"}


def test_ensure_valid_raises_with_result():
    with pytest.raises(ParameterError) as info:
        ensure_valid(SystemParams(n_total=9))
    assert info.value.result.names() == ["N ≥ 3f+1"]


@given(
    st.floats(0, 1), st.floats(0, 1), st.floats(0, 1),
)
def test_defaults_valid_for_any_feasible_weights(a, b, c):
    weights = ObjectiveWeights(a, b, c)
    params, costs = default_params()
    assert validate(params, costs, weights).ok == (a + b + c <= 1 + 1e-12)


@given(st.integers(0, 50))
def test_quorum_follows_f(f):
    assert SystemParams(f=f).quorum == 3 * f + 1
    assert SystemParams(f=0).with_updates(f=f).quorum == 3 * f + 1


def test_config_missing_keys_fall_back():
    cfg = config_from_dict({"model": {"n_total": 20, "lambda": 3.5}, "weights": {"w1": 0.1}})
    assert cfg.model == SystemParams(n_total=20, lam=3.5)
    assert cfg.costs == CostParams()
    assert cfg.weights == ObjectiveWeights(0.1, 0.2, 0.2)


def test_config_rejects_unknown_key():
    with pytest.raises(ValueError):
        config_from_dict({"model": {"nodes": 3}})


def test_config_roundtrip(tmp_path):
    cfg = Config(model=SystemParams(n_total=12, xi=0.25))
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert load_config(path) == cfg
    assert load_config(None) == Config()


def test_integer_valued_floats_accepted_for_counts():
    cfg = config_from_dict({"model": {"n_total": 12.0}})
    assert cfg.model.n_total == 12 and isinstance(cfg.model.n_total, int)
