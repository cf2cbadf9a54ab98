import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from asymgame.model import GameModel, ModelError, load_model, model_from_dict, parse_model, preset_path, validate_model
from conftest import make_model, model_dict


def test_single_state_model():
    g = {"0,0,0": "1", "0,0,1": "2", "0,1,0": "3", "0,1,1": "4"}
    m = model_from_dict(model_dict(K=1, R=[[0]], b=["0"], g=g))
    assert m.K == 1
    assert m.payoff(0.0).shape == (1, 2, 2)


def test_asymmetric_rates_are_fine():
    m = make_model(R=[[-1, 1], [0.5, -0.5]])
    np.testing.assert_array_equal(m.R, [[-1, 1], [0.5, -0.5]])


def test_row_sum_error_names_row():
    with pytest.raises(ModelError, match="row sum nonzero: row 0"):
        make_model(R=[[-1, 2], [1, -1]])


def test_negative_off_diagonal_rejected():
    with pytest.raises(ModelError):
        make_model(R=[[1, -1], [0, 0]])


def test_missing_payoff_entry():
    d = model_dict()
    del d["g"]["1,1,0"]
    with pytest.raises(ModelError, match="missing payoff entry '1,1,0'"):
        model_from_dict(d)


@pytest.mark.parametrize("patch", [
    {"K": 0}, {"r": 0}, {"r": -1}, {"eps": 0}, {"y_min": 3.0}, {"nI": "2"},
    {"b": ["0"]}, {"sigma": 1}, {"sigma": "y +"}, {"R": [[0]]},
])
def test_schema_violations(patch):
    with pytest.raises(ModelError):
        model_from_dict(model_dict(**patch))


def test_bad_payoff_key():
    d = model_dict()
    d["g"]["a,b"] = "1"
    with pytest.raises(ModelError, match="bad payoff key"):
        model_from_dict(d)
    d = model_dict()
    d["g"]["2,0,0"] = "1"
    with pytest.raises(ModelError, match="out of range"):
        model_from_dict(d)


def test_parse_model_rejects_bad_json():
    with pytest.raises(ModelError):
        parse_model("{not json")
    with pytest.raises(ModelError):
        parse_model("[1, 2]")


def test_validate_constant_sigma():
    rep = validate_model(make_model(sigma="1", eps=0.5))
    assert rep.passed and rep.min_sigma == 1.0


def test_validate_abs_sigma_fails_at_origin():
    m = make_model(sigma="abs(y)", eps=0.1, y_min=-1.0, y_max=1.0)
    rep = validate_model(m)
    assert not rep.passed
    assert rep.min_sigma == pytest.approx(0.0, abs=1e-12)
    assert rep.argmin_sigma_y == pytest.approx(0.0, abs=1e-12)
    assert any("sigma below floor" in f for f in rep.failures)


def test_validate_tanh_lipschitz():
    rep = validate_model(make_model(b=["tanh(y)", "tanh(y)"]), samples=20001)
    assert 0.9 <= rep.lip_b <= 1.1


def test_validate_reports_evaluation_errors():
    rep = validate_model(make_model(sigma="1/y", y_min=-1.0, y_max=1.0), samples=3)
    assert not rep.passed


@pytest.mark.parametrize("name", ["constant", "aumann_maschler", "noinfo", "full"])
def test_presets_load_and_validate(name):
    m = load_model(preset_path(name))
    assert isinstance(m, GameModel)
    assert validate_model(m).passed
    assert np.abs(m.R.sum(axis=1)).max() <= 1e-12


def test_to_dict_round_trip(presets):
    m = presets["full"]
    again = parse_model(json.dumps(m.to_dict()))
    ys = np.linspace(m.y_min, m.y_max, 11)
    np.testing.assert_array_equal(again.payoff(ys), m.payoff(ys))
    np.testing.assert_array_equal(again.drift(ys), m.drift(ys))


def test_model_is_immutable(presets):
    with pytest.raises(ValueError):
        presets["full"].R[0, 0] = 5.0


@given(st.lists(st.floats(min_value=0, max_value=5), min_size=2, max_size=2))
def test_accepted_generators_satisfy_the_generator_property(rates):
    a, b = rates
    m = make_model(R=[[-a, a], [b, -b]])
    assert np.abs(m.R.sum(axis=1)).max() <= 1e-12
    assert m.R[0, 1] >= 0 and m.R[1, 0] >= 0
