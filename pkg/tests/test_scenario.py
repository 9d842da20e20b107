import json

import numpy as np
import pytest

from thinband import ScenarioError, builtin_scenario, builtin_scenario_names, load_scenario
from thinband.scenario import Scenario


def test_builtin_names_present():
    names = builtin_scenario_names()
    for expected in ("circle", "expanding_circle", "ellipse",
                     "pulsating_ellipse", "star"):
        assert expected in names


def test_builtin_scenarios_load_and_evaluate():
    theta = np.linspace(0, 2 * np.pi, 7)
    for name in builtin_scenario_names():
        sc = builtin_scenario(name)
        y = sc.pos(theta, 0.1 * sc.T)
        assert y.shape == theta.shape + (2,)
        assert np.all(np.isfinite(y))
        assert np.all(sc.g(theta, 0.0) > 0)


def test_round_trip_dict():
    sc = builtin_scenario("pulsating_ellipse")
    sc2 = Scenario.from_dict(sc.to_dict())
    theta = np.linspace(0, 2 * np.pi, 13)
    assert np.array_equal(sc.pos(theta, 0.3), sc2.pos(theta, 0.3))
    assert sc2.p == sc.p and sc2.T == sc.T


def test_unknown_keys_rejected():
    d = builtin_scenario("circle").to_dict()
    d["extra_knob"] = 1
    with pytest.raises(ScenarioError):
        Scenario.from_dict(d)


def test_unknown_curve_family_rejected():
    d = builtin_scenario("circle").to_dict()
    d["curve"] = {"family": "lemniscate", "params": {}}
    with pytest.raises(ScenarioError):
        Scenario.from_dict(d)


def test_bad_expression_symbol_rejected():
    d = builtin_scenario("circle").to_dict()
    d["v0"] = "cos(theta0) + q"
    with pytest.raises(ScenarioError):
        Scenario.from_dict(d)


def test_nonpositive_band_width_rejected():
    d = builtin_scenario("circle").to_dict()
    d["g0"], d["g1"] = "1", "1"
    with pytest.raises(ScenarioError):
        Scenario.from_dict(d)


def test_clockwise_curve_rejected():
    d = builtin_scenario("ellipse").to_dict()
    d["curve"]["params"]["b"] = -0.8
    with pytest.raises(ScenarioError):
        Scenario.from_dict(d)


def test_load_scenario_file(tmp_path):
    d = builtin_scenario("circle").to_dict()
    path = tmp_path / "sc.json"
    path.write_text(json.dumps(d))
    sc = load_scenario(str(path))
    assert sc.name == "circle"


def test_f_limit_rejects_sigma_dependent_source():
    d = builtin_scenario("circle").to_dict()
    d["f"] = "sigma"
    sc = Scenario.from_dict(d)
    with pytest.raises(ScenarioError):
        sc.f_limit(np.array([0.0]), 0.0)
