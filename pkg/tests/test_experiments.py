import numpy as np
import pytest

from thinband import ScenarioError, builtin_scenario, experiments
from thinband.scenario import Scenario


def annulus_scenario(**over):
    d = {
        "name": "static_annulus",
        "p": 3.0,
        "T": 0.25,
        "curve": {"family": "circle", "params": {"radius": 1.0}},
        "g0": "0",
        "g1": "1",
        "f": "0",
        "v0": "1",
    }
    d.update(over)
    return Scenario.from_dict(d)


def bump(rho):
    return 1.0 + np.exp(-80.0 * (rho - 1.15) ** 2)


def test_oracle_constant_data_stays_constant():
    sc = annulus_scenario()
    out = experiments.radial_oracle(sc, 0.3, lambda r: 3.0 + 0.0 * r, 100,
                                    1e-2, t_end=0.1)
    assert np.max(np.abs(out["u"] - 3.0)) < 1e-12


def test_oracle_mass_conservation_static_and_moving():
    sc = annulus_scenario()
    out = experiments.radial_oracle(sc, 0.3, bump, 300, 1e-3, t_end=0.05)
    assert np.max(np.abs(out["mass"] - out["mass"][0])) < 1e-9
    mv = builtin_scenario("expanding_circle")
    out = experiments.radial_oracle(mv, 0.2, bump, 300, 1e-3, t_end=0.05)
    assert np.max(np.abs(out["mass"] - out["mass"][0])) < 1e-9


def test_oracle_refuses_asymmetric_scenarios():
    with pytest.raises(ScenarioError):
        experiments.radial_oracle(builtin_scenario("ellipse"), 0.2, bump,
                                  100, 1e-2)
    sc = annulus_scenario(g1="1 + cos(theta0)/10")
    with pytest.raises(ScenarioError):
        experiments.radial_oracle(sc, 0.2, bump, 100, 1e-2)
    sc = annulus_scenario(f="1")
    with pytest.raises(ScenarioError):
        experiments.radial_oracle(sc, 0.2, bump, 100, 1e-2)


def test_band_solver_agrees_with_oracle():
    sc = annulus_scenario()
    err, traj, oracle = experiments.radial_comparison(
        sc, 0.3, bump, 16, 2e-3, n_theta=16, t_end=0.05, oracle_cells=2000
    )
    assert err < 1e-2


def test_comparison_detects_corrupted_oracle():
    # canary: the comparison must not be insensitive to oracle output
    sc = annulus_scenario()
    err, traj, oracle = experiments.radial_comparison(
        sc, 0.3, bump, 10, 5e-3, n_theta=16, t_end=0.02, oracle_cells=500
    )
    assert err < 1e-2
    from thinband import geometry, thin

    grid = thin.ThinGrid(n_theta=16, n_sigma=10, eps=0.3)
    th, sg = np.meshgrid(grid.theta_nodes, grid.sigma_nodes, indexing="ij")
    tm = geometry.thin_map(sc, 0.3, th, sg, 0.02)
    rho = np.sqrt(np.sum(tm.position[0] ** 2, axis=-1))
    u_band = traj.states[-1].U.reshape(16, 10)[0]
    u_bad = np.interp(rho, oracle["centers"], 1.05 * oracle["u"])
    num = np.trapezoid((u_band - u_bad) ** 2 * rho, rho)
    den = np.trapezoid(u_bad**2 * rho, rho)
    assert np.sqrt(num / den) > 1e-2


def test_convergence_study_small_ladder():
    sc = builtin_scenario("pulsating_ellipse")
    rep = experiments.convergence_study(
        sc, [0.4, 0.2], n_theta=16, n_sigma=6, dt=1e-2, n_snapshots=6
    )
    assert rep.v_errors[1] < rep.v_errors[0]
    assert len(rep.v_orders) == 1 and np.isfinite(rep.v_orders[0])
    assert rep.statuses == ["ok", "ok"]
    d = rep.to_dict()
    assert d["eps"] == [0.4, 0.2]
    assert len(d["runtimes"]) == 2


def test_convergence_study_input_validation():
    sc = builtin_scenario("pulsating_ellipse")
    with pytest.raises(ValueError):
        experiments.convergence_study(sc, [0.4], n_theta=16, n_sigma=6, dt=1e-2)
    with pytest.raises(ValueError):
        experiments.convergence_study(sc, [0.2, 0.4], n_theta=16, n_sigma=6,
                                      dt=1e-2)


def test_orders_are_pure_functions_of_errors():
    sc = builtin_scenario("pulsating_ellipse")
    rep = experiments.convergence_study(
        sc, [0.4, 0.2], n_theta=16, n_sigma=6, dt=1e-2, n_snapshots=3
    )
    expected = np.log(rep.v_errors[0] / rep.v_errors[1]) / np.log(0.4 / 0.2)
    assert abs(rep.v_orders[0] - expected) < 1e-14
