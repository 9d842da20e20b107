import numpy as np
import pytest

from thinband import GeometryError, ValidationError, builtin_scenario
from thinband import geometry
from thinband.scenario import Scenario


def circle_scenario(radius=1.0, **over):
    d = {
        "name": "circle_test",
        "p": 3.0,
        "T": 0.5,
        "curve": {"family": "circle", "params": {"radius": radius}},
        "g0": "0",
        "g1": "1",
        "f": "0",
        "v0": "1",
    }
    d.update(over)
    return Scenario.from_dict(d)


def test_circle_frame_values():
    sc = circle_scenario(radius=2.0)
    theta = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    fr = geometry.frame(sc, theta, 0.0)
    assert np.allclose(fr.H, -0.5, atol=1e-12)
    assert np.allclose(fr.arclen, 2.0, atol=1e-12)
    # outward normal at theta=0 is +x
    fr0 = geometry.frame(sc, np.array([0.0]), 0.0)
    assert np.allclose(fr0.nu[0], [1.0, 0.0], atol=1e-12)
    assert np.allclose(fr0.tau[0], [0.0, 1.0], atol=1e-12)
    assert np.allclose(fr.VGamma, 0.0, atol=1e-14)


def test_expanding_circle_velocity():
    sc = builtin_scenario("expanding_circle")
    theta = np.linspace(0, 2 * np.pi, 16, endpoint=False)
    fr = geometry.frame(sc, theta, 1.0)
    # radius 1.5 at t=1, growing at rate 0.5
    assert np.allclose(fr.VGamma, 0.5, atol=1e-13)
    assert np.allclose(fr.divGamma_v, 0.5 / 1.5, atol=1e-13)
    assert np.allclose(fr.vTau, 0.0, atol=1e-13)


def test_jacobian_identity_and_circle_form():
    sc = circle_scenario(radius=2.0)
    theta = np.linspace(0, 2 * np.pi, 32, endpoint=False)
    fr = geometry.frame(sc, theta, 0.0)
    assert np.all(geometry.jacobian(fr, 0.0) == 1.0)
    r = 0.1
    assert np.allclose(geometry.jacobian(fr, r), 1.0 + r / 2.0, atol=1e-12)


def test_jacobian_self_intersection_raises():
    sc = circle_scenario(radius=1.0)
    fr = geometry.frame(sc, np.array([0.0]), 0.0)
    with pytest.raises(GeometryError):
        geometry.jacobian(fr, -1.5)


def test_thin_map_determinant_circle():
    sc = circle_scenario(radius=1.0)
    eps = 0.1
    tm = geometry.thin_map(sc, eps, np.array([0.3]), np.array([0.5]), 0.0)
    # r = 0.05, J = 1.05, arclen = 1, eps*g = 0.1
    assert np.allclose(tm.det, 1.05 * 0.1, atol=1e-14)
    assert np.allclose(tm.position[0], [1.05 * np.cos(0.3), 1.05 * np.sin(0.3)],
                       atol=1e-14)


def test_thin_map_broadcasting():
    sc = builtin_scenario("pulsating_ellipse")
    theta = np.linspace(0, 2 * np.pi, 5, endpoint=False)[:, None]
    sigma = np.linspace(0, 1, 4)[None, :]
    tm = geometry.thin_map(sc, 0.1, theta, sigma, 0.2)
    assert tm.position.shape == (5, 4, 2)
    assert tm.dpsi.shape == (5, 4, 2, 2)
    assert tm.ginv.shape == (5, 4, 2, 2)
    ident = np.einsum("nqab,nqbc->nqac", tm.ginv,
                      np.einsum("nqda,nqdb->nqab", tm.dpsi, tm.dpsi))
    assert np.allclose(ident, np.eye(2), atol=1e-10)


def test_material_velocity_expanding_circle():
    sc = builtin_scenario("expanding_circle")
    vel = geometry.material_velocity(sc, 0.1, np.array([0.0]), np.array([0.5]), 0.0)
    assert np.allclose(vel[0], [0.5, 0.0], atol=1e-13)


def test_inv_transpose_2x2():
    rng = np.random.default_rng(7)
    mats = rng.normal(size=(6, 2, 2)) + 2.0 * np.eye(2)
    out = geometry.inv_transpose_2x2(mats)
    for m, o in zip(mats, out):
        assert np.allclose(o, np.linalg.inv(m).T, atol=1e-12)


def test_validate_frames_all_builtin():
    for name in ("circle", "expanding_circle", "ellipse",
                 "pulsating_ellipse", "star"):
        report = geometry.validate_frames(builtin_scenario(name))
        assert report["ok"]
        assert report["max_discrepancy"] < 1e-6


def test_validate_frames_negative_control():
    sc = builtin_scenario("pulsating_ellipse")
    correct = sc.pos_t

    def corrupted(theta, t):
        return 1.05 * correct(theta, t)

    sc.pos_t = corrupted
    with pytest.raises(ValidationError) as exc:
        geometry.validate_frames(sc)
    assert "pos_t" in str(exc.value)


def test_degenerate_curve_raises():
    d = {
        "name": "bad",
        "p": 2.0,
        "T": 0.1,
        "curve": {"family": "circle", "params": {"radius": 0.0}},
        "g0": "0",
        "g1": "1",
        "f": "0",
        "v0": "1",
    }
    with pytest.raises((GeometryError, Exception)):
        sc = Scenario.from_dict(d)
        geometry.frame(sc, np.array([0.0]), 0.0)
