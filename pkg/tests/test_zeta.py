import time

import numpy as np
import pytest

from thinband.surface import solve_zeta, solve_zeta_many


def phi(s, a, b, p):
    return (a + s * s) ** ((p - 2.0) / 2.0) * s + b


def bisect_oracle(a, b, p, iters=200):
    if b == 0.0:
        return 0.0
    m = abs(b) ** (1.0 / (p - 1.0))
    lo, hi = (-m, 0.0) if b > 0 else (0.0, m)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if phi(mid, a, b, p) > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def test_trivial_and_closed_forms():
    assert solve_zeta(5.0, 0.0, 3.7) == 0.0
    assert abs(solve_zeta(0.0, 8.0, 3.0) + 2.0 * np.sqrt(2.0)) < 1e-12
    assert abs(solve_zeta(1.0, 2.0, 4.0) + 1.0) < 1e-12
    assert solve_zeta(3.0, 4.0, 2.0) == -4.0


def test_residual_and_oracle_agreement_random():
    rng = np.random.default_rng(42)
    start = time.perf_counter()
    for _ in range(1000):
        p = rng.uniform(2.1, 6.0)
        a = rng.uniform(0.0, 10.0)
        b = rng.uniform(-10.0, 10.0)
        s = solve_zeta(a, b, p)
        assert abs(phi(s, a, b, p)) <= 1e-13 * (1.0 + abs(b))
        assert abs(s - bisect_oracle(a, b, p)) <= 1e-10
    assert time.perf_counter() - start < 10.0


def test_solver_is_fast():
    rng = np.random.default_rng(3)
    p, a, b = 3.4, rng.uniform(0, 10, 1000), rng.uniform(-10, 10, 1000)
    start = time.perf_counter()
    for ai, bi in zip(a, b):
        solve_zeta(ai, bi, p)
    assert time.perf_counter() - start < 1.0


def test_odd_symmetry():
    rng = np.random.default_rng(11)
    for _ in range(50):
        p = rng.uniform(2.1, 5.0)
        a = rng.uniform(0.0, 5.0)
        b = rng.uniform(0.0, 5.0)
        assert abs(solve_zeta(a, b, p) + solve_zeta(a, -b, p)) < 1e-12


def test_monotone_in_b():
    # the root decreases as b increases (phi is increasing in s)
    bs = np.linspace(-4.0, 4.0, 41)
    roots = [solve_zeta(2.0, b, 3.5) for b in bs]
    assert all(r1 > r2 for r1, r2 in zip(roots, roots[1:]))


def test_vectorized_matches_scalar():
    rng = np.random.default_rng(5)
    p = 4.2
    a = rng.uniform(0.0, 10.0, size=500)
    a[::7] = 0.0
    b = rng.uniform(-10.0, 10.0, size=500)
    b[::11] = 0.0
    many = solve_zeta_many(a, b, p)
    ones = np.array([solve_zeta(ai, bi, p) for ai, bi in zip(a, b)])
    assert np.max(np.abs(many - ones)) < 1e-12


def test_vectorized_p2_and_shapes():
    a = np.zeros((3, 4))
    b = np.arange(12.0).reshape(3, 4)
    out = solve_zeta_many(a, b, 2.0)
    assert out.shape == (3, 4)
    assert np.array_equal(out, -b)


def test_invalid_inputs():
    with pytest.raises(ValueError):
        solve_zeta(-1.0, 1.0, 3.0)
    with pytest.raises(ValueError):
        solve_zeta(1.0, 1.0, 1.5)
    with pytest.raises(ValueError):
        solve_zeta_many(np.array([-1.0]), np.array([1.0]), 3.0)
