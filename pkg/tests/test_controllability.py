import math

import numpy as np
import pytest

import oracles
from pmpkit.controllability import (
    ReachHull,
    is_controllable,
    kalman_matrix,
    reach_hull,
    reach_support,
)
from pmpkit.linsys import LinearSystem

OSC = LinearSystem(np.array([[0.0, 1.0], [-1.0, 0.0]]),
                   np.array([[0.0], [1.0]]),
                   np.array([[-1.0, 1.0]]))


def rank_deficient_system(rng, n, m):
    """Block system whose second block is disconnected from the input."""
    k = int(rng.integers(1, n))
    A = np.zeros((n, n))
    A[:k, :k] = rng.standard_normal((k, k))
    A[k:, k:] = rng.standard_normal((n - k, n - k))
    B = np.zeros((n, m))
    B[:k] = rng.standard_normal((k, m))
    return LinearSystem(A, B)


def test_kalman_matrix_shape_and_rank_oscillator():
    km = kalman_matrix(OSC)
    assert km.C.shape == (2, 2)
    assert np.array_equal(km.C, np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert km.rank == 2
    assert is_controllable(OSC)


def test_kalman_agrees_with_gramian_random():
    rng = np.random.default_rng(123)
    for _ in range(60):
        n = int(rng.integers(1, 6))
        m = int(rng.integers(1, 3))
        sys = LinearSystem(rng.standard_normal((n, n)),
                           rng.standard_normal((n, m)))
        assert is_controllable(sys) == oracles.gramian_controllable(sys.A, sys.B)


def test_kalman_agrees_with_gramian_deficient():
    rng = np.random.default_rng(321)
    for _ in range(10):
        n = int(rng.integers(2, 6))
        sys = rank_deficient_system(rng, n, int(rng.integers(1, 3)))
        assert not is_controllable(sys)
        assert not oracles.gramian_controllable(sys.A, sys.B)


def test_single_integrator_chain():
    # x1' = x2, x2' = x3, x3' = u is controllable; dropping the chain is not
    A = np.diag([1.0, 1.0], k=1)
    A3 = np.zeros((3, 3))
    A3[:2, 1:] = np.eye(2)
    B = np.array([[0.0], [0.0], [1.0]])
    assert is_controllable(LinearSystem(A3, B))
    assert not is_controllable(LinearSystem(np.zeros((3, 3)), B))


# ---------------------------------------------------------------------------
# support points and hulls


def test_reach_support_matches_quadrature_oracle():
    rng = np.random.default_rng(77)
    for _ in range(5):
        A = rng.standard_normal((2, 2))
        B = rng.standard_normal((2, 1))
        sys = LinearSystem(A, B, [[-1, 1]])
        x0 = rng.standard_normal(2) * 0.3
        T = rng.uniform(0.8, 2.5)
        d = rng.standard_normal(2)
        d /= np.linalg.norm(d)
        res = reach_support(sys, x0, T, d)
        ref = oracles.support_value_oracle(A, B, x0, T, d)
        assert abs(res.value - ref) < 1e-6 * (1.0 + abs(ref))


def test_reach_support_oscillator_known_value():
    # from the origin with T = pi the support in +x is 2 (full half-circle)
    res = reach_support(OSC, [0.0, 0.0], math.pi, [1.0, 0.0])
    assert abs(res.value - 2.0) < 1e-9
    assert np.allclose(res.point, [2.0, 0.0], atol=1e-8)


def test_reach_support_requires_unit_box():
    sys = LinearSystem(OSC.A, OSC.B, [[-2.0, 2.0]])
    with pytest.raises(ValueError):
        reach_support(sys, [0.0, 0.0], 1.0, [1.0, 0.0])
    unbounded = LinearSystem(OSC.A, OSC.B, None)
    with pytest.raises(ValueError):
        reach_support(unbounded, [0.0, 0.0], 1.0, [1.0, 0.0])


def test_reach_hull_central_symmetry():
    # from x0 = 0 the reachable set is centrally symmetric: values in d and
    # -d agree
    hull = reach_hull(OSC, [0.0, 0.0], math.pi, K=32)
    vals = hull.support_values
    assert np.abs(vals - np.roll(vals, 16)).max() < 1e-8


def test_reach_hull_certificate_and_containment():
    hull = reach_hull(OSC, [0.0, 0.0], math.pi / 2, K=24)
    assert hull.certificate_margin() <= 1e-8
    assert hull.contains([0.0, 0.0])
    assert not hull.contains([10.0, 10.0])
    v = hull.violation([10.0, 10.0])
    assert v > 1.0


def test_reach_hull_json_keys():
    hull = reach_hull(OSC, [0.0, 0.0], 1.0, K=8)
    d = hull.to_json_dict()
    assert set(d) == {"T", "directions", "points", "values"}
    assert len(d["directions"]) == 8


def test_reach_hull_rejects_small_k():
    with pytest.raises(ValueError):
        reach_hull(OSC, [0.0, 0.0], 1.0, K=2)


def test_degenerate_channel_flagged():
    # second input column is identically zero along the adjoint
    A = np.zeros((2, 2))
    B = np.array([[1.0, 0.0], [0.0, 0.0]])
    sys = LinearSystem(A, B, [[-1, 1], [-1, 1]])
    res = reach_support(sys, [0.0, 0.0], 1.0, [0.0, 1.0])
    # direction orthogonal to everything the input reaches: channel 1 never
    # couples, channel 2 is dead entirely
    assert 1 in res.degenerate_channels
    assert abs(res.value) < 1e-12


def test_hull_monotone_in_horizon():
    h1 = reach_hull(OSC, [0.0, 0.0], math.pi / 2, K=16)
    h2 = reach_hull(OSC, [0.0, 0.0], math.pi, K=16)
    # same direction grid: support values cannot shrink when T grows
    assert np.all(h2.support_values >= h1.support_values - 1e-10)
