"""Sphere-embedded simplex geodesics: slerp, distances, waypoint schedules."""

import math

import numpy as np
import pytest

from fringe.geometry import (
    EPS_THETA,
    build_waypoints,
    fr_distance,
    kl_divergence,
    slerp,
    sphere_angle,
    sync_steps,
)


def test_simplex_validation():
    with pytest.raises(ValueError):
        sphere_angle([0.5, 0.6], [0.5, 0.5])
    with pytest.raises(ValueError):
        sphere_angle([1.2, -0.2], [0.5, 0.5])


def test_distance_one_hot_to_uniform():
    # 2*arccos(1/sqrt(C)) for a one-hot vertex; C=4 gives 2*pi/3
    p = [1.0, 0.0, 0.0, 0.0]
    q = [0.25] * 4
    assert abs(fr_distance(p, q) - 2.0 * math.pi / 3.0) <= 1e-12


def test_distance_symmetry_and_identity():
    p = [0.7, 0.2, 0.1]
    q = [0.1, 0.3, 0.6]
    assert fr_distance(p, p) == 0.0
    assert abs(fr_distance(p, q) - fr_distance(q, p)) <= 1e-15


def test_max_distance_between_disjoint_vertices():
    assert abs(fr_distance([1.0, 0.0], [0.0, 1.0]) - math.pi) <= 1e-12


def test_slerp_unit_norm_and_endpoints():
    rng = np.random.default_rng(0)
    for _ in range(5):
        p0 = rng.dirichlet(np.ones(6))
        p1 = rng.dirichlet(np.ones(6))
        for alpha in np.linspace(0.0, 1.0, 11):
            s = slerp(p0, p1, float(alpha))
            assert abs(np.linalg.norm(s) - 1.0) <= 1e-10
        assert np.allclose(slerp(p0, p1, 0.0), np.sqrt(p0), atol=1e-12)
        assert np.allclose(slerp(p0, p1, 1.0), np.sqrt(p1), atol=1e-12)


def test_slerp_alpha_range():
    with pytest.raises(ValueError):
        slerp([0.5, 0.5], [0.4, 0.6], 1.5)


def test_slerp_degenerate_returns_start():
    p = [0.3, 0.7]
    assert np.array_equal(slerp(p, p, 0.5), np.sqrt(np.asarray(p)))


def test_constant_speed_spacing():
    p0 = [0.85, 0.1, 0.03, 0.02]
    q = [0.25] * 4
    path = build_waypoints(p0, q, 16)
    dists = [fr_distance(path.simplex_waypoints[k], path.simplex_waypoints[k + 1])
             for k in range(16)]
    assert max(dists) - min(dists) <= 1e-9
    assert abs(sum(dists) - path.d_total) <= 1e-9


def test_waypoints_are_distributions():
    path = build_waypoints([0.9, 0.05, 0.05], [1 / 3] * 3, 8)
    for q in path.simplex_waypoints:
        assert abs(q.sum() - 1.0) <= 1e-12
        assert np.all(q >= 0.0)
    assert np.allclose(path.simplex_waypoints[0], [0.9, 0.05, 0.05], atol=1e-12)
    assert np.allclose(path.simplex_waypoints[-1], [1 / 3] * 3, atol=1e-12)


def test_build_waypoints_validation():
    with pytest.raises(ValueError):
        build_waypoints([0.5, 0.5], [0.5, 0.5], 0)


def test_sync_steps_pi_distance():
    # d = pi between disjoint vertices; ceil(pi / sqrt(1e-3)) = 100
    assert sync_steps([1.0, 0.0], [0.0, 1.0], 5e-4) == 100


def test_sync_steps_clamps():
    p0 = [1.0, 0.0]
    q = [0.0, 1.0]
    assert sync_steps(p0, q, 1e-9) == 512
    assert sync_steps(p0, q, 1e-9, t_cap=64) == 64
    assert sync_steps(p0, q, 100.0) == 1
    assert sync_steps(p0, p0, 1e-4) == 1
    with pytest.raises(ValueError):
        sync_steps(p0, q, 0.0)


def test_kl_divergence():
    p = np.array([0.6, 0.3, 0.1])
    q = np.array([0.2, 0.5, 0.3])
    expected = float(np.sum(p * np.log(p / q)))
    assert abs(kl_divergence(p, q) - expected) <= 1e-14
    assert kl_divergence(p, p) == 0.0
    assert kl_divergence([1.0, 0.0], [0.0, 1.0]) == math.inf
    # zero entries in p contribute nothing
    assert kl_divergence([0.0, 1.0], [0.5, 0.5]) == pytest.approx(math.log(2.0))


def test_eps_theta_guards_tiny_angles():
    p = [0.5, 0.5]
    q = [0.5 + 1e-22, 0.5 - 1e-22]
    assert sphere_angle(p, q) < EPS_THETA
    assert np.array_equal(slerp(p, q, 0.7), np.sqrt(np.asarray(p)))
