import math

import numpy as np
import pytest

from src.errors import ConfigError, DomainError, DualityError, MultipleMinimizersError, UnsupportedError
from src.geometry import (RiemannianMetric, check_convexity, check_homogeneity, covector_to_vector, distance_oracle,
                          dual_one_form, finsler_norm, inverse_dual, load_manifold, v_p_q)


def test_euclidean_norm_and_dual() -> None:
    plane = load_manifold({'kind': 'euclidean'})
    assert finsler_norm(plane, [0.0, 0.0], [3.0, 4.0]) == pytest.approx(5.0)
    w = dual_one_form(plane, [0.0, 0.0], [3.0, 4.0])
    assert np.allclose(w, [3.0, 4.0])
    assert float(w @ np.array([3.0, 4.0])) == pytest.approx(25.0)


def test_minimizing_direction_in_plane() -> None:
    plane = load_manifold({'kind': 'euclidean'})
    assert np.allclose(v_p_q(plane, [0.0, 0.0], [0.0, 2.0]), [0.0, 1.0])


def test_minimizing_direction_undefined_at_source() -> None:
    plane = load_manifold({'kind': 'euclidean'})
    with pytest.raises(DomainError):
        v_p_q(plane, [0.5, 0.5], [0.5, 0.5])


def test_randers_norm_is_not_reversible() -> None:
    plane = load_manifold({'kind': 'minkowski_plane', 'randers_drift': [0.3, 0.0]})
    assert finsler_norm(plane, [0.0, 0.0], [1.0, 0.0]) == pytest.approx(1.3)
    assert finsler_norm(plane, [0.0, 0.0], [-1.0, 0.0]) == pytest.approx(0.7)
    assert check_homogeneity(plane.metric, np.zeros(2), np.array([0.4, -1.2])) < 1e-12
    assert check_convexity(plane.metric, np.zeros(2)) < 0


def test_flat_torus_distance_uses_translates() -> None:
    torus = load_manifold({'kind': 'flat_torus'})
    assert distance_oracle(torus, [0.1, 0.1], [0.9, 0.9]) == pytest.approx(math.sqrt(0.08))


def test_sphere_distance_and_antipode() -> None:
    sphere = load_manifold({'kind': 'sphere'})
    assert distance_oracle(sphere, [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]) == pytest.approx(math.pi / 2)
    with pytest.raises(MultipleMinimizersError):
        v_p_q(sphere, [0.0, 0.0, 1.0], [0.0, 0.0, -1.0])


def test_annulus_distance_wraps_around_hole() -> None:
    annulus = load_manifold({'kind': 'annulus', 'r_inner': 1.0, 'r_outer': 2.0})
    expected = 2 * math.sqrt(1.25) + (math.pi - 2 * math.acos(2.0 / 3.0))
    assert distance_oracle(annulus, [-1.5, 0.0], [1.5, 0.0]) == pytest.approx(expected, rel=1e-9)
    assert distance_oracle(annulus, [1.2, 0.0], [1.8, 0.0]) == pytest.approx(0.6)


def test_point_outside_domain_is_rejected() -> None:
    disk = load_manifold({'kind': 'disk', 'radius': 1.0})
    with pytest.raises(DomainError):
        finsler_norm(disk, [2.0, 0.0], [1.0, 0.0])


def test_ellipsoid_has_no_oracle() -> None:
    ellipsoid = load_manifold({'kind': 'ellipsoid', 'semiaxes': [1.0, 1.0, 1.05]})
    with pytest.raises(UnsupportedError):
        distance_oracle(ellipsoid, [1.0, 0.0, 0.0], [0.0, 1.0, 0.0])


def test_loader_rejects_bad_documents() -> None:
    with pytest.raises(ConfigError):
        load_manifold({'kind': 'klein_bottle'})
    with pytest.raises(ConfigError):
        load_manifold({'kind': 'disk', 'radius': 1.0, 'colour': 'red'})
    with pytest.raises(ConfigError):
        load_manifold({'kind': 'annulus', 'r_inner': 2.0, 'r_outer': 1.0})
    with pytest.raises(ConfigError):
        load_manifold({'kind': 'ellipsoid'})


def test_randers_norm_and_dual() -> None:
    plane = load_manifold({'kind': 'minkowski_plane', 'randers_drift': [0.5, 0.0]})
    assert finsler_norm(plane, [0.0, 0.0], [1.0, 0.0]) == pytest.approx(1.5)
    w = dual_one_form(plane, [0.0, 0.0], [1.0, 0.0])
    assert np.allclose(w, [2.25, 0.0], atol=1e-12)
    assert distance_oracle(plane, [0.0, 0.0], [1.0, 0.0]) == pytest.approx(1.5)
    with pytest.raises(DualityError):
        dual_one_form(plane, [0.0, 0.0], [0.0, 0.0])


def test_riemannian_dual_is_the_metric_tensor() -> None:
    metric = RiemannianMetric(lambda x: np.diag([1.0, 4.0]))
    x = np.zeros(2)
    w = metric.dual(x, np.array([1.0, 1.0]))
    assert np.allclose(w, [1.0, 4.0], atol=1e-12)
    assert float(w @ np.array([1.0, 1.0])) == pytest.approx(float(metric.norm(x, np.array([1.0, 1.0]))) ** 2)

    rng = np.random.default_rng(3)
    for _ in range(20):
        a, b = rng.normal(size=2), rng.normal(size=2)
        assert np.allclose(metric.dual(x, a + b), metric.dual(x, a) + metric.dual(x, b), atol=1e-10)


def test_duality_round_trip() -> None:
    plane = load_manifold({'kind': 'minkowski_plane', 'randers_drift': [0.3, -0.2]})
    x = np.zeros(2)
    rng = np.random.default_rng(5)
    for v in rng.normal(size=(5, 2)):
        w = plane.metric.dual(x, v)
        u = inverse_dual(plane.metric, x, w)
        assert np.allclose(u, v / float(plane.metric.norm(x, v)), atol=1e-6)
        assert np.allclose(covector_to_vector(plane.metric, x, w), v, atol=1e-8)

    metric = RiemannianMetric(lambda p: np.diag([1.0, 4.0]))
    assert np.allclose(covector_to_vector(metric, x, np.array([1.0, 4.0])), [1.0, 1.0], atol=1e-8)
    with pytest.raises(DualityError):
        covector_to_vector(metric, x, np.zeros(2))


def test_triangle_inequality_on_random_triples() -> None:
    torus = load_manifold({'kind': 'flat_torus'})
    plane = load_manifold({'kind': 'minkowski_plane', 'randers_drift': [0.5, 0.0]})
    rng = np.random.default_rng(11)
    for manifold in (torus, plane):
        worst = np.inf
        for p, q, r in rng.uniform(0.0, 1.0, size=(1000, 3, 2)):
            slack = (distance_oracle(manifold, p, r) + distance_oracle(manifold, r, q)
                     - distance_oracle(manifold, p, q))
            worst = min(worst, slack)
        assert worst >= -1e-12
