import math

import numpy as np
import pytest

from src.errors import CompatibilityError
from src.geodesic_flow import (BoundaryRayFamily, PhaseState, PointRayFamily, exponential_from_point,
                               gauss_pairing, integrate_geodesic, sweep_rays, trajectory_rows)
from src.geometry import load_manifold


def test_euclidean_exponential_is_translation() -> None:
    plane = load_manifold({'kind': 'euclidean', 'extent': 5.0})
    assert np.allclose(exponential_from_point(plane, [0.0, 0.0], [1.0, 2.0]), [1.0, 2.0], atol=1e-9)


def test_sphere_exponential_quarter_turn() -> None:
    sphere = load_manifold({'kind': 'sphere'})
    x = exponential_from_point(sphere, [0.0, 0.0, 1.0], [math.pi / 2, 0.0, 0.0])
    assert np.allclose(x, [1.0, 0.0, 0.0], atol=1e-7)


def test_geodesic_energy_is_conserved() -> None:
    sphere = load_manifold({'kind': 'sphere'})
    start = PhaseState(np.array([1.0, 0.0, 0.0]), np.array([0.0, 0.6, 0.8]))
    traj = integrate_geodesic(sphere, start, 6.0)
    assert not traj.exited
    assert traj.energy_drift < 1e-6
    assert np.allclose(np.linalg.norm(traj.states[-1].position), 1.0, atol=1e-7)


def test_geodesic_stops_at_boundary() -> None:
    disk = load_manifold({'kind': 'disk', 'radius': 1.0})
    traj = integrate_geodesic(disk, PhaseState(np.zeros(2), np.array([1.0, 0.0])), 2.0)
    assert traj.exited
    assert traj.exit_time == pytest.approx(1.0, abs=1e-6)


def test_half_plane_characteristic() -> None:
    half = load_manifold({'kind': 'half_plane'})
    family = BoundaryRayFamily(half, half.boundary_components[0], lambda s: 0.5 * np.asarray(s))
    assert np.allclose(family.characteristic(0.3), [0.5, math.sqrt(0.75)], atol=1e-10)


def test_steep_boundary_data_has_no_characteristic() -> None:
    half = load_manifold({'kind': 'half_plane'})
    family = BoundaryRayFamily(half, half.boundary_components[0], lambda s: 2.0 * np.asarray(s))
    with pytest.raises(CompatibilityError):
        family.characteristic(0.0)


def test_gauss_lemma_for_point_rays() -> None:
    plane = load_manifold({'kind': 'euclidean', 'extent': 5.0})
    family = PointRayFamily(plane, [0.0, 0.0])
    ray = family.trace(0.7, 2.0)
    assert np.allclose(gauss_pairing(plane, ray, 1.5), 0.0, atol=1e-8)
    assert ray.det(1.5) == pytest.approx(1.5, rel=1e-6)


def test_sweep_keeps_order() -> None:
    plane = load_manifold({'kind': 'euclidean', 'extent': 5.0})
    family = PointRayFamily(plane, [0.0, 0.0])
    zs = [0.0, math.pi / 2, math.pi]
    rays = sweep_rays(family, zs, 1.0, threads=2)
    ends = np.array([r.position(1.0) for r in rays])
    assert np.allclose(ends, [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]], atol=1e-8)


def test_trajectory_rows_layout() -> None:
    plane = load_manifold({'kind': 'euclidean'})
    ray = PointRayFamily(plane, [0.0, 0.0]).trace(0.0, 1.0)
    header, rows = trajectory_rows(ray, samples=11)
    assert header == ['t', 'x1', 'x2', 'v1', 'v2', 'det_dF']
    assert len(rows) == 11
    assert rows[-1][1] == pytest.approx(1.0)
