import math

import numpy as np
import pytest

from src.canonical_maps import CuspMap, FoldMap, ModelRayFamily
from src.config import Config
from src.conjugate_analysis import (classify_singularity, conjugacy_order, detect_conjugate_events, lambda_k,
                                    lambda_profile, lipschitz_estimate)
from src.geodesic_flow import PointRayFamily
from src.geometry import load_manifold


def _sphere_family():
    return PointRayFamily(load_manifold({'kind': 'sphere'}), [0.0, 0.0, 1.0])


def test_sphere_single_event_at_pi() -> None:
    events = detect_conjugate_events(_sphere_family(), 0.3, 4.0)
    assert len(events) == 1
    assert events[0].t == pytest.approx(math.pi, abs=1e-6)
    assert events[0].order == 1


def test_sphere_lambda_and_conjugacy_order() -> None:
    family = _sphere_family()
    assert lambda_k(family, 1.1, 1, 4.0) == pytest.approx(math.pi, abs=1e-6)
    ray = family.trace(1.1, 4.0)
    assert conjugacy_order(ray, math.pi) == 1
    assert conjugacy_order(ray, 1.0) == 0


def test_flat_torus_has_no_conjugate_points() -> None:
    family = PointRayFamily(load_manifold({'kind': 'flat_torus'}), [0.0, 0.0])
    assert detect_conjugate_events(family, 0.4, 3.0) == []
    assert lambda_k(family, 0.4, 1, 3.0) == math.inf


def test_fold_events_on_fold_line() -> None:
    family = ModelRayFamily(FoldMap(), [1.0, 0.0])
    for z in (-0.3, 0.0, 0.4):
        events = detect_conjugate_events(family, z, 2.0)
        assert len(events) == 1
        x = family.v_to_x(events[0].t, [z])
        assert abs(x[0]) < 1e-8
    event = detect_conjugate_events(family, 0.0, 2.0)[0]
    assert classify_singularity(event, family) == 'A2'


def test_cusp_subtype_follows_radial_field() -> None:
    family = ModelRayFamily(CuspMap(), [0.0, 1.0])
    event = detect_conjugate_events(family, 0.0, 2.0)[0]
    assert event.t == pytest.approx(1.0, abs=1e-8)
    assert classify_singularity(event, family) == 'A3_I'

    flipped = ModelRayFamily(CuspMap(), [0.0, -1.0])
    event = detect_conjugate_events(flipped, 0.0, 2.0)[0]
    assert classify_singularity(event, flipped) == 'A3_II'


def test_lipschitz_estimates() -> None:
    sphere = lambda_profile(_sphere_family(), np.linspace(0.0, 2 * math.pi, 8, endpoint=False), 1, 4.0, threads=2)
    assert lipschitz_estimate(sphere) < 1e-5

    cusp = ModelRayFamily(CuspMap(), [0.0, 1.0])
    profile = lambda_profile(cusp, np.linspace(-0.5, 0.5, 11), 1, 3.0, threads=2)
    assert np.allclose(profile.column(1), 1.0 + 3.0 * np.linspace(-0.5, 0.5, 11) ** 2, atol=1e-7)
    assert 2.0 < lipschitz_estimate(profile) < 3.1


def test_conjugacy_order_threshold_comes_from_config(monkeypatch) -> None:
    ray = _sphere_family().trace(1.1, 4.0)
    t = math.pi + 1e-5
    assert conjugacy_order(ray, t) == 1
    monkeypatch.setattr(Config, 'CONJUGACY_TOL', Config.RANK_TOL)
    assert conjugacy_order(ray, t) == 0
    assert conjugacy_order(ray, t, threshold=1e-2) == 1


def _ellipsoid_family():
    ellipsoid = load_manifold({'kind': 'ellipsoid', 'semiaxes': [1.0, 1.0, 1.5]})
    return PointRayFamily(ellipsoid, [1.0, 0.0, 0.0])


def test_ellipsoid_equator_conjugate_time() -> None:
    assert lambda_k(_ellipsoid_family(), 0.0, 1, 7.0) == pytest.approx(1.5 * math.pi, abs=1e-5)


def test_ellipsoid_lambda_is_stable_under_refinement() -> None:
    family = _ellipsoid_family()
    estimates = []
    for count in (12, 24):
        zs = np.linspace(0.0, 2 * math.pi, count, endpoint=False)
        profile = lambda_profile(family, zs, 1, 7.0, threads=2)
        assert np.all(np.isfinite(profile.column(1)))
        estimates.append(lipschitz_estimate(profile))
    coarse, fine = estimates
    assert coarse > 0
    assert 0.5 <= fine / coarse <= 2.0
