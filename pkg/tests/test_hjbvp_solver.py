import math

import numpy as np
import pytest

from src.conjugate_analysis import lambda_k, lipschitz_of_samples
from src.errors import ConfigError
from src.geodesic_flow import PointRayFamily
from src.geometry import load_manifold
from src.hjbvp_solver import (BoundaryData, LaxOleinikSolver, PointSource, SampleGrid, boundary_data_from_doc,
                              characteristics_solution, check_compatibility, cut_time, extend_and_reduce,
                              lax_oleinik_solve, ray_family_for, rho_S, semiconcavity_check, singular_set_extract,
                              singular_set_to_json, solution_rows)


def _annulus():
    return load_manifold({'kind': 'annulus', 'r_inner': 1.0, 'r_outer': 2.0})


def test_annulus_distance_to_boundary() -> None:
    solver = LaxOleinikSolver(_annulus(), BoundaryData(), samples=256)
    points = np.array([[1.2, 0.0], [0.0, 1.7], [-1.0, -1.0], [1.5, 0.0]])
    u, records = solver.evaluate(points)
    r = np.linalg.norm(points, axis=1)
    assert np.allclose(u, np.minimum(r - 1.0, 2.0 - r), atol=1e-7)
    assert len(records[0]) == 1 and records[0][0].component == 0
    assert len(records[1]) == 1 and records[1][0].component == 1
    assert sorted(rec.component for rec in records[3]) == [0, 1]


def test_annulus_singular_set_is_middle_circle() -> None:
    annulus = _annulus()
    solution = lax_oleinik_solve(annulus, BoundaryData(), SampleGrid(annulus, 20), threads=2, samples=256)
    S = singular_set_extract(solution)
    assert len(S) > 10
    assert np.allclose(np.linalg.norm(S.points, axis=1), 1.5, atol=1e-6)
    assert set(S.kinds) == {'edge'}
    doc = singular_set_to_json(S)
    assert len(doc['points']) == len(S)
    assert all(len(p['R_p']) == 2 for p in doc['points'])


def test_solution_rows_skip_masked_samples() -> None:
    annulus = _annulus()
    grid = SampleGrid(annulus, 8)
    solution = lax_oleinik_solve(annulus, BoundaryData(), grid, threads=1, samples=128)
    header, rows = solution_rows(solution)
    assert header == ['p1', 'p2', 'u', 'n_minimizers']
    assert len(rows) == int(grid.mask.sum())
    assert all(row[2] >= 0 for row in rows)


def test_compatibility_margin_follows_slope() -> None:
    half = load_manifold({'kind': 'half_plane'})
    ok = check_compatibility(half, boundary_data_from_doc(half, {'g': {'0': {'type': 'linear', 'slope': 0.9}}}))
    assert ok.ok
    assert ok.margin == pytest.approx(0.9, abs=1e-6)
    bad = check_compatibility(half, boundary_data_from_doc(half, {'g': {'0': {'type': 'linear', 'slope': 1.1}}}))
    assert not bad.ok


def test_boundary_data_document_errors() -> None:
    annulus = _annulus()
    with pytest.raises(ConfigError):
        boundary_data_from_doc(annulus, {'g': {'5': {'type': 'constant'}}})
    with pytest.raises(ConfigError):
        boundary_data_from_doc(annulus, {'g': {'0': {'type': 'wavelet'}}})
    with pytest.raises(ConfigError):
        boundary_data_from_doc(annulus, {'a': [0.0, 0.1, 0.2]})
    with pytest.raises(ConfigError):
        boundary_data_from_doc(annulus, {'h': {}})


def test_offsets_shift_values_but_not_h() -> None:
    data = BoundaryData().with_offsets({1: -0.4})
    solver = LaxOleinikSolver(_annulus(), data, samples=256)
    u, records = solver.evaluate(np.array([[1.3, 0.0]]))
    assert u[0] == pytest.approx(0.3, abs=1e-7)
    outer = next(rec for rec in records[0] if rec.component == 1)
    assert outer.value == pytest.approx(0.3, abs=1e-7)
    assert solver.h_value(outer) == pytest.approx(0.7, abs=1e-7)


def test_cut_time_on_annulus_is_half_width() -> None:
    solver = LaxOleinikSolver(_annulus(), BoundaryData(), samples=256)
    record = cut_time(solver, ray_family_for(solver, 0), 0.3, 2.0)
    assert record.t_cut == pytest.approx(0.5, abs=1e-6)
    assert record.reason == 'multiple_minimizers'
    assert record.lambda1 == math.inf


def test_cut_time_on_flat_torus() -> None:
    torus = load_manifold({'kind': 'flat_torus'})
    solver = LaxOleinikSolver(torus, PointSource(np.zeros(2)))
    record = cut_time(solver, PointRayFamily(torus, [0.0, 0.0]), 0.0, 2.0)
    assert record.t_cut == pytest.approx(0.5, abs=1e-6)
    assert record.reason == 'multiple_minimizers'


def test_cut_time_on_sphere_is_conjugate() -> None:
    sphere = load_manifold({'kind': 'sphere'})
    solver = LaxOleinikSolver(sphere, PointSource(np.array([0.0, 0.0, 1.0])))
    record = cut_time(solver, ray_family_for(solver), 0.4, 4.0)
    assert record.t_cut == pytest.approx(math.pi, abs=1e-6)
    assert record.reason == 'conjugate'


def test_distance_to_boundary_is_semiconcave() -> None:
    solver = LaxOleinikSolver(_annulus(), BoundaryData(), samples=256)
    report = semiconcavity_check(solver, [([1.3, 0.0], [1.7, 0.0]), ([0.0, 1.1], [0.0, 1.9])])
    assert report.max_defect < 1e-8
    assert report.constant == pytest.approx(0.0, abs=1e-6)


def _torus_singular_set():
    torus = load_manifold({'kind': 'flat_torus'})
    solution = lax_oleinik_solve(torus, PointSource(np.zeros(2)), SampleGrid(torus, 24), threads=2)
    return torus, singular_set_extract(solution)


def test_rho_S_on_annulus() -> None:
    annulus = _annulus()
    S = singular_set_extract(lax_oleinik_solve(annulus, BoundaryData(), SampleGrid(annulus, 20),
                                               threads=2, samples=256))
    inner = ray_family_for(S.solver, 0)
    for z in (0.1, 1.0, 2.5, 4.0):
        assert rho_S(inner, z, S, 2.0) == pytest.approx(0.5, abs=1e-6)

    data = BoundaryData().with_offsets({0: 0.4})
    S = singular_set_extract(lax_oleinik_solve(annulus, data, SampleGrid(annulus, 20), threads=2, samples=256))
    assert np.allclose(np.linalg.norm(S.points, axis=1), 1.3, atol=1e-6)
    assert rho_S(ray_family_for(S.solver, 0), 1.0, S, 2.0) == pytest.approx(0.3, abs=1e-6)


def test_rho_S_on_flat_torus() -> None:
    torus, S = _torus_singular_set()
    family = PointRayFamily(torus, [0.0, 0.0])
    assert rho_S(family, 0.0, S, 2.0) == pytest.approx(0.5, abs=1e-6)
    assert rho_S(family, math.pi / 4, S, 2.0) == pytest.approx(math.sqrt(2) / 2, abs=1e-6)


def test_rho_S_is_stable_under_refinement() -> None:
    torus, S = _torus_singular_set()
    family = PointRayFamily(torus, [0.0, 0.0])
    estimates = []
    for count in (16, 32):
        zs = np.linspace(0.0, 2 * math.pi, count, endpoint=False)
        rhos = [rho_S(family, z, S, 2.0) for z in zs]
        estimates.append(lipschitz_of_samples(zs, rhos, 2 * math.pi))
    coarse, fine = estimates
    assert 0.0 < coarse < 1.0
    assert 0.5 <= fine / coarse <= 2.0


def test_characteristics_agree_with_lax_oleinik() -> None:
    annulus = _annulus()
    S = singular_set_extract(lax_oleinik_solve(annulus, BoundaryData(), SampleGrid(annulus, 20),
                                               threads=2, samples=256))
    family = ray_family_for(S.solver, 0)
    zs = np.linspace(0.0, 2 * math.pi, 6, endpoint=False)
    points, values, z, t = characteristics_solution(family, zs, 0.02 + 0.1 * np.arange(10), S=S)
    assert t.max() < 0.5
    assert len(values) == 6 * 5
    u = S.solver.evaluate(points)[0]
    assert np.max(np.abs(values - u)) < 1e-5

    at = np.isclose(t, 0.32)
    assert at.sum() == 6
    assert np.allclose(np.linalg.norm(points[at], axis=1), 1.32, atol=1e-7)
    assert np.allclose(values[at], 0.32)


def test_reduction_of_offset_annulus() -> None:
    reduced = extend_and_reduce(_annulus(), BoundaryData().with_offsets({0: 0.4}), samples=128)
    assert reduced.shift == pytest.approx(0.0)
    assert np.allclose(np.linalg.norm(reduced.curves[0], axis=1), 0.6, atol=1e-8)
    assert np.allclose(np.linalg.norm(reduced.curves[1], axis=1), 2.0, atol=1e-12)


def test_reduction_of_disk_matches_distance_to_level_set() -> None:
    disk = load_manifold({'kind': 'disk', 'radius': 1.0})
    data = boundary_data_from_doc(disk, {'g': {'0': {'type': 'fourier', 'sin': [0.1]}}})
    reduced = extend_and_reduce(disk, data, samples=256)
    assert reduced.shift == pytest.approx(0.1, abs=1e-4)
    radii = np.array([0.0, 0.2, 0.5, 0.8])
    angles = np.linspace(0.0, 2 * math.pi, 12, endpoint=False)
    points = np.array([[r * math.cos(a), r * math.sin(a)] for r in radii for a in angles])
    assert reduced.verify(LaxOleinikSolver(disk, data, samples=512), points) <= 5e-4


def test_cut_time_before_first_conjugate_time_on_ellipsoid() -> None:
    ellipsoid = load_manifold({'kind': 'ellipsoid', 'semiaxes': [1.0, 1.0, 1.5]})
    solver = LaxOleinikSolver(ellipsoid, PointSource(np.array([1.0, 0.0, 0.0])))
    family = ray_family_for(solver)
    rng = np.random.default_rng(5)
    for z in rng.uniform(0.0, 2 * math.pi, 3):
        record = cut_time(solver, family, z, 6.0, tol=1e-3)
        assert math.isfinite(record.lambda1)
        assert record.t_cut <= lambda_k(family, z, 1, 6.0) + 1e-6
        assert record.t_cut > 2.0
