import math

import numpy as np
import pytest

from src.canonical_maps import CuspMap, FoldMap, ModelRayFamily
from src.cdc_tracer import (CDCurve, a3_join, build_retort, cdc_rows, chart_for, conjugate_distribution,
                            d4_minus_cdcs, d4_root_analysis, radius_form, retort_gain_gap, slack, trace_cdc)
from src.errors import DegenerateDistributionError, DomainError, RetortError
from src.geodesic_flow import PointRayFamily
from src.geometry import load_manifold


def _cusp(sign: float = 1.0):
    return ModelRayFamily(CuspMap(), [0.0, sign])


def test_fold_distribution_is_along_the_fold_line() -> None:
    family = ModelRayFamily(FoldMap(), [1.0, 1.0])
    chart = chart_for(family)
    d = conjugate_distribution(chart, [0.0, 0.3])
    assert np.allclose(d, [0.0, -1.0], atol=1e-12)
    assert slack(chart, [0.0, 0.3]) == pytest.approx(1.0)


def test_distribution_needs_a_conjugate_point() -> None:
    chart = chart_for(_cusp())
    with pytest.raises(DegenerateDistributionError):
        conjugate_distribution(chart, [0.5, 0.0])
    # the cusp point itself has zero slack
    with pytest.raises(DegenerateDistributionError):
        conjugate_distribution(chart, [0.0, 0.0])

    torus = load_manifold({'kind': 'flat_torus'})
    ray_chart = chart_for(PointRayFamily(torus, [0.0, 0.0]))
    with pytest.raises(DegenerateDistributionError):
        conjugate_distribution(ray_chart, [1.0, 0.3])


def test_cusp_cdc_ends_at_the_a3_point() -> None:
    family = _cusp()
    curve = trace_cdc(family, [-0.5, 0.75], step=5e-3)
    assert curve.stop_reason == 'A3'
    assert np.allclose(curve.points[-1], [0.0, 0.0], atol=1e-8)
    assert np.all(np.diff(curve.s) > 0)
    chart = chart_for(family)
    assert np.allclose([chart.det(p) for p in curve.points], 0.0, atol=1e-9)
    assert curve.unbeatable_error(chart) < 1e-3
    assert curve.radius[0] - curve.radius[-1] == pytest.approx(curve.length)


def test_cdc_velocity_has_unit_radius_descent() -> None:
    family = _cusp()
    chart = chart_for(family)
    curve = trace_cdc(family, [-0.5, 0.75], max_length=0.1, step=1e-3)
    assert curve.stop_reason == 'max_length'
    a, b = curve.points[0], curve.points[1]
    ds = curve.s[1] - curve.s[0]
    assert radius_form(chart, 0.5 * (a + b), b - a) / ds == pytest.approx(-1.0, abs=1e-4)


def test_acdc_keeps_descending() -> None:
    curve = trace_cdc(_cusp(), [-0.5, 0.75], max_length=0.2, acdc_c=1e-2)
    assert curve.acdc
    assert np.all(np.diff(curve.radius) < 0)


def test_a3_join_direction() -> None:
    family = _cusp()
    curve = trace_cdc(family, [-0.5, 0.75], step=5e-3)
    join = a3_join(family, curve)
    assert join.subtype == 'A3_I'
    assert np.allclose(join.direction, [-1.0, 0.0], atol=1e-2)
    assert join.frame_direction[0] == pytest.approx(-1.0, abs=1e-2)
    assert abs(join.frame_direction[1]) < 1e-2


def test_join_refused_away_from_terminal_a3() -> None:
    family = _cusp(-1.0)
    curve = CDCurve(np.array([[-0.1, 0.03], [0.0, 0.0]]), np.array([0.0, 0.1]), np.array([1.0, 0.9]),
                    np.array([0.5, 0.0]), np.zeros((2, 2)), np.zeros((2, 2)), 'A3')
    with pytest.raises(DomainError):
        a3_join(family, curve)

    unfinished = trace_cdc(_cusp(), [-0.5, 0.75], max_length=0.1)
    with pytest.raises(DomainError):
        a3_join(_cusp(), unfinished)


def test_retort_from_join_has_positive_gap() -> None:
    family = _cusp()
    curve = trace_cdc(family, [-0.5, 0.75], step=5e-3)
    retort = build_retort(family, curve, join=a3_join(family, curve))
    assert retort.from_join
    assert not retort.hit_conjugate
    assert retort.image_mismatch < 1e-8
    assert np.allclose(retort.points[-1], [1.0, 0.75], atol=1e-6)
    gap = retort_gain_gap(family, curve, retort)
    assert gap.gain > 0
    assert gap.gap > 0


def test_fold_has_no_retort() -> None:
    family = ModelRayFamily(FoldMap(), [1.0, 1.0])
    curve = trace_cdc(family, [0.0, 0.5], max_length=0.5)
    assert curve.stop_reason == 'max_length'
    with pytest.raises(RetortError):
        build_retort(family, curve)


def test_d4_minus_has_three_radial_generators() -> None:
    generators = d4_minus_cdcs()
    assert len(generators) == 3
    for expected in (0.0, 2 * math.pi / 3, 4 * math.pi / 3):
        gaps = [abs(math.remainder(g.angle - expected, 2 * math.pi)) for g in generators]
        assert min(gaps) < 1e-6
    for g in generators:
        assert g.alignment == pytest.approx(1.0, abs=1e-6)
        assert g.direction[2] < 0


def test_d4_minus_roots() -> None:
    report = d4_root_analysis(0.0, 0.0, 'minus')
    assert report.roots == pytest.approx([-math.sqrt(3), 0.0, math.sqrt(3)], abs=1e-9)
    assert report.intervals_ok
    assert report.positive == 1 and report.negative == 1


def test_d4_plus_roots() -> None:
    report = d4_root_analysis(2.0, 2.0, 'plus')
    expected = sorted([1.0, (-3 + math.sqrt(5)) / 2, (-3 - math.sqrt(5)) / 2])
    assert report.roots == pytest.approx(expected, abs=1e-9)
    assert report.intervals_ok is None
    assert report.positive == 1 and report.negative == 2


def test_d4_roots_outside_chamber() -> None:
    with pytest.raises(DomainError):
        d4_root_analysis(0.9, 0.9, 'minus')
    with pytest.raises(DomainError):
        d4_root_analysis(0.5, 1.5, 'plus')
    with pytest.raises(DomainError):
        d4_root_analysis(0.0, 0.0, 'zero')


def test_cdc_rows_layout() -> None:
    curve = trace_cdc(_cusp(), [-0.5, 0.75], max_length=0.05)
    header, rows = cdc_rows(curve)
    assert header == ['s', 't', 'z1', 'R', 'slack']
    assert len(rows) == len(curve.points)
    assert rows[0][0] == 0.0
