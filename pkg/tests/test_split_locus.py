import math

import numpy as np
import pytest

from src.errors import CompatibilityError, OrientationError
from src.geometry import load_manifold
from src.hjbvp_solver import BoundaryData
from src.split_locus import (CLEAVE, CROSSING, SplitSample, boundary_residual, build_split_locus_from_constants,
                             build_torus_family, chain_h_jumps, circle_locus, classify_points,
                             current_T_eval, hyperbola_residual, kernel_alignment, mean_radius, model_to_json,
                             torus_margin, verify_balanced, verify_splits)


def _annulus():
    return load_manifold({'kind': 'annulus', 'r_inner': 1.0, 'r_outer': 2.0})


def test_constant_offsets_move_the_cleave_circle() -> None:
    model = build_split_locus_from_constants(_annulus(), BoundaryData(), [0.0, -0.4], resolution=20,
                                             conjugacy=False, threads=2)
    hist = model.histogram()
    assert hist[CLEAVE] > 10
    assert hist[CROSSING] == 0
    assert mean_radius(model) == pytest.approx(1.3, abs=1e-6)
    for sample in model.samples:
        assert sorted(sample.h_values) == pytest.approx([0.3, 0.7], abs=1e-6)


def test_incompatible_offsets_are_rejected() -> None:
    with pytest.raises(CompatibilityError):
        build_split_locus_from_constants(_annulus(), BoundaryData(), [0.0, 1.2], resolution=8, conjugacy=False)


def test_torus_cut_locus_classes() -> None:
    model = build_torus_family([0.0, 0.0], resolution=16, conjugacy=False, threads=2)
    hist = model.histogram()
    assert hist[CLEAVE] > 0
    assert hist[CROSSING] >= 1
    for sample in model.samples:
        x, y = np.mod(sample.point, 1.0)
        if sample.cls == CLEAVE:
            assert min(abs(x - 0.5), abs(y - 0.5)) < 1e-6
        if sample.cls == CROSSING:
            assert np.allclose([x, y], [0.5, 0.5], atol=1e-6)


def test_torus_offsets_give_hyperbolas() -> None:
    torus = load_manifold({'kind': 'flat_torus'})
    assert torus_margin(torus, [0.2, 0.1]) == pytest.approx(math.hypot(0.2, 0.1), abs=1e-12)
    model = build_torus_family([0.2, 0.1], resolution=16, conjugacy=False, threads=2)
    assert model.histogram()[CLEAVE] > 0
    assert hyperbola_residual(model) < 1e-6
    with pytest.raises(CompatibilityError):
        build_torus_family([1.0, 0.0], resolution=8, conjugacy=False)


def test_middle_circle_is_balanced() -> None:
    model = circle_locus(_annulus(), (0.0, 0.0), 1.5, BoundaryData(), count=256)
    assert model.histogram()[CLEAVE] == 256
    assert len(model.components) == 1 and model.components[0].closed
    report = verify_balanced(model)
    assert report.balanced
    assert not report.inconclusive
    assert report.worst_defect < 1e-3
    assert kernel_alignment(model) < 1e-2


def test_off_centre_circle_is_not_balanced() -> None:
    model = circle_locus(_annulus(), (0.1, 0.0), 1.5, BoundaryData(), count=256)
    report = verify_balanced(model)
    assert not report.balanced
    assert report.worst_defect >= 1e-3


def test_split_property_needs_the_whole_circle() -> None:
    full = circle_locus(_annulus(), (0.0, 0.0), 1.5, BoundaryData(), count=256)
    report = verify_splits(full, check_resolution=12)
    assert report.passed
    assert report.checked > 20

    gapped = circle_locus(_annulus(), (0.0, 0.0), 1.5, BoundaryData(), count=256, gap=(0.0, 1.2))
    report = verify_splits(gapped, check_resolution=12)
    assert not report.passed
    assert any(count == 2 for _, count in report.failures)


def test_current_of_offset_circle() -> None:
    radius = 1.3
    model = circle_locus(_annulus(), (0.0, 0.0), radius, BoundaryData(), count=256)
    rotation = lambda x: np.array([-x[1], x[0]])
    expected = -0.4 * 2 * math.pi * radius ** 2
    assert current_T_eval(model, rotation) == pytest.approx(expected, rel=1e-3)
    # closed polylines have no boundary
    assert boundary_residual(model, lambda x: float(x[0] ** 2 + 3 * x[1])) == pytest.approx(0.0, abs=1e-6)
    jumps = chain_h_jumps(model)
    assert len(jumps) == 1
    assert np.allclose(np.abs(jumps[0]), 0.4, atol=1e-6)


def test_current_needs_planar_polylines() -> None:
    sphere = load_manifold({'kind': 'sphere'})
    model = circle_locus(_annulus(), (0.0, 0.0), 1.5, BoundaryData(), count=32)
    model.manifold = sphere
    with pytest.raises(OrientationError):
        current_T_eval(model, lambda x: np.zeros(3))


def test_point_classes_follow_multiplicity_and_orders() -> None:
    model = circle_locus(_annulus(), (0.0, 0.0), 1.5, BoundaryData(), count=16)
    e1, e2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    model.samples = [
        SplitSample(np.zeros(2), [e1, -e1], [0.0, 0.0], [0, 0]),
        SplitSample(np.zeros(2), [e1], [0.0], [1]),
        SplitSample(np.zeros(2), [e1, -e1], [0.0, 0.0], [0, 1]),
        SplitSample(np.zeros(2), [e1, e2, -e1], [0.0] * 3, [0, 0, 0]),
        SplitSample(np.zeros(2), [e1, -e1, e1], [0.0] * 3, [0, 0, 0]),
        SplitSample(np.zeros(2), [e1, e2, -e1], [0.0] * 3, [0, 2, 0]),
    ]
    hist = classify_points(model)
    assert [s.cls for s in model.samples] == ['CLEAVE', 'EDGE', 'DEGENERATE_CLEAVE', 'CROSSING',
                                              'REMAINDER', 'REMAINDER']
    assert hist == {'CLEAVE': 1, 'EDGE': 1, 'DEGENERATE_CLEAVE': 1, 'CROSSING': 1, 'REMAINDER': 2}


def test_model_json_layout() -> None:
    model = circle_locus(_annulus(), (0.0, 0.0), 1.5, BoundaryData(), count=16)
    doc = model_to_json(model)
    assert doc['parameter'] == {'center': [0.0, 0.0], 'radius': [1.5]}
    assert len(doc['samples']) == 16
    assert set(doc['samples'][0]) == {'p', 'class', 'R_p', 'h_sides', 'conjugate_orders'}
