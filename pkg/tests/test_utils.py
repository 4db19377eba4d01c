import math

import numpy as np
import pytest

from src.utils.file import format_float, read_json, sanitize_filename, write_csv, write_json
from src.utils.plotting import render_locus_svg
from src.utils.worker_pool import WorkerCalculator, WorkerPool


def test_format_float() -> None:
    assert format_float(1.0 / 3.0) == '0.333333333'
    assert format_float(math.inf) == 'inf'
    assert format_float(-math.inf) == '-inf'
    assert format_float(np.float64(2.5)) == '2.5'


def test_sanitize_filename() -> None:
    assert sanitize_filename('trace cdc/A3 (join)') == 'trace_cdc_A3_join'
    assert sanitize_filename('...') == 'untitled'


def test_write_json_tags_infinity_and_sorts_keys(tmp_path) -> None:
    path = write_json({'b': np.float64(math.inf), 'a': np.arange(3), 'c': -math.inf, 'd': np.bool_(True)},
                      tmp_path / 'out.json')
    text = path.read_text()
    assert text.index('"a"') < text.index('"b"')
    doc = read_json(path)
    assert doc == {'a': [0, 1, 2], 'b': {'inf': True}, 'c': {'inf': True, 'negative': True}, 'd': True}


def test_write_csv_formats_floats(tmp_path) -> None:
    path = write_csv(['s', 'R'], [[0.0, 1.0 / 3.0], [0.1, math.inf]], tmp_path / 'out.csv')
    assert path.read_text().splitlines() == ['s,R', '0,0.333333333', '0.1,inf']


def test_worker_pool_keeps_order() -> None:
    pool = WorkerPool(threads=3)
    assert pool.map(list(range(20)), lambda x: x * x) == [x * x for x in range(20)]
    assert pool.map([], lambda x: x) == []


def test_worker_pool_reraises_failures() -> None:
    def fail_on_three(x):
        if x == 3:
            raise ValueError('three')
        return x

    with pytest.raises(ValueError, match='three'):
        WorkerPool(threads=2).map(list(range(6)), fail_on_three)


def test_worker_count() -> None:
    assert WorkerCalculator.calculate_optimal_workers(100, requested=5) == 5
    assert WorkerCalculator.calculate_optimal_workers(0) == 1
    assert WorkerCalculator.calculate_optimal_workers(3, max_workers=8) == 1


def test_render_locus_svg(tmp_path) -> None:
    points = np.array([[0.0, 0.0], [1.0, 1.0]])
    path = render_locus_svg(tmp_path / 'locus.svg', points, ['CLEAVE', 'CROSSING'],
                            [points], [np.array([[0.0, 0.0], [1.0, 0.0]])], title='test')
    text = path.read_text()
    assert text.startswith('<?xml')
    assert '<svg' in text
    empty = render_locus_svg(tmp_path / 'empty.svg', np.zeros((0, 2)))
    assert empty.exists()
