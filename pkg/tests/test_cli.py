import json

import pytest

from src.cli import create_argument_parser, main, run
from src.config import Config
from src.errors import ConfigError
from src.utils.file import read_json
from src.utils.validators import JobSpec


def test_parser_accepts_every_command() -> None:
    parser = create_argument_parser()
    args = parser.parse_args(['trace-cdc', '--job', 'job.json', '--threads', '2'])
    assert args.command == 'trace-cdc'
    assert args.threads == 2
    with pytest.raises(SystemExit):
        parser.parse_args(['render'])


def test_d4_roots_without_job(tmp_path) -> None:
    assert main(['d4-roots', '--kind', 'minus', '--a', '0', '--b', '0', '--out', str(tmp_path)]) == 0
    report = read_json(tmp_path / 'd4_roots.json')
    assert report['kind'] == 'minus'
    assert report['intervals_ok'] is True
    assert len(report['roots']) == 3
    assert read_json(tmp_path / 'summary.json')['command'] == 'd4-roots'


def test_numerical_failure_writes_diagnostic(tmp_path) -> None:
    assert main(['d4-roots', '--kind', 'minus', '--a', '0.9', '--b', '0.9', '--out', str(tmp_path)]) == 3
    diagnostic = read_json(tmp_path / 'diagnostic.json')
    assert diagnostic['error'] == 'DomainError'
    assert not (tmp_path / 'summary.json').exists()


def test_configuration_errors_exit_with_two(tmp_path) -> None:
    assert main(['geodesic', '--out', str(tmp_path)]) == 2
    assert main(['geodesic', '--job', str(tmp_path / 'missing.json'), '--out', str(tmp_path)]) == 2
    assert main(['d4-roots', '--kind', 'plus', '--out', str(tmp_path)]) == 2

    bad = tmp_path / 'bad.json'
    bad.write_text(json.dumps({'command': 'geodesic', 'manifold': {'kind': 'euclidean'}, 'colour': 'red'}))
    assert main(['geodesic', '--job', str(bad), '--out', str(tmp_path)]) == 2


def test_job_spec_validation() -> None:
    job = JobSpec.from_dict({'command': 'trace-cdc', 'params': {'start': [0.1, 0.03]}, 'seed': 7})
    assert job.manifold is None
    assert job.seed == 7
    assert job.get('start') == [0.1, 0.03]
    with pytest.raises(ConfigError):
        JobSpec.from_dict({'command': 'trace-cdc', 'params': {'colour': 1}})
    with pytest.raises(ConfigError):
        JobSpec.from_dict({'command': 'cut-locus', 'params': {}})
    with pytest.raises(ConfigError):
        JobSpec.from_dict({'command': 'trace-cdc', 'params': {'step': -1.0}})
    with pytest.raises(ConfigError):
        JobSpec.from_dict({'command': 'geodesic', 'manifold': {'kind': 'euclidean'}}, command='cut-locus')


def test_geodesic_job(tmp_path) -> None:
    job = JobSpec.from_dict({'command': 'geodesic', 'manifold': {'kind': 'disk', 'radius': 1.0},
                             'params': {'point': [0.0, 0.0], 'velocity': [1.0, 0.0], 't': 2.0, 'samples': 21}})
    assert run(job, tmp_path, threads=1) == 0
    summary = read_json(tmp_path / 'summary.json')
    assert summary['exited'] is True
    assert summary['exit_time'] == pytest.approx(1.0, abs=1e-6)
    header = (tmp_path / 'trajectory.csv').read_text().splitlines()[0]
    assert header == 't,x1,x2,v1,v2'
    assert (tmp_path / 'trajectory.svg').exists()


def test_trace_cdc_job_with_join_and_retort(tmp_path) -> None:
    job = JobSpec.from_dict({'command': 'trace-cdc',
                             'params': {'model': 'A3', 'start': [-0.5, 0.75], 'join': True, 'retort': True}})
    assert run(job, tmp_path, threads=1) == 0
    summary = read_json(tmp_path / 'summary.json')
    assert summary['stop_reason'] == 'A3'
    assert summary['retort']['gap'] > 0
    assert summary['retort']['hit_conjugate'] is False
    join = read_json(tmp_path / 'join.json')
    assert join['subtype'] == 'A3_I'
    for name in ('cdc.csv', 'image.csv', 'cdc.svg'):
        assert (tmp_path / name).exists()


def test_run_restores_global_settings(tmp_path) -> None:
    seed, tol = Config.SEED, Config.TOL
    job = JobSpec.from_dict({'command': 'geodesic', 'manifold': {'kind': 'disk', 'radius': 1.0}, 'seed': 17,
                             'params': {'point': [0.0, 0.0], 'velocity': [1.0, 0.0], 't': 0.5, 'tol': 1e-8}})
    assert run(job, tmp_path / 'ok', threads=1) == 0
    assert (Config.SEED, Config.TOL) == (seed, tol)

    failing = JobSpec.from_dict({'command': 'geodesic', 'manifold': {'kind': 'ellipsoid'}, 'seed': 3,
                                 'params': {'point': [1.0, 0.0, 0.0], 'velocity': [0.0, 1.0, 0.0], 'tol': 1e-6}})
    assert run(failing, tmp_path / 'bad', threads=1) == 2
    assert (Config.SEED, Config.TOL) == (seed, tol)
