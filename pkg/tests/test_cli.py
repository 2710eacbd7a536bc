"""Command line behavior: exit codes, sample dumps and output files."""

import csv
import json
import math
import os

import pytest

import periodic_evans
from conftest import PROBLEMS_DIR
from periodic_evans import RunConfig, build_parser, main, parse_complex
from util.exceptions import RunConfigError, StepSizeUnderflowError

FREE = os.path.join(PROBLEMS_DIR, 'free_scalar.json')
MATHIEU = os.path.join(PROBLEMS_DIR, 'mathieu_q05.json')


def run(*argv):
    main(**vars(build_parser().parse_args(list(argv))))


def exit_status(*argv) -> int:
    with pytest.raises(SystemExit) as e:
        run(*argv)
    return e.value.code


def from_args(command='verify', **overrides) -> RunConfig:
    kwargs = dict(problem_path=FREE, J=None, lam=None, tol=1e-10, output=None, format=None, delta_reading='a0',
                  constants_mode='closed', convention='derived', relation_tol=1e-2, region=None, method='all')
    kwargs.update(overrides)
    return RunConfig.from_args(command, **kwargs)


@pytest.fixture(autouse=True)
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv(periodic_evans.PROCESSES_ENV, raising=False)
    return tmp_path


class TestExitCodes:
    def test_missing_file(self, capsys):
        assert exit_status('describe', '-f', 'nope.json') == 1
        assert 'not found' in capsys.readouterr().out

    def test_no_problem_file(self):
        assert exit_status('hill') == 1

    def test_unknown_key(self, workdir):
        path = workdir / 'bad.json'
        path.write_text(json.dumps({'n': 1, 'period': '2pi', 'B0': [{'k': 0, 're': [[1.0]]}], 'C0': []}))
        assert exit_status('describe', '-f', str(path)) == 1

    def test_tolerance_out_of_range(self):
        assert exit_status('evans', '-f', FREE, '--lambda', '1', '--tol', '1e-20') == 1

    def test_indefinite_mass(self, workdir, capsys):
        path = workdir / 'indefinite.json'
        path.write_text(json.dumps({'n': 1, 'period': '2pi',
                                    'B0': [{'k': -1, 're': [[0.5]]}, {'k': 1, 're': [[0.5]]}]}))
        assert exit_status('describe', '-f', str(path)) == 2
        assert 'not definite' in capsys.readouterr().out

    def test_numerical_failure(self, monkeypatch, capsys):
        def failing(problem, lam, tol):
            raise StepSizeUnderflowError(3.5)

        monkeypatch.setattr(periodic_evans, 'evans_sample', failing)
        assert exit_status('evans', '-f', FREE, '--lambda', '1') == 3
        assert capsys.readouterr().out.startswith('periodic_evans.py: ode_evans: ')


    def test_library_value_error(self, monkeypatch, capsys):
        def failing(problem, lam, tol):
            raise ValueError('monodromy tolerance must lie in [1e-13, 1e-06], got 1.000e-04')

        monkeypatch.setattr(periodic_evans, 'evans_sample', failing)
        assert exit_status('evans', '-f', FREE, '--lambda', '1') == 1
        assert capsys.readouterr().out.startswith('periodic_evans.py: error: monodromy tolerance')


class TestCommands:
    def test_dump_config(self, workdir):
        with pytest.raises(SystemExit) as e:
            run('-d')
        assert e.value.code == 0
        assert len(list((workdir / 'problems').glob('*.json'))) == 5

    def test_describe(self, capsys):
        run('describe', '-f', MATHIEU)
        out = capsys.readouterr().out
        assert 'mathieu_q0.5' in out
        assert '2pi' in out

    def test_det_output_is_deterministic(self, workdir):
        args = ['det', '-f', MATHIEU, '--J', '4', '8', '--lambda', '0.5', '1+1i']
        run(*args, '-o', 'first.csv')
        run(*args, '-o', 'second.csv')
        first, second = (workdir / 'first.csv').read_bytes(), (workdir / 'second.csv').read_bytes()
        assert first == second
        rows = list(csv.reader(first.decode().splitlines()))
        assert rows[0][:3] == ['re(lambda)', 'im(lambda)', 'J']
        assert len(rows) == 1 + 2 * 2
        assert [r[2] for r in rows[1:]] == ['4', '4', '8', '8']

    def test_evans_grid(self, workdir):
        run('evans', '-f', FREE, '--lambda', '0.5', '1.5', '-0.5', '0.5', '2', '3', '-o', 'grid.csv')
        rows = list(csv.reader((workdir / 'grid.csv').read_text().splitlines()))
        assert len(rows) == 1 + 6
        assert [float(r[0]) for r in rows[1:3]] == [0.5, 1.5]

    def test_locate_json(self, workdir):
        run('locate', '-f', FREE, '--method', 'hill', '--J', '8', '-o', 'located.json')
        data = json.loads((workdir / 'located.json').read_text())
        assert data['method'] == 'hill'
        assert data['total_winding'] == 5
        assert [e['mult'] for e in data['eigenvalues']] == [2, 2, 1]

    def test_verify_writes_report(self, workdir, capsys):
        run('verify', '-f', FREE, '--J', '4', '8', '--lambda', '0.5+0.5i', '-o', 'verify.json')
        data = json.loads((workdir / 'verify.json').read_text())
        assert data['constants_mode'] == 'closed'
        assert {e['J'] for e in data['entries']} == {4, 8}
        assert 'Relation check' in capsys.readouterr().out

    def test_loose_tolerance_runs(self, workdir):
        """Tolerances between the integrator limit and the command-line limit are tightened, not rejected."""
        run('evans', '-f', FREE, '--lambda', '0.5', '--tol', '1e-4', '-o', 'loose.csv')
        rows = list(csv.reader((workdir / 'loose.csv').read_text().splitlines()))
        assert len(rows) == 2
        assert float(rows[1][2]) == pytest.approx(2 - 2 * math.cosh(2 * math.pi * math.sqrt(0.5)), rel=1e-3)

    def test_hill_header(self, workdir):
        run('hill', '-f', FREE, '--J', '4', '8', '--region', '-5', '1', '-1', '1', '-o', 'hill.csv')
        rows = list(csv.reader((workdir / 'hill.csv').read_text().splitlines()))
        assert rows[0] == ['J', 're(lambda)', 'im(lambda)', 'match_distance_to_previous_J']
        assert {r[0] for r in rows[1:]} == {'4', '8'}

    def test_json_is_strict(self, workdir):
        """Missing match distances of the first truncation are written as null, never NaN."""
        def reject(token):
            raise ValueError(f'non-standard JSON constant {token}')

        run('hill', '-f', FREE, '--J', '4', '8', '--region', '-5', '1', '-1', '1', '-o', 'hill.json')
        text = (workdir / 'hill.json').read_text()
        data = json.loads(text, parse_constant=reject)
        first = [row for row in data['rows'] if row[0] == 4]
        assert first and all(row[3] is None for row in first)
        assert all(isinstance(row[3], float) for row in data['rows'] if row[0] == 8)

    def test_log_file(self, workdir):
        run('describe', '-f', FREE, '-l')
        assert len(list((workdir / 'logs').glob('*_describe.log'))) == 1


class TestRunConfig:
    def test_format_follows_suffix(self):
        assert from_args(output='out.json').format == 'json'
        assert from_args(output='out.csv').format == 'csv'

    def test_verify_has_default_points(self):
        config = from_args()
        assert config.lambdas == periodic_evans.DEFAULT_VERIFY_LAMBDAS
        assert config.J == periodic_evans.DEFAULT_J

    def test_tolerance_capped_at_integrator_limit(self):
        assert from_args('evans', lam=['1'], tol=1e-4).tol == 1e-6
        assert from_args('evans', lam=['1'], tol=1e-8).tol == 1e-8

    def test_truncations_sorted_and_unique(self):
        assert from_args(J=[16, 4, 16]).J == [4, 16]

    def test_point_commands_need_lambda(self):
        with pytest.raises(RunConfigError, match='--lambda'):
            from_args('evans')

    def test_bad_region(self):
        with pytest.raises(RunConfigError, match='--region'):
            from_args('locate', region=[1, 0, -1, 1])

    def test_processes_from_environment(self, monkeypatch):
        monkeypatch.setenv(periodic_evans.PROCESSES_ENV, '2')
        assert from_args().processes == 2
        monkeypatch.setenv(periodic_evans.PROCESSES_ENV, '0')
        with pytest.raises(RunConfigError):
            from_args()

    def test_contour(self):
        contour = from_args('locate', region=[-2, 4, -1, 1]).contour
        assert contour.lo == -2 - 1j
        assert contour.hi == 4 + 1j


class TestParseComplex:
    @pytest.mark.parametrize('text, value', [('1.5', 1.5), ('-2+0.5i', -2 + 0.5j), ('-2+0.5j', -2 + 0.5j), (' 3i', 3j)])
    def test_accepted(self, text, value):
        assert parse_complex(text) == value

    def test_rejected(self):
        with pytest.raises(RunConfigError):
            parse_complex('one')
