import argparse
import csv
import json
import logging
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import rich
import rich.panel
import rich.table
import yaml
from bridge_constants import CONSTANTS_MODES, CONVENTIONS, READINGS, verify_relation
from fourier_coeffs import SpectralProblem
from fredholm_det import CSV_HEADER as DET_HEADER
from fredholm_det import determinant_sweep
from hill_galerkin import convergence_sweep
from ode_evans import CSV_HEADER as EVANS_HEADER
from ode_evans import TOL_RANGE as ODE_TOL_RANGE
from ode_evans import evans_sample
from spectral_locator import METHODS, Contour, compare_methods, locate_eigenvalues
from sweep_worker import SWEEP_HEADER, grid_points, run_grid
from util.exceptions import PeriodicEvansError, RunConfigError, exit_code, module_of
from util.timing import Stopwatch

COMMANDS = ('describe', 'hill', 'evans', 'det', 'verify', 'locate', 'sweep')
FORMATS = ('csv', 'json')
TOL_BOUNDS = (1e-13, 1e-3)
PROCESSES_ENV = 'PERIODIC_EVANS_PROCESSES'
DEFAULT_J = [8, 16, 32, 64]
DEFAULT_REGION = (-5.0, 1.0, -1.0, 1.0)
# non-eigenvalue points for the free scalar and Mathieu samples
DEFAULT_VERIFY_LAMBDAS = [1.0 + 0j, 0.5 + 0.5j, -2.5 + 0.3j, 2.0 + 1.0j, -0.5 - 0.7j]


def parse_complex(text: str) -> complex:
    """Accept '1.5', '-2+0.5j' or '-2+0.5i'."""
    try:
        return complex(text.strip().replace(' ', '').replace('i', 'j'))
    except ValueError:
        raise RunConfigError('lambda', f'cannot read {text!r} as a complex number') from None


@dataclass
class RunConfig:
    command: str
    problem_path: str
    J: List[int] = field(default_factory=lambda: list(DEFAULT_J))
    lambdas: List[complex] = field(default_factory=list)
    tol: float = 1e-10
    output: Optional[str] = None
    format: str = 'csv'
    delta_reading: str = 'a0'
    constants_mode: str = 'closed'
    convention: str = 'derived'
    relation_tol: float = 1e-2
    region: Tuple[float, float, float, float] = DEFAULT_REGION
    method: str = 'all'
    processes: int = -1

    @classmethod
    def from_args(cls, command: str, problem_path: Optional[str], J: Optional[Sequence[int]], lam: Optional[Sequence[str]],
                  tol: float, output: Optional[str], format: Optional[str], delta_reading: str, constants_mode: str,
                  convention: str, relation_tol: float, region: Optional[Sequence[float]], method: str) -> 'RunConfig':
        """Validate parsed arguments.

        Raises:
            RunConfigError: Any inconsistent or out-of-range value.
        """
        if command not in COMMANDS:
            raise RunConfigError('command', f'expected one of {COMMANDS}, got {command!r}')
        if not problem_path:
            raise RunConfigError('problem_path', 'a problem file is required (run with -d to write the samples)')
        if not TOL_BOUNDS[0] <= tol <= TOL_BOUNDS[1]:
            raise RunConfigError('tol', f'must lie in [{TOL_BOUNDS[0]:.0e}, {TOL_BOUNDS[1]:.0e}], got {tol:g}')
        if tol > ODE_TOL_RANGE[1]:
            logging.warning(f'[config] tol {tol:g} is looser than the integrator accepts, using {ODE_TOL_RANGE[1]:.0e}')
            tol = ODE_TOL_RANGE[1]
        Js = sorted(set(J)) if J else list(DEFAULT_J)
        if any(j < 0 for j in Js):
            raise RunConfigError('J', f'truncations must be nonnegative, got {list(J)}')
        if format is None:
            format = 'json' if output and output.endswith('.json') else 'csv'
        if format not in FORMATS:
            raise RunConfigError('format', f'expected one of {FORMATS}, got {format!r}')
        if region is not None and not (region[1] > region[0] and region[3] > region[2]):
            raise RunConfigError('region', f'expected re_min < re_max and im_min < im_max, got {list(region)}')
        if method not in METHODS + ('all',):
            raise RunConfigError('method', f'expected one of {METHODS + ("all",)}, got {method!r}')
        try:
            processes = int(os.environ.get(PROCESSES_ENV, -1))
        except ValueError:
            raise RunConfigError('processes', f'{PROCESSES_ENV} must be an integer') from None
        if processes == 0 or processes > 61:
            raise RunConfigError('processes', f'{PROCESSES_ENV} cannot be 0 or larger than 61')
        return cls(
            command=command,
            problem_path=problem_path,
            J=Js,
            lambdas=cls._lambdas(command, lam),
            tol=tol,
            output=output,
            format=format,
            delta_reading=delta_reading,
            constants_mode=constants_mode,
            convention=convention,
            relation_tol=relation_tol,
            region=tuple(region) if region else DEFAULT_REGION,
            method=method,
            processes=processes,
        )

    @staticmethod
    def _lambdas(command: str, lam: Optional[Sequence[str]]) -> List[complex]:
        if not lam:
            if command in ('evans', 'det', 'sweep'):
                raise RunConfigError('lambda', f'{command} needs a point or a grid: re_min re_max im_min im_max nx ny')
            return list(DEFAULT_VERIFY_LAMBDAS) if command == 'verify' else []
        if len(lam) == 6:
            try:
                re_min, re_max, im_min, im_max = map(float, lam[:4])
                nx, ny = int(lam[4]), int(lam[5])
            except ValueError:
                raise RunConfigError('lambda', f'cannot read grid {list(lam)}') from None
            if nx < 1 or ny < 1:
                raise RunConfigError('lambda', 'grids need at least one point per axis')
            return grid_points(re_min, re_max, im_min, im_max, nx, ny)
        return [parse_complex(s) for s in lam]

    @property
    def contour(self) -> Contour:
        re_min, re_max, im_min, im_max = self.region
        return Contour.rectangle(complex(re_min, im_min), complex(re_max, im_max))


### output
def json_safe(value):
    """Replace nan and inf by None so the output is strict JSON."""
    if isinstance(value, float):
        return value if math.isfinite(value) else None
    if isinstance(value, dict):
        return {k: json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_safe(v) for v in value]
    return value


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, '.17g')
    return str(value)


def write_atomic(path: str, rows: List[List], header: List[str], fmt: str, payload: Optional[Dict] = None) -> None:
    """Write the table (or a JSON payload) to a temporary file next to `path`, then rename over it."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=f'.{target.name}.', suffix='.tmp')
    try:
        with os.fdopen(fd, 'w', newline='') as f:
            if fmt == 'json':
                body = payload if payload is not None else {'columns': header, 'rows': rows}
                json.dump(json_safe(body), f, indent=2, sort_keys=True, allow_nan=False)
                f.write('\n')
            else:
                writer = csv.writer(f, lineterminator='\n')
                writer.writerow(header)
                writer.writerows([[_fmt(v) for v in row] for row in rows])
        os.replace(tmp, target)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    logging.info(f'[output] wrote {len(rows)} rows to {target}')


def emit(config: RunConfig, rows: List[List], header: List[str], payload: Optional[Dict] = None, title: str = '') -> None:
    if config.output:
        write_atomic(config.output, rows, header, config.format, payload)
        return
    console = rich.get_console()
    table = rich.table.Table(title=title, show_header=True, header_style="bold dim cyan")
    for col in header:
        table.add_column(col, justify='right')
    for row in rows:
        table.add_row(*[f'{v:.10g}' if isinstance(v, float) else str(v) for v in row])
    console.print(table)


### commands
def describe(problem: SpectralProblem) -> None:
    console = rich.get_console()
    grid = rich.table.Table.grid(padding=(0, 2))
    grid.add_column(style="cyan")
    grid.add_column()
    grid.add_row("name", problem.name)
    grid.add_row("description", problem.description or '-')
    grid.add_row("n", str(problem.n))
    grid.add_row("period X", f'{problem.X:.15g}' + (' (2pi)' if problem.is_normalized else ''))
    grid.add_row("K_max", str(problem.K_max))
    grid.add_row("Re B0", f"{'positive' if problem.definiteness_sign > 0 else 'negative'} definite, margin {problem.definiteness_margin:.6g}")
    grid.add_row("real coefficients", 'yes' if problem.is_real else 'no')
    console.print(rich.panel.Panel.fit(grid, title="Problem", border_style="bold dim cyan"))


def run_hill(config: RunConfig, problem: SpectralProblem) -> None:
    rows = []
    for r in convergence_sweep(problem, config.J, config.contour, num_processes=config.processes):
        rows.extend([r.J, lam.real, lam.imag, float(d)] for lam, d in zip(r.eigenvalues, r.match_distances))
    emit(config, rows, ['J', 're(lambda)', 'im(lambda)', 'match_distance_to_previous_J'], title="Hill eigenvalues")


def run_evans(config: RunConfig, problem: SpectralProblem) -> None:
    rows = [evans_sample(problem, lam, config.tol).as_row() for lam in config.lambdas]
    emit(config, rows, EVANS_HEADER, title="Evans function")


def run_det(config: RunConfig, problem: SpectralProblem) -> None:
    rows = [s.as_row() for J in config.J for s in determinant_sweep(problem, config.lambdas, J)]
    emit(config, rows, DET_HEADER, title="Fredholm determinants")


def run_verify(config: RunConfig, problem: SpectralProblem) -> None:
    report = verify_relation(problem.normalize_period(), config.lambdas, config.J, config.tol,
                             config.constants_mode, config.relation_tol)
    selected = f'{config.delta_reading}/{config.convention}'
    console = rich.get_console()
    table = rich.table.Table(title=f"Relation check ({report.mode} constants)", header_style="bold dim cyan")
    for col in ("Quantity", "Reading", *[f"J={J}" for J in config.J], "Extrapolated", "Result"):
        table.add_column(col, justify='right')
    for s in report.summaries:
        style = 'bold' if s.delta_reading in ('-', selected) else 'dim'
        result = '[green]pass' if s.passed else '[red]fail'
        table.add_row(s.quantity, s.delta_reading, *[f'{e:.3e}' for e in s.median_error],
                      f'{s.final_extrapolated:.3e}', result, style=style)
    console.print(table)
    for lam, mag in report.skipped:
        console.print(f'[yellow]skipped lambda={lam:.6g}: |E|={mag:.3e}')
    if config.output:
        rows = [[e.lam.real, e.lam.imag, e.J, e.quantity, e.delta_reading, e.ratio_logmag_error, e.ratio_phase_error]
                for e in report.entries]
        header = ['re(lambda)', 'im(lambda)', 'J', 'quantity', 'delta_reading', 'ratio_logmag_error', 'ratio_phase_error']
        write_atomic(config.output, rows, header, config.format, report.as_dict())


def run_locate(config: RunConfig, problem: SpectralProblem) -> None:
    J = config.J[-1]
    if config.method == 'all':
        comparison = compare_methods(problem, config.contour, J, config.tol)
        reports = list(comparison.reports.values())
        payload = comparison.as_dict()
    else:
        reports = [locate_eigenvalues(problem, config.contour, config.method, J, config.tol)]
        payload = reports[0].as_dict()
    rows = [[r.method, e.lam.real, e.lam.imag, e.multiplicity, e.residual] for r in reports for e in r.eigenvalues]
    header = ['method', 're(lambda)', 'im(lambda)', 'mult', 'residual']
    if config.output:
        write_atomic(config.output, rows, header, config.format, payload)
    else:
        emit(config, rows, header, title="Located eigenvalues")
    for r in reports:
        for failure in r.failures:
            logging.warning(f'[locate:{r.method}] {failure}')


def run_sweep(config: RunConfig, problem: SpectralProblem) -> None:
    rows = run_grid(problem, config.lambdas, config.J[-1], config.tol, config.processes)
    emit(config, rows, SWEEP_HEADER, title="Sweep")


DISPATCH = {'hill': run_hill, 'evans': run_evans, 'det': run_det, 'verify': run_verify,
            'locate': run_locate, 'sweep': run_sweep}


def main(command: str, problem_path: str, J: List[int], lam: List[str], tol: float, output: str, format: str,
         delta_reading: str, constants_mode: str, convention: str, relation_tol: float, region: List[float],
         method: str, dump_config: bool, verbose: bool, log: bool) -> None:
    """Main entry point for the spectral tool.

    Args:
        command (str): One of describe, hill, evans, det, verify, locate, sweep.
        problem_path (str): Path to a problem file (.json or .yaml).
        J (List[int]): Truncation wave numbers; commands using a single truncation take the largest.
        lam (List[str]): A list of complex points, or a grid given as re_min re_max im_min im_max nx ny.
        tol (float): Integrator tolerance for the Evans function.
        output (str): Optional: file to write; the console shows a table otherwise.
        format (str): csv or json.
        delta_reading (str): Highlighted delta reading in the verify summary.
        constants_mode (str): closed or partial constants for verify.
        convention (str): Highlighted sign convention in the verify summary.
        relation_tol (float): Pass threshold for verify.
        region (List[float]): re_min re_max im_min im_max for locate and hill.
        method (str): Locator method, or all to compare.
        dump_config (bool): Write the sample problems to ./problems/ and exit.
        verbose (bool): Print debug output to stdout.
        log (bool): Also write a log file to ./logs/.
    """
    if dump_config:
        problem_dir = os.path.join(os.getcwd(), 'problems')
        Path(problem_dir).mkdir(parents=True, exist_ok=True)
        for fn, cfg in SpectralProblem.load_samples().items():
            with open(os.path.join(problem_dir, fn), 'w') as f:
                json.dump(cfg, f, indent=2)
                f.write('\n')
        sys.exit(0)
    if verbose:
        logging.basicConfig(level=logging.DEBUG, force=True)
    if log:
        log_dir = os.path.join(os.getcwd(), 'logs')
        Path(log_dir).mkdir(parents=True, exist_ok=True)
        logging.basicConfig(
            filename=os.path.join(log_dir, datetime.now().strftime("%Y%m%d-%H%M%S") + f'_{command}.log'),
            filemode='w',
            force=True,
            level=logging.DEBUG,
        )
    try:
        config = RunConfig.from_args(command, problem_path, J, lam, tol, output, format, delta_reading,
                                     constants_mode, convention, relation_tol, region, method)
        problem = SpectralProblem.from_file(config.problem_path)
        with Stopwatch(config.command):
            if config.command == 'describe':
                describe(problem)
            else:
                DISPATCH[config.command](config, problem)
    except FileNotFoundError as e:
        print(f"periodic_evans.py: error: problem file not found: {e.filename}. Run with the -d flag to write the sample problems.")
        sys.exit(1)
    except yaml.YAMLError as e:
        print(f"periodic_evans.py: error: cannot parse problem file: {e}")
        sys.exit(1)
    except PeriodicEvansError as e:
        code = exit_code(e)
        prefix = f"periodic_evans.py: {module_of(e)}: " if code == 3 else ''
        print(f'{prefix}{e}')
        sys.exit(code)
    except ValueError as e:
        print(f"periodic_evans.py: error: {e}")
        sys.exit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Periodic spectra of second-order ODE operators via Hill's method, Fredholm determinants and the Evans function.")
    parser.add_argument("command", nargs='?', choices=COMMANDS, default='describe', help="What to compute")
    parser.add_argument("-f", "--problem_path", type=str, help="Path to a problem .json or .yaml file")
    parser.add_argument("--J", type=int, nargs='+', help="Truncation wave numbers, e.g. --J 8 16 32 64")
    parser.add_argument("--lambda", type=str, nargs='+', dest="lam", help="Complex points, or a grid: re_min re_max im_min im_max nx ny")
    parser.add_argument("--tol", type=float, default=1e-10, help="Integrator tolerance for the Evans function")
    parser.add_argument("-o", "--output", type=str, help="Write results to this file instead of the console")
    parser.add_argument("--format", type=str, choices=FORMATS, help="Output format; inferred from the output suffix if omitted")
    parser.add_argument("--delta_reading", type=str, choices=READINGS, default='a0', help="delta reading highlighted by verify")
    parser.add_argument("--constants_mode", type=str, choices=CONSTANTS_MODES, default='closed', help="Closed-form or partial constants for verify")
    parser.add_argument("--convention", type=str, choices=CONVENTIONS, default='derived', help="Sign convention highlighted by verify")
    parser.add_argument("--relation_tol", type=float, default=1e-2, help="Pass threshold for verify")
    parser.add_argument("--region", type=float, nargs=4, metavar=('RE_MIN', 'RE_MAX', 'IM_MIN', 'IM_MAX'), help="Search rectangle for locate and hill")
    parser.add_argument("--method", type=str, choices=METHODS + ('all',), default='all', help="Locator method")
    parser.add_argument("-d", "--dump_config", action="store_true", help="Save the sample problems to ./problems/ and exit.")
    parser.add_argument("-v", "--verbose", action="store_true", help="Print debug output to stdout")
    parser.add_argument("-l", "--log", action="store_true", help="Write a log file to ./logs/")
    return parser


def cli() -> None:
    main(**vars(build_parser().parse_args()))


if __name__ == "__main__":
    cli()
