"""
Grid worker - evaluates E(lambda) and D_J(lambda) at one spectral parameter.
Functions are top level so ProcessPoolExecutor can pickle them.
"""
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from typing import Dict, List, Sequence, Tuple

import numpy as np
from fourier_coeffs import SpectralProblem
from fredholm_det import DJ_det
from hill_galerkin import build_truncation
from ode_evans import gardner_E
from tqdm import tqdm

SWEEP_HEADER = ['re(lambda)', 'im(lambda)', 'log_abs_E', 'DJ_logmag']

# one truncation per process; rebuilt only when the coefficients, period or J change
_cache: Dict[Tuple[str, int], object] = {}


def grid_points(re_min: float, re_max: float, im_min: float, im_max: float, nx: int, ny: int) -> List[complex]:
    """Row-major lattice of nx x ny points, real part varying fastest."""
    if nx < 1 or ny < 1:
        raise ValueError(f'grid needs at least one point per axis, got {nx} x {ny}')
    xs = np.linspace(re_min, re_max, nx)
    ys = np.linspace(im_min, im_max, ny)
    return [complex(x, y) for y in ys for x in xs]


def problem_key(problem: SpectralProblem) -> str:
    """Content fingerprint of a problem; two problems with the same name can still differ."""
    return json.dumps(problem.as_dict(), sort_keys=True)


def sweep_point(problem: SpectralProblem, J: int, tol: float, lam: complex) -> List[float]:
    """One sweep row: lambda, log|E(lambda)| and log|D_J(lambda)|."""
    key = (problem_key(problem), J)
    if key not in _cache:
        _cache.clear()
        _cache[key] = build_truncation(problem, J)
    E = gardner_E(problem, lam, tol)
    log_abs_E = math.log(abs(E)) if E != 0 else -math.inf
    return [lam.real, lam.imag, log_abs_E, DJ_det(_cache[key], lam).log_mag]


def run_grid(problem: SpectralProblem, lambdas: Sequence[complex], J: int, tol: float,
             num_processes: int = -1) -> List[List[float]]:
    """Evaluate every grid point, in parallel when num_processes > 0.

    Args:
        problem (SpectralProblem): The problem.
        lambdas (Sequence[complex]): Points to evaluate.
        J (int): Truncation for D_J.
        tol (float): Integrator tolerance for E.
        num_processes (int, optional): Worker processes. Defaults to -1, which runs sequentially.

    Returns:
        List[List[float]]: Rows in the order of `lambdas`.
    """
    work = partial(sweep_point, problem, J, tol)
    if num_processes > 0:
        with ProcessPoolExecutor(max_workers=num_processes) as e:
            rows = list(tqdm(e.map(work, lambdas, chunksize=max(1, len(lambdas) // (4 * num_processes))),
                             total=len(lambdas), leave=False))
    else:
        rows = [work(lam) for lam in tqdm(lambdas, leave=False)]
    logging.info(f'[sweep] {len(rows)} points evaluated with J={J}')
    return rows
