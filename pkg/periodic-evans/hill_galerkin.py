import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from typing import List, Optional, Sequence, Union

import numpy as np
import scipy.linalg
from fourier_coeffs import TWO_PI, FourierSeries, SpectralProblem
from tqdm import tqdm
from util.exceptions import EigensolverError, IllConditionedError

CONDITION_LIMIT = 1e12
CLUSTER_RADIUS = 1e-6


def block_toeplitz(series: FourierSeries, J: int) -> np.ndarray:
    """N x N matrix whose (j, k) block is the series coefficient of mode j - k, for j, k = -J..J."""
    modes = np.arange(-J, J + 1)
    blocks = series.padded(2 * J)[modes[:, None] - modes[None, :] + 2 * J]
    N = (2 * J + 1) * series.n
    return blocks.transpose(0, 2, 1, 3).reshape(N, N)


@dataclass(frozen=True, eq=False)
class TruncatedSystem:
    """Fourier-side matrices of a problem restricted to modes -J..J.

    Block row r(j) = (j + J) * n holds mode j; this ordering is fixed.
    """
    problem: SpectralProblem
    J: int
    DJ: np.ndarray
    A1J: np.ndarray
    A0J: np.ndarray
    B0J: np.ndarray
    dA1J: np.ndarray

    @property
    def n(self) -> int:
        return self.problem.n

    @property
    def X(self) -> float:
        return self.problem.X

    @property
    def N(self) -> int:
        return (2 * self.J + 1) * self.n

    @property
    def d(self) -> np.ndarray:
        """Diagonal of DJ."""
        return np.diagonal(self.DJ)

    @cached_property
    def LJ(self) -> np.ndarray:
        return assemble_LJ(self)


def build_truncation(problem: SpectralProblem, J: int) -> TruncatedSystem:
    if J < 0:
        raise ValueError(f'truncation wave number must be nonnegative, got {J}')
    wavenumbers = np.repeat(np.arange(-J, J + 1) * (TWO_PI / problem.X), problem.n)
    return TruncatedSystem(
        problem=problem,
        J=J,
        DJ=np.diag(1j * wavenumbers),
        A1J=block_toeplitz(problem.A1, J),
        A0J=block_toeplitz(problem.A0, J),
        B0J=block_toeplitz(problem.B0, J),
        dA1J=block_toeplitz(problem.A1.differentiate(), J),
    )


def assemble_LJ(trunc: TruncatedSystem) -> np.ndarray:
    """Hill operator L_J = B0J^-1 (DJ^2 + DJ A1J + A0J); lambda enters only through det(L_J - lambda).

    Raises:
        IllConditionedError: cond(B0J) exceeds 1e12.
    """
    cond = np.linalg.cond(trunc.B0J)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise IllConditionedError(cond, CONDITION_LIMIT)
    d = trunc.d
    operator = np.diag(d * d) + d[:, None] * trunc.A1J + trunc.A0J
    return scipy.linalg.solve(trunc.B0J, operator)


def hill_eigenvalues(trunc: TruncatedSystem) -> np.ndarray:
    """Eigenvalues of L_J sorted by (real part, imaginary part), repeated by algebraic multiplicity."""
    try:
        eigs = scipy.linalg.eigvals(trunc.LJ)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise EigensolverError(str(e)) from e
    if not np.all(np.isfinite(eigs)):
        raise EigensolverError('non-finite eigenvalues returned')
    return eigs[np.lexsort((eigs.imag, eigs.real))]


def cluster_eigenvalues(eigs: Sequence[complex], radius: float = CLUSTER_RADIUS) -> List[List[complex]]:
    """Group eigenvalues closer than `radius` (single linkage), preserving sort order of first members."""
    clusters: List[List[complex]] = []
    for lam in eigs:
        for c in clusters:
            if min(abs(lam - mu) for mu in c) < radius:
                c.append(lam)
                break
        else:
            clusters.append([lam])
    return clusters


def greedy_match(current: Sequence[complex], previous: Sequence[complex]) -> np.ndarray:
    """Distance from each current eigenvalue to its greedily chosen nearest unused previous eigenvalue (nan if none)."""
    prev = list(previous)
    used = [False] * len(prev)
    out = np.full(len(current), np.nan)
    for i, lam in enumerate(current):
        best, best_j = np.inf, None
        for j, mu in enumerate(prev):
            if not used[j] and abs(lam - mu) < best:
                best, best_j = abs(lam - mu), j
        if best_j is not None:
            used[best_j] = True
            out[i] = best
    return out


def _in_region(region, lam: complex) -> bool:
    if isinstance(region, (int, float)):
        return abs(lam) <= region
    return region.contains(lam)


@dataclass
class SweepRow:
    J: int
    eigenvalues: np.ndarray
    match_distances: np.ndarray

    @property
    def max_match_distance(self) -> float:
        finite = self.match_distances[np.isfinite(self.match_distances)]
        return float(finite.max()) if finite.size else float('nan')


def _eigenvalues_at(problem: SpectralProblem, J: int) -> np.ndarray:
    return hill_eigenvalues(build_truncation(problem, J))


def convergence_sweep(problem: SpectralProblem, J_list: Sequence[int], region: Union[float, object],
                      num_processes: int = -1) -> List[SweepRow]:
    """Hill eigenvalues inside `region` for each J plus greedy matching distances to the previous J.

    Args:
        problem (SpectralProblem): The problem.
        J_list (Sequence[int]): Increasing truncation wave numbers.
        region: Either a radius R (the disk |lambda| <= R) or any object with a `contains(lambda)` method.
        num_processes (int, optional): Worker processes for the independent eigensolves. Defaults to -1, which runs sequentially.

    Returns:
        List[SweepRow]: One row per J; the first row has nan match distances.
    """
    if list(J_list) != sorted(set(J_list)):
        raise ValueError(f'J_list must be strictly increasing, got {list(J_list)}')
    if num_processes > 0:
        with ProcessPoolExecutor(max_workers=num_processes) as e:
            spectra = list(tqdm(e.map(_eigenvalues_at, [problem] * len(J_list), J_list), total=len(J_list), leave=False))
    else:
        spectra = [_eigenvalues_at(problem, J) for J in tqdm(J_list, leave=False)]
    rows: List[SweepRow] = []
    previous: Optional[np.ndarray] = None
    for J, eigs in zip(J_list, spectra):
        inside = np.array([lam for lam in eigs if _in_region(region, lam)], dtype=complex)
        dist = greedy_match(inside, previous) if previous is not None else np.full(len(inside), np.nan)
        rows.append(SweepRow(J, inside, dist))
        logging.debug(f'[hill J={J:>4}] {len(inside)} eigenvalues in region, max match distance {rows[-1].max_match_distance:.3e}')
        previous = inside
    return rows
