import logging
import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple, Union

import numpy as np
import yaml
from util.exceptions import (DimensionMismatchError, IndefiniteMassError, NonFiniteCoefficientError,
                             NotNormalizedError, ProblemConfigError, ProblemValidationError, SamplingGridError)

TWO_PI = 2 * np.pi
REALNESS_TOL = 1e-14
DEFINITENESS_FLOOR = 1e-10
GRID_DENSITY = 64

PROBLEM_KEYS = {'name', 'description', 'n', 'period', 'A1', 'A0', 'B0'}
REQUIRED_KEYS = {'n', 'period', 'B0'}
ENTRY_KEYS = {'k', 're', 'im'}

_PERIOD_RE = re.compile(r'^\s*([-+]?[0-9]*\.?[0-9]*(?:[eE][-+]?[0-9]+)?)\s*\*?\s*pi\s*$')


@dataclass(frozen=True, eq=False)
class FourierSeries:
    """Matrix-valued X-periodic function with finitely many Fourier modes.

    `coeffs[k + K_max]` holds the n x n coefficient of mode k, for k = -K_max..K_max.
    """
    n: int
    X: float
    coeffs: np.ndarray

    @property
    def K_max(self) -> int:
        return (self.coeffs.shape[0] - 1) // 2

    @cached_property
    def is_real(self) -> bool:
        """Conjugate symmetry of the coefficients, i.e. the function is real valued."""
        scale = max(1.0, float(np.max(np.abs(self.coeffs))))
        return bool(np.max(np.abs(self.coeffs[::-1] - self.coeffs.conj())) <= REALNESS_TOL * scale)

    @property
    def mean(self) -> np.ndarray:
        return self.coefficient(0)

    def coefficient(self, k: int) -> np.ndarray:
        if abs(k) > self.K_max:
            return np.zeros((self.n, self.n), dtype=complex)
        return self.coeffs[k + self.K_max]

    def modes(self) -> range:
        return range(-self.K_max, self.K_max + 1)

    def padded(self, M: int) -> np.ndarray:
        """Coefficients of modes -M..M as a (2M+1, n, n) array, zero outside the support."""
        out = np.zeros((2 * M + 1, self.n, self.n), dtype=complex)
        K = min(M, self.K_max)
        out[M - K:M + K + 1] = self.coeffs[self.K_max - K:self.K_max + K + 1]
        return out

    def evaluate(self, x: Union[float, np.ndarray]) -> np.ndarray:
        """Finite Fourier sum at x (scalar, giving n x n) or at an array of points (giving len(x) x n x n)."""
        k = np.arange(-self.K_max, self.K_max + 1)
        xs = np.asarray(x, dtype=float)
        phases = np.exp(1j * (TWO_PI / self.X) * np.multiply.outer(xs, k))
        return np.tensordot(phases, self.coeffs, axes=1)

    def differentiate(self) -> 'FourierSeries':
        k = np.arange(-self.K_max, self.K_max + 1)
        return FourierSeries(self.n, self.X, self.coeffs * (1j * k * TWO_PI / self.X)[:, None, None])

    def rescaled(self, X_new: float, factor: complex) -> 'FourierSeries':
        """Same mode-k coefficients times `factor`, reinterpreted with period X_new."""
        return FourierSeries(self.n, float(X_new), self.coeffs * factor)

    def _aligned(self, other: 'FourierSeries') -> Tuple[np.ndarray, np.ndarray]:
        if (self.n, self.X) != (other.n, other.X):
            raise DimensionMismatchError("series sum", (self.n, self.X), (other.n, other.X))
        M = max(self.K_max, other.K_max)
        return self.padded(M), other.padded(M)

    def __add__(self, other: 'FourierSeries') -> 'FourierSeries':
        a, b = self._aligned(other)
        return FourierSeries(self.n, self.X, a + b)

    def __sub__(self, other: 'FourierSeries') -> 'FourierSeries':
        a, b = self._aligned(other)
        return FourierSeries(self.n, self.X, a - b)

    def __mul__(self, alpha: complex) -> 'FourierSeries':
        return FourierSeries(self.n, self.X, self.coeffs * alpha)

    __rmul__ = __mul__

    def __neg__(self) -> 'FourierSeries':
        return self * -1

    @classmethod
    def zeros(cls, n: int, X: float) -> 'FourierSeries':
        return make_series(n, X, {})

    @classmethod
    def from_samples(cls, n: int, X: float, samples: Sequence[Tuple[float, np.ndarray]], K_max: int) -> 'FourierSeries':
        """Build a series from samples on the uniform grid x_j = j*X/M, j = 0..M-1, by a discrete Fourier transform.

        Args:
            n (int): Matrix dimension.
            X (float): Period.
            samples (Sequence[Tuple[float, np.ndarray]]): Pairs (x_j, F(x_j)) in grid order.
            K_max (int): Highest mode to keep.

        Raises:
            SamplingGridError: Fewer than 2*K_max+1 samples, or the grid is not uniform from 0.

        Returns:
            FourierSeries: Exact whenever F is a trigonometric polynomial of degree <= K_max.
        """
        M = len(samples)
        if M < 2 * K_max + 1:
            raise SamplingGridError(f"{M} samples cannot resolve K_max={K_max} (need at least {2 * K_max + 1})")
        xs = np.array([s[0] for s in samples], dtype=float)
        if np.max(np.abs(xs - np.arange(M) * X / M)) > 1e-12 * X:
            raise SamplingGridError("samples must sit on x_j = j*X/M starting at 0")
        values = np.array([np.asarray(s[1], dtype=complex).reshape(n, n) for s in samples])
        spectrum = np.fft.fft(values, axis=0) / M
        return make_series(n, X, {k: spectrum[k % M] for k in range(-K_max, K_max + 1)})

    def as_entries(self) -> List[Dict]:
        """Problem-file representation: one {k, re, im} entry per nonzero mode."""
        entries = []
        for k in self.modes():
            c = self.coefficient(k)
            if np.any(c != 0):
                entries.append({'k': k, 're': c.real.tolist(), 'im': c.imag.tolist()})
        return entries


def make_series(n: int, X: float, coeff_map: Mapping[int, np.ndarray]) -> FourierSeries:
    """Validate a mode -> matrix map and store it densely (mode 0 always present).

    Raises:
        ProblemValidationError: n < 1 or a non-positive period.
        DimensionMismatchError: A coefficient is not n x n.
        NonFiniteCoefficientError: A coefficient holds inf or nan.
    """
    if int(n) != n or n < 1:
        raise ProblemValidationError(f"matrix dimension must be a positive integer, got {n!r}")
    if not (math.isfinite(X) and X > 0):
        raise ProblemValidationError(f"period must be positive and finite, got {X!r}")
    n = int(n)
    K_max = max((abs(int(k)) for k in coeff_map), default=0)
    coeffs = np.zeros((2 * K_max + 1, n, n), dtype=complex)
    for k, mat in coeff_map.items():
        arr = np.asarray(mat, dtype=complex)
        if arr.ndim == 0 and n == 1:
            arr = arr.reshape(1, 1)
        if arr.shape != (n, n):
            raise DimensionMismatchError(f"coefficient of mode {k}", (n, n), arr.shape)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteCoefficientError(int(k))
        coeffs[int(k) + K_max] += arr
    return FourierSeries(n, float(X), coeffs)


def parse_period(value: Union[float, int, str]) -> float:
    """Accept a number or a multiple of pi written as e.g. '2pi', '0.5*pi', 'pi'."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if isinstance(value, str):
        if (m := _PERIOD_RE.match(value)) is not None:
            c = m.group(1)
            return (float(c) if c not in ('', '+', '-') else float(c + '1')) * np.pi
        try:
            return float(value)
        except ValueError:
            pass
    raise ProblemValidationError(f"cannot read period {value!r}")


def _coeff_map(entries: Iterable[Dict], name: str) -> Dict[int, np.ndarray]:
    out: Dict[int, np.ndarray] = {}
    for e in entries or []:
        if not isinstance(e, dict):
            raise ProblemConfigError({f'{name}[{e!r}]'})
        if (unknown := set(e) - ENTRY_KEYS):
            raise ProblemConfigError({f'{name}.{u}' for u in unknown})
        if 'k' not in e or 're' not in e:
            raise ProblemConfigError({f'{name}.{u}' for u in {'k', 're'} - set(e)}, missing=True)
        k = int(e['k'])
        if k in out:
            raise ProblemValidationError(f"{name}: mode {k} listed twice")
        re_part = np.asarray(e['re'], dtype=float)
        im_part = np.asarray(e.get('im', np.zeros_like(re_part)), dtype=float)
        if re_part.shape != im_part.shape:
            raise DimensionMismatchError(f"{name} mode {k} imaginary part", re_part.shape, im_part.shape)
        out[k] = re_part + 1j * im_part
    return out


@dataclass(frozen=True, eq=False)
class SpectralProblem:
    """The periodic eigenvalue problem U'' + (A1 U)' + A0 U = lambda B0 U on [0, X].

    Re B0 must be definite; the sign is detected on construction and stored in `definiteness_sign`.
    """
    A1: FourierSeries
    A0: FourierSeries
    B0: FourierSeries
    name: str = 'unnamed'
    description: str = ''
    definiteness_sign: int = field(init=False)
    definiteness_margin: float = field(init=False)

    def __post_init__(self) -> None:
        for label, s in (('A1', self.A1), ('A0', self.A0)):
            if s.n != self.B0.n or s.X != self.B0.X:
                raise DimensionMismatchError(f"{label} (n, X)", (self.B0.n, self.B0.X), (s.n, s.X))
        sign, margin = self._definiteness()
        object.__setattr__(self, 'definiteness_sign', sign)
        object.__setattr__(self, 'definiteness_margin', margin)
        logging.debug(f'[{self.name}] n={self.n} X={self.X:.6g} sign={sign:+d} margin={margin:.4g}')

    @property
    def n(self) -> int:
        return self.B0.n

    @property
    def X(self) -> float:
        return self.B0.X

    @property
    def K_max(self) -> int:
        return max(self.A1.K_max, self.A0.K_max, self.B0.K_max)

    @property
    def is_real(self) -> bool:
        return self.A1.is_real and self.A0.is_real and self.B0.is_real

    @property
    def is_normalized(self) -> bool:
        return abs(self.X - TWO_PI) <= 1e-14 * TWO_PI

    def _definiteness(self) -> Tuple[int, float]:
        M = GRID_DENSITY * (self.B0.K_max + 1)
        values = self.B0.evaluate(np.arange(M) * self.X / M)
        sym = 0.5 * (values + np.conj(np.swapaxes(values, 1, 2)))
        eigs = np.linalg.eigvalsh(sym)
        lo, hi = float(eigs.min()), float(eigs.max())
        if lo >= DEFINITENESS_FLOOR:
            return 1, lo
        if hi <= -DEFINITENESS_FLOOR:
            return -1, -hi
        raise IndefiniteMassError(lo, hi, DEFINITENESS_FLOOR)

    def with_period(self, X_new: float) -> 'SpectralProblem':
        """Rescale x to period X_new keeping every mode index: A1 scales by s, A0 and B0 by s^2, s = X/X_new."""
        s = self.X / X_new
        return SpectralProblem(self.A1.rescaled(X_new, s), self.A0.rescaled(X_new, s * s),
                               self.B0.rescaled(X_new, s * s), self.name, self.description)

    def normalize_period(self) -> 'SpectralProblem':
        if self.is_normalized:
            return self
        return self.with_period(TWO_PI)

    @classmethod
    def from_dict(cls, cfg: Dict) -> 'SpectralProblem':
        """Create a problem from a parsed problem file.

        Raises:
            ProblemConfigError: Unknown or missing keys.
            ProblemValidationError: Invalid dimensions, entries or an indefinite Re B0.
        """
        if not isinstance(cfg, dict):
            raise ProblemConfigError({type(cfg).__name__})
        if (unknown := set(cfg) - PROBLEM_KEYS):
            raise ProblemConfigError(unknown)
        if (missing := REQUIRED_KEYS - set(cfg)):
            raise ProblemConfigError(missing, missing=True)
        n, X = cfg['n'], parse_period(cfg['period'])
        series = {name: make_series(n, X, _coeff_map(cfg.get(name, []), name)) for name in ('A1', 'A0', 'B0')}
        return cls(series['A1'], series['A0'], series['B0'], str(cfg.get('name', 'unnamed')), str(cfg.get('description', '')))

    @classmethod
    def from_file(cls, file_path: str) -> 'SpectralProblem':
        """Load a problem from a JSON or YAML problem file.

        Args:
            file_path (str): The path to the problem file.

        Returns:
            SpectralProblem: The validated problem.
        """
        with open(file_path, 'r') as f:
            cfg = yaml.safe_load(f)
        return cls.from_dict(cfg)

    def as_dict(self) -> Dict:
        return {
            'name': self.name,
            'description': self.description,
            'n': self.n,
            'period': self.X,
            'A1': self.A1.as_entries(),
            'A0': self.A0.as_entries(),
            'B0': self.B0.as_entries(),
        }

    @staticmethod
    def load_samples() -> Dict[str, Dict]:
        """The shipped sample problems, keyed by file name."""
        def scalar(k_to_value: Dict[int, complex]) -> List[Dict]:
            return [{'k': k, 're': [[complex(v).real]], 'im': [[complex(v).imag]]} for k, v in k_to_value.items()]

        def mathieu(q: float) -> Dict:
            return {
                'name': f'mathieu_q{q:g}',
                'description': f'U\'\' + 2q cos(x) U = lambda U with q={q:g}',
                'n': 1, 'period': '2pi',
                'A0': scalar({-1: q, 1: q}),
                'B0': scalar({0: 1.0}),
            }

        return {
            'free_scalar.json': {
                'name': 'free_scalar', 'description': "U'' = lambda U",
                'n': 1, 'period': '2pi', 'B0': scalar({0: 1.0}),
            },
            'mathieu_q05.json': mathieu(0.5),
            'mathieu_q1.json': mathieu(1.0),
            'system_2x2.json': {
                'name': 'system_2x2', 'description': 'coupled 2x2 system with a nonconstant first-order term',
                'n': 2, 'period': '2pi',
                'A1': [
                    {'k': -1, 're': [[0.1, 0.0], [0.05, 0.1]], 'im': [[0.0, 0.0], [0.0, 0.0]]},
                    {'k': 0, 're': [[0.3, 0.1], [0.0, 0.2]], 'im': [[0.0, 0.0], [0.0, 0.0]]},
                    {'k': 1, 're': [[0.1, 0.0], [0.05, 0.1]], 'im': [[0.0, 0.0], [0.0, 0.0]]},
                ],
                'A0': [
                    {'k': -1, 're': [[0.2, 0.0], [0.0, 0.1]], 'im': [[0.0, 0.0], [0.0, 0.0]]},
                    {'k': 0, 're': [[0.5, 0.2], [0.1, -0.3]], 'im': [[0.0, 0.0], [0.0, 0.0]]},
                    {'k': 1, 're': [[0.2, 0.0], [0.0, 0.1]], 'im': [[0.0, 0.0], [0.0, 0.0]]},
                ],
                'B0': [
                    {'k': -1, 're': [[0.1, 0.0], [0.0, 0.1]], 'im': [[0.0, 0.0], [0.0, 0.0]]},
                    {'k': 0, 're': [[1.0, 0.2], [0.0, 1.5]], 'im': [[0.0, 0.0], [0.0, 0.0]]},
                    {'k': 1, 're': [[0.1, 0.0], [0.0, 0.1]], 'im': [[0.0, 0.0], [0.0, 0.0]]},
                ],
            },
            'complex_scalar.json': {
                'name': 'complex_scalar', 'description': 'scalar problem with complex, non-conjugate-symmetric coefficients',
                'n': 1, 'period': '2pi',
                'A1': scalar({0: 0.1 + 0.2j}),
                'A0': scalar({-1: 0.25j, 1: 0.5}),
                'B0': scalar({0: 1.0 + 0.2j}),
            },
        }


def _birman_schwinger_blocks(problem: SpectralProblem, J: int, lam: complex) -> Tuple[np.ndarray, np.ndarray]:
    """Blocks (j, k) of the derivative and potential parts of K_J straight from the Fourier coefficients."""
    if not problem.is_normalized:
        raise NotNormalizedError(problem.X, 'hs_norm')
    modes = np.arange(-J, J + 1)
    weight = 1.0 / (modes ** 2 + 1.0)
    diff = modes[:, None] - modes[None, :] + 2 * J
    a1, a0, b0 = (s.padded(2 * J)[diff] for s in (problem.A1, problem.A0, problem.B0))
    identity = np.where((diff == 2 * J)[:, :, None, None], np.eye(problem.n), 0.0)
    k1 = (1j * modes * weight)[:, None, None, None] * a1
    k2 = weight[:, None, None, None] * (a0 + identity - lam * b0)
    return k1, k2


def hs_norm_parts(problem: SpectralProblem, J: int, lam: complex) -> Tuple[float, float]:
    """Hilbert-Schmidt norms of the derivative part K1 and the potential part K2 of K_J(lam)."""
    k1, k2 = _birman_schwinger_blocks(problem, J, lam)
    return float(np.linalg.norm(k1.ravel())), float(np.linalg.norm(k2.ravel()))


def hs_norm(problem: SpectralProblem, J: int, lam: complex) -> float:
    """Hilbert-Schmidt (Frobenius) norm of the truncated Birman-Schwinger matrix K_J(lam).

    Entry block (j, k) is (i j A1_{j-k} + A0_{j-k} + delta_jk I - lam B0_{j-k}) / (j^2 + 1), so the
    squared norm is a sum of nonnegative terms and grows monotonically with J.

    Raises:
        NotNormalizedError: The problem period is not 2*pi.
    """
    k1, k2 = _birman_schwinger_blocks(problem, J, lam)
    return float(np.linalg.norm((k1 + k2).ravel()))
