"""2-modified Fredholm determinants of the truncated Birman-Schwinger operators.

Every N x N determinant is kept as a LogDet (log-magnitude, phase): det(DJ^2 - I) alone
overflows double precision around J = 40.

Sign convention: K_J is defined so that

    I - K_J = (DJ^2 - I)^-1 (DJ^2 + DJ A1J + A0J - lam B0J),

hence det2(I - K_J) vanishes exactly on the spectrum of L_J. The factored forms carry the
inverse powers det(DJ^2 - I)^-1 and det(DJ - I)^-2 that make them identical to the direct ones.
"""
import cmath
import logging
import math
import warnings
from dataclasses import dataclass
from typing import Iterable, List

import numpy as np
import scipy.linalg
from hill_galerkin import TruncatedSystem, build_truncation
from fourier_coeffs import SpectralProblem
from tqdm import tqdm


def wrap_phase(phase: float) -> float:
    """Reduce a phase into (-pi, pi]."""
    w = math.remainder(phase, 2 * math.pi)
    return math.pi if w == -math.pi else w


def expm1(z: complex) -> complex:
    """e^z - 1 without cancellation for small |z|."""
    z = complex(z)
    return 2 * cmath.exp(z / 2) * cmath.sinh(z / 2)


@dataclass(frozen=True)
class LogDet:
    """A complex number stored as (log|z|, arg z); exact zero is (-inf, 0)."""
    log_mag: float
    phase: float = 0.0

    def __post_init__(self) -> None:
        if self.log_mag == -math.inf:
            object.__setattr__(self, 'phase', 0.0)
        else:
            object.__setattr__(self, 'phase', wrap_phase(self.phase))

    @classmethod
    def zero(cls) -> 'LogDet':
        return cls(-math.inf, 0.0)

    @classmethod
    def one(cls) -> 'LogDet':
        return cls(0.0, 0.0)

    @classmethod
    def from_complex(cls, z: complex) -> 'LogDet':
        if z == 0:
            return cls.zero()
        return cls(math.log(abs(z)), cmath.phase(z))

    @classmethod
    def exp(cls, z: complex) -> 'LogDet':
        """e^z without forming it."""
        z = complex(z)
        return cls(z.real, z.imag)

    @classmethod
    def product_of(cls, values: Iterable[complex]) -> 'LogDet':
        """Product of many factors, summing logs and arguments with fsum."""
        vals = np.asarray(list(values), dtype=complex)
        if np.any(vals == 0):
            return cls.zero()
        return cls(math.fsum(np.log(np.abs(vals))), math.fsum(np.angle(vals)))

    @property
    def is_zero(self) -> bool:
        return self.log_mag == -math.inf

    def combine(self, other: 'LogDet') -> 'LogDet':
        if self.is_zero or other.is_zero:
            return LogDet.zero()
        return LogDet(self.log_mag + other.log_mag, self.phase + other.phase)

    __mul__ = combine

    def inverse(self) -> 'LogDet':
        if self.is_zero:
            raise ZeroDivisionError('inverse of a zero determinant')
        return LogDet(-self.log_mag, -self.phase)

    def __truediv__(self, other: 'LogDet') -> 'LogDet':
        return self.combine(other.inverse())

    def __pow__(self, p: int) -> 'LogDet':
        if self.is_zero:
            return LogDet.one() if p == 0 else LogDet.zero()
        return LogDet(p * self.log_mag, p * self.phase)

    def log(self) -> complex:
        """Principal logarithm log|z| + i arg z."""
        return complex(self.log_mag, self.phase)

    def to_complex(self) -> complex:
        if self.is_zero:
            return 0j
        if self.log_mag > 709.0:
            return complex(math.inf, 0.0)
        return cmath.rect(math.exp(self.log_mag), self.phase)

    def relative_error(self, other: 'LogDet') -> float:
        """|self/other - 1| computed in log space."""
        if self.is_zero and other.is_zero:
            return 0.0
        if self.is_zero or other.is_zero:
            return math.inf
        ratio = self / other
        return abs(expm1(ratio.log()))


def logdet(M: np.ndarray) -> LogDet:
    """Determinant of a square matrix via partial-pivoting LU with per-pivot phase accumulation."""
    M = np.asarray(M, dtype=complex)
    if M.shape[0] == 0:
        return LogDet.one()
    with warnings.catch_warnings():
        warnings.simplefilter('ignore', scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(M, check_finite=True)
    pivots = np.diagonal(lu)
    if np.any(pivots == 0):
        return LogDet.zero()
    swaps = int(np.count_nonzero(piv != np.arange(len(piv))))
    return LogDet(math.fsum(np.log(np.abs(pivots))), math.fsum(np.angle(pivots)) + math.pi * (swaps % 2))


def det2_finite(A: np.ndarray) -> LogDet:
    """det2(I - A) = det(I - A) e^{tr A}."""
    A = np.asarray(A, dtype=complex)
    base = logdet(np.eye(A.shape[0]) - A)
    if base.is_zero:
        return base
    return base.combine(LogDet.exp(np.trace(A)))


def det2_eigen(A: np.ndarray) -> LogDet:
    """det2(I - A) as the product of (1 - alpha) e^alpha over the eigenvalues alpha of A."""
    alphas = scipy.linalg.eigvals(np.asarray(A, dtype=complex))
    factors = LogDet.product_of(1 - alphas)
    if factors.is_zero:
        return factors
    return factors.combine(LogDet.exp(np.sum(alphas)))


def build_KJ(trunc: TruncatedSystem, lam: complex) -> np.ndarray:
    """K_J = -(DJ^2 - I)^-1 (DJ A1J + A0J + I - lam B0J)."""
    d = trunc.d
    inv = 1.0 / (d * d - 1.0)
    inner = d[:, None] * trunc.A1J + trunc.A0J + np.eye(trunc.N) - lam * trunc.B0J
    return -inv[:, None] * inner


def DJ_det(trunc: TruncatedSystem, lam: complex) -> LogDet:
    return det2_finite(build_KJ(trunc, lam))


def DJ_factored(trunc: TruncatedSystem, lam: complex) -> LogDet:
    """det(DJ^2 - I)^-1 det(B0J) e^{tr K_J} det(L_J - lam)."""
    d = trunc.d
    hill = logdet(trunc.LJ - lam * np.eye(trunc.N))
    if hill.is_zero:
        return hill
    return (LogDet.product_of(d * d - 1.0).inverse()
            * logdet(trunc.B0J)
            * LogDet.exp(np.trace(build_KJ(trunc, lam)))
            * hill)


def first_order_blocks(trunc: TruncatedSystem, lam: complex) -> np.ndarray:
    """The 2N x 2N matrix [[DJ, -I], [A0J - lam B0J + (d_x A1)_J, DJ + A1J]]."""
    N = trunc.N
    return np.block([
        [trunc.DJ, -np.eye(N)],
        [trunc.A0J - lam * trunc.B0J + trunc.dA1J, trunc.DJ + trunc.A1J],
    ])


def build_KhatJ(trunc: TruncatedSystem, lam: complex) -> np.ndarray:
    """K_hat_J = I - ((DJ - I) (+) (DJ - I))^-1 [[DJ, -I], [B_J + (d_x A1)_J, DJ + A1J]], with B_J = A0J - lam B0J."""
    d = trunc.d
    inv = np.concatenate([1.0 / (d - 1.0)] * 2)
    return np.eye(2 * trunc.N) - inv[:, None] * first_order_blocks(trunc, lam)


def FJ_det(trunc: TruncatedSystem, lam: complex) -> LogDet:
    return det2_finite(build_KhatJ(trunc, lam))


def FJ_factored(trunc: TruncatedSystem, lam: complex) -> LogDet:
    """det(DJ - I)^-2 det(B0J) e^{tr K_hat_J} det(L_J - lam)."""
    hill = logdet(trunc.LJ - lam * np.eye(trunc.N))
    if hill.is_zero:
        return hill
    return ((LogDet.product_of(trunc.d - 1.0) ** -2)
            * logdet(trunc.B0J)
            * LogDet.exp(np.trace(build_KhatJ(trunc, lam)))
            * hill)


@dataclass(frozen=True)
class DeterminantSample:
    lam: complex
    J: int
    DJ: LogDet
    FJ: LogDet

    def as_row(self) -> List:
        return [self.lam.real, self.lam.imag, self.J, self.DJ.log_mag, self.DJ.phase, self.FJ.log_mag, self.FJ.phase]


CSV_HEADER = ['re(lambda)', 'im(lambda)', 'J', 'DJ_logmag', 'DJ_phase', 'FJ_logmag', 'FJ_phase']


def determinant_sweep(problem: SpectralProblem, lambdas: Iterable[complex], J: int) -> List[DeterminantSample]:
    """D_J and F_J at each lambda, sharing one truncation."""
    trunc = build_truncation(problem, J)
    samples = []
    for lam in tqdm(list(lambdas), leave=False):
        lam = complex(lam)
        samples.append(DeterminantSample(lam, J, DJ_det(trunc, lam), FJ_det(trunc, lam)))
    logging.debug(f'[det J={J}] evaluated {len(samples)} points')
    return samples
