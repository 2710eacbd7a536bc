"""Constants linking the second-order determinant D, the first-order determinant F and the Evans function E.

    F(lam) = gamma (e^X - 1)^{-2n} E(lam)
    D(lam) = e^{delta - delta_hat} / epsilon * F(lam)        (X = 2 pi)

Two conventions are available for delta and epsilon:

  printed   delta = -tr(A0_0 + I - lam B0_0) S,  epsilon = prod_{|j|<=J} (1 + 2/(ij + 1))  -> sinh(3 pi)/sinh(pi)
  derived   delta = +tr(A0_0 + I - lam B0_0) S,  epsilon = prod_{|j|<=J} (1 - 2/(ij + 1))^n = (-1)^n

with S = sum_{|j|<=J} 1/(j^2 + 1) -> pi coth(pi). The derived pair is what the Galerkin traces
tr K_J, tr K_hat_J and det(DJ - I)^2 / det(DJ^2 - I) produce; verify_relation reports both.
The `a1` reading replaces A0_0 by A1_0 inside delta.
"""
import cmath
import logging
import math
import statistics
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from fourier_coeffs import SpectralProblem
from fredholm_det import DJ_det, FJ_det, LogDet, build_KhatJ, build_KJ, expm1
from hill_galerkin import build_truncation
from ode_evans import DEFAULT_TOL, build_system, monodromy
from util.exceptions import EigenvalueProximityError, NotNormalizedError

CLOSED = 'closed'
READINGS = ('a0', 'a1')
CONVENTIONS = ('derived', 'printed')
CONSTANTS_MODES = ('closed', 'partial')
EVANS_FLOOR = 1e-6

PI_COTH_PI = math.pi / math.tanh(math.pi)


def trace_sum(J: Union[int, str] = CLOSED) -> float:
    """S_J = sum_{|j|<=J} 1/(j^2 + 1); the closed form is pi coth(pi)."""
    if J == CLOSED:
        return PI_COTH_PI
    j = np.arange(1, int(J) + 1, dtype=float)
    return 1.0 + 2.0 * math.fsum(1.0 / (j[::-1] ** 2 + 1.0))


def hat_trace_sum(J: Union[int, str] = CLOSED) -> complex:
    """1 + sum_{1<=|j|<=J} 1/(j^2 + ij), summed with complex terms; equal to S_J."""
    if J == CLOSED:
        return complex(PI_COTH_PI)
    j = np.concatenate([-np.arange(int(J), 0, -1), np.arange(int(J), 0, -1)]).astype(float)
    terms = 1.0 / (j ** 2 + 1j * j)
    return 1.0 + complex(math.fsum(terms.real), math.fsum(terms.imag))


def log_gamma(problem: SpectralProblem) -> complex:
    """log gamma = e^X / (e^X - 1) (tr A1_ave + 2n) X."""
    X = problem.X
    ratio = -1.0 / math.expm1(-X)
    return ratio * (complex(np.trace(problem.A1.mean)) + 2 * problem.n) * X


def gamma_const(problem: SpectralProblem) -> complex:
    return cmath.exp(log_gamma(problem))


def _require_normalized(problem: SpectralProblem, operation: str) -> None:
    if not problem.is_normalized:
        raise NotNormalizedError(problem.X, operation)


def delta_consts(problem: SpectralProblem, lam: complex, J: Union[int, str] = CLOSED, reading: str = 'a0',
                 convention: str = 'derived') -> Tuple[complex, complex]:
    """(delta, delta_hat) at truncation J, or their limits for J = 'closed'.

    Raises:
        NotNormalizedError: X != 2 pi.
    """
    _require_normalized(problem, 'delta_consts')
    if reading not in READINGS or convention not in CONVENTIONS:
        raise ValueError(f'unknown delta reading/convention {reading!r}/{convention!r}')
    zero_mode = problem.A0.mean if reading == 'a0' else problem.A1.mean
    I = np.eye(problem.n)
    sign = 1.0 if convention == 'derived' else -1.0
    delta = sign * complex(np.trace(zero_mode + I - lam * problem.B0.mean)) * trace_sum(J)
    delta_hat = complex(np.trace(problem.A1.mean + 2 * I)) * hat_trace_sum(J)
    return delta, delta_hat


def trace_closed_forms(problem: SpectralProblem, lam: complex, J: int) -> Tuple[complex, complex]:
    """Closed expressions for tr K_J and tr K_hat_J (the odd parts cancel over j = -J..J)."""
    _require_normalized(problem, 'trace_closed_forms')
    I = np.eye(problem.n)
    S = trace_sum(J)
    return (complex(np.trace(problem.A0.mean + I - lam * problem.B0.mean)) * S,
            complex(np.trace(problem.A1.mean + 2 * I)) * S)


def epsilon_const(J: int) -> float:
    """prod_{|j|<=J} (1 + 2/(ij + 1)); the pair +-j combines to (j^2 + 9)/(j^2 + 1)."""
    if J < 1:
        raise ValueError(f'J must be at least 1, got {J}')
    j = np.arange(-J, J + 1, dtype=float)
    factors = 1.0 + 2.0 / (1j * j + 1.0)
    value = LogDet.product_of(factors).to_complex()
    if abs(value.imag) > 1e-12 * abs(value):
        logging.warning(f'[bridge_constants] epsilon partial product has imaginary part {value.imag:.3e}')
    return value.real


def epsilon_closed() -> float:
    """sinh(3 pi) / sinh(pi), from prod_{j>=1} (1 + a^2/j^2) = sinh(pi a)/(pi a)."""
    return math.sinh(3 * math.pi) / math.sinh(math.pi)


def epsilon_derived(n: int, J: Union[int, str] = CLOSED) -> float:
    """det(DJ - I)^2 / det(DJ^2 - I) = prod_{|j|<=J} (1 - 2/(ij + 1))^n, which is (-1)^n for every J."""
    if J == CLOSED:
        return float((-1) ** n)
    j = np.arange(-int(J), int(J) + 1, dtype=float)
    value = (LogDet.product_of(1.0 - 2.0 / (1j * j + 1.0)) ** n).to_complex()
    return value.real


@dataclass(frozen=True)
class ConstantsMode:
    constants: str = 'closed'
    J: Optional[int] = None
    reading: str = 'a0'
    convention: str = 'derived'

    def __post_init__(self) -> None:
        if self.constants not in CONSTANTS_MODES:
            raise ValueError(f'constants mode must be one of {CONSTANTS_MODES}, got {self.constants!r}')
        if self.constants == 'partial' and not self.J:
            raise ValueError('partial constants need a truncation J')
        if self.reading not in READINGS or self.convention not in CONVENTIONS:
            raise ValueError(f'unknown delta reading/convention {self.reading!r}/{self.convention!r}')

    @property
    def J_used(self) -> Union[int, str]:
        return self.J if self.constants == 'partial' else CLOSED

    @property
    def label(self) -> str:
        return f'{self.reading}/{self.convention}'


@dataclass(frozen=True)
class BridgeConstants:
    gamma: complex
    delta: complex
    delta_hat: complex
    epsilon: float
    J_used: Union[int, str]
    X: float

    @classmethod
    def compute(cls, problem: SpectralProblem, lam: complex, mode: ConstantsMode) -> 'BridgeConstants':
        _require_normalized(problem, 'bridge constants')
        delta, delta_hat = delta_consts(problem, lam, mode.J_used, mode.reading, mode.convention)
        if mode.convention == 'printed':
            epsilon = epsilon_closed() if mode.J_used == CLOSED else epsilon_const(mode.J_used)
        else:
            epsilon = epsilon_derived(problem.n, mode.J_used)
        return cls(gamma_const(problem), delta, delta_hat, epsilon, mode.J_used, problem.X)


def log_predicted_factor(problem: SpectralProblem, lam: complex, mode: ConstantsMode = ConstantsMode()) -> LogDet:
    """log of e^{delta - delta_hat} / epsilon * gamma * (e^X - 1)^{-2n}, the predicted ratio D/E."""
    c = BridgeConstants.compute(problem, lam, mode)
    return (LogDet.exp(c.delta - c.delta_hat + log_gamma(problem))
            / LogDet.from_complex(c.epsilon)
            / (LogDet.from_complex(math.expm1(problem.X)) ** (2 * problem.n)))


def predicted_factor(problem: SpectralProblem, lam: complex, mode: ConstantsMode = ConstantsMode()) -> complex:
    """Predicted D(lam)/E(lam). Raises NotNormalizedError unless X = 2 pi."""
    return log_predicted_factor(problem, lam, mode).to_complex()


### verification report
@dataclass
class RatioEntry:
    lam: complex
    J: int
    quantity: str
    delta_reading: str
    ratio_logmag_error: float
    ratio_phase_error: float

    @property
    def error(self) -> float:
        return abs(expm1(complex(self.ratio_logmag_error, self.ratio_phase_error)))

    def as_dict(self) -> Dict:
        return {
            'lambda': [self.lam.real, self.lam.imag],
            'J': self.J,
            'quantity': self.quantity,
            'delta_reading': self.delta_reading,
            'ratio_logmag_error': self.ratio_logmag_error,
            'ratio_phase_error': self.ratio_phase_error,
            'abs_error': self.error,
        }


@dataclass
class SeriesSummary:
    """Convergence of one ratio series (quantity x reading) across J."""
    quantity: str
    delta_reading: str
    J: List[int]
    median_error: List[float]
    extrapolated_error: List[float]
    relation_tol: float

    @property
    def monotone(self) -> bool:
        return all(b <= a for a, b in zip(self.median_error, self.median_error[1:]))

    @property
    def final_error(self) -> float:
        return self.median_error[-1] if self.median_error else math.nan

    @property
    def final_extrapolated(self) -> float:
        return self.extrapolated_error[-1] if self.extrapolated_error else math.nan

    @property
    def passed(self) -> bool:
        best = min(self.final_error, self.final_extrapolated) if self.extrapolated_error else self.final_error
        return self.monotone and best <= self.relation_tol

    def as_dict(self) -> Dict:
        return asdict(self) | {'monotone': self.monotone, 'passed': self.passed}


@dataclass
class RelationReport:
    problem: str
    mode: str
    entries: List[RatioEntry] = field(default_factory=list)
    summaries: List[SeriesSummary] = field(default_factory=list)
    skipped: List[Tuple[complex, float]] = field(default_factory=list)

    def summary(self, quantity: str, delta_reading: str) -> SeriesSummary:
        for s in self.summaries:
            if (s.quantity, s.delta_reading) == (quantity, delta_reading):
                return s
        raise KeyError((quantity, delta_reading))

    def as_dict(self) -> Dict:
        return {
            'problem': self.problem,
            'constants_mode': self.mode,
            'entries': [e.as_dict() for e in self.entries],
            'summaries': [s.as_dict() for s in self.summaries],
            'skipped': [{'lambda': [lam.real, lam.imag], 'abs_E': mag} for lam, mag in self.skipped],
        }


def _ratio_errors(log_ratio: complex) -> Tuple[float, float]:
    return log_ratio.real, math.remainder(log_ratio.imag, 2 * math.pi)


def _summarize(entries: List[RatioEntry], quantity: str, reading: str, J_list: Sequence[int],
               relation_tol: float) -> SeriesSummary:
    by_lam: Dict[complex, Dict[int, complex]] = {}
    for e in entries:
        if e.quantity == quantity and e.delta_reading == reading:
            by_lam.setdefault(e.lam, {})[e.J] = complex(e.ratio_logmag_error, e.ratio_phase_error)
    medians, extrapolated = [], []
    for J in J_list:
        medians.append(statistics.median(abs(expm1(v[J])) for v in by_lam.values()))
    for J1, J2 in zip(J_list, J_list[1:]):
        if J2 == 2 * J1:
            # log r(J) ~ c/J, so 2 log r(2J) - log r(J) removes the leading term
            extrapolated.append(statistics.median(abs(expm1(2 * v[J2] - v[J1])) for v in by_lam.values()))
    return SeriesSummary(quantity, reading, list(J_list), medians, extrapolated, relation_tol)


def verify_relation(problem: SpectralProblem, lambdas: Sequence[complex], J_list: Sequence[int],
                    tol: float = DEFAULT_TOL, constants: str = 'closed', relation_tol: float = 1e-2) -> RelationReport:
    """Check D_J / (predicted factor * E) -> 1 and F_J / F -> 1 as J grows.

    For every lambda and J it records r1 (one entry per delta reading and convention) and r2 in
    log space, then summarizes the median |r - 1| per J and a Richardson-extrapolated value for
    consecutive J that double.

    Args:
        problem (SpectralProblem): Problem with period 2 pi.
        lambdas (Sequence[complex]): Spectral parameters; points with |E| < 1e-6 are skipped and listed.
        J_list (Sequence[int]): Increasing truncations.
        tol (float, optional): Integrator tolerance for E. Defaults to 1e-10.
        constants (str, optional): 'closed' limits or 'partial' constants at each J. Defaults to 'closed'.
        relation_tol (float, optional): Pass threshold for the final (raw or extrapolated) error. Defaults to 1e-2.

    Raises:
        NotNormalizedError: X != 2 pi.
        EigenvalueProximityError: Every lambda was skipped.

    Returns:
        RelationReport: Per-point entries and per-series summaries.
    """
    _require_normalized(problem, 'verify_relation')
    if constants not in CONSTANTS_MODES:
        raise ValueError(f'constants mode must be one of {CONSTANTS_MODES}, got {constants!r}')
    J_list = sorted(J_list)
    report = RelationReport(problem.name, constants)
    n, X = problem.n, problem.X
    log_F_scale = log_gamma(problem) - 2 * n * math.log(math.expm1(X))
    truncations = {J: build_truncation(problem, J) for J in J_list}
    for lam in map(complex, lambdas):
        Psi = monodromy(build_system(problem, lam), tol).Psi_X
        E = complex(np.linalg.det(Psi - np.eye(2 * n)))
        if abs(E) < EVANS_FLOOR:
            logging.warning(f'[bridge_constants] skipping lambda={lam:.6g}: |E| = {abs(E):.3e} is too close to an eigenvalue')
            report.skipped.append((lam, abs(E)))
            continue
        log_E = LogDet.from_complex(E)
        log_F = LogDet.exp(log_F_scale) * log_E
        for J in J_list:
            trunc = truncations[J]
            D, F = DJ_det(trunc, lam), FJ_det(trunc, lam)
            r2 = RatioEntry(lam, J, 'r2', '-', *_ratio_errors((F / log_F).log()))
            report.entries.append(r2)
            for reading in READINGS:
                for convention in CONVENTIONS:
                    mode = ConstantsMode(constants, J if constants == 'partial' else None, reading, convention)
                    predicted = log_predicted_factor(problem, lam, mode) * log_E
                    report.entries.append(RatioEntry(lam, J, 'r1', mode.label, *_ratio_errors((D / predicted).log())))
            logging.debug(f'[verify J={J:>4}] lambda={lam:.4g}: |r2-1|={r2.error:.3e}')
    if not report.entries and report.skipped:
        raise EigenvalueProximityError(*report.skipped[0], EVANS_FLOOR)
    if report.entries:
        report.summaries.append(_summarize(report.entries, 'r2', '-', J_list, relation_tol))
        for reading in READINGS:
            for convention in CONVENTIONS:
                report.summaries.append(_summarize(report.entries, 'r1', f'{reading}/{convention}', J_list, relation_tol))
    return report


def galerkin_traces(problem: SpectralProblem, lam: complex, J: int) -> Tuple[complex, complex]:
    """Direct matrix traces of K_J and K_hat_J."""
    trunc = build_truncation(problem, J)
    return complex(np.trace(build_KJ(trunc, lam))), complex(np.trace(build_KhatJ(trunc, lam)))

