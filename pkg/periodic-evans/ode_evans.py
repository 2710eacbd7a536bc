import cmath
import logging
import math
from dataclasses import dataclass
from typing import List

import numpy as np
from fourier_coeffs import FourierSeries, SpectralProblem, make_series
from scipy.integrate import solve_ivp
from util.exceptions import SingularMonodromyError, StepSizeUnderflowError

DEFAULT_TOL = 1e-10
TOL_RANGE = (1e-13, 1e-6)
SINGULAR_FLOOR = 1e-12
FORM_AGREEMENT = 1e-9


@dataclass(frozen=True, eq=False)
class FirstOrderSystem:
    """W' = AA(lam)(x) W with AA = [[0, I], [lam B0 - A0 - d_x A1, -A1]] and W = (U, U' + A1 U)."""
    problem: SpectralProblem
    lam: complex
    matrix: FourierSeries

    @property
    def size(self) -> int:
        return 2 * self.problem.n

    def evaluate(self, x: float) -> np.ndarray:
        return self.matrix.evaluate(x)


def build_system(problem: SpectralProblem, lam: complex) -> FirstOrderSystem:
    n = problem.n
    lower_left = problem.B0 * lam - problem.A0 - problem.A1.differentiate()
    lower_right = -problem.A1
    K = max(lower_left.K_max, lower_right.K_max)
    blocks = {}
    for k in range(-K, K + 1):
        upper_right = np.eye(n) if k == 0 else np.zeros((n, n))
        blocks[k] = np.block([[np.zeros((n, n)), upper_right],
                              [lower_left.coefficient(k), lower_right.coefficient(k)]])
    return FirstOrderSystem(problem, complex(lam), make_series(2 * n, problem.X, blocks))


@dataclass(frozen=True)
class Monodromy:
    Psi_X: np.ndarray
    steps: int
    nfev: int
    abel_residual: float


def monodromy(system: FirstOrderSystem, tol: float = DEFAULT_TOL) -> Monodromy:
    """Fundamental solution Psi(X) of Psi' = AA Psi, Psi(0) = I, with DOP853 at rtol = atol = tol.

    Raises:
        ValueError: tol outside [1e-13, 1e-6].
        StepSizeUnderflowError: The integrator gave up; `position` is where it stopped.
    """
    if not TOL_RANGE[0] <= tol <= TOL_RANGE[1]:
        raise ValueError(f'monodromy tolerance must lie in [{TOL_RANGE[0]:.0e}, {TOL_RANGE[1]:.0e}], got {tol:.3e}')
    m, X = system.size, system.problem.X

    def rhs(x: float, y: np.ndarray) -> np.ndarray:
        return (system.evaluate(x) @ y.reshape(m, m)).ravel()

    sol = solve_ivp(rhs, (0.0, X), np.eye(m, dtype=complex).ravel(), method='DOP853',
                    rtol=tol, atol=tol, first_step=X / 1000)
    if not sol.success:
        raise StepSizeUnderflowError(float(sol.t[-1]), sol.message)
    Psi = sol.y[:, -1].reshape(m, m)
    # Abel: det Psi(X) = exp(int tr AA) = exp(-X tr A1_ave)
    expected = cmath.exp(-X * np.trace(system.problem.A1.mean))
    abel = abs(np.linalg.det(Psi) / expected - 1)
    if abel > 10 * tol * X:
        logging.warning(f'[ode_evans] Abel residual {abel:.3e} exceeds {10 * tol * X:.3e} at lambda={system.lam:.6g}')
    return Monodromy(Psi, len(sol.t) - 1, sol.nfev, float(abel))


@dataclass(frozen=True)
class EvansSample:
    lam: complex
    E: complex
    abel_residual: float
    steps: int

    def as_row(self) -> List:
        return [self.lam.real, self.lam.imag, self.E.real, self.E.imag, self.abel_residual, self.steps]


CSV_HEADER = ['re(lambda)', 'im(lambda)', 're(E)', 'im(E)', 'abel_residual', 'steps']


def evans_sample(problem: SpectralProblem, lam: complex, tol: float = DEFAULT_TOL) -> EvansSample:
    mono = monodromy(build_system(problem, lam), tol)
    E = complex(np.linalg.det(mono.Psi_X - np.eye(2 * problem.n)))
    return EvansSample(complex(lam), E, mono.abel_residual, mono.steps)


def gardner_E(problem: SpectralProblem, lam: complex, tol: float = DEFAULT_TOL) -> complex:
    """Periodic Evans function E(lam) = det(Psi(X) - I)."""
    return evans_sample(problem, lam, tol).E


def closed_form_F(problem: SpectralProblem, lam: complex, tol: float = DEFAULT_TOL) -> complex:
    """F(lam) = gamma (e^X - 1)^{-2n} E(lam), cross-checked against gamma det(I - e^X/(1 - e^X) (e^{-X} Psi - I)).

    A disagreement of the two algebraically equal forms beyond 1e-9 of their natural scale is logged as a
    warning; the gamma (e^X - 1)^{-2n} E form is returned either way.
    """
    from bridge_constants import log_gamma

    n, X = problem.n, problem.X
    Psi = monodromy(build_system(problem, lam), tol).Psi_X
    I = np.eye(2 * n)
    E = complex(np.linalg.det(Psi - I))
    log_scale = log_gamma(problem) - 2 * n * math.log(math.expm1(X))
    F = cmath.exp(log_scale) * E
    c = -1.0 / math.expm1(-X)  # e^X / (e^X - 1)
    F_alt = cmath.exp(log_gamma(problem)) * complex(np.linalg.det(I + c * (math.exp(-X) * Psi - I)))
    scale = abs(cmath.exp(log_scale)) * (1 + np.linalg.norm(Psi, 2)) ** (2 * n)
    if abs(F - F_alt) > FORM_AGREEMENT * scale:
        logging.warning(f'[ode_evans] closed-form F disagrees with its determinant form at lambda={lam:.6g}: '
                        f'{F:.6g} vs {F_alt:.6g}')
    logging.debug(f'[ode_evans] F({lam:.6g}) = {F:.6g}, form drift {abs(F - F_alt) / scale:.2e}')
    return F


def backward_evans(problem: SpectralProblem, lam: complex, tol: float = DEFAULT_TOL) -> complex:
    """det(I - Psi(X)^-1).

    Raises:
        SingularMonodromyError: |det Psi(X)| below 1e-12 after dividing out the Abel factor.
    """
    Psi = monodromy(build_system(problem, lam), tol).Psi_X
    det_psi = complex(np.linalg.det(Psi))
    abel = cmath.exp(-problem.X * np.trace(problem.A1.mean))
    if abs(det_psi / abel) < SINGULAR_FLOOR:
        raise SingularMonodromyError(det_psi)
    I = np.eye(2 * problem.n)
    return complex(np.linalg.det(I - np.linalg.solve(Psi, I)))
