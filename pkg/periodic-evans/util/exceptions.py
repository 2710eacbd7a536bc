from typing import Set


class PeriodicEvansError(Exception):
    """Base class for every error raised by periodic-evans."""


### configuration (CLI exit code 1)
class ProblemConfigError(PeriodicEvansError):
    """Raised when a problem file has unknown or missing keys."""
    def __init__(self, invalid_keys: Set, missing: bool = False):
        kind = "Missing" if missing else "Invalid"
        message = f"{kind} keys found in problem file: {sorted(invalid_keys)}"
        self.invalid_keys = set(invalid_keys)
        super().__init__(message)


class RunConfigError(PeriodicEvansError):
    """Raised when the command line configuration is inconsistent."""
    def __init__(self, field: str, reason: str):
        self.field = field
        super().__init__(f"periodic_evans.py: error: --{field}: {reason}")


### problem data (CLI exit code 2)
class ProblemValidationError(PeriodicEvansError):
    """Raised when a coefficient model violates its invariants."""


class DimensionMismatchError(ProblemValidationError):
    def __init__(self, what: str, expected: tuple, found: tuple):
        super().__init__(f"{what}: expected shape {expected}, found {found}")


class NonFiniteCoefficientError(ProblemValidationError):
    def __init__(self, mode: int):
        self.mode = mode
        super().__init__(f"Fourier coefficient of mode {mode} has non-finite entries")


class IndefiniteMassError(ProblemValidationError):
    """Raised when Re B0 is neither positive nor negative definite on the validation grid."""
    def __init__(self, min_eig: float, max_eig: float, floor: float):
        super().__init__(
            f"Re B0 is not definite: eigenvalues of its symmetric part range over [{min_eig:.3e}, {max_eig:.3e}] "
            f"(definite problems need both bounds on one side of +/-{floor:.0e})"
        )


class SamplingGridError(ProblemValidationError):
    def __init__(self, reason: str):
        super().__init__(f"invalid sampling grid: {reason}")


class NotNormalizedError(ProblemValidationError):
    """Raised by operations that are only defined for period 2*pi."""
    def __init__(self, X: float, operation: str):
        super().__init__(f"{operation} requires period 2*pi, got X={X!r}; call normalize_period() first")


### numerics (CLI exit code 3)
class NumericalFailure(PeriodicEvansError):
    """Raised when a numerical method fails. `module` names the failing module."""
    def __init__(self, module: str, message: str):
        self.module = module
        super().__init__(f"[{module}] {message}")


class IllConditionedError(NumericalFailure):
    def __init__(self, cond: float, limit: float = 1e12):
        self.cond = cond
        super().__init__("hill_galerkin", f"B0J is ill-conditioned: condition estimate {cond:.3e} exceeds {limit:.0e}")


class EigensolverError(NumericalFailure):
    def __init__(self, detail: str):
        super().__init__("hill_galerkin", f"dense eigensolver failed: {detail}")


class StepSizeUnderflowError(NumericalFailure):
    def __init__(self, position: float, detail: str = ""):
        self.position = position
        suffix = f" ({detail})" if detail else ""
        super().__init__("ode_evans", f"step size underflow at x={position:.6g}{suffix}")


class SingularMonodromyError(NumericalFailure):
    def __init__(self, det_psi: complex):
        super().__init__("ode_evans", f"monodromy matrix is numerically singular (|det Psi(X)| = {abs(det_psi):.3e})")


class ZeroOnContourError(NumericalFailure):
    def __init__(self, point: complex):
        self.point = point
        super().__init__("spectral_locator", f"function vanishes on the contour near lambda={point:.6g}")


class PhaseResolutionError(NumericalFailure):
    def __init__(self, samples: int):
        super().__init__("spectral_locator", f"phase steps still exceed pi/2 after refining the contour to {samples} samples")


class EigenvalueProximityError(NumericalFailure):
    def __init__(self, lam: complex, magnitude: float, bound: float = 1e-6):
        self.lam = lam
        super().__init__("bridge_constants", f"lambda={lam:.6g} is too close to an eigenvalue (|E| = {magnitude:.3e} < {bound:.0e})")


def exit_code(error: BaseException) -> int:
    """Map an exception onto the documented CLI exit status."""
    if isinstance(error, NumericalFailure):
        return 3
    if isinstance(error, ProblemValidationError):
        return 2
    return 1


def module_of(error: BaseException, default: str = "periodic_evans") -> str:
    return getattr(error, "module", default)

