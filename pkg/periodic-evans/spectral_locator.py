import cmath
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np
from fourier_coeffs import SpectralProblem
from fredholm_det import DJ_det, LogDet
from hill_galerkin import CLUSTER_RADIUS, build_truncation, cluster_eigenvalues, greedy_match, hill_eigenvalues
from ode_evans import DEFAULT_TOL, gardner_E
from util.exceptions import PhaseResolutionError, ZeroOnContourError

MIN_SAMPLES = 64
MAX_SAMPLES = 2 ** 16
ZERO_FLOOR = math.log(1e-12)
RESIDUAL_TARGET = math.log(1e-10)
SPLIT = 0.4871  # off-center so split lines avoid the real axis and other symmetric spots
JITTER = 1e-7
MAX_JITTERS = 5
MIN_DIAMETER = 1e-8
SECANT_ITERATIONS = 100
SMALL_CELL = 0.05  # relative to the search region; below this every cell gets a refinement attempt
METHODS = ('hill', 'evans', 'fredholm')

Analytic = Callable[[complex], Union[complex, LogDet]]


@dataclass(frozen=True)
class Contour:
    """A counterclockwise circle or axis-aligned rectangle sampled at `samples` points."""
    kind: str
    center: complex = 0j
    radius: float = 0.0
    lo: complex = 0j
    hi: complex = 0j
    samples: int = MIN_SAMPLES

    def __post_init__(self) -> None:
        if self.samples < MIN_SAMPLES or self.samples % 2:
            raise ValueError(f'contour samples must be even and at least {MIN_SAMPLES}, got {self.samples}')
        if self.kind == 'circle':
            if not self.radius > 0:
                raise ValueError(f'circle radius must be positive, got {self.radius}')
        elif self.kind == 'rectangle':
            if not (self.hi.real > self.lo.real and self.hi.imag > self.lo.imag):
                raise ValueError(f'degenerate rectangle {self.lo} .. {self.hi}')
        else:
            raise ValueError(f'unknown contour kind {self.kind!r}')

    @classmethod
    def circle(cls, center: complex, radius: float, samples: int = MIN_SAMPLES) -> 'Contour':
        return cls('circle', center=complex(center), radius=float(radius), samples=samples)

    @classmethod
    def rectangle(cls, lo: complex, hi: complex, samples: int = MIN_SAMPLES) -> 'Contour':
        return cls('rectangle', lo=complex(lo), hi=complex(hi), samples=samples)

    @property
    def centre(self) -> complex:
        return self.center if self.kind == 'circle' else (self.lo + self.hi) / 2

    @property
    def diameter(self) -> float:
        return 2 * self.radius if self.kind == 'circle' else abs(self.hi - self.lo)

    def contains(self, z: complex) -> bool:
        if self.kind == 'circle':
            return abs(z - self.center) < self.radius
        return self.lo.real <= z.real <= self.hi.real and self.lo.imag <= z.imag <= self.hi.imag

    def point(self, t: np.ndarray) -> np.ndarray:
        """Boundary point at parameter t in [0, 1), counterclockwise."""
        t = np.asarray(t, dtype=float)
        if self.kind == 'circle':
            return self.center + self.radius * np.exp(2j * np.pi * t)
        w, h = self.hi.real - self.lo.real, self.hi.imag - self.lo.imag
        s = t * 2 * (w + h)
        lo, hi = self.lo, self.hi
        return np.select(
            [s < w, s < w + h, s < 2 * w + h],
            [lo + s, complex(hi.real, lo.imag) + 1j * (s - w), hi - (s - w - h)],
            complex(lo.real, hi.imag) - 1j * (s - 2 * w - h),
        )

    def subdivide(self, offset: complex = 0j) -> List['Contour']:
        """Four children split at lo + SPLIT (hi - lo), shifted by `offset`."""
        if self.kind != 'rectangle':
            raise ValueError('only rectangles can be subdivided')
        lo, hi = self.lo, self.hi
        c = complex(lo.real + SPLIT * (hi.real - lo.real), lo.imag + SPLIT * (hi.imag - lo.imag)) + offset
        return [
            Contour.rectangle(lo, c, self.samples),
            Contour.rectangle(complex(c.real, lo.imag), complex(hi.real, c.imag), self.samples),
            Contour.rectangle(c, hi, self.samples),
            Contour.rectangle(complex(lo.real, c.imag), complex(c.real, hi.imag), self.samples),
        ]

    def grown(self, amount: float) -> 'Contour':
        if self.kind == 'circle':
            return Contour.circle(self.center, self.radius + amount, self.samples)
        return Contour.rectangle(self.lo - amount * (1 + 1j), self.hi + amount * (1 + 1j), self.samples)

    def as_dict(self) -> Dict:
        if self.kind == 'circle':
            return {'kind': 'circle', 'center': [self.center.real, self.center.imag], 'radius': self.radius}
        return {'kind': 'rectangle', 're_min': self.lo.real, 're_max': self.hi.real,
                'im_min': self.lo.imag, 'im_max': self.hi.imag}


def _log_value(f: Analytic, z: complex) -> LogDet:
    value = f(complex(z))
    return value if isinstance(value, LogDet) else LogDet.from_complex(complex(value))


def _wrap(steps: np.ndarray) -> np.ndarray:
    return np.remainder(steps + np.pi, 2 * np.pi) - np.pi


@dataclass
class ContourTrace:
    """Samples of log f around a closed contour, with phase unwrapped along the way."""
    contour: Contour
    t: np.ndarray
    z: np.ndarray
    log_mag: np.ndarray
    steps: np.ndarray

    @property
    def winding(self) -> int:
        return int(round(float(np.sum(self.steps)) / (2 * np.pi)))

    @property
    def median_log_mag(self) -> float:
        return float(np.median(self.log_mag))

    @property
    def uniform(self) -> bool:
        return len(self.t) == self.contour.samples

    def unwrapped(self) -> np.ndarray:
        """log f along the samples as log|f| + i (continuous phase)."""
        phase = np.concatenate([[0.0], np.cumsum(self.steps[:-1])])
        return self.log_mag + 1j * phase

    def boundary_moments(self, origin: complex, orders: int = 2) -> np.ndarray:
        """(1 / 2 pi i) sum (z - origin)^p d log f for p = 0..orders, midpoint rule."""
        z_next = np.roll(self.z, -1)
        mid = (self.z + z_next) / 2 - origin
        dlog = (np.roll(self.log_mag, -1) - self.log_mag) + 1j * self.steps
        return np.array([np.sum(mid ** p * dlog) for p in range(orders + 1)]) / (2j * np.pi)


def trace_contour(f: Analytic, contour: Contour, max_samples: int = MAX_SAMPLES) -> ContourTrace:
    """Sample f on the contour, bisecting any interval whose phase step reaches pi/2.

    Raises:
        ZeroOnContourError: |f| < 1e-12 at a sample.
        PhaseResolutionError: More than `max_samples` samples would be needed.
    """
    t = np.arange(contour.samples) / contour.samples
    values = [_log_value(f, z) for z in contour.point(t)]
    while True:
        log_mag = np.array([v.log_mag for v in values])
        low = int(np.argmin(log_mag))
        if log_mag[low] < ZERO_FLOOR:
            raise ZeroOnContourError(complex(contour.point(t[low])))
        phase = np.array([v.phase for v in values])
        steps = _wrap(np.roll(phase, -1) - phase)
        bad = np.flatnonzero(np.abs(steps) >= np.pi / 2)
        if bad.size == 0:
            return ContourTrace(contour, t, contour.point(t), log_mag, steps)
        if len(t) + bad.size > max_samples:
            raise PhaseResolutionError(len(t))
        t_next = np.append(t[1:], 1.0)
        mids = (t[bad] + t_next[bad]) / 2
        merged = values + [_log_value(f, z) for z in contour.point(mids)]
        order = np.argsort(np.concatenate([t, mids]), kind='stable')
        t = np.concatenate([t, mids])[order]
        values = [merged[i] for i in order]


def winding_number(f: Analytic, contour: Contour) -> int:
    """Number of zeros of f inside the contour, counted with multiplicity."""
    return trace_contour(f, contour).winding


@dataclass
class LocatedEigenvalue:
    lam: complex
    multiplicity: int
    method: str
    residual: float
    cluster: bool = False

    def as_dict(self) -> Dict:
        return {'re': self.lam.real, 'im': self.lam.imag, 'mult': self.multiplicity,
                'residual': self.residual, 'cluster': self.cluster}


@dataclass
class EigenReport:
    method: str
    region: Contour
    eigenvalues: List[LocatedEigenvalue] = field(default_factory=list)
    total_winding: int = 0
    failures: List[str] = field(default_factory=list)

    @property
    def total_multiplicity(self) -> int:
        return sum(e.multiplicity for e in self.eigenvalues)

    @property
    def locations(self) -> np.ndarray:
        return np.array([e.lam for e in self.eigenvalues], dtype=complex)

    def as_dict(self) -> Dict:
        return {
            'method': self.method,
            'eigenvalues': [e.as_dict() for e in self.eigenvalues],
            'region': self.region.as_dict(),
            'total_winding': self.total_winding,
            'failures': self.failures,
        }


class ZeroLocator:
    """Argument-principle root finder: subdivide, refine with the secant method, verify on a probe circle."""

    def __init__(self, f: Analytic, method: str) -> None:
        self.f = f
        self.method = method
        self.evaluations = 0
        self.failures: List[str] = []

    def value(self, z: complex) -> LogDet:
        self.evaluations += 1
        return _log_value(self.f, z)

    def trace(self, contour: Contour) -> ContourTrace:
        return trace_contour(self._counted, contour)

    def _counted(self, z: complex) -> LogDet:
        return self.value(z)

    def trace_jittered(self, contour: Contour) -> Tuple[Contour, ContourTrace]:
        """Trace the contour, growing it by 1e-7 steps when a zero sits on it."""
        for attempt in range(MAX_JITTERS + 1):
            cell = contour.grown(attempt * JITTER * max(1.0, contour.diameter)) if attempt else contour
            try:
                return cell, self.trace(cell)
            except ZeroOnContourError as e:
                logging.debug(f'[locate] {e}; jitter {attempt + 1}')
        raise ZeroOnContourError(contour.centre)

    def secant(self, z0: complex, z1: complex, reference: float) -> Tuple[complex, LogDet]:
        """Secant iteration on f in log space until |f| < 1e-10 exp(reference)."""
        L0, L1 = self.value(z0), self.value(z1)
        for _ in range(SECANT_ITERATIONS):
            if L1.is_zero or L1.log_mag - reference < RESIDUAL_TARGET:
                break
            if L0.is_zero:
                return z0, L0
            denom = 1 - (L0 / L1).to_complex()
            if denom == 0 or not cmath.isfinite(denom):
                break
            step = (z1 - z0) / denom
            z0, L0 = z1, L1
            z1 = z1 - step
            L1 = self.value(z1)
            if abs(step) < 1e-15 * max(1.0, abs(z1)):
                break
        return z1, L1

    def probe(self, z: complex, radius: float) -> Optional[Tuple[int, complex]]:
        """Winding number on a small circle around z and the centroid of the zeros inside it."""
        circle = Contour.circle(z, radius)
        try:
            tr = self.trace(circle)
        except (ZeroOnContourError, PhaseResolutionError):
            return None
        m = tr.winding
        if m <= 0:
            return m, z
        if tr.uniform:
            theta = 2 * np.pi * tr.t
            P = tr.unwrapped() - 1j * m * theta
            first = -radius * np.mean(P * np.exp(1j * theta))
        else:
            first = tr.boundary_moments(z, 1)[1]
        return m, z + first / m

    def refine(self, cell: Contour, tr: ContourTrace) -> Optional[LocatedEigenvalue]:
        w = tr.winding
        moments = tr.boundary_moments(cell.centre, 1)
        guess = cell.centre + moments[1] / w
        if not cell.contains(guess):
            guess = cell.centre
        h = 1e-3 * cell.diameter
        z, _ = self.secant(guess, guess + h, tr.median_log_mag)
        if not cell.contains(z):
            return None
        radius = min(1e-3 * max(1.0, abs(z)), cell.diameter / 4)
        probed = self.probe(z, radius)
        if probed is None or probed[0] != w:
            return None
        root = probed[1]
        residual = self.value(root)
        rel = math.exp(min(0.0, residual.log_mag - tr.median_log_mag)) if not residual.is_zero else 0.0
        return LocatedEigenvalue(complex(root), w, self.method, rel, cluster=w > 1)

    def clustered(self, cell: Contour, tr: ContourTrace) -> bool:
        """Boundary moments suggest all zeros in the cell sit close together."""
        w = tr.winding
        s = tr.boundary_moments(cell.centre, 2)
        spread = s[2] / w - (s[1] / w) ** 2
        return abs(spread) < (0.05 * cell.diameter) ** 2

    def split(self, cell: Contour, w: int) -> Optional[List[Tuple[Contour, ContourTrace]]]:
        for attempt in range(MAX_JITTERS + 1):
            offset = attempt * JITTER * cell.diameter * (1 + 1j)
            try:
                children = [(c, self.trace(c)) for c in cell.subdivide(offset)]
            except ZeroOnContourError as e:
                logging.debug(f'[locate] {e}; jitter {attempt + 1}')
                continue
            if sum(tr.winding for _, tr in children) == w:
                return children
            logging.debug(f'[locate] child windings do not add up to {w}; jitter {attempt + 1}')
        return None

    def locate(self, region: Contour) -> EigenReport:
        if region.kind != 'rectangle':
            raise ValueError('locate needs a rectangular region')
        region, top = self.trace_jittered(region)
        report = EigenReport(self.method, region, total_winding=top.winding)
        stack = [(region, top)]
        while stack:
            cell, tr = stack.pop()
            w = tr.winding
            if w == 0:
                continue
            if w < 0:
                report.failures.append(f'negative winding {w} on cell {cell.as_dict()}')
                continue
            if w == 1 or cell.diameter < SMALL_CELL * region.diameter or self.clustered(cell, tr):
                if (found := self.refine(cell, tr)) is not None:
                    report.eigenvalues.append(found)
                    continue
            if cell.diameter < MIN_DIAMETER:
                logging.warning(f'[locate] unresolved cluster of multiplicity {w} near {cell.centre:.6g}')
                report.eigenvalues.append(LocatedEigenvalue(cell.centre, w, self.method, math.nan, cluster=True))
                continue
            children = self.split(cell, w)
            if children is None:
                report.failures.append(f'could not subdivide cell {cell.as_dict()} with winding {w}')
                continue
            stack.extend(children)
        report.eigenvalues = _merge(report.eigenvalues)
        if report.total_multiplicity != report.total_winding:
            logging.warning(f'[locate:{self.method}] located multiplicity {report.total_multiplicity} '
                            f'differs from the outer winding {report.total_winding}')
        logging.info(f'[locate:{self.method}] {len(report.eigenvalues)} eigenvalues, {self.evaluations} evaluations')
        return report


def _merge(found: List[LocatedEigenvalue], radius: float = CLUSTER_RADIUS) -> List[LocatedEigenvalue]:
    merged: List[LocatedEigenvalue] = []
    for e in sorted(found, key=lambda e: (e.lam.real, e.lam.imag)):
        for m in merged:
            if abs(m.lam - e.lam) < radius * max(1.0, abs(e.lam)):
                total = m.multiplicity + e.multiplicity
                m.lam = (m.lam * m.multiplicity + e.lam * e.multiplicity) / total
                m.multiplicity, m.cluster = total, True
                m.residual = max(m.residual, e.residual)
                break
        else:
            merged.append(e)
    return merged


def hill_report(problem: SpectralProblem, region: Contour, J: int) -> EigenReport:
    eigs = [lam for lam in hill_eigenvalues(build_truncation(problem, J)) if region.contains(lam)]
    report = EigenReport('hill', region)
    for c in cluster_eigenvalues(eigs):
        centre = complex(np.mean(c))
        spread = float(max(abs(lam - centre) for lam in c))
        report.eigenvalues.append(LocatedEigenvalue(centre, len(c), 'hill', spread, cluster=len(c) > 1))
    report.total_winding = report.total_multiplicity
    return report


def locate_eigenvalues(problem: SpectralProblem, region: Contour, method: str, J: int = 64,
                       tol: float = DEFAULT_TOL) -> EigenReport:
    """Periodic eigenvalues inside a rectangular region.

    Args:
        problem (SpectralProblem): The problem.
        region (Contour): Rectangle to search.
        method (str): 'evans' (zeros of E), 'fredholm' (zeros of D_J) or 'hill' (eigenvalues of L_J).
        J (int, optional): Truncation for 'fredholm' and 'hill'. Defaults to 64.
        tol (float, optional): Integrator tolerance for 'evans'. Defaults to 1e-10.

    Returns:
        EigenReport: Located eigenvalues with multiplicities, sorted by (Re, Im).
    """
    if method == 'hill':
        return hill_report(problem, region, J)
    if method == 'evans':
        f: Analytic = lambda lam: gardner_E(problem, lam, tol)
    elif method == 'fredholm':
        trunc = build_truncation(problem, J)
        f = lambda lam: DJ_det(trunc, lam)
    else:
        raise ValueError(f'unknown method {method!r}, expected one of {METHODS}')
    return ZeroLocator(f, method).locate(region)


@dataclass
class MatchedTriple:
    hill: LocatedEigenvalue
    fredholm: Optional[LocatedEigenvalue]
    evans: Optional[LocatedEigenvalue]

    @property
    def distances(self) -> Dict[str, float]:
        def d(a, b):
            return abs(a.lam - b.lam) if a is not None and b is not None else math.nan
        return {'hill-fredholm': d(self.hill, self.fredholm), 'hill-evans': d(self.hill, self.evans),
                'fredholm-evans': d(self.fredholm, self.evans)}

    @property
    def multiplicities_agree(self) -> bool:
        return all(o is not None and o.multiplicity == self.hill.multiplicity for o in (self.fredholm, self.evans))

    def as_dict(self) -> Dict:
        def loc(e):
            return None if e is None else [e.lam.real, e.lam.imag, e.multiplicity]
        return {'hill': loc(self.hill), 'fredholm': loc(self.fredholm), 'evans': loc(self.evans),
                'distances': self.distances, 'multiplicities_agree': self.multiplicities_agree}


@dataclass
class MethodComparison:
    reports: Dict[str, EigenReport]
    triples: List[MatchedTriple]

    @property
    def totals(self) -> Dict[str, int]:
        return {m: r.total_winding for m, r in self.reports.items()}

    @property
    def totals_agree(self) -> bool:
        return len(set(self.totals.values())) == 1

    @property
    def max_distance(self) -> float:
        ds = [v for t in self.triples for v in t.distances.values() if not math.isnan(v)]
        return max(ds, default=0.0)

    def as_dict(self) -> Dict:
        return {'totals': self.totals, 'totals_agree': self.totals_agree, 'max_distance': self.max_distance,
                'triples': [t.as_dict() for t in self.triples],
                'reports': {m: r.as_dict() for m, r in self.reports.items()}}


def _nearest(target: LocatedEigenvalue, pool: List[LocatedEigenvalue], used: set) -> Optional[LocatedEigenvalue]:
    candidates = [(abs(e.lam - target.lam), i) for i, e in enumerate(pool) if i not in used]
    if not candidates:
        return None
    _, i = min(candidates)
    used.add(i)
    return pool[i]


def compare_methods(problem: SpectralProblem, region: Contour, J: int = 64, tol: float = DEFAULT_TOL) -> MethodComparison:
    """Locate with all three methods and match Fredholm and Evans roots to the Hill clusters."""
    reports = {m: locate_eigenvalues(problem, region, m, J, tol) for m in METHODS}
    used_f, used_e = set(), set()
    triples = [MatchedTriple(h, _nearest(h, reports['fredholm'].eigenvalues, used_f), _nearest(h, reports['evans'].eigenvalues, used_e))
               for h in reports['hill'].eigenvalues]
    comparison = MethodComparison(reports, triples)
    if not comparison.totals_agree:
        logging.warning(f'[compare] total multiplicities differ across methods: {comparison.totals}')
    return comparison


def conjugate_asymmetry(eigenvalues: List[complex]) -> float:
    """Largest distance from a conjugated eigenvalue to the located set (0 for conjugation-closed sets)."""
    if len(eigenvalues) == 0:
        return 0.0
    return float(np.nanmax(greedy_match(np.conj(eigenvalues), eigenvalues)))
