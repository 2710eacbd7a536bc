#!/usr/bin/env python3
"""
3-WAY COMPARISON: Hill vs Fredholm vs Evans
===========================================
Locates the periodic eigenvalues of every sample problem with:
1. Hill's method (eigenvalues of L_J - reference)
2. Zeros of the truncated 2-modified determinant D_J
3. Zeros of the Evans function E = det(Psi(X) - I)

Includes: eigenvalue counts, multiplicities, pairwise distances, conjugate symmetry
"""

import argparse
import os
import sys
from pathlib import Path

# Add periodic-evans to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'periodic-evans'))

from fourier_coeffs import SpectralProblem
from spectral_locator import Contour, compare_methods, conjugate_asymmetry
from util.timing import Stopwatch

PROBLEMS_DIR = Path(__file__).parent / "problems"
DEFAULT_REGION = (-5.0, 1.0, -1.0, 1.0)
EXCELLENT = 1e-8
GOOD = 1e-5


def status_of(distance: float, agree: bool) -> str:
    if not agree:
        return "CHECK"
    if distance < EXCELLENT:
        return "EXCELLENT"
    if distance < GOOD:
        return "GOOD"
    return "CHECK"


def main(J: int, region: list, problems: list) -> None:
    re_min, re_max, im_min, im_max = region
    contour = Contour.rectangle(complex(re_min, im_min), complex(re_max, im_max))
    files = problems or sorted(p.name for p in PROBLEMS_DIR.glob('*.json'))

    print(f"\n{'='*100}")
    print(f"  3-WAY COMPARISON  J={J}  region=[{re_min:g}, {re_max:g}] x [{im_min:g}, {im_max:g}]")
    print(f"{'='*100}")

    summary = []
    for fn in files:
        problem = SpectralProblem.from_file(str(PROBLEMS_DIR / fn))
        with Stopwatch(problem.name) as watch:
            comparison = compare_methods(problem, contour, J)

        print(f"\n  {problem.name}  ({watch.elapsed:.1f}s)")
        print(f"  {'Hill':>24} {'mult':>5} | {'|Hill-D_J|':>11} {'|Hill-E|':>11} {'|D_J-E|':>11} | {'mult D/E':>8}")
        print(f"  {'-'*90}")
        for t in comparison.triples:
            d = t.distances
            mults = '/'.join('-' if e is None else str(e.multiplicity) for e in (t.fredholm, t.evans))
            print(f"  {t.hill.lam.real:>12.8f}{t.hill.lam.imag:>+12.8f}i {t.hill.multiplicity:>4} | "
                  f"{d['hill-fredholm']:>11.2e} {d['hill-evans']:>11.2e} {d['fredholm-evans']:>11.2e} | {mults:>8}")
        for method, report in comparison.reports.items():
            for failure in report.failures:
                print(f"  [!!] {method}: {failure}")

        agree = comparison.totals_agree and all(t.multiplicities_agree for t in comparison.triples)
        asymmetry = max(conjugate_asymmetry(r.locations) for r in comparison.reports.values()) if problem.is_real else float('nan')
        summary.append((problem.name, comparison.totals, comparison.max_distance, asymmetry,
                        status_of(comparison.max_distance, agree)))

    print(f"\n{'='*100}")
    print("  ACCURACY SUMMARY")
    print(f"{'='*100}")
    print(f"\n  {'Problem':<16} {'Hill':>6} {'D_J':>6} {'E':>6} {'max dist':>11} {'conj asym':>11} {'Status':>10}")
    print(f"  {'-'*72}")
    for name, totals, distance, asymmetry, status in summary:
        print(f"  {name:<16} {totals['hill']:>6} {totals['fredholm']:>6} {totals['evans']:>6} "
              f"{distance:>11.2e} {asymmetry:>11.2e} {status:>10}")

    print(f"\n  {'='*72}")
    if all(s[-1] != "CHECK" for s in summary):
        print(f"  [OK] All problems agree across the three methods to {GOOD:.0e}")
    else:
        print("  [!!] Some problems disagree - rerun with a larger J or a different region")
    print(f"  {'='*72}\n")


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Compare Hill, Fredholm and Evans eigenvalues on the sample problems.")
    parser.add_argument("--J", type=int, default=64, help="Truncation for Hill and D_J")
    parser.add_argument("--region", type=float, nargs=4, default=list(DEFAULT_REGION), metavar=('RE_MIN', 'RE_MAX', 'IM_MIN', 'IM_MAX'))
    parser.add_argument("problems", nargs='*', help="Problem file names under problems/ (all by default)")
    main(**vars(parser.parse_args()))
