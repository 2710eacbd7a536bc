"""Tests for Hill's method: block-Toeplitz assembly, L_J, eigenvalues and J sweeps."""

import math

import numpy as np
import pytest
from scipy.special import mathieu_a, mathieu_b

from fourier_coeffs import SpectralProblem, make_series
from hill_galerkin import (assemble_LJ, block_toeplitz, build_truncation, cluster_eigenvalues, convergence_sweep,
                           greedy_match, hill_eigenvalues)
from util.exceptions import IllConditionedError


def mathieu_periodic_eigenvalues(q: float, count: int) -> np.ndarray:
    """Periodic eigenvalues of U'' + 2q cos(x) U = lambda U from the Mathieu characteristic values.

    With x = 2t the equation becomes U_tt + (a - 2 Q cos 2t) U = 0 with a = -4 lambda and Q = 4q
    (up to the sign of Q, which does not change a_2r or b_2r).
    """
    values = [-mathieu_a(0, 4 * q) / 4]
    for r in range(1, count):
        values += [-mathieu_a(2 * r, 4 * q) / 4, -mathieu_b(2 * r, 4 * q) / 4]
    return np.sort(np.array(values))[::-1]


class TestBlockToeplitz:
    """Fourier-side matrices of multiplication operators."""

    def test_block_layout(self, system_2x2):
        """Block (j, k) holds the coefficient of mode j - k."""
        J, n = 3, 2
        T = block_toeplitz(system_2x2.A0, J)
        assert T.shape == ((2 * J + 1) * n,) * 2
        for j in range(-J, J + 1):
            for k in range(-J, J + 1):
                block = T[(j + J) * n:(j + J + 1) * n, (k + J) * n:(k + J + 1) * n]
                np.testing.assert_array_equal(block, system_2x2.A0.coefficient(j - k))

    def test_unit_mass_operator(self, mathieu_q05):
        """With B0 = I the Hill matrix is D^2 + A0J."""
        trunc = build_truncation(mathieu_q05, 6)
        np.testing.assert_allclose(assemble_LJ(trunc), trunc.DJ @ trunc.DJ + trunc.A0J, atol=1e-14)

    def test_truncation_zero(self, mathieu_q1):
        trunc = build_truncation(mathieu_q1, 0)
        assert trunc.N == 1
        assert trunc.LJ[0, 0] == 0

    def test_negative_J(self, free_scalar):
        with pytest.raises(ValueError):
            build_truncation(free_scalar, -1)


class TestHillEigenvalues:
    """Eigenvalues of L_J."""

    def test_free_spectrum_exact(self, free_scalar):
        """For the free problem L_J = diag(-j^2) and the spectrum is {-j^2}, with 0 simple and the rest double."""
        eigs = hill_eigenvalues(build_truncation(free_scalar, 16))
        expected = np.sort(np.array([-float(j * j) for j in range(-16, 17)]))
        np.testing.assert_allclose(eigs.real, expected, atol=1e-12)
        assert np.all(np.abs(eigs.imag) < 1e-12)
        clusters = cluster_eigenvalues(eigs)
        assert [len(c) for c in clusters] == [2] * 16 + [1]

    def test_sorted_by_real_part(self, system_2x2):
        eigs = hill_eigenvalues(build_truncation(system_2x2, 8))
        assert np.all(np.diff(eigs.real) >= 0)

    @pytest.mark.parametrize('q', [0.5, 1.0])
    def test_mathieu_characteristic_values(self, q):
        """Largest Hill eigenvalues match the Mathieu characteristic values."""
        problem = SpectralProblem.from_dict(SpectralProblem.load_samples()[f'mathieu_q{"05" if q == 0.5 else "1"}.json'])
        eigs = np.sort(hill_eigenvalues(build_truncation(problem, 32)).real)[::-1][:7]
        np.testing.assert_allclose(eigs, mathieu_periodic_eigenvalues(q, 4)[:7], atol=1e-6)

    def test_constant_coefficients_decouple(self, rng):
        """Constant A1, A0 and B0 = I make L_J block diagonal: spectrum = union of -k^2 + eig(A0 + i k A1)."""
        n, J, X = 2, 5, 2 * math.pi
        A1 = 0.3 * (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))
        A0 = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        problem = SpectralProblem(make_series(n, X, {0: A1}), make_series(n, X, {0: A0}),
                                  make_series(n, X, {0: np.eye(n)}))
        expected = np.concatenate([-k * k + np.linalg.eigvals(A0 + 1j * k * A1) for k in range(-J, J + 1)])
        eigs = hill_eigenvalues(build_truncation(problem, J))
        assert len(eigs) == len(expected)
        assert np.nanmax(greedy_match(eigs, expected)) < 1e-10

    @pytest.mark.parametrize('period', [math.pi, 4 * math.pi])
    def test_period_rescaling_keeps_spectrum(self, mathieu_q05, period):
        """Rescaling to another period and back leaves the Hill spectrum unchanged."""
        reference = hill_eigenvalues(build_truncation(mathieu_q05, 12))
        rescaled = mathieu_q05.with_period(period)
        assert not rescaled.is_normalized
        np.testing.assert_allclose(hill_eigenvalues(build_truncation(rescaled, 12)), reference, atol=1e-9)
        restored = rescaled.normalize_period()
        assert restored.is_normalized
        np.testing.assert_allclose(hill_eigenvalues(build_truncation(restored, 12)), reference, atol=1e-9)

    def test_real_problem_spectrum_closed_under_conjugation(self, system_2x2):
        eigs = hill_eigenvalues(build_truncation(system_2x2, 12))
        assert np.nanmax(greedy_match(np.conj(eigs), eigs)) < 1e-6

    def test_ill_conditioned_mass(self):
        """B0 = 2e-10 + 1000i cos x: Re B0 is definite but |B0| spans thirteen orders of magnitude.

        With J = 64 the middle eigenvalue of the truncation sits exactly at cos(pi/2) = 0.
        """
        problem = SpectralProblem.from_dict({
            'n': 1, 'period': '2pi',
            'B0': [{'k': -1, 're': [[0.0]], 'im': [[500.0]]},
                   {'k': 0, 're': [[2e-10]]},
                   {'k': 1, 're': [[0.0]], 'im': [[500.0]]}],
        })
        with pytest.raises(IllConditionedError):
            build_truncation(problem, 64).LJ


class TestConvergenceSweep:
    """Spectral convergence in J."""

    def test_mathieu_sweep(self, mathieu_q1):
        rows = convergence_sweep(mathieu_q1, [8, 16], 10.0)
        assert [r.J for r in rows] == [8, 16]
        assert len(rows[0].eigenvalues) == len(rows[1].eigenvalues)
        assert np.all(np.isnan(rows[0].match_distances))
        assert rows[1].max_match_distance < 1e-6

    def test_requires_increasing_J(self, free_scalar):
        with pytest.raises(ValueError):
            convergence_sweep(free_scalar, [16, 8], 10.0)

    def test_parallel_matches_sequential(self, system_2x2):
        seq = convergence_sweep(system_2x2, [4, 8], 5.0)
        par = convergence_sweep(system_2x2, [4, 8], 5.0, num_processes=2)
        for a, b in zip(seq, par):
            np.testing.assert_allclose(a.eigenvalues, b.eigenvalues)


class TestMatching:
    def test_greedy_match(self):
        d = greedy_match([0.0, 1.0, 5.0], [1.1, 0.05])
        assert d[0] == pytest.approx(0.05)
        assert d[1] == pytest.approx(0.1)
        assert math.isnan(d[2])

    def test_cluster_radius(self):
        clusters = cluster_eigenvalues([1.0, 1.0 + 5e-7, 2.0])
        assert [len(c) for c in clusters] == [2, 1]
