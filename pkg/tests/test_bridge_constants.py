"""Tests for the constants gamma, delta, delta_hat, epsilon and the relation check between D, F and E."""

import cmath
import math

import mpmath
import numpy as np
import pytest

from bridge_constants import (PI_COTH_PI, ConstantsMode, delta_consts, epsilon_closed, epsilon_const, epsilon_derived,
                              galerkin_traces, gamma_const, hat_trace_sum, log_gamma, predicted_factor,
                              trace_closed_forms, trace_sum, verify_relation)
from fredholm_det import DJ_det
from hill_galerkin import build_truncation
from util.exceptions import EigenvalueProximityError, NotNormalizedError


def free_E(lam: complex) -> complex:
    return 2 - 2 * cmath.cosh(2 * math.pi * cmath.sqrt(lam))


class TestTraceSums:
    """Partial sums and their pi coth(pi) limit."""

    def test_closed_form(self):
        assert trace_sum() == pytest.approx(3.153348094937, rel=1e-12)

    def test_partial_sum_converges(self):
        assert abs(trace_sum(10 ** 4) - PI_COTH_PI) < 2e-4
        assert trace_sum(10 ** 4) < PI_COTH_PI

    def test_first_order_rate(self):
        """The tail is about 2/J, so a log-log fit over J = 1e2..1e4 has slope close to -1."""
        Js = np.array([1e2, 1e3, 1e4])
        errors = np.array([PI_COTH_PI - trace_sum(int(J)) for J in Js])
        slope = np.polyfit(np.log(Js), np.log(errors), 1)[0]
        assert -slope >= 0.9

    @pytest.mark.parametrize('J', [1, 7, 100])
    def test_hat_sum_equals_real_sum(self, J):
        value = hat_trace_sum(J)
        assert abs(value.imag) < 1e-14
        assert value.real == pytest.approx(trace_sum(J), rel=1e-14)


class TestGamma:
    def test_free_scalar(self, free_scalar):
        X = 2 * math.pi
        expected = 4 * math.pi * math.exp(X) / (math.exp(X) - 1)
        assert log_gamma(free_scalar) == pytest.approx(expected, rel=1e-14)

    def test_extended_precision(self, system_2x2):
        """tr A1_ave = 0.5 and n = 2 for the 2x2 sample."""
        mpmath.mp.dps = 40
        X = 2 * mpmath.pi
        exponent = mpmath.e ** X / (mpmath.e ** X - 1) * (mpmath.mpf('0.5') + 4) * X
        assert gamma_const(system_2x2) == pytest.approx(complex(mpmath.e ** exponent), rel=1e-13)

    def test_unit_when_exponent_vanishes(self):
        from fourier_coeffs import SpectralProblem
        problem = SpectralProblem.from_dict({'n': 1, 'period': '2pi', 'A1': [{'k': 0, 're': [[-2.0]]}],
                                             'B0': [{'k': 0, 're': [[1.0]]}]})
        assert gamma_const(problem) == 1


class TestDelta:
    """delta, delta_hat in both readings and conventions."""

    def test_free_scalar_values(self, free_scalar):
        delta, delta_hat = delta_consts(free_scalar, 0.0, convention='printed')
        assert delta.real == pytest.approx(-PI_COTH_PI)
        assert delta_hat.real == pytest.approx(2 * PI_COTH_PI)
        derived, _ = delta_consts(free_scalar, 0.0)
        assert derived == pytest.approx(-delta)

    def test_affine_in_lambda(self, system_2x2):
        d0, h0 = delta_consts(system_2x2, 0.3j)
        d1, h1 = delta_consts(system_2x2, 1 + 0.3j)
        assert d0 - d1 == pytest.approx(np.trace(system_2x2.B0.mean) * PI_COTH_PI)
        assert h0 == h1

    def test_partial_constants_converge(self, mathieu_q05):
        lam = 0.5
        d_closed, h_closed = delta_consts(mathieu_q05, lam)
        d_partial, h_partial = delta_consts(mathieu_q05, lam, J=10 ** 4)
        assert abs(d_partial - d_closed) <= 2e-4 * abs(1 - lam)
        assert abs(h_partial - h_closed) <= 2e-4 * 2

    def test_readings_differ_only_with_first_order_mean(self, mathieu_q05, system_2x2):
        assert delta_consts(mathieu_q05, 1j, reading='a0') == delta_consts(mathieu_q05, 1j, reading='a1')
        assert delta_consts(system_2x2, 1j, reading='a0') != delta_consts(system_2x2, 1j, reading='a1')

    def test_requires_normalized_period(self, free_scalar):
        with pytest.raises(NotNormalizedError):
            delta_consts(free_scalar.with_period(3.0), 0.0)

    def test_trace_closed_forms_match_matrices(self, system_2x2, complex_scalar):
        for problem in (system_2x2, complex_scalar):
            for J in (3, 10):
                direct = galerkin_traces(problem, 0.4 - 0.2j, J)
                closed = trace_closed_forms(problem, 0.4 - 0.2j, J)
                assert direct[0] == pytest.approx(closed[0], rel=1e-12)
                assert direct[1] == pytest.approx(closed[1], rel=1e-12)


class TestEpsilon:
    def test_first_partial_product(self):
        assert epsilon_const(1) == pytest.approx(15.0)

    def test_partial_product_converges(self):
        assert epsilon_closed() == pytest.approx(3 + 4 * math.sinh(math.pi) ** 2, rel=1e-12)
        assert epsilon_const(10 ** 4) == pytest.approx(epsilon_closed(), rel=1e-3)

    def test_increasing(self):
        values = [epsilon_const(J) for J in (1, 2, 5, 10, 100)]
        assert all(b > a for a, b in zip(values, values[1:]))

    @pytest.mark.parametrize('n', [1, 2, 3])
    @pytest.mark.parametrize('J', [1, 5, 50])
    def test_derived_is_a_sign(self, n, J):
        assert epsilon_derived(n, J) == pytest.approx((-1) ** n, abs=1e-12)


class TestPredictedFactor:
    """e^{delta - delta_hat} / epsilon * gamma * (e^X - 1)^{-2n}."""

    def test_free_scalar_at_one(self, free_scalar):
        """D(1) = 1 for the free problem, so the derived factor times E(1) is 1."""
        assert predicted_factor(free_scalar, 1.0) * free_E(1.0) == pytest.approx(1.0, rel=1e-10)

    def test_printed_convention_is_off_by_epsilon(self, free_scalar):
        """The printed constants predict -1/epsilon_closed instead of 1 at the same point."""
        printed = ConstantsMode(convention='printed')
        assert predicted_factor(free_scalar, 1.0, printed) * free_E(1.0) == pytest.approx(-1 / epsilon_closed(), rel=1e-10)

    def test_lambda_enters_through_delta(self, system_2x2):
        l1, l2 = 0.3 + 0.1j, -1.2 + 0.5j
        ratio = predicted_factor(system_2x2, l1) / predicted_factor(system_2x2, l2)
        d1, _ = delta_consts(system_2x2, l1)
        d2, _ = delta_consts(system_2x2, l2)
        assert ratio == pytest.approx(cmath.exp(d1 - d2), rel=1e-12)

    def test_never_vanishes(self, complex_scalar):
        for lam in (0, 10, -10, 10j, -7 + 7j):
            assert predicted_factor(complex_scalar, lam) != 0

    def test_partial_mode_needs_J(self):
        with pytest.raises(ValueError):
            ConstantsMode(constants='partial')


class TestVerifyRelation:
    """Convergence of D_J / (factor * E) and F_J / F."""

    def test_free_scalar(self, free_scalar):
        report = verify_relation(free_scalar, [1.0, 0.5 + 0.5j, -2.5 + 0.3j], [8, 16, 32, 64])
        r2 = report.summary('r2', '-')
        assert r2.monotone
        assert r2.final_error < 0.1
        assert r2.final_extrapolated < r2.final_error
        r1 = report.summary('r1', 'a0/derived')
        assert r1.monotone
        assert r1.final_error < 1e-3
        assert r1.passed
        assert report.summary('r1', 'a0/printed').final_error > 1.0
        assert not report.skipped

    def test_free_scalar_at_one_is_exact(self, free_scalar):
        """K_J = 0 at lambda = 1, so D_J = 1 at every J and r1 only carries the integrator error."""
        report = verify_relation(free_scalar, [1.0], [4, 8])
        for e in report.entries:
            if e.quantity == 'r1' and e.delta_reading == 'a0/derived':
                assert e.error < 1e-8

    @pytest.mark.slow
    def test_mathieu(self, mathieu_q05):
        report = verify_relation(mathieu_q05, [0.1 + 0.2j], [8, 16, 32, 64])
        r1 = report.summary('r1', 'a0/derived')
        assert r1.monotone
        assert r1.final_error < 1e-2

    def test_partial_constants_tie_r1_to_r2(self, system_2x2):
        """With finite-J constants the two ratios coincide at every J."""
        report = verify_relation(system_2x2, [0.3 + 0.4j], [4, 8], constants='partial')
        r2 = {e.J: e.error for e in report.entries if e.quantity == 'r2'}
        r1 = {e.J: e.error for e in report.entries if e.quantity == 'r1' and e.delta_reading == 'a0/derived'}
        for J in (4, 8):
            assert r1[J] == pytest.approx(r2[J], rel=1e-6, abs=1e-9)

    @pytest.mark.slow
    def test_first_order_mean_selects_reading(self, system_2x2):
        """With tr mean(A0) != tr mean(A1) only the A0 reading makes r1 tend to 1.

        The A1 reading is off by the constant factor exp(delta_a0 - delta_a1) at every J.
        """
        lam = 0.3 + 0.4j
        report = verify_relation(system_2x2, [lam, -0.5 + 0.8j], [8, 16, 32, 64])
        a0, a1 = report.summary('r1', 'a0/derived'), report.summary('r1', 'a1/derived')
        assert a0.monotone
        assert a0.final_error < 0.5
        assert a1.final_error > 1.0
        shift = delta_consts(system_2x2, lam, reading='a0')[0] - delta_consts(system_2x2, lam, reading='a1')[0]
        by_reading = {e.delta_reading: e for e in report.entries if e.quantity == 'r1' and e.lam == lam and e.J == 64}
        gap = by_reading['a1/derived'].ratio_logmag_error - by_reading['a0/derived'].ratio_logmag_error
        assert gap == pytest.approx(shift.real, rel=1e-9)

    def test_skips_eigenvalues(self, free_scalar):
        report = verify_relation(free_scalar, [-1.0, 1.0], [4])
        assert len(report.skipped) == 1
        assert report.skipped[0][0] == -1.0

    def test_all_points_on_spectrum(self, free_scalar):
        with pytest.raises(EigenvalueProximityError):
            verify_relation(free_scalar, [0.0, -4.0], [4])

    def test_report_json_shape(self, mathieu_q05):
        data = verify_relation(mathieu_q05, [1.0 + 1j], [4, 8]).as_dict()
        assert data['constants_mode'] == 'closed'
        entry = data['entries'][0]
        assert set(entry) >= {'lambda', 'J', 'ratio_logmag_error', 'ratio_phase_error', 'delta_reading'}

    def test_requires_normalized_period(self, free_scalar):
        with pytest.raises(NotNormalizedError):
            verify_relation(free_scalar.with_period(10.0), [1.0], [4])


def test_direct_determinant_is_one_at_lambda_one(free_scalar):
    assert DJ_det(build_truncation(free_scalar, 32), 1.0).log_mag == 0.0
