import numpy as np
import pytest

from fheig.errors import ConvergenceError, ValidationError
from fheig.hardy import HardyParams, hardy_constant, phi

from frozen import HARDY_1_09_1, HARDY_CONSTANTS, HARDY_EXTREME, PHI_2_HALF


class TestHardyParams:
    def test_regime_flags(self):
        assert HardyParams(1, 0.25, 2.0).regime == "subcritical"
        assert HardyParams(1, 0.75, 2.0).regime == "supercritical"

    def test_degenerate_rejected(self):
        with pytest.raises(ValidationError):
            HardyParams(1, 0.5, 2.0)
        with pytest.raises(ValidationError):
            HardyParams(2, 0.5, 4.0)

    @pytest.mark.parametrize("n,alpha,p", [(0, 0.5, 2.0), (1, 0.0, 2.0), (1, 1.0, 2.0), (1, 0.5, 0.5)])
    def test_bad_inputs(self, n, alpha, p):
        with pytest.raises(ValidationError):
            HardyParams(n, alpha, p)


class TestPhi:
    def test_limit_at_zero(self):
        # both closed-form terms equal 1 at r = 0, for any exponent
        params = HardyParams(1, 0.25, 2.0)
        assert phi(params, 1e-12) == pytest.approx(2.0, rel=1e-9)

    @pytest.mark.parametrize("alpha,p", [(0.25, 2.0), (0.25, 3.0), (0.9, 2.0)])
    def test_closed_form_plugin(self, alpha, p):
        # (1 - r)^-(1 + pa) + (1 + r)^-(1 + pa) at r = 0.5
        params = HardyParams(1, alpha, p)
        pa = p * alpha
        expected = 0.5 ** -(1.0 + pa) + 1.5 ** -(1.0 + pa)
        assert phi(params, 0.5) == pytest.approx(expected, rel=1e-14)

    def test_n2_against_riemann_oracle(self):
        params = HardyParams(2, 0.5, 2.0)
        assert phi(params, 0.5) == pytest.approx(PHI_2_HALF, rel=1e-10)

    def test_n2_limit_at_zero_is_circle_measure(self):
        params = HardyParams(2, 0.5, 2.0)
        assert phi(params, 1e-10) == pytest.approx(2.0 * np.pi, rel=1e-6)

    @pytest.mark.parametrize("r", [0.0, 1.0, -0.3, 1.7])
    def test_domain_errors(self, r):
        with pytest.raises(ValidationError):
            phi(HardyParams(1, 0.25, 2.0), r)

    def test_extreme_r_stays_finite(self):
        params = HardyParams(2, 0.25, 2.0)
        val = phi(params, 1.0 - 1e-12)
        assert np.isfinite(val) and val > 1e17


class TestHardyConstant:
    @pytest.mark.parametrize("key,expected", sorted(
        (k, v) for k, v in HARDY_CONSTANTS.items() if v is not None
    ))
    def test_matches_independent_oracle(self, key, expected):
        n, alpha, p = key
        res = hardy_constant(HardyParams(n, alpha, p), tol=1e-8)
        assert res.value == pytest.approx(expected, rel=1e-8)
        assert res.est_error <= 1e-8
        assert res.node_count > 0

    def test_p1_positive(self):
        res = hardy_constant(HardyParams(1, 0.9, 1.0), tol=1e-8)
        assert res.value > 0.0
        assert res.value == pytest.approx(HARDY_1_09_1, rel=1e-8)

    def test_dual_strategy_agreement(self):
        # module quadrature vs the frozen high-precision oracle value
        res = hardy_constant(HardyParams(2, 0.25, 3.0), tol=1e-6)
        assert abs(res.value - HARDY_CONSTANTS[(2, 0.25, 3.0)]) <= 2e-6

    def test_positivity_sweep(self):
        for key, expected in HARDY_CONSTANTS.items():
            if expected is None:
                continue
            assert expected > 0.0

    def test_monotone_tolerance(self):
        params = HardyParams(1, 0.25, 2.0)
        errs = [hardy_constant(params, tol).est_error for tol in (1e-6, 5e-7, 2.5e-7, 1e-8)]
        for coarse, fine in zip(errs, errs[1:]):
            assert fine <= coarse

    def test_tolerance_failure_raises(self):
        with pytest.raises(ConvergenceError):
            hardy_constant(HardyParams(1, 0.25, 2.0), tol=1e-15)

    def test_bad_tolerance(self):
        with pytest.raises(ValidationError):
            hardy_constant(HardyParams(1, 0.25, 2.0), tol=0.0)


class TestExtremeOrders:
    @pytest.mark.parametrize("alpha", sorted(HARDY_EXTREME))
    def test_extreme_alpha_values(self, alpha):
        # near-degenerate orders: loose tolerance, honest estimates
        res = hardy_constant(HardyParams(1, alpha, 2.0), tol=1e-3)
        actual = abs(res.value - HARDY_EXTREME[alpha])
        assert actual <= max(res.est_error, 1e-9 * HARDY_EXTREME[alpha])

    def test_tight_tolerance_refused_at_099(self):
        with pytest.raises(ConvergenceError):
            hardy_constant(HardyParams(1, 0.99, 2.0), tol=1e-8)
