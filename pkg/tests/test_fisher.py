import numpy as np
import pytest

from qvar.fisher import (IncrementFamily, cramer_rao_bound, efficiency, fisher_information,
                         increment_covariance)
from qvar.models import FBM, covariance


class TestIncrementCovariance:
    def test_brownian_increments(self):
        fam = IncrementFamily("fbm", 1.0, 20)
        R = increment_covariance(fam, 3.0)
        np.testing.assert_allclose(np.diag(R), 2 * 3.0 * fam.delta)
        np.testing.assert_allclose(R - np.diag(np.diag(R)), 0.0, atol=1e-15)

    @pytest.mark.parametrize("kind,s", [("fbm", 0.5), ("fbm", 1.5), ("slepian", 0.7)])
    def test_linear_in_C(self, kind, s):
        fam = IncrementFamily(kind, s, 12)
        np.testing.assert_allclose(increment_covariance(fam, 1.2), 2 * increment_covariance(fam, 0.6),
                                   rtol=1e-13, atol=1e-15)

    def test_value_covariance_oracle(self):
        # Difference the FBM value covariance; increments are stationary, so shift the grid off 0.
        fam = IncrementFamily("fbm", 0.5, 4)
        C = 1.3
        t = fam.delta * np.arange(1, 5)
        K = covariance(FBM(C, 0.5), t[:, None], t[None, :])
        A = np.diff(np.eye(4), axis=0)
        np.testing.assert_allclose(increment_covariance(fam, C), A @ K @ A.T, rtol=1e-12)

    def test_diagonal_is_twice_variogram(self):
        fam = IncrementFamily("fbm", 0.8, 9, delta=0.05)
        np.testing.assert_allclose(np.diag(increment_covariance(fam, 2.0)), 2 * 2.0 * 0.05**0.8)

    def test_positive_definite(self):
        for s in (0.3, 1.0, 1.8):
            assert np.linalg.eigvalsh(increment_covariance(IncrementFamily("fbm", s, 30), 1.0))[0] > 0

    def test_slepian_matches_fbm_at_half_scale(self):
        sl = IncrementFamily("slepian", 0.6, 25)
        fb = IncrementFamily("fbm", 0.6, 25)
        np.testing.assert_allclose(increment_covariance(sl, 1.5), increment_covariance(fb, 0.75),
                                   rtol=1e-12, atol=1e-15)

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            IncrementFamily("matern", 1.0, 10)
        with pytest.raises(ValueError):
            IncrementFamily("slepian", 1.5, 10)
        with pytest.raises(ValueError):
            increment_covariance(IncrementFamily("fbm", 1.0, 10), 0.0)


class TestFisher:
    @pytest.mark.parametrize("n", [10, 50, 200])
    @pytest.mark.parametrize("s", [0.5, 1.0, 1.5])
    @pytest.mark.parametrize("C", [0.5, 3.0])
    def test_cramer_rao_fbm(self, n, s, C):
        I = fisher_information(IncrementFamily("fbm", s, n), C)
        assert I * 2 * C**2 / (n - 1) == pytest.approx(1.0, abs=1e-10)

    def test_reference_value(self):
        assert cramer_rao_bound(IncrementFamily("fbm", 1.0, 101), 3.0) == pytest.approx(0.18, rel=1e-12)

    @pytest.mark.parametrize("s", [0.5, 1.0])
    def test_slepian_same_bound(self, s):
        for n in (10, 50):
            for C in (0.5, 1.5):
                fam = IncrementFamily("slepian", s, n)
                assert fam.linear_in_C(C)
                assert fisher_information(fam, C) == pytest.approx((n - 1) / (2 * C**2), rel=1e-10)

    def test_finite_difference_matches_analytic(self):
        fam = IncrementFamily("fbm", 0.7, 40)
        a = fisher_information(fam, 2.0)
        fd = fisher_information(fam, 2.0, analytic=False)
        assert fd == pytest.approx(a, rel=1e-6)

    def test_inverse_square_scaling(self):
        fam = IncrementFamily("fbm", 1.3, 30)
        assert fisher_information(fam, 1.0) / fisher_information(fam, 4.0) == pytest.approx(16.0)

    def test_slepian_outside_support_uses_finite_difference(self):
        fam = IncrementFamily("slepian", 1.0, 10)
        assert not fam.linear_in_C(2.5)
        assert fisher_information(fam, 2.5) > 0


class TestEfficiency:
    @pytest.mark.parametrize("v,e", [(2.0, 1.0), (4.0, 0.5), (2.5, 0.8)])
    def test_values(self, v, e):
        assert efficiency(v) == pytest.approx(e)

    def test_nonpositive(self):
        with pytest.raises(ValueError):
            efficiency(0.0)
