import numpy as np
import pytest
from scipy.integrate import quad

from rdglobal.kernels import (
    EPANECHNIKOV,
    boundary_bias_constant,
    boundary_coeffs,
    boundary_variance_constant,
    curvature_correction_constant,
    curvature_kernel,
    curvature_kernel_dd,
    local_poly_kernel_constant,
    moment_matrix,
)

TOL = 1e-10


def integrate(f, lo, hi):
    kinks = [x for x in (-1.0, 0.0, 1.0) if lo < x < hi] or None
    val, _ = quad(f, lo, hi, epsabs=1e-12, epsrel=1e-12, limit=200, points=kinks)
    return val


class TestEpanechnikov:
    def test_half_moments(self):
        assert EPANECHNIKOV.moment(0, 0, 1) == pytest.approx(0.5, abs=TOL)
        assert EPANECHNIKOV.moment(1, 0, 1) == pytest.approx(3 / 16, abs=TOL)
        assert EPANECHNIKOV.moment(2, 0, 1) == pytest.approx(0.1, abs=TOL)

    def test_integrates_to_one(self):
        assert EPANECHNIKOV.moment(0, -1, 1) == pytest.approx(1.0, abs=TOL)

    @pytest.mark.parametrize("k", range(7))
    @pytest.mark.parametrize("lo,hi", [(0, 1), (-1, 0), (-0.3, 0.7), (-2, 2)])
    def test_moments_match_quadrature(self, k, lo, hi):
        ref = integrate(lambda u: u**k * EPANECHNIKOV(u), lo, hi)
        assert EPANECHNIKOV.moment(k, lo, hi) == pytest.approx(ref, abs=TOL)
        ref2 = integrate(lambda u: u**k * EPANECHNIKOV(u) ** 2, lo, hi)
        assert EPANECHNIKOV.sq_moment(k, lo, hi) == pytest.approx(ref2, abs=TOL)

    def test_zero_outside_support(self):
        assert np.all(EPANECHNIKOV(np.array([-1.5, 1.0001, 3.0])) == 0)


class TestMomentMatrix:
    @pytest.mark.parametrize("p", [0, 1, 2, 3])
    @pytest.mark.parametrize("side", ["+", "-"])
    def test_selector_identity(self, p, side):
        m = moment_matrix(p, side)
        sel = m.inverse[0] @ m.entries
        np.testing.assert_allclose(sel, np.eye(p + 1)[0], atol=TOL)

    def test_minus_side_mirrors_plus(self):
        plus, minus = moment_matrix(2, "+").entries, moment_matrix(2, "-").entries
        signs = np.array([[(-1) ** (j + k) for k in range(3)] for j in range(3)])
        np.testing.assert_allclose(minus, plus * signs, atol=TOL)

    def test_rejects_unsupported_order(self):
        with pytest.raises(ValueError):
            moment_matrix(4)
        with pytest.raises(ValueError):
            moment_matrix(1, "x")


class TestBoundaryKernel:
    def test_coefficients(self):
        bc = boundary_coeffs()
        assert bc.alpha1 == pytest.approx(6.736842105263161, abs=TOL)
        assert bc.alpha2 == pytest.approx(-12.63157894736843, abs=TOL)

    def test_first_order_unbiased(self):
        kc = boundary_coeffs().corrected_kernel
        assert integrate(kc, 0, 1) == pytest.approx(1.0, abs=TOL)
        assert integrate(lambda u: u * kc(u), 0, 1) == pytest.approx(0.0, abs=TOL)

    def test_symmetric_in_u(self):
        kc = boundary_coeffs().corrected_kernel
        u = np.linspace(0, 1, 11)
        np.testing.assert_array_equal(kc(u), kc(-u))

    def test_bias_and_variance_constants(self):
        kc = boundary_coeffs().corrected_kernel
        c2 = integrate(lambda u: u**2 * kc(u) / 2, 0, 1)
        assert curvature_correction_constant() == pytest.approx(c2, abs=TOL)
        assert curvature_correction_constant() == pytest.approx(-0.05789473684210544, abs=TOL)
        assert boundary_bias_constant() == pytest.approx(2 * c2, abs=TOL)
        var = integrate(lambda u: kc(u) ** 2, 0, 1)
        assert boundary_variance_constant() == pytest.approx(var, abs=TOL)
        assert boundary_variance_constant() == pytest.approx(4.497981796596758, abs=TOL)


class TestCurvatureKernel:
    def test_integral_over_support(self):
        # L integrates to 2 over [-1, 1], i.e. 1 per side.
        assert integrate(curvature_kernel, -1, 1) == pytest.approx(2.0, abs=TOL)

    def test_second_derivative_moments(self):
        assert integrate(curvature_kernel_dd, 0, 1) == pytest.approx(0.0, abs=TOL)
        assert integrate(lambda u: u * curvature_kernel_dd(u), 0, 1) == pytest.approx(0.0, abs=TOL)
        assert integrate(lambda u: u**2 * curvature_kernel_dd(u), 0, 1) == pytest.approx(2.0, abs=TOL)

    def test_dd_matches_finite_difference(self):
        u = np.linspace(0.05, 0.95, 19)
        eps = 1e-4
        fd = (curvature_kernel(u + eps) - 2 * curvature_kernel(u) + curvature_kernel(u - eps)) / eps**2
        np.testing.assert_allclose(curvature_kernel_dd(u), fd, atol=1e-5)


class TestLocalPolyConstant:
    def test_local_linear_value(self):
        assert local_poly_kernel_constant(1) == pytest.approx(3.199896318547205, abs=1e-9)

    @pytest.mark.parametrize("p", [0, 1, 2])
    def test_constant_minimises_amse(self, p):
        # AMSE(h) = B^2 h^{2(p+1)} + V / h with unit data ingredients.
        from math import factorial

        gi = moment_matrix(p, "+").inverse
        delta = np.array([[EPANECHNIKOV.sq_moment(j + k, 0, 1) for k in range(p + 1)] for j in range(p + 1)])
        theta = np.array([EPANECHNIKOV.moment(p + 1 + j, 0, 1) for j in range(p + 1)])
        V = (gi @ delta @ gi)[0, 0]
        B = (gi @ theta)[0] / factorial(p + 1)
        hs = np.linspace(0.2, 6, 200001)
        amse = B**2 * hs ** (2 * (p + 1)) + V / hs
        assert hs[np.argmin(amse)] == pytest.approx(local_poly_kernel_constant(p), rel=1e-4)
