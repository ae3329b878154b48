import numpy as np
import pytest
from scipy.integrate import quad

from rdglobal.errors import ConfigurationError, DegenerateDataError
from rdglobal.kde_boundary import (
    DensityPilot,
    SidePilot,
    bias_corrected_jump,
    bias_term,
    curvature_jump,
    density_contributions,
    density_multiplier_bootstrap,
    fit_density_fold,
    kde_jump,
    mse_bandwidth,
    mse_bandwidth_from,
    one_sided_density,
    one_sided_kde,
    pilot_estimates,
    pilot_side,
    rademacher,
)
from rdglobal.kernels import boundary_coeffs, curvature_correction_constant, curvature_kernel_dd

# Piecewise density on [-1, 1]: 3/8 (1 + g^2) for g >= 0, 1/2 for g < 0.
# f+(0) = 3/8, f-(0) = 1/2, f''+ = 3/4, f''- = 0; each side has mass 1/2.
A = 3 / 8
JUMP = A - 0.5
CURV_JUMP = 2 * A


def quantile_grid(n):
    """Deterministic sample whose empirical measure tracks the density closely."""
    p = (np.arange(n) + 0.5) / n
    t = np.linspace(0, 1, 200001)
    cdf_plus = A * (t + t**3 / 3)  # mass of [0, t]
    minus = p < 0.5
    g = np.empty(n)
    g[minus] = -1 + 2 * p[minus]
    g[~minus] = np.interp(p[~minus] - 0.5, cdf_plus, t)
    return g


GRID = quantile_grid(400_000)


class TestOneSided:
    def test_linear_density_unbiased_in_expectation(self):
        # Triangular density 1 - |g|: the boundary kernel is exact on linear pieces.
        kc = boundary_coeffs().corrected_kernel
        h = 0.4
        val, _ = quad(lambda u: kc(u) * (1 - h * u), 0, 1, epsabs=1e-12)
        assert val == pytest.approx(1.0, abs=1e-10)

    def test_uniform_sample(self):
        g = np.random.default_rng(0).uniform(-1, 1, 20000)
        # Unconditional one-sided limit of U(-1, 1) is 1/2; SE about 0.02.
        assert one_sided_kde(g, 0.3, "+") == pytest.approx(0.5, abs=0.08)
        assert one_sided_kde(g, 0.3, "-") == pytest.approx(0.5, abs=0.08)

    def test_triangular_sample(self):
        rng = np.random.default_rng(1)
        g = rng.triangular(-1, 0, 1, 20000)
        total = one_sided_kde(g, 0.3, "+") + one_sided_kde(g, 0.3, "-")
        assert total / 2 == pytest.approx(1.0, abs=0.1)

    def test_jump_is_difference_of_sides(self):
        g = np.random.default_rng(2).normal(size=500)
        diff = one_sided_kde(g, 0.5, "+") - one_sided_kde(g, 0.5, "-")
        assert kde_jump(g, 0.5) == pytest.approx(diff, abs=1e-14)

    def test_invalid_bandwidth(self):
        with pytest.raises(ConfigurationError):
            one_sided_kde([0.1], 0.0, "+")
        with pytest.raises(ConfigurationError):
            kde_jump([0.1], -1.0)

    def test_one_sided_density_uniform(self):
        g = np.random.default_rng(3).uniform(-1, 1, 20000)
        assert one_sided_density(g, "+") == pytest.approx(0.5, abs=0.1)


class TestQuantileGridOracle:
    @pytest.mark.parametrize("h", [0.3, 0.6])
    def test_raw_jump_carries_curvature_bias(self, h):
        expected = JUMP + curvature_correction_constant() * h * h * CURV_JUMP
        assert kde_jump(GRID, h) == pytest.approx(expected, abs=2e-3)

    @pytest.mark.parametrize("h", [0.3, 0.6])
    def test_curvature_jump(self, h):
        assert curvature_jump(GRID, h) == pytest.approx(CURV_JUMP, abs=0.02)

    @pytest.mark.parametrize("h", [0.3, 0.6])
    def test_bias_corrected_jump_is_exact_for_quadratic_density(self, h):
        assert bias_corrected_jump(GRID, h) == pytest.approx(JUMP, abs=2e-3)
        assert bias_corrected_jump(GRID, h) == pytest.approx(kde_jump(GRID, h) - bias_term(GRID, h), abs=1e-15)

    def test_pilot_recovers_value_and_curvature(self):
        pilot = pilot_estimates(GRID)
        assert pilot.plus.f == pytest.approx(A, abs=2e-3)
        assert pilot.minus.f == pytest.approx(0.5, abs=2e-3)
        assert pilot.plus.f2 == pytest.approx(CURV_JUMP, abs=0.02)
        assert pilot.minus.f2 == pytest.approx(0.0, abs=0.02)

    def test_rule_window_pilot(self):
        pilot = pilot_estimates(GRID, window="rule")
        assert pilot.plus.f == pytest.approx(A, abs=5e-3)

    def test_contribution_sums_follow_side_attached_centring(self):
        # Each observation carries only its own side's centring terms.
        pilot = pilot_estimates(GRID)
        h, n = 0.4, len(GRID)
        c = density_contributions(GRID, h, pilot)
        plus = GRID >= 0
        c2 = curvature_correction_constant()
        for side, mask, sgn in (("+", plus, 1.0), ("-", ~plus, -1.0)):
            m = mask.sum()
            kde = one_sided_kde(GRID, h, side)
            curv = np.sum(curvature_kernel_dd(GRID[mask] / h)) / (n * h)
            expected = kde - m * pilot.f(side) / n - c2 * (curv - m * h**2 * pilot.f2(side) / n)
            assert sgn * c[mask].sum() == pytest.approx(expected, abs=1e-12)


class TestPilotAndBandwidth:
    def test_bandwidth_formula(self):
        assert mse_bandwidth_from(32.0, 1.0) == pytest.approx(2.0)
        assert mse_bandwidth_from(1.0, 2.0) == pytest.approx(0.25**0.2)

    def test_flagged_without_curvature_jump(self):
        side = SidePilot(f=0.5, f2=1.0, h=1.0)
        bw = mse_bandwidth(DensityPilot(side, side), 1000, 0.7)
        assert bw.flagged and bw.h == 0.7

    def test_clamped(self):
        pilot = DensityPilot(SidePilot(0.5, 1.0, 1.0), SidePilot(0.5, 0.0, 1.0))
        bw = mse_bandwidth(pilot, 10, 0.01)
        assert bw.clamped and not bw.flagged and bw.h == 0.01

    def test_too_few_observations(self):
        g = np.concatenate([np.linspace(0.01, 1, 10), -np.linspace(0.01, 1, 100)])
        with pytest.raises(DegenerateDataError) as info:
            pilot_estimates(g)
        assert info.value.side == "+"

    def test_bad_order_and_window(self):
        with pytest.raises(ConfigurationError):
            pilot_estimates(GRID, order=2)
        with pytest.raises(ConfigurationError):
            pilot_estimates(GRID, window="wide")


class TestBootstrap:
    def test_rademacher(self):
        W = rademacher(50, 40, seed=0)
        assert W.shape == (50, 40)
        assert set(np.unique(W)) == {-1, 1}
        np.testing.assert_array_equal(W, rademacher(50, 40, seed=0))

    def test_se_matches_contribution_norm(self):
        g = np.random.default_rng(4).uniform(-1, 1, 2000)
        pilot = pilot_estimates(g)
        c = density_contributions(g, 0.4, pilot)
        _, se = density_multiplier_bootstrap(g, 0.4, pilot, B=4000, seed=1)
        # Var of sum u_i c_i is sum c_i^2.
        assert se == pytest.approx(np.sqrt(np.sum(c**2)), rel=0.06)

    def test_unit_weights_give_contribution_sums(self):
        g = np.random.default_rng(5).uniform(-1, 1, 300)
        pilot = pilot_estimates(g)
        c = density_contributions(g, 0.5, pilot)
        phi, _ = density_multiplier_bootstrap(g, 0.5, pilot, weights=np.ones((300, 2), dtype=np.int8))
        plus = g >= 0
        np.testing.assert_allclose(phi[0], [c[plus].sum(), -c[~plus].sum()], atol=1e-14)

    def test_needs_two_draws(self):
        g = np.random.default_rng(6).uniform(-1, 1, 300)
        with pytest.raises(ConfigurationError):
            density_multiplier_bootstrap(g, 0.5, pilot_estimates(g), B=1)


class TestFold:
    def test_identities(self):
        g = np.random.default_rng(7).uniform(-1, 1, 1000)
        fit = fit_density_fold(g, n_folds=2)
        assert fit.jump_bc == pytest.approx(fit.jump_raw - fit.bias, abs=1e-15)
        assert fit.n_plus + fit.n_minus == 1000
        full = density_contributions(g, fit.h, fit.pilot)
        np.testing.assert_allclose(fit.contributions, full / 2, atol=1e-15)

    def test_fixed_bandwidth(self):
        g = np.random.default_rng(8).uniform(-1, 1, 500)
        fit = fit_density_fold(g, h=0.25)
        assert fit.h == 0.25
        assert fit.jump_raw == pytest.approx(kde_jump(g, 0.25), abs=1e-15)
        with pytest.raises(ConfigurationError):
            fit_density_fold(g, h=0.0)

    def test_uniform_no_jump(self):
        g = np.random.default_rng(9).uniform(-1, 1, 4000)
        fit = fit_density_fold(g, h=0.4)
        se = np.sqrt(np.sum(fit.contributions**2))
        assert abs(fit.jump_bc) < 4 * se


class TestFormulaInstances:
    def test_single_observation_at_zero(self):
        assert kde_jump([0.0], 1.0) == pytest.approx(boundary_coeffs().alpha1 * 0.75, abs=1e-12)

    def test_single_point_curvature(self):
        assert curvature_kernel_dd(0.0) == pytest.approx(60.0, abs=1e-12)
        assert curvature_jump([0.0], 1.0) == pytest.approx(60.0, abs=1e-12)

    def test_mirrored_data_cancel(self):
        g = np.random.default_rng(10).uniform(0.01, 1, 200)
        both = np.concatenate([g, -g])
        assert kde_jump(both, 0.5) == pytest.approx(0.0, abs=1e-12)

    def test_points_outside_support(self):
        g = np.array([-3.0, -2.0, 2.5, 4.0])
        assert kde_jump(g, 1.0) == 0.0
        assert curvature_jump(g, 1.0) == 0.0
        assert bias_corrected_jump(g, 1.0) == kde_jump(g, 1.0)

    def test_antisymmetry(self):
        g = np.random.default_rng(11).normal(size=300)
        assert kde_jump(-g, 0.7) == pytest.approx(-kde_jump(g, 0.7), abs=1e-13)
        assert bias_corrected_jump(-g, 0.7) == pytest.approx(-bias_corrected_jump(g, 0.7), abs=1e-12)

    def test_linear_in_subsamples(self):
        g = np.random.default_rng(12).normal(size=301)
        a, b = g[:120], g[120:]
        combined = (len(a) * bias_corrected_jump(a, 0.6) + len(b) * bias_corrected_jump(b, 0.6)) / len(g)
        assert combined == pytest.approx(bias_corrected_jump(g, 0.6), abs=1e-12)

    def test_bandwidth_example(self):
        assert mse_bandwidth_from(0.01, 1.0) == pytest.approx(0.3981, abs=1e-4)

    def test_bandwidth_scales_with_data(self):
        g = np.random.default_rng(13).normal(size=3000)
        c = 2.5
        p1, p2 = pilot_estimates(g), pilot_estimates(c * g)
        assert p2.plus.f == pytest.approx(p1.plus.f / c, rel=1e-8)
        assert p2.plus.f2 == pytest.approx(p1.plus.f2 / c**3, rel=1e-8)
        h1 = mse_bandwidth(p1, 3000, 10.0).h
        assert mse_bandwidth(p2, 3000, 10.0 * c).h == pytest.approx(c * h1, rel=1e-8)

    def test_thirty_points_suffice(self):
        g = np.concatenate([np.linspace(0.01, 1, 30), -np.linspace(0.01, 1, 30)])
        pilot = pilot_estimates(g)
        assert pilot.plus.f >= 0

    def test_se_positive(self):
        g = np.random.default_rng(14).uniform(-1, 1, 500)
        assert density_multiplier_bootstrap(g, 0.5, pilot_estimates(g), B=200, seed=0)[1] > 0


class TestPilotAccuracy:
    # Single-draw SDs at n=5000: f about 0.075, f'' about 3.3 (uniform); check means over draws.
    DRAWS = 40

    def _pilots(self, sampler):
        out = np.array([[p.f, p.f2] for p in (pilot_side(sampler(np.random.default_rng(s)), 5000) for s in range(self.DRAWS))])
        return out.mean(axis=0), out.std(axis=0, ddof=1) / np.sqrt(self.DRAWS)

    def test_uniform(self):
        mean, se = self._pilots(lambda r: r.uniform(0, 1, 5000))
        assert abs(mean[0] - 1.0) < 4 * se[0]
        assert abs(mean[1]) < 4 * se[1]

    def test_triangular(self):
        mean, se = self._pilots(lambda r: r.triangular(0, 0, 1, 5000))
        assert abs(mean[0] - 2.0) < 4 * se[0]
