import numpy as np
import pytest
from scipy.integrate import dblquad, quad

from rdglobal.errors import ConfigurationError
from rdglobal.forest_density import DensityParams
from rdglobal.forest_regression import ForestParams
from rdglobal.simulation import DGP_NAMES, DgpSpec, McConfig, generate, piecewise_mean, run_monte_carlo

TINY = McConfig(bootstrap=99, forest=ForestParams(num_trees=15), density_forest=DensityParams(num_trees=5))


def m_scalar(x1, x2):
    return float(piecewise_mean(np.array([[x1, x2]]))[0])


class TestDesign:
    def test_piecewise_values(self):
        pts = np.array([[0.5, 0.5], [0.5, -0.5], [-0.5, 0.5], [-0.5, -0.5], [0.9, 0.0]])
        np.testing.assert_allclose(piecewise_mean(pts), [1 / 3, 1 / 6, 1 / 6, 1 / 3, 0.3], atol=1e-15)

    def test_integrates_to_one(self):
        total = sum(
            dblquad(m_scalar, a, a + 1, b, b + 1, epsabs=1e-10)[0] for a in (-1.0, 0.0) for b in (-1.0, 0.0)
        )
        assert total == pytest.approx(1.0, abs=1e-8)

    def test_truths_from_boundary_integrals(self):
        eps = 1e-12
        jump = lambda t: m_scalar(t, eps) - m_scalar(t, -eps)  # noqa: E731
        avg_abs = quad(lambda t: abs(jump(t)), 0, 1, points=[0.5])[0]
        # Uniform X: CEF estimand is the average sign-normalised jump over the boundary.
        assert generate(DgpSpec("het_dgp1", 10, seed=0)).truth == pytest.approx(avg_abs, abs=1e-8)
        # Density design: the signed-distance jump integrates over both unit segments.
        assert generate(DgpSpec("dens_dgp1", 10, seed=0)).truth == pytest.approx(2 * avg_abs, abs=1e-8)

    def test_sign_oracle(self):
        sim = generate(DgpSpec("het_dgp1", 10, seed=0))
        np.testing.assert_array_equal(sim.sign_oracle(np.array([[0.2, 0.0], [0.7, 0.0], [0.0, 0.5]])), [0, 1, 1])
        sim2 = generate(DgpSpec("het_dgp2", 10, seed=0))
        np.testing.assert_array_equal(sim2.sign_oracle(np.array([[0.2, 0.0]])), [1])

    def test_noise_moments(self):
        sim = generate(DgpSpec("het_dgp2", 20000, seed=1))
        X, Y = sim.data.X, sim.data.Y
        resid = Y - (X[:, 0] + X[:, 1]) / 3
        assert resid.mean() == pytest.approx(0.0, abs=4 * np.sqrt(0.05 / 20000))
        assert resid.var() == pytest.approx(0.05, rel=0.05)

    def test_density_design_quadrant_mass(self):
        n = 20000
        X = generate(DgpSpec("dens_dgp1", n, seed=2)).data.X
        share = (X >= 0).all(axis=1).mean()
        assert abs(share - 1 / 3) < 3 * np.sqrt((1 / 3) * (2 / 3) / n)
        assert generate(DgpSpec("dens_dgp1", n, seed=2)).data.Y is None

    def test_seeded_draws_repeat(self):
        a = generate(DgpSpec("intro_quadrant", 50, seed=3)).data
        b = generate(DgpSpec("intro_quadrant", 50, seed=3)).data
        np.testing.assert_array_equal(a.X, b.X)
        np.testing.assert_array_equal(a.Y, b.Y)

    @pytest.mark.parametrize("kwargs", [dict(name="dgp3"), dict(n=0), dict(noise_sd=-1.0)])
    def test_invalid_spec(self, kwargs):
        args = dict(name="het_dgp1", n=10) | kwargs
        with pytest.raises(ConfigurationError):
            DgpSpec(**args)

    def test_names(self):
        assert set(DGP_NAMES) == {"intro_quadrant", "het_dgp1", "het_dgp2", "dens_dgp1", "dens_dgp2"}


class TestMonteCarlo:
    def test_single_replication(self):
        rep = run_monte_carlo(DgpSpec("het_dgp2", 400), TINY, R=1, master_seed=0)
        assert rep.n_completed + rep.n_failed == 1
        assert rep.test == "heterogeneity"

    def test_deterministic_and_prefix_stable(self):
        spec = DgpSpec("het_dgp1", 400)
        a = run_monte_carlo(spec, TINY, R=3, master_seed=5)
        b = run_monte_carlo(spec, TINY, R=3, master_seed=5)
        c = run_monte_carlo(spec, TINY, R=2, master_seed=5)
        assert a == b
        assert a.records[:2] == c.records

    def test_parallel_matches_serial(self):
        pytest.importorskip("joblib")
        spec = DgpSpec("dens_dgp2", 400)
        a = run_monte_carlo(spec, TINY, R=2, master_seed=1)
        b = run_monte_carlo(spec, TINY, R=2, master_seed=1, n_jobs=2)
        assert a.records == b.records

    def test_distance_rd_and_oracle(self):
        spec = DgpSpec("het_dgp1", 400)
        rep = run_monte_carlo(spec, McConfig(test="distance_rd", bootstrap=99), R=1, master_seed=0)
        assert rep.records[0]["alternative"] == "two-sided"
        orc = run_monte_carlo(spec, McConfig(oracle=True, bootstrap=99, forest=ForestParams(num_trees=5)), R=1)
        assert orc.n_completed == 1

    def test_density_design_has_no_outcome_for_cef_test(self):
        rep = run_monte_carlo(DgpSpec("dens_dgp2", 200), McConfig(test="heterogeneity", bootstrap=99), R=1)
        assert rep.n_failed == 1 and "no outcome" in rep.failures[0]["error"]

    def test_invalid(self):
        with pytest.raises(ConfigurationError):
            McConfig(test="bogus")
        with pytest.raises(ConfigurationError):
            run_monte_carlo(DgpSpec("het_dgp1", 100), TINY, R=0)


class TestMoments:
    def test_noiseless_design(self):
        sim = generate(DgpSpec("het_dgp2", 100, noise_sd=0.0, seed=0))
        X = sim.data.X
        np.testing.assert_array_equal(sim.data.Y, (X[:, 0] + X[:, 1]) / 3.0)

    def test_outcome_moments(self):
        n = 40000
        Y = generate(DgpSpec("het_dgp2", n, seed=7)).data.Y
        var = 2 * (1 / 3) / 9 + 0.05
        assert abs(Y.mean()) < 4 * np.sqrt(var / n)
        # SE of a sample variance for near-normal data is about var * sqrt(2/n).
        assert abs(Y.var() - var) < 4 * var * np.sqrt(2 / n)
