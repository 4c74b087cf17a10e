"""Hotelling T^2, the F distribution and PCA, checked against scipy and Monte-Carlo."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy import special, stats as sps

from nomore.errors import NumericalSingularityError
from nomore.stats import HotellingResult, betainc_reg, f_cdf, f_sf, hotelling_one_sample, pca, scatter_ratio


class TestIncompleteBeta:
    def test_grid_against_scipy(self):
        worst = 0.0
        for a in (0.5, 1.0, 2.5, 10.0, 100.0, 150.0, 5e5):
            for b in (0.5, 1.0, 3.0, 50.0, 2e3, 5e5):
                for x in np.linspace(0, 1, 41):
                    worst = max(worst, abs(betainc_reg(a, b, x) - special.betainc(a, b, x)))
        assert worst < 1e-10

    @settings(max_examples=200, deadline=None)
    @given(
        st.floats(0.05, 500), st.floats(0.05, 500), st.floats(0.0, 1.0),
    )
    def test_random_against_scipy(self, a, b, x):
        assert abs(betainc_reg(a, b, x) - special.betainc(a, b, x)) < 1e-10

    def test_endpoints(self):
        assert betainc_reg(2, 3, 0.0) == 0.0
        assert betainc_reg(2, 3, 1.0) == 1.0

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            betainc_reg(1, 1, 1.5)
        with pytest.raises(ValueError):
            betainc_reg(-1, 1, 0.5)


class TestFDistribution:
    def test_zero(self):
        assert f_cdf(0.0, 3, 7) == 0.0
        assert f_sf(0.0, 3, 7) == 1.0

    @pytest.mark.parametrize("k", [1, 2, 7, 30])
    def test_equal_df_median(self, k):
        assert f_cdf(1.0, k, k) == pytest.approx(0.5, abs=1e-12)

    def test_chi_square_limit(self):
        # F(1, df2) -> chi2(1) as df2 grows; the gap is O(1/df2)
        assert f_cdf(3.8415, 1, 1e6) == pytest.approx(0.95, abs=1e-5)
        assert f_cdf(sps.chi2.ppf(0.95, 1), 1, 1e6) == pytest.approx(0.95, abs=2e-6)

    def test_large_df_reference_values(self):
        # 40-digit values of I_z(df1/2, df2/2); scipy itself drifts by ~1e-10 here
        assert abs(f_cdf(1.0, 1, 1e6) - 0.6826892501664219) < 1e-13
        assert abs(f_cdf(0.5, 8, 1e6) - 0.1428769003942183) < 1e-13
        assert abs(f_cdf(1.0, 1000, 1e6) - 0.5059382322326007) < 1e-13

    def test_against_scipy(self):
        for d1, d2 in [(1, 1), (3, 10), (5, 195), (64, 716), (2, 1e4)]:
            for x in (0.01, 0.5, 1.0, 2.0, 10.0, 100.0):
                assert abs(f_cdf(x, d1, d2) - sps.f.cdf(x, d1, d2)) < 1e-10
                assert abs(f_sf(x, d1, d2) - sps.f.sf(x, d1, d2)) < 1e-10

    def test_small_tail_keeps_precision(self):
        # the survival function is computed directly, not as 1 - cdf
        p = f_sf(200.0, 5, 195)
        assert 0 < p < 1e-60
        assert p == pytest.approx(sps.f.sf(200.0, 5, 195), rel=1e-8)

    @pytest.mark.parametrize("x", [np.nan, np.inf, -1.0])
    def test_bad_x(self, x):
        with pytest.raises(ValueError):
            f_cdf(x, 2, 3)


class TestHotelling:
    def test_symmetric_pair(self):
        r = hotelling_one_sample(np.array([[-1.0], [1.0]]))
        assert r.t2 == 0.0 and r.p_value == 1.0

    def test_reduces_to_t_test(self):
        x = np.random.default_rng(0).normal(0.5, 1.0, 100)
        r = hotelling_one_sample(x[:, None])
        t = sps.ttest_1samp(x, 0.0)
        assert abs(r.t2 - t.statistic ** 2) < 1e-10
        assert abs(r.p_value - t.pvalue) < 1e-10

    def test_fields(self):
        x = np.random.default_rng(1).standard_normal((40, 3))
        r = hotelling_one_sample(x, mu0=np.full(3, 0.1))
        assert (r.df1, r.df2, r.n, r.d) == (3, 37, 40, 3)
        assert r.f_stat == pytest.approx(r.t2 * 37 / (3 * 39))
        xbar = x.mean(0) - 0.1
        ref = 40 * xbar @ np.linalg.solve(np.cov(x, rowvar=False), xbar)
        assert r.t2 == pytest.approx(ref, rel=1e-10)
        assert 0 <= r.p_value <= 1

    def test_affine_invariance(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((50, 4)) + 0.2
        a = rng.standard_normal((4, 4)) + 3 * np.eye(4)
        c = rng.standard_normal(4)
        mu0 = np.full(4, 0.1)
        r1 = hotelling_one_sample(x, mu0)
        r2 = hotelling_one_sample(x @ a.T + c, a @ mu0 + c)
        assert abs(r1.t2 - r2.t2) / r1.t2 < 1e-8

    def test_p_value_monotone_in_shift(self):
        z = np.random.default_rng(3).standard_normal((30, 2))
        z -= z.mean(0)
        ps = [hotelling_one_sample(z + s * np.array([1.0, 0.5])).p_value for s in np.linspace(0, 2, 21)]
        assert all(b <= a for a, b in zip(ps, ps[1:]))

    @pytest.mark.parametrize("p,decision", [(0.5, "accept"), (0.03, "reject (p<0.05)"), (0.001, "reject (p<0.01)")])
    def test_decisions(self, p, decision):
        assert HotellingResult(1.0, 1.0, 2, 10, p, 12, 2).decision() == decision

    def test_large_shift_is_highly_significant(self):
        r = hotelling_one_sample(np.random.default_rng(4).standard_normal((200, 2)) + 1.0)
        assert r.highly_significant and r.significant

    def test_requires_more_samples_than_dims(self):
        with pytest.raises(ValueError):
            hotelling_one_sample(np.zeros((3, 3)))

    def test_singular_covariance(self):
        rng = np.random.default_rng(5)
        a = rng.standard_normal((20, 2))
        x = np.column_stack([a, a[:, 0] + a[:, 1]])  # rank 2 in 3 dims
        with pytest.raises(NumericalSingularityError):
            hotelling_one_sample(x)
        r = hotelling_one_sample(x, pseudo=True)
        assert r.pseudo and np.isfinite(r.t2)

    def test_calibration_small(self):
        rng = np.random.default_rng(6)
        ps = np.array([hotelling_one_sample(rng.standard_normal((60, 3))).p_value for _ in range(500)])
        assert sps.kstest(ps, "uniform").statistic < 0.07
        assert 0.02 <= np.mean(ps < 0.05) <= 0.08


class TestPca:
    def test_collinear(self):
        t = np.linspace(-2, 2, 9)
        r = pca(np.column_stack([t, t]) + 1.0, 2)
        assert_allclose(np.abs(r.components[:, 0]), [2 ** -0.5, 2 ** -0.5], atol=1e-12)
        assert r.explained_variance[1] == pytest.approx(0.0, abs=1e-12)

    def test_isotropic(self):
        ev = pca(np.random.default_rng(7).standard_normal((10_000, 2)), 2).explained_variance
        assert ev[0] / ev[1] < 1.05

    def test_full_rank_reconstruction(self):
        x = np.random.default_rng(8).standard_normal((30, 5)) @ np.diag([5, 3, 1, 0.5, 0.1])
        r = pca(x, 5)
        assert_allclose(r.reconstruct(r.project(x)), x - x.mean(0), atol=1e-8)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(2, 40), st.integers(1, 8), st.integers(0, 2 ** 32 - 1))
    def test_orthonormal_and_sorted(self, n, d, seed):
        x = np.random.default_rng(seed).standard_normal((n, d)) * np.arange(1, d + 1)
        r = pca(x, d)
        assert_allclose(r.components.T @ r.components, np.eye(d), atol=1e-10)
        assert np.all(np.diff(r.explained_variance) <= 1e-10)
        assert np.all(r.explained_variance >= 0)

    def test_matches_covariance_eigenvalues(self):
        x = np.random.default_rng(9).standard_normal((100, 4)) @ np.random.default_rng(10).standard_normal((4, 4))
        ev = pca(x, 4).explained_variance
        assert_allclose(ev, np.sort(np.linalg.eigvalsh(np.cov(x, rowvar=False)))[::-1], rtol=1e-10)

    def test_bad_k(self):
        with pytest.raises(ValueError):
            pca(np.zeros((5, 2)), 3)


def test_scatter_ratio_decomposes_total():
    rng = np.random.default_rng(11)
    z = rng.standard_normal((60, 2)) + np.repeat(np.eye(2)[[0, 1, 0]] * 4, 20, axis=0)
    labels = np.repeat([0, 1, 2], 20)
    between, within = scatter_ratio(z, labels)
    total = np.sum((z - z.mean(0)) ** 2)
    assert between + within == pytest.approx(total, rel=1e-12)
