import itertools

import numpy as np
import pytest
from scipy import stats as sps

from wdncal.errors import StatisticsError
from wdncal.evaluation.stats import shapiro_wilk, significance, signed_rank_null, t_test, wilcoxon_signed_rank


def enumerated_p(x):
    """Two-sided signed-rank p-value by listing all 2^n sign patterns."""
    x = np.asarray(x, dtype=float)
    x = x[x != 0]
    a = np.abs(x)
    ranks = sps.rankdata(a)
    w_obs = ranks[x > 0].sum()
    ws = np.array([ranks[np.array(signs, bool)].sum()
                   for signs in itertools.product([0, 1], repeat=x.size)])
    lower = np.mean(ws <= w_obs + 1e-9)
    upper = np.mean(ws >= w_obs - 1e-9)
    return min(1.0, 2 * min(lower, upper))


class TestWilcoxon:
    def test_matches_enumeration(self, rng):
        for _ in range(100):
            n = int(rng.integers(6, 13))
            x = rng.normal(rng.uniform(-1, 1), 1, n)
            if rng.random() < 0.3:
                x = np.round(x, 1)  # exercise ties and zeros
            if np.count_nonzero(x) < 6:
                continue
            assert wilcoxon_signed_rank(x)[1] == pytest.approx(enumerated_p(x), abs=1e-12)

    def test_all_positive_n8(self):
        stat, p = wilcoxon_signed_rank(np.arange(1, 9) * 0.1)
        assert stat == 0.0
        assert p == pytest.approx(2 / 2 ** 8, abs=1e-15)

    def test_symmetric_sample(self):
        x = np.array([1.0, -1.0, 2.0, -2.0, 3.0, -3.0, 4.0, -4.0])
        assert wilcoxon_signed_rank(x)[1] == pytest.approx(1.0)

    def test_n10_w8(self):
        # negatives carry ranks 1, 3, 4 -> W- = 8
        x = np.array([-1, 2, -3, -4, 5, 6, 7, 8, 9, 10], dtype=float)
        stat, p = wilcoxon_signed_rank(x)
        assert stat == 8.0
        assert p == pytest.approx(enumerated_p(x), abs=1e-15)
        assert p == pytest.approx(sps.wilcoxon(x, method="exact").pvalue, abs=1e-12)

    def test_null_distribution_counts(self):
        counts = signed_rank_null(np.array([2, 4, 6]))
        # 2*W+ over ranks {1,2,3}: sums 0,1,2,3,3,4,5,6 doubled
        expected = np.zeros(13)
        for s in [0, 2, 4, 6, 6, 8, 10, 12]:
            expected[s] += 1
        assert np.array_equal(counts, expected)

    @pytest.mark.parametrize("seed", range(10))
    def test_normal_approximation_against_scipy(self, seed):
        r = np.random.default_rng(seed)
        x = r.normal(0.3, 1, int(r.integers(21, 80)))
        ref = sps.wilcoxon(x, method="approx", correction=True)
        stat, p = wilcoxon_signed_rank(x)
        assert stat == pytest.approx(ref.statistic)
        assert p == pytest.approx(ref.pvalue, rel=1e-9)

    def test_zeros_dropped_and_minimum(self):
        with pytest.raises(StatisticsError):
            wilcoxon_signed_rank([0, 0, 1, 2, 3, 4, 5])
        with pytest.raises(StatisticsError):
            wilcoxon_signed_rank([1, 2, np.nan, 4, 5, 6])


def shapiro_fixtures():
    r = np.random.default_rng(2024)
    out = []
    for k in range(20):
        n = [3, 4, 5, 7, 11, 12, 20, 44, 100, 300][k % 10]
        kind = k // 10
        out.append(r.normal(size=n) if kind == 0 else r.exponential(size=n))
    return out


class TestShapiro:
    @pytest.mark.parametrize("idx", range(20))
    def test_against_scipy(self, idx):
        x = shapiro_fixtures()[idx]
        w, p = shapiro_wilk(x)
        ref = sps.shapiro(x)
        assert w == pytest.approx(ref.statistic, abs=1e-3)
        assert p == pytest.approx(ref.pvalue, abs=1e-3)

    def test_uniform_grid(self):
        # a 50-point grid sits just above 0.05 (scipy agrees: 0.0581); 100 points is rejected
        assert shapiro_wilk(np.linspace(0, 1, 50))[1] == pytest.approx(0.0581, abs=1e-3)
        assert shapiro_wilk(np.linspace(0, 1, 100))[1] < 0.05

    def test_normal_sample_kept(self):
        assert shapiro_wilk(np.random.default_rng(7).normal(size=100))[1] > 0.05

    def test_constant_raises(self):
        with pytest.raises(StatisticsError):
            shapiro_wilk(np.full(10, 2.0))

    def test_size_limits(self):
        with pytest.raises(StatisticsError):
            shapiro_wilk([1.0, 2.0])


class TestGate:
    def test_normal_values_use_t_test(self):
        x = np.random.default_rng(7).normal(0.5, 1, 100)
        rep = significance(x)
        assert rep.test == "t-test"
        ref = sps.ttest_1samp(x, 0.0)
        assert rep.statistic == pytest.approx(ref.statistic) and rep.p_value == pytest.approx(ref.pvalue)

    def test_skewed_values_use_wilcoxon(self):
        x = np.random.default_rng(8).exponential(size=44)
        rep = significance(x)
        assert rep.gate["p_value"] < 0.05
        assert rep.test == "wilcoxon"
        assert rep.to_document()["selected_test"] == "wilcoxon"

    def test_t_test_needs_spread(self):
        with pytest.raises(StatisticsError):
            t_test([1.0, 1.0, 1.0])
