import math

import numpy as np
import pytest

from crtcover.stats import (
    QUANTILE_LEVELS,
    InsufficientTailError,
    Moments,
    ecdf,
    ks_distance,
    summarize,
    survival_tail_slope,
    tail_fit,
    trapezoid_integral,
    z_score,
)


def _brute_ks(a, b):
    pts = np.concatenate([a, b])
    fa = (a[None, :] <= pts[:, None]).mean(axis=1)
    fb = (b[None, :] <= pts[:, None]).mean(axis=1)
    return np.abs(fa - fb).max()


class TestSummarize:
    def test_constant(self):
        s = summarize(np.full(10, 3.5))
        assert s.mean == 3.5 and s.variance == 0 and s.stderr == 0
        assert all(q == 3.5 for q in s.quantiles.values())

    def test_two_values(self):
        s = summarize([0.0, 2.0])
        assert s.mean == 1.0 and s.variance == 2.0 and s.stderr == 1.0
        assert s.quantiles[0.5] == 1.0

    def test_two_pass_oracle(self, rng):
        x = rng.standard_normal(1001) * 1e3 + 1e6
        s = summarize(x)
        mean = sum(x.tolist()) / x.size
        var = sum((v - mean) ** 2 for v in x.tolist()) / (x.size - 1)
        assert s.mean == pytest.approx(mean, rel=1e-14)
        assert s.variance == pytest.approx(var, rel=1e-10)
        assert list(s.quantiles) == list(QUANTILE_LEVELS)
        for lvl, q in s.quantiles.items():
            assert q == pytest.approx(np.percentile(x, 100 * lvl))

    def test_empty(self):
        with pytest.raises(ValueError):
            summarize([])

    def test_as_dict_keys(self):
        d = summarize([1.0, 2.0, 4.0]).as_dict()
        assert set(d) == {"count", "mean", "variance", "stderr", "quantiles"}
        assert "0.5" in d["quantiles"]

    def test_merge(self, rng):
        x = rng.exponential(size=500)
        left, right = Moments.of(x[:123]), Moments.of(x[123:])
        both = left.merge(right)
        whole = Moments.of(x)
        assert both.count == 500
        assert both.mean == pytest.approx(whole.mean, rel=1e-13)
        assert both.variance == pytest.approx(whole.variance, rel=1e-12)
        assert Moments().merge(left) == left and left.merge(Moments()) == left


class TestKs:
    def test_identical(self, rng):
        x = rng.normal(size=200)
        assert ks_distance(x, x) == 0.0

    def test_disjoint(self):
        assert ks_distance([0.0, 1.0], [5.0, 6.0, 7.0]) == 1.0

    def test_brute_force(self, rng):
        for _ in range(20):
            a = rng.integers(0, 10, 30).astype(float)
            b = rng.integers(0, 12, 17).astype(float)
            assert ks_distance(a, b) == pytest.approx(_brute_ks(a, b))

    def test_empty(self):
        with pytest.raises(ValueError):
            ks_distance([], [1.0])

    def test_ecdf(self):
        t = ecdf([3.0, 1.0, 2.0, 2.0], grid=[0.0, 2.0, 5.0])
        assert t.cdf.tolist() == [0.0, 0.75, 1.0]
        assert t.sorted_values.tolist() == [1.0, 2.0, 2.0, 3.0]


class TestTail:
    def test_exponential_slope(self, rng):
        x = rng.exponential(2.0, 100_000)
        assert survival_tail_slope(x, np.arange(1.0, 6.0, 0.5)) == pytest.approx(-1.0, abs=0.05)

    def test_gaussian_is_steeper(self, rng):
        grid = np.arange(1.0, 2.0, 0.1)
        g = np.abs(rng.standard_normal(100_000)) + 1.0
        e = rng.exponential(1.0, 100_000)
        assert survival_tail_slope(g, grid) < survival_tail_slope(e, grid)

    def test_degenerate(self, rng):
        with pytest.raises(InsufficientTailError):
            tail_fit(np.ones(5000), [1.0, 2.0])
        with pytest.raises(InsufficientTailError):
            tail_fit(rng.exponential(size=100), [1.0, 2.0])
        with pytest.raises(InsufficientTailError):
            tail_fit(rng.exponential(size=2000), [50.0, 60.0])

    def test_residuals(self, rng):
        fit = tail_fit(rng.exponential(size=10_000), np.arange(1.0, 4.0, 0.5))
        assert abs(fit.residuals.sum()) < 1e-9


class TestTrapezoid:
    def test_linear_exact(self):
        g = np.array([0.0, 0.3, 1.0, 2.5])
        assert trapezoid_integral(g, 2 * g + 1) == pytest.approx(2.5**2 + 2.5)

    def test_bad_grid(self):
        with pytest.raises(ValueError):
            trapezoid_integral([0.0, 1.0], [1.0])
        with pytest.raises(ValueError):
            trapezoid_integral([0.0, 0.0], [1.0, 1.0])


def test_z_score():
    assert z_score(1.0, 1.0, 0.0) == 0.0
    assert z_score(2.0, 1.0, 0.0) == math.inf
    assert z_score(3.0, 1.0, 0.5) == 4.0
