import math

import numpy as np
import pytest

from crtcover.besq import (
    Clock,
    besq_laplace_transform,
    besq_transition,
    euler_maruyama_besq,
    euler_maruyama_terminal,
    tree_hits_zero,
    tree_indexed_besq,
    zero_cluster_sizes,
    zero_statistics,
)
from crtcover.crt import RealTree, reduced_tree_from_excursion, sample_excursion_conditioned
from crtcover.stats import ks_distance


def _tree(parent, lengths):
    parent = np.asarray(parent, dtype=np.int64)
    lengths = np.asarray(lengths, dtype=float)
    height = np.zeros(parent.size)
    for i in range(1, parent.size):
        height[i] = height[parent[i]] + lengths[i]
    return RealTree(parent, lengths, height)


def _mean_var_z(draws, mean, var):
    k = draws.size
    z_mean = (draws.mean() - mean) / math.sqrt(var / k)
    m4 = np.mean((draws - draws.mean()) ** 4)
    z_var = (draws.var(ddof=1) - var) / math.sqrt((m4 - var * var) / k)
    return z_mean, z_var


class TestTransition:
    def test_zero_stays_zero(self, rng):
        assert np.all(besq_transition(np.zeros(1000), 1.0, 0.0, rng) == 0)

    def test_absorption_probability(self, rng):
        draws = besq_transition(np.ones(100_000), 1.0, 0.0, rng)
        p = math.exp(-0.5)
        assert abs(np.mean(draws == 0) - p) < 4 * math.sqrt(p * (1 - p) / draws.size)

    @pytest.mark.parametrize("x,t,dim", [(1.0, 1.0, 0.0), (2.5, 0.3, 0.0), (1.0, 1.0, 2.0),
                                         (0.0, 2.0, 2.0), (0.7, 1.5, 3.5)])
    def test_mean_and_variance(self, x, t, dim, rng):
        draws = besq_transition(np.full(100_000, x), t, dim, rng)
        z_mean, z_var = _mean_var_z(draws, x + dim * t, 4 * t * x + 2 * dim * t * t)
        assert abs(z_mean) < 4 and abs(z_var) < 4

    def test_laplace_transform(self, rng):
        draws = besq_transition(np.full(100_000, 1.3), 0.8, 2.0, rng)
        for lam in (0.2, 1.0, 3.0):
            vals = np.exp(-lam * draws)
            exact = besq_laplace_transform(lam, 1.3, 0.8, 2.0)
            assert abs(vals.mean() - exact) < 4 * vals.std() / math.sqrt(vals.size)

    def test_scalar_and_errors(self, rng):
        assert isinstance(besq_transition(1.0, 1.0, 0.0, rng), float)
        with pytest.raises(ValueError):
            besq_transition(1.0, 0.0, 0.0, rng)
        with pytest.raises(ValueError):
            besq_transition(-1.0, 1.0, 0.0, rng)
        with pytest.raises(ValueError):
            besq_transition(1.0, 1.0, -2.0, rng)


class TestEulerOracle:
    def test_zero_start(self, rng):
        assert np.all(euler_maruyama_besq(0.0, 0.01, 1.0, 0.0, rng) == 0)

    def test_path_shape_and_absorption(self, rng):
        path = euler_maruyama_besq(0.2, 1e-3, 2.0, 0.0, rng)
        assert path.size == 2001 and path[0] == 0.2
        zero = np.flatnonzero(path == 0)
        if zero.size:
            assert np.all(path[zero[0]:] == 0)

    def test_drift(self, rng):
        end = euler_maruyama_terminal(1.0, 1e-3, 1.0, 2.0, 20_000, rng)
        assert abs(end.mean() - 3.0) < 4 * end.std() / math.sqrt(end.size)

    @pytest.mark.parametrize("dim", [0.0, 2.0])
    def test_matches_exact_sampler(self, dim, rng):
        em = euler_maruyama_terminal(1.0, 1e-3, 1.0, dim, 10_000, rng)
        exact = besq_transition(np.ones(100_000), 1.0, dim, rng)
        assert ks_distance(em, exact) < 0.03

    def test_bad_step(self, rng):
        with pytest.raises(ValueError):
            euler_maruyama_terminal(1.0, 2.0, 1.0, 0.0, 10, rng)


class TestTreeField:
    def test_zero_start(self, rng):
        t = _tree([-1, 0, 0, 1], [0, 1.0, 0.5, 0.3])
        f = tree_indexed_besq(t, 0.0, "metric", rng)
        assert np.all(f.values == 0)
        assert zero_statistics(f) == (True, 1.0)

    def test_single_edge_marginal(self, rng):
        t = _tree([-1, 0], [0, 0.7])
        vals = np.array([tree_indexed_besq(t, 1.0, Clock.METRIC_DISTANCE, rng).values[1]
                         for _ in range(20_000)])
        ref = besq_transition(np.ones(20_000), 0.7, 0.0, rng)
        # two-sample KS critical value at level 1e-3
        assert ks_distance(vals, ref) < 1.95 * math.sqrt(2 / 20_000)

    def test_half_resistance_clock(self, rng):
        t = _tree([-1, 0], [0, 2.0])
        vals = np.array([tree_indexed_besq(t, 1.0, "half_resistance", rng).values[1]
                         for _ in range(50_000)])
        p = math.exp(-1.0 / (2 * 1.0))  # clock time 2.0 * 0.5
        assert abs(np.mean(vals == 0) - p) < 4 * math.sqrt(p * (1 - p) / vals.size)

    def test_absorption_descendant_closed(self, rng):
        ex = sample_excursion_conditioned(512, rng)
        tree = reduced_tree_from_excursion(ex)
        for _ in range(50):
            f = tree_indexed_besq(tree, 0.3, "metric", rng)
            zero = f.values == 0
            assert np.all(zero[1:] >= zero[tree.parent[1:]])

    def test_conditional_independence(self, rng):
        # two leaves below one branch point: uncorrelated given the branch value
        t = _tree([-1, 0, 1, 1], [0, 0.5, 0.4, 0.4])
        vals = np.array([tree_indexed_besq(t, 1.0, "metric", rng).values for _ in range(40_000)])
        b, a, c = vals[:, 1], vals[:, 2], vals[:, 3]
        # residuals after removing the conditional mean (= branch value for BESQ^0)
        ra, rc = a - b, c - b
        prod = ra * rc
        assert abs(prod.mean()) < 4 * prod.std() / math.sqrt(prod.size)

    def test_additivity(self, rng):
        t = _tree([-1, 0, 1, 1], [0, 0.3, 0.6, 0.2])
        reps = 40_000
        s = np.array([tree_indexed_besq(t, 0.5, "metric", rng, dim=1.0).values
                      + tree_indexed_besq(t, 0.7, "metric", rng, dim=2.0).values
                      for _ in range(reps)])
        one = np.array([tree_indexed_besq(t, 1.2, "metric", rng, dim=3.0).values
                        for _ in range(reps)])
        for node in range(1, 4):
            a, b = s[:, node], one[:, node]
            se = math.sqrt(a.var() / reps + b.var() / reps)
            assert abs(a.mean() - b.mean()) < 4 * se
            se2 = math.sqrt((a**2).var() / reps + (b**2).var() / reps)
            assert abs((a**2).mean() - (b**2).mean()) < 4 * se2

    def test_markov_resampling(self, rng):
        # redraw the subtree below node 1 from its value: node marginals unchanged
        t = _tree([-1, 0, 1, 2], [0, 0.4, 0.3, 0.5])
        sub = _tree([-1, 0, 1], [0, 0.3, 0.5])
        reps = 40_000
        full = np.array([tree_indexed_besq(t, 1.0, "metric", rng).values for _ in range(reps)])
        mixed = np.empty_like(full)
        for r in range(reps):
            mixed[r] = tree_indexed_besq(t, 1.0, "metric", rng).values
            mixed[r, 1:] = tree_indexed_besq(sub, mixed[r, 1], "metric", rng).values
        for node in (2, 3):
            a, b = full[:, node], mixed[:, node]
            assert abs(a.mean() - b.mean()) < 4 * math.sqrt(a.var() / reps + b.var() / reps)

    def test_bad_inputs(self, rng):
        t = _tree([-1, 0], [0, 1.0])
        with pytest.raises(ValueError):
            tree_indexed_besq(t, -1.0, "metric", rng)
        with pytest.raises(ValueError):
            tree_indexed_besq(t, 1.0, "seconds", rng)


class TestZeroStatistics:
    def test_all_positive(self, rng):
        t = _tree([-1, 0, 1], [0, 1e-9, 1e-9])
        f = tree_indexed_besq(t, 50.0, "metric", rng)
        assert zero_statistics(f) == (False, 0.0)
        assert zero_cluster_sizes(f).size == 0

    def test_hits_zero_shortcut(self, rng):
        assert tree_hits_zero(_tree([-1, 0], [0, 1.0]), 0.0, "metric", rng)
        t = _tree([-1, 0], [0, 1.0])
        hits = np.mean([tree_hits_zero(t, 1.0, "metric", rng) for _ in range(20_000)])
        p = math.exp(-0.5)
        assert abs(hits - p) < 4 * math.sqrt(p * (1 - p) / 20_000)

    def test_clusters_partition_zero_mass(self, rng):
        ex = sample_excursion_conditioned(2048, rng)
        tree = reduced_tree_from_excursion(ex)
        for _ in range(20):
            f = tree_indexed_besq(tree, 0.2, "metric", rng)
            hit, mass = zero_statistics(f)
            sizes = zero_cluster_sizes(f)
            assert hit == (sizes.size > 0)
            assert sizes.sum() / tree.weight.sum() == pytest.approx(mass)

    def test_zero_clusters_grow_with_resolution(self):
        # given a zero, the zero set is a whole subtree, not an isolated grid point
        medians = []
        for m in (2**8, 2**11, 2**14):
            rng = np.random.default_rng(m)
            sizes = []
            while len(sizes) < 150:
                tree = reduced_tree_from_excursion(sample_excursion_conditioned(m, rng))
                f = tree_indexed_besq(tree, 0.5, "metric", rng)
                c = zero_cluster_sizes(f)
                if c.size:
                    sizes.append(c.max())
            medians.append(np.median(sizes))
        assert medians[0] < medians[1] < medians[2]
