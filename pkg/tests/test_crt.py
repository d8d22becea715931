import itertools
import math

import numpy as np
import pytest

from crtcover.besq import tree_indexed_besq, zero_cluster_sizes
from crtcover.crt import (
    SNAKE_INTEGRAL,
    ExcursionPath,
    RealTree,
    d_zeta,
    estimate_zero_hit_probability,
    expand_component,
    reduced_tree_from_excursion,
    sample_excursion_conditioned,
    sample_poisson_components,
    sample_spine_atoms,
    sample_spine_atoms_batch,
    sample_williams_skeleton,
    snake_hit_probabilities,
    snake_integral_estimate,
    spine_atom_mean_count,
    vervaat,
)
from crtcover.stats import ks_distance

# expected gap between a Brownian maximum and its grid maximum, per sqrt(step),
# doubled because the excursion peak is approached from both sides
GRID_MAX_SHIFT = 2 * 0.5826


class TestExcursion:
    @pytest.mark.parametrize("method", ["bessel3", "vervaat"])
    def test_shape(self, method, rng):
        for m in (2, 3, 100, 4096):
            ex = sample_excursion_conditioned(m, rng, method)
            v = ex.values
            assert v.size == m + 1 and ex.m == m and ex.dt == 1 / m
            assert v[0] == 0 and v[-1] == 0 and np.all(v >= 0)
            assert np.argmin(v[:-1]) == 0
            assert np.all(v[1:-1] > 0)

    def test_vervaat_grid_bias(self, rng):
        # rotating at the grid minimum, not the true one, lowers every value
        mids = np.array([sample_excursion_conditioned(256, rng, "vervaat").values[128]
                         for _ in range(20_000)])
        se = mids.std(ddof=1) / math.sqrt(mids.size)
        assert mids.mean() < math.sqrt(2 / math.pi) - 4 * se

    def test_bad_grid(self, rng):
        with pytest.raises(ValueError):
            sample_excursion_conditioned(1, rng)
        with pytest.raises(ValueError):
            ExcursionPath(np.array([0.0, -1.0, 0.0]))
        with pytest.raises(ValueError):
            sample_excursion_conditioned(8, rng, "rejection")

    def test_vervaat(self):
        bridge = np.array([0.0, 1.0, -2.0, 0.5, 0.0])
        assert vervaat(bridge).tolist() == [0.0, 2.5, 2.0, 3.0, 0.0]
        with pytest.raises(ValueError):
            vervaat(np.array([1.0, 0.0]))

    def test_midpoint_marginal(self, rng):
        # zeta(1/2) is (1/2) times a chi(3) variable: mean sqrt(2/pi)
        mids = np.array([sample_excursion_conditioned(2**12, rng).values[2**11]
                         for _ in range(20_000)])
        se = mids.std(ddof=1) / math.sqrt(mids.size)
        assert abs(mids.mean() - math.sqrt(2 / math.pi)) < 4 * se
        oracle = 0.5 * np.linalg.norm(rng.standard_normal((100_000, 3)), axis=1)
        assert ks_distance(mids, oracle) < 1.95 * math.sqrt(1 / 20_000 + 1 / 100_000)

    def test_area_mean(self, rng):
        area = np.array([sample_excursion_conditioned(2**12, rng).values.mean()
                         for _ in range(20_000)])
        se = area.std(ddof=1) / math.sqrt(area.size)
        assert abs(area.mean() - math.sqrt(math.pi / 8)) < 4 * se

    def test_max_height_resolution(self, rng):
        lo = np.array([sample_excursion_conditioned(2**10, rng).values.max()
                       for _ in range(20_000)])
        hi = np.array([sample_excursion_conditioned(2**14, rng).values.max()
                       for _ in range(20_000)])
        lo += GRID_MAX_SHIFT / 2**5
        hi += GRID_MAX_SHIFT / 2**7
        assert ks_distance(lo, hi) < 0.02


def _tree_distance(tree, a, b):
    return tree.distance(int(a), int(b))


class TestReducedTree:
    def test_two_points(self, rng):
        ex = sample_excursion_conditioned(1000, rng)
        for factor in (1, 2):
            s, t = 137, 801
            tree = reduced_tree_from_excursion(ex, [s, t], factor)
            u, v = tree.label_node
            assert _tree_distance(tree, u, v) == pytest.approx(factor * d_zeta(ex.values, s, t),
                                                              abs=1e-12)
            assert tree.leaves().size <= 2

    def test_distances_reproduce_d_zeta(self, rng):
        ex = sample_excursion_conditioned(2000, rng)
        idx = rng.choice(2001, 40, replace=False)
        tree = reduced_tree_from_excursion(ex, idx, 2)
        for i, j in itertools.combinations(range(40), 2):
            got = _tree_distance(tree, tree.label_node[i], tree.label_node[j])
            assert abs(got - 2 * d_zeta(ex.values, idx[i], idx[j])) < 1e-12

    def test_full_grid_tree(self, rng):
        ex = sample_excursion_conditioned(300, rng)
        tree = reduced_tree_from_excursion(ex)
        assert tree.weight.sum() == 301
        assert np.all(tree.edge_length[1:] > 0)
        for s, t in rng.integers(0, 301, (50, 2)):
            got = _tree_distance(tree, tree.label_node[s], tree.label_node[t])
            assert abs(got - d_zeta(ex.values, s, t)) < 1e-12

    def test_four_point_condition(self, rng):
        ex = sample_excursion_conditioned(500, rng)
        idx = rng.choice(501, 8, replace=False)
        tree = reduced_tree_from_excursion(ex, idx)
        d = np.array([[_tree_distance(tree, tree.label_node[i], tree.label_node[j])
                       for j in range(8)] for i in range(8)])
        for a, b, c, e in itertools.combinations(range(8), 4):
            sums = sorted([d[a, b] + d[c, e], d[a, c] + d[b, e], d[a, e] + d[b, c]])
            assert sums[2] - sums[1] < 1e-12

    def test_flat_path(self):
        tree = reduced_tree_from_excursion(np.zeros(5))
        assert tree.n == 1

    def test_invalid(self, rng):
        ex = sample_excursion_conditioned(10, rng)
        with pytest.raises(ValueError):
            reduced_tree_from_excursion(ex, [0, 11])
        with pytest.raises(ValueError):
            reduced_tree_from_excursion(ex, [1, 2], metric_factor=3)
        with pytest.raises(ValueError):
            RealTree(np.array([-1, 0]), np.array([0.0, 0.0]), np.zeros(2))


class TestWilliams:
    def test_mean_count_formula(self):
        assert spine_atom_mean_count(1.0, 0.1) == pytest.approx(3.3487, abs=1e-4)
        assert spine_atom_mean_count(1.0, 1.0) == 0.0

    def test_count_monte_carlo(self, rng):
        counts, _, _, _ = sample_spine_atoms_batch(1.0, 0.1, 100_000, rng)
        se = counts.std(ddof=1) / math.sqrt(counts.size)
        assert abs(counts.mean() - 3.3487) < 4 * se

    def test_atoms_below_attachment(self, rng):
        _, x, u, sides = sample_spine_atoms_batch(2.0, 0.05, 2000, rng)
        assert np.all(u <= x) and np.all(u > 0.05) and np.all(x <= 2.0)
        assert set(np.unique(sides).tolist()) <= {0, 1}
        atoms = sample_spine_atoms(1.0, 0.2, rng)
        assert all(a.side in ("left", "right") and a.height <= a.position for a in atoms)

    def test_truncated_square_sum(self, rng):
        h, delta, spines = 1.0, 1e-3, 20_000
        counts, _, u, _ = sample_spine_atoms_batch(h, delta, spines, rng)
        per_spine = np.add.reduceat(u**2, np.r_[0, np.cumsum(counts)[:-1]]) * (counts > 0)
        target = h * h / 4 - (delta * h / 2 - delta * delta / 4)
        se = per_spine.std(ddof=1) / math.sqrt(spines)
        assert abs(per_spine.mean() - target) < 4 * se

    def test_bare_spine(self, rng):
        sk = sample_williams_skeleton(1.0, 1.0, rng)
        assert sk.tree.n == 2 and sk.atoms == []
        assert sk.tree.edge_length[1] == 1.0
        with pytest.raises(ValueError):
            sample_williams_skeleton(1.0, 0.0, rng)

    def test_skeleton_geometry(self, rng):
        sk = sample_williams_skeleton(1.0, 0.1, rng)
        tree = sk.tree
        assert tree.height.max() == pytest.approx(1.0)
        # every leaf reaches the top of its own spine
        leaves = tree.leaves()
        assert np.allclose(sk.top_distance[leaves], 0.0)
        assert np.all(np.diff(tree.height) >= 0)
        assert expand_component(0.05, 0.1, rng).tree.n == 2

    def test_generation_heights_decay(self):
        rng = np.random.default_rng(5)
        by_gen = {}
        for _ in range(300):
            sk = sample_williams_skeleton(1.0, 0.02, rng)
            best = {}
            for a in sk.atoms:
                best[a.generation] = max(best.get(a.generation, 0.0), a.height)
            for g, v in best.items():
                by_gen.setdefault(g, []).append(v)
        medians = [np.median(by_gen[g]) for g in sorted(by_gen) if len(by_gen[g]) >= 30]
        assert len(medians) >= 3
        assert all(b < a for a, b in zip(medians, medians[1:]))


class TestComponents:
    def test_band_counts(self, rng):
        h, eps, a = 1.0, 0.05, 0.005
        observed = expected = 0.0
        for _ in range(300):
            sk = sample_williams_skeleton(h, eps, rng)
            comp = sample_poisson_components(sk, eps, rng, min_height=a)
            lengths = sk.tree.edge_length
            eligible = np.clip(sk.top_distance + lengths - eps, 0, lengths)
            region = comp.offset <= sk.top_distance[comp.edge] + lengths[comp.edge] - eps
            observed += np.sum(region & (comp.height >= a))
            expected += 0.5 * eligible.sum() * (1 / a - 1 / eps)
        assert abs(observed - expected) < 4 * math.sqrt(expected)

    def test_heights_respect_leaf_distance(self, rng):
        for _ in range(50):
            sk = sample_williams_skeleton(1.0, 0.1, rng)
            comp = sample_poisson_components(sk, 0.1, rng)
            h_x = sk.top_distance[comp.edge] + sk.tree.edge_length[comp.edge] - comp.offset
            assert np.all(comp.height <= h_x + 1e-12)
            assert np.all(comp.height <= 0.1)
            assert comp.height.size <= comp.dominating

    def test_dominated_by_homogeneous_bound(self, rng):
        kept = bound = 0
        for _ in range(200):
            sk = sample_williams_skeleton(1.0, 0.05, rng)
            comp = sample_poisson_components(sk, 0.05, rng)
            kept += comp.height.size
            bound += comp.dominating
        assert kept <= bound

    def test_bad_cutoff(self, rng):
        sk = sample_williams_skeleton(1.0, 0.1, rng)
        with pytest.raises(ValueError):
            sample_poisson_components(sk, 0.1, rng, min_height=0.2)


class TestSnake:
    def test_large_start_rarely_hits(self):
        rng = np.random.default_rng(8)
        f = estimate_zero_hit_probability(20.0, 2**10, 3000, rng)
        assert f < 0.01

    def test_monotone_in_start(self):
        rng = np.random.default_rng(9)
        v = [0.25, 0.5, 1.0, 2.0, 4.0]
        f, se = snake_hit_probabilities(v, 2**10, 4000, rng)
        for i in range(len(v) - 1):
            assert f[i + 1] <= f[i] + 4 * math.hypot(se[i], se[i + 1])
        assert f[0] > f[-1]

    def test_bad_start(self, rng):
        with pytest.raises(ValueError):
            snake_hit_probabilities([0.0, 1.0], 64, 10, rng)

    def test_integral_estimator_on_known_curve(self):
        v = np.linspace(0.01, 12, 3000)
        est = snake_integral_estimate(v, np.exp(-v))
        assert est["total"] == pytest.approx(1.0, abs=2e-4)
        assert est["tail_rate"] == pytest.approx(1.0, rel=1e-6)
        assert est["target"] == SNAKE_INTEGRAL == pytest.approx(5.0133, abs=1e-4)

    def test_zero_set_is_not_a_single_point(self):
        # given a zero, more than one grid point is zero; more so on finer grids
        fractions = []
        for m in (2**6, 2**12):
            rng = np.random.default_rng(m)
            hits = wide = 0
            while hits < 300:
                tree = reduced_tree_from_excursion(sample_excursion_conditioned(m, rng))
                sizes = zero_cluster_sizes(tree_indexed_besq(tree, 0.5, "metric", rng))
                if sizes.size:
                    hits += 1
                    wide += sizes.max() >= 2
            fractions.append(wide / hits)
        assert fractions[1] > fractions[0]
        assert fractions[1] > 0.9
