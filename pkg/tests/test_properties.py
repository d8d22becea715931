"""Structural invariants checked on generated inputs."""

import json
import math

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from crtcover.besq import tree_indexed_besq
from crtcover.crt import d_zeta, reduced_tree_from_excursion, vervaat
from crtcover.experiments.runner import encode
from crtcover.gaussian_field import build_sigma_matrices
from crtcover.rand_tree import (
    DiscreteTree,
    canonical_form,
    contour_path,
    covering_number,
    cycle_lemma_rotation,
    diameter,
    is_lukasiewicz,
    tree_from_contour,
)
from crtcover.stats import Moments, ks_distance

from .conftest import all_pairs_bfs

SETTINGS = settings(max_examples=60, deadline=None,
                    suppress_health_check=[HealthCheck.too_slow])


@st.composite
def offspring_vectors(draw, max_n=40):
    """Any vector of n nonnegative counts summing to n - 1."""
    n = draw(st.integers(1, max_n))
    bins = draw(st.lists(st.integers(0, n - 1), min_size=n - 1, max_size=n - 1))
    return np.bincount(np.asarray(bins, dtype=np.int64), minlength=n)


@st.composite
def trees(draw, max_n=40):
    xi = draw(offspring_vectors(max_n))
    return DiscreteTree.from_offspring(np.roll(xi, -cycle_lemma_rotation(xi)))


@given(offspring_vectors())
@SETTINGS
def test_cycle_lemma_unique_rotation(xi):
    good = [j for j in range(xi.size) if is_lukasiewicz(np.roll(xi, -j))]
    assert good == [cycle_lemma_rotation(xi)]


@given(offspring_vectors())
@SETTINGS
def test_decoded_tree_keeps_offspring_counts(xi):
    word = np.roll(xi, -cycle_lemma_rotation(xi))
    t = DiscreteTree.from_offspring(word)
    assert t.n == xi.size and t.degree.sum() == 2 * (t.n - 1)
    assert sorted(t.offspring_counts().tolist()) == sorted(xi.tolist())


@given(trees(), st.data())
@SETTINGS
def test_metric_axioms_and_branch_point(t, data):
    d = all_pairs_bfs(t)
    idx = t.index
    pick = st.integers(0, t.n - 1)
    x, y, z = data.draw(pick), data.draw(pick), data.draw(pick)
    assert idx.distance(x, y) == d[x, y] == d[y, x]
    assert d[x, z] <= d[x, y] + d[y, z]
    b = int(idx.branch_point(x, y, z))
    for u, v in ((x, y), (y, z), (x, z)):
        assert d[u, b] + d[b, v] == d[u, v]
    assert diameter(t) == d.max()


@given(trees())
@SETTINGS
def test_covering_number_monotone(t):
    counts = [covering_number(t, r) for r in range(diameter(t) + 2)]
    assert counts[0] == t.n and counts[-1] == 1
    assert all(a >= b for a, b in zip(counts, counts[1:]))


@given(trees(max_n=30))
@SETTINGS
def test_contour_round_trip(t):
    if t.n < 2:
        return
    c = contour_path(t)
    assert c.values.size == 2 * t.n - 1 and np.all(np.abs(np.diff(c.values)) == 1)
    assert canonical_form(tree_from_contour(c.values)) == canonical_form(t)


@given(trees(max_n=25), st.data())
@SETTINGS
def test_sigma_matrices(t, data):
    if t.n < 2:
        return
    x = data.draw(st.integers(0, t.n - 1))
    y = data.draw(st.integers(0, t.n - 1).filter(lambda v: v != x))
    others = [v for v in range(t.n) if v != y]
    marks = data.draw(st.lists(st.sampled_from(others), min_size=1, max_size=6, unique=True))
    m = build_sigma_matrices(t, x, y, marks)
    assert np.allclose(m.Sigma, m.Sigma.T)
    assert np.linalg.eigvalsh(m.Sigma).min() > -1e-9
    assert np.all(m.SigmaHat <= m.Sigma) and np.all(np.diag(m.SigmaHat) >= 0)
    assert np.all(np.diag(m.Sigma) > 0)


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=50), st.integers(0, 50))
@SETTINGS
def test_moments_merge(xs, cut):
    cut = min(cut, len(xs))
    merged = Moments.of(xs[:cut]).merge(Moments.of(xs[cut:]))
    whole = Moments.of(xs)
    assert merged.count == whole.count
    assert math.isclose(merged.mean, whole.mean, rel_tol=1e-9, abs_tol=1e-6)
    assert math.isclose(merged.m2, whole.m2, rel_tol=1e-7, abs_tol=1e-3)


@given(st.lists(st.floats(-10, 10), min_size=1, max_size=40),
       st.lists(st.floats(-10, 10), min_size=1, max_size=40))
@SETTINGS
def test_ks_symmetric_and_bounded(a, b):
    k = ks_distance(a, b)
    assert 0 <= k <= 1 and k == ks_distance(b, a)


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_encode_float_round_trip(x):
    assert json.loads(encode(x)) == x


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=60))
@SETTINGS
def test_vervaat_is_an_excursion(steps):
    bridge = np.concatenate([[0.0], np.cumsum(steps)])
    bridge = bridge - np.linspace(0.0, bridge[-1], bridge.size)
    bridge[-1] = 0.0
    ex = vervaat(bridge)
    assert ex[0] == 0 and ex[-1] == 0 and np.all(ex >= -1e-9)
    assert np.isclose(ex.max() - ex.min(), bridge.max() - bridge.min())


@st.composite
def excursions(draw, max_m=40):
    steps = draw(st.lists(st.floats(0.01, 1.0), min_size=1, max_size=max_m))
    up = np.cumsum(steps)
    values = np.concatenate([[0.0], up, up[::-1][1:] * 0.7, [0.0]])
    return values


@given(excursions(), st.data())
@SETTINGS
def test_d_zeta_is_a_tree_metric(values, data):
    pick = st.integers(0, values.size - 1)
    s, t, u = data.draw(pick), data.draw(pick), data.draw(pick)
    assert d_zeta(values, s, t) == d_zeta(values, t, s) >= 0
    assert d_zeta(values, s, s) == 0
    assert d_zeta(values, s, u) <= d_zeta(values, s, t) + d_zeta(values, t, u) + 1e-12


@given(excursions(), st.floats(0.01, 2.0), st.integers(0, 2**32 - 1))
@SETTINGS
def test_besq_zero_set_descendant_closed(values, z0, seed):
    tree = reduced_tree_from_excursion(values)
    if tree.n < 2:
        return
    f = tree_indexed_besq(tree, z0, "metric", np.random.default_rng(seed))
    zero = f.values == 0
    assert np.all(zero[1:] >= zero[tree.parent[1:]])
    assert np.all(f.values >= 0)
