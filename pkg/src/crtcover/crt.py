"""Brownian excursions, the real trees they code, the Williams spine
decomposition, and the BESQ snake zero-hitting experiment.

Excursions are standard (unit-variance Brownian) excursions of duration 1,
so the coded tree under ``d(s, t) = e(s) + e(t) - 2 min e`` is the CRT with
lifetime metric; ``metric_factor=2`` gives the doubled (resistance) metric.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .besq import _field_kernel

__all__ = [
    "ExcursionPath",
    "RealTree",
    "SpineAtom",
    "WilliamsSkeleton",
    "ComponentAtoms",
    "sample_excursion_conditioned",
    "vervaat",
    "reduced_tree_from_excursion",
    "d_zeta",
    "spine_atom_mean_count",
    "sample_spine_atoms",
    "sample_spine_atoms_batch",
    "sample_williams_skeleton",
    "sample_poisson_components",
    "expand_component",
    "estimate_zero_hit_probability",
    "snake_hit_probabilities",
    "snake_replica_hits",
    "snake_integral_estimate",
    "SNAKE_INTEGRAL",
]

SNAKE_INTEGRAL = 2.0 * math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class ExcursionPath:
    values: np.ndarray

    def __post_init__(self):
        v = self.values
        if v.size < 3 or v[0] != 0 or v[-1] != 0 or np.any(v < 0):
            raise ValueError("an excursion is nonnegative with zero endpoints")

    @property
    def m(self) -> int:
        return self.values.size - 1

    @property
    def dt(self) -> float:
        return 1.0 / self.m


@nb.njit(cache=True)
def _vervaat(bridge):
    m = bridge.size - 1
    k = 0
    for i in range(1, m):
        if bridge[i] < bridge[k]:
            k = i
    out = np.empty(m + 1)
    for j in range(m):
        out[j] = bridge[(k + j) % m] - bridge[k]
    out[0] = 0.0
    out[m] = 0.0
    return out


def vervaat(bridge: np.ndarray) -> np.ndarray:
    """Cyclic shift of a bridge so that it starts at its (first) minimum."""
    bridge = np.asarray(bridge, dtype=float)
    if abs(bridge[0]) > 0 or abs(bridge[-1]) > 0:
        raise ValueError("a bridge starts and ends at 0")
    return _vervaat(bridge)


@nb.njit(cache=True)
def _bridge(m, rng):
    steps = rng.standard_normal(m) * math.sqrt(1.0 / m)
    walk = np.empty(m + 1)
    walk[0] = 0.0
    for i in range(m):
        walk[i + 1] = walk[i] + steps[i]
    end = walk[m]
    for i in range(m + 1):
        walk[i] -= end * i / m
    walk[m] = 0.0
    return walk


@nb.njit(cache=True)
def _excursion_kernel(m, rng):
    # the normalised excursion is the radial part of a 3-d Brownian bridge
    out = np.zeros(m + 1)
    for _ in range(3):
        b = _bridge(m, rng)
        for i in range(m + 1):
            out[i] += b[i] * b[i]
    for i in range(m + 1):
        out[i] = math.sqrt(out[i])
    out[0] = 0.0
    out[m] = 0.0
    return out


@nb.njit(cache=True)
def _vervaat_kernel(m, rng):
    return _vervaat(_bridge(m, rng))


def sample_excursion_conditioned(m: int, rng: np.random.Generator,
                                 method: str = "bessel3") -> ExcursionPath:
    """Duration-1 Brownian excursion at the points k/m.

    ``"bessel3"`` (default) takes the norm of a 3-d Brownian bridge and is
    exact in law at the grid points.  ``"vervaat"`` rotates a 1-d bridge at
    its grid minimum; the grid misses the true minimum, so values sit about
    0.58 sqrt(1/m) too low.
    """
    if m < 2:
        raise ValueError("grid needs m >= 2")
    if method == "bessel3":
        return ExcursionPath(_excursion_kernel(int(m), rng))
    if method == "vervaat":
        return ExcursionPath(_vervaat_kernel(int(m), rng))
    raise ValueError("method must be 'bessel3' or 'vervaat'")


def d_zeta(values: np.ndarray, s: int, t: int) -> float:
    lo, hi = min(s, t), max(s, t)
    return float(values[s] + values[t] - 2.0 * values[lo:hi + 1].min())


@dataclass(frozen=True)
class RealTree:
    """Rooted tree with positive real edge lengths.

    Nodes are sorted so that parents precede children; node 0 is the root.
    ``edge_length[i]`` is the length of the edge from ``i`` to its parent
    (0 at the root).  ``weight`` counts the grid points glued to a node and
    ``label_node`` maps each input point (grid index or sample) to its node.
    """

    parent: np.ndarray
    edge_length: np.ndarray
    height: np.ndarray
    weight: np.ndarray | None = None
    label_node: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        p = self.parent
        if p.size == 0 or p[0] != -1 or np.any(p[1:] < 0) or np.any(p[1:] >= np.arange(1, p.size)):
            raise ValueError("nodes must be sorted with parents first and the root at 0")
        if np.any(self.edge_length[1:] <= 0):
            raise ValueError("edge lengths must be positive")

    @property
    def n(self) -> int:
        return self.parent.size

    @property
    def total_length(self) -> float:
        return float(self.edge_length.sum())

    def child_counts(self) -> np.ndarray:
        return np.bincount(self.parent[1:], minlength=self.n)

    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.child_counts() == 0)

    def distance(self, u: int, v: int) -> float:
        """Path length between two nodes (climbs parents; fine for small trees)."""
        du, dv = 0.0, 0.0
        while u != v:
            if u > v:
                du += self.edge_length[u]
                u = self.parent[u]
            else:
                dv += self.edge_length[v]
                v = self.parent[v]
        return float(du + dv)

    def branch_skeleton(self) -> "RealTree":
        """Drop nodes with exactly one child, merging their two edges."""
        keep, new_parent, new_len = _compress(self.parent, self.edge_length)
        weight = None
        if self.weight is not None:
            weight = self.weight[keep]
        return RealTree(new_parent, new_len, self.height[keep], weight, None, dict(self.meta))


@nb.njit(cache=True)
def _compress(parent, length):
    n = parent.size
    kids = np.zeros(n, dtype=np.int64)
    for i in range(1, n):
        kids[parent[i]] += 1
    keep = np.empty(n, dtype=np.int64)
    new_id = np.full(n, -1, dtype=np.int64)
    up = np.empty(n, dtype=np.int64)      # nearest kept ancestor-or-self
    acc = np.zeros(n)                      # length from node up to that ancestor
    k = 0
    for i in range(n):
        if i == 0 or kids[i] != 1:
            new_id[i] = k
            keep[k] = i
            k += 1
            up[i] = i
            acc[i] = 0.0
        else:
            p = parent[i]
            up[i] = up[p]
            acc[i] = acc[p] + length[i]
    keep = keep[:k]
    new_parent = np.full(k, -1, dtype=np.int64)
    new_len = np.zeros(k)
    for j in range(1, k):
        i = keep[j]
        p = parent[i]
        new_parent[j] = new_id[up[p]]
        new_len[j] = length[i] + acc[p]
    return keep, new_parent, new_len


@nb.njit(cache=True)
def _harris(heights, labelled):
    """Tree coded by a sequence of heights; labelled entries carry weight 1."""
    size = heights.size
    h = np.empty(size)
    parent = np.full(size, -1, dtype=np.int64)
    weight = np.zeros(size)
    node_of = np.empty(size, dtype=np.int64)
    stack = np.empty(size, dtype=np.int64)
    top = -1
    count = 0
    for e in range(size):
        x = heights[e]
        last = -1
        while top >= 0 and h[stack[top]] > x:
            last = stack[top]
            top -= 1
        if top >= 0 and h[stack[top]] == x:
            node = stack[top]
        else:
            node = count
            count += 1
            h[node] = x
            parent[node] = stack[top] if top >= 0 else -1
            top += 1
            stack[top] = node
        if last >= 0:
            parent[last] = node
        node_of[e] = node
        if labelled[e]:
            weight[node] += 1.0
    return h[:count], parent[:count], weight[:count], node_of


def _finish_tree(h, parent, weight, node_of, metric_factor, meta) -> RealTree:
    order = np.argsort(h, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    new_parent = np.where(parent[order] >= 0, rank[np.maximum(parent[order], 0)], -1)
    heights = (h[order] - h[order[0]]) * metric_factor
    lengths = np.zeros(order.size)
    lengths[1:] = heights[1:] - heights[new_parent[1:]]
    return RealTree(new_parent.astype(np.int64), lengths, heights, weight[order],
                    rank[node_of], meta)


def reduced_tree_from_excursion(path: ExcursionPath | np.ndarray, indices=None,
                                metric_factor: int = 1) -> RealTree:
    """Tree spanned by grid points under ``metric_factor * d_zeta``.

    With ``indices=None`` every grid point is used and the root is the
    point at height 0.  Otherwise the tree is the subtree spanned by the
    chosen points, rooted at their lowest branch point; ``label_node[i]`` is
    the node of ``indices[i]``.
    """
    if metric_factor not in (1, 2):
        raise ValueError("metric_factor must be 1 or 2")
    values = path.values if isinstance(path, ExcursionPath) else np.asarray(path, dtype=float)
    meta = {"metric_factor": metric_factor}
    if indices is None:
        h, parent, weight, node_of = _harris(values, np.ones(values.size, dtype=np.bool_))
        return _finish_tree(h, parent, weight, node_of, metric_factor, meta)
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size == 0 or np.any(idx < 0) or np.any(idx >= values.size):
        raise ValueError("indices must be nonempty and inside the grid")
    order = np.argsort(idx, kind="stable")
    srt = idx[order]
    seq = [values[srt[0]]]
    lab = [True]
    for a, b in zip(srt[:-1], srt[1:]):
        seq.append(values[a:b + 1].min())
        lab.append(False)
        seq.append(values[b])
        lab.append(True)
    h, parent, weight, node_of = _harris(np.array(seq), np.array(lab))
    tree = _finish_tree(h, parent, weight, node_of, metric_factor, meta)
    sample_nodes = tree.label_node[0::2]
    label = np.empty(idx.size, dtype=np.int64)
    label[order] = sample_nodes
    return RealTree(tree.parent, tree.edge_length, tree.height, tree.weight, label, meta)


# ---------------------------------------------------------------------------
# Williams decomposition


@dataclass(frozen=True)
class SpineAtom:
    """Subtree grafted on a spine: ``position`` is measured from the top."""

    position: float
    height: float
    side: str
    generation: int = 0


def spine_atom_mean_count(h: float, a: float) -> float:
    """Expected number of atoms of height > a on a spine of height h."""
    if a >= h:
        return 0.0
    r = h / a
    return 0.5 * (r - 1.0 - math.log(r))


def _draw_atoms(h: float, a: float, count: int, rng: np.random.Generator):
    """``count`` i.i.d. draws from the density prop. to u^-2 on {a < u <= x <= h}."""
    xs = np.empty(count)
    us = np.empty(count)
    filled = 0
    while filled < count:
        need = count - filled
        k = int(need * 2 + 16)
        x = rng.uniform(a, h, k)
        u = 1.0 / rng.uniform(1.0 / h, 1.0 / a, k)
        ok = np.flatnonzero(u <= x)[:need]
        xs[filled:filled + ok.size] = x[ok]
        us[filled:filled + ok.size] = u[ok]
        filled += ok.size
    return xs, us


def sample_spine_atoms_batch(h: float, a: float, spines: int, rng: np.random.Generator):
    """Atoms of height > a on ``spines`` independent spines of height h.

    Returns ``(counts, positions, heights, sides)``; the flat arrays are
    grouped by spine in order.
    """
    if not 0 < a:
        raise ValueError("height cutoff must be positive")
    counts = rng.poisson(spine_atom_mean_count(h, a), spines)
    total = int(counts.sum())
    x, u = _draw_atoms(h, a, total, rng) if total else (np.zeros(0), np.zeros(0))
    sides = rng.integers(0, 2, total)
    return counts, x, u, sides


def sample_spine_atoms(h: float, a: float, rng: np.random.Generator) -> list[SpineAtom]:
    _, x, u, sides = sample_spine_atoms_batch(h, a, 1, rng)
    return [SpineAtom(float(p), float(q), "left" if s == 0 else "right")
            for p, q, s in zip(x, u, sides)]


@dataclass(frozen=True)
class WilliamsSkeleton:
    """The skeleton of subtrees taller than ``eps``.

    ``top_distance[i]`` is the distance from node ``i`` to the top of the
    spine that carries the edge above ``i`` (the intensity's ``h_x``).
    """

    tree: RealTree
    atoms: list
    top_distance: np.ndarray
    h: float
    eps: float


def sample_williams_skeleton(h: float, eps: float, rng: np.random.Generator,
                             max_nodes: int = 1_000_000) -> WilliamsSkeleton:
    if not h > 0 or not eps > 0:
        raise ValueError("h and eps must be positive")
    # nodes as (parent, height above root, top distance); spines queued as
    # (base node, base height, spine height, generation)
    par = [-1]
    hgt = [0.0]
    top = [h]
    atoms = []
    queue = [(0, 0.0, h, 0)]
    while queue:
        base, base_h, sh, gen = queue.pop()
        found = sample_spine_atoms(sh, eps, rng) if eps < sh else []
        found.sort(key=lambda at: -at.position)  # from the base upwards
        prev = base
        for at in found:
            atoms.append(SpineAtom(at.position, at.height, at.side, gen))
            node = len(par)
            par.append(prev)
            hgt.append(base_h + sh - at.position)
            top.append(at.position)
            queue.append((node, hgt[node], at.height, gen + 1))
            prev = node
        par.append(prev)
        hgt.append(base_h + sh)
        top.append(0.0)
        if len(par) > max_nodes:
            raise RuntimeError("Williams skeleton exceeded its node budget")
    par = np.array(par)
    hgt = np.array(hgt)
    top = np.array(top)
    order = np.lexsort((np.arange(par.size), hgt))
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    # parents have strictly smaller height, so height order is topological
    new_parent = np.where(par[order] >= 0, rank[np.maximum(par[order], 0)], -1)
    heights = hgt[order]
    lengths = np.zeros(order.size)
    lengths[1:] = heights[1:] - heights[new_parent[1:]]
    tree = RealTree(new_parent.astype(np.int64), lengths, heights, None, None,
                    {"h": h, "eps": eps})
    return WilliamsSkeleton(tree, atoms, top[order], float(h), float(eps))


def expand_component(height: float, eps: float, rng: np.random.Generator) -> WilliamsSkeleton:
    """Full skeleton of a small component of the given height."""
    return sample_williams_skeleton(height, eps, rng)


@dataclass(frozen=True)
class ComponentAtoms:
    """Small subtrees grafted on a skeleton.

    ``edge[k]`` is the child node of the skeleton edge carrying atom ``k``
    and ``offset[k]`` its distance from the parent end of that edge.
    ``dominating`` counts the atoms of the homogeneous process from which the
    kept atoms were thinned.
    """

    edge: np.ndarray
    offset: np.ndarray
    height: np.ndarray
    side: np.ndarray
    dominating: int


def sample_poisson_components(skeleton: WilliamsSkeleton, eps: float,
                              rng: np.random.Generator,
                              min_height: float | None = None) -> ComponentAtoms:
    """Subtrees of height in [min_height, min(h_x, eps)] along the skeleton.

    Intensity ``(1/2) dx u^-2 du`` (both sides together).  Atoms come from
    a homogeneous process on ``u <= eps`` thinned by ``u <= h_x``, so the
    dominating count is an exact coupled upper bound.
    """
    a = eps / 100.0 if min_height is None else float(min_height)
    if not 0 < a < eps:
        raise ValueError("need 0 < min_height < eps")
    tree = skeleton.tree
    lengths = tree.edge_length[1:]
    rate = 0.5 * (1.0 / a - 1.0 / eps)
    per_edge = rng.poisson(rate * lengths)
    edge = np.repeat(np.arange(1, tree.n), per_edge)
    total = edge.size
    offset = rng.uniform(0.0, 1.0, total) * tree.edge_length[edge]
    height = 1.0 / rng.uniform(1.0 / eps, 1.0 / a, total)
    side = rng.integers(0, 2, total)
    # h_x decreases linearly towards the child end of the edge
    h_x = skeleton.top_distance[edge] + (tree.edge_length[edge] - offset)
    keep = height <= h_x
    return ComponentAtoms(edge[keep], offset[keep], height[keep], side[keep], int(total))


# ---------------------------------------------------------------------------
# BESQ snake


@nb.njit(cache=True)
def _snake_tree(m, rng):
    exc = _excursion_kernel(m, rng)
    labelled = np.ones(m + 1, dtype=np.bool_)
    h, parent, _, _ = _harris(exc, labelled)
    order = np.argsort(h, kind="mergesort")
    n = order.size
    rank = np.empty(n, dtype=np.int64)
    for i in range(n):
        rank[order[i]] = i
    par = np.full(n, -1, dtype=np.int64)
    length = np.zeros(n)
    for i in range(1, n):
        p = parent[order[i]]
        par[i] = rank[p]
        length[i] = h[order[i]] - h[p]
    keep, new_parent, new_len = _compress(par, length)
    return new_parent, new_len


@nb.njit(cache=True)
def _snake_batch(v_grid, m, replicas, rng):
    hits = np.zeros((replicas, v_grid.size), dtype=np.bool_)
    for r in range(replicas):
        parent, length = _snake_tree(m, rng)
        for j in range(v_grid.size):
            _, hit = _field_kernel(parent, length, v_grid[j], 0.0, rng, True)
            hits[r, j] = hit
    return hits


def snake_replica_hits(v_grid, m: int, rng: np.random.Generator, replicas: int = 1) -> np.ndarray:
    """``replicas x len(v_grid)`` zero-hit indicators; one excursion tree per row."""
    v = np.asarray(v_grid, dtype=float)
    if np.any(v <= 0):
        raise ValueError("starting values must be positive")
    return _snake_batch(v, int(m), int(replicas), rng)


def snake_hit_probabilities(v_grid, m: int, replicas: int,
                            rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """F(v) for each v: one fresh excursion tree per replica, shared across v.

    Fields are independent across v. Returns ``(F, standard error)``.
    """
    hits = snake_replica_hits(v_grid, m, rng, replicas).sum(axis=0)
    f = hits / replicas
    return f, np.sqrt(f * (1 - f) / replicas)


def estimate_zero_hit_probability(v: float, m: int, replicas: int,
                                  rng: np.random.Generator) -> float:
    """P(BESQ^0(v) indexed by the lifetime-metric CRT hits zero)."""
    f, _ = snake_hit_probabilities([v], m, replicas, rng)
    return float(f[0])


def snake_integral_estimate(v_grid, f_values, tail_points: int = 4) -> dict:
    """Trapezoid integral of F over [0, v_max] plus a fitted exponential tail.

    The head uses F(0) = 1 (BESQ^0 started at 0 is already at 0).
    """
    v = np.concatenate([[0.0], np.asarray(v_grid, dtype=float)])
    f = np.concatenate([[1.0], np.asarray(f_values, dtype=float)])
    body = float(np.trapezoid(f, v))
    pos = np.flatnonzero(f[1:] > 0)[-tail_points:] + 1
    tail = 0.0
    rate = float("nan")
    if pos.size >= 2:
        slope = np.polyfit(v[pos], np.log(f[pos]), 1)[0]
        if slope < 0:
            rate = -slope
            tail = float(f[-1] / rate)
    return {"body": body, "tail": tail, "tail_rate": rate, "total": body + tail,
            "target": SNAKE_INTEGRAL}
