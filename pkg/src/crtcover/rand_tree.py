"""Conditioned Galton-Watson trees and exact tree-metric primitives.

Trees are stored as flat integer arrays.  Sampled trees number their
vertices in depth-first (preorder) order, so the Lukasiewicz word, the
contour and the vertex ids all line up.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from functools import reduce

import numba as nb
import numpy as np

__all__ = [
    "OffspringLaw",
    "DiscreteTree",
    "TreeMetricIndex",
    "ContourPath",
    "UnsupportedSizeError",
    "RejectionBudgetError",
    "sample_conditioned_gw",
    "sample_offspring_conditioned",
    "cycle_lemma_rotation",
    "is_lukasiewicz",
    "branch_point",
    "graph_distance",
    "bfs_distances",
    "diameter",
    "height",
    "covering_number",
    "contour_path",
    "normalized_contour",
    "tree_from_contour",
    "canonical_form",
    "enumerate_rooted_trees",
    "lukasiewicz_words",
]

_PMF_TAIL = 1e-18


class UnsupportedSizeError(ValueError):
    """The conditioning event {total progeny = n} has probability zero."""


class RejectionBudgetError(RuntimeError):
    """Rejection sampling gave up before hitting the conditioning event."""


@dataclass(frozen=True)
class OffspringLaw:
    """Critical offspring distribution with finite, positive variance.

    ``pmf[k]`` is the probability of ``k`` children.  Poisson and geometric
    laws are truncated where the tail drops below 1e-18.
    """

    kind: str
    pmf: np.ndarray
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        pmf = np.asarray(self.pmf, dtype=float)
        if pmf.ndim != 1 or pmf.size < 2 or np.any(pmf < 0):
            raise ValueError("pmf must be a nonnegative vector of length >= 2")
        if abs(pmf.sum() - 1.0) > 1e-12:
            raise ValueError(f"pmf sums to {pmf.sum()!r}, not 1")
        k = np.arange(pmf.size)
        mean = float(k @ pmf)
        if abs(mean - 1.0) > 1e-12:
            raise ValueError(f"offspring law is not critical: mean {mean!r}")
        var = float((k - mean) ** 2 @ pmf)
        if not var > 0:
            raise ValueError("offspring variance must be strictly positive")
        pmf.setflags(write=False)
        object.__setattr__(self, "pmf", pmf)
        cdf = np.cumsum(pmf)
        cdf[-1] = 1.0
        cdf.setflags(write=False)
        object.__setattr__(self, "_cdf", cdf)

    @property
    def mean(self) -> float:
        return float(np.arange(self.pmf.size) @ self.pmf)

    @property
    def variance(self) -> float:
        k = np.arange(self.pmf.size)
        return float((k - self.mean) ** 2 @ self.pmf)

    @property
    def sigma(self) -> float:
        return math.sqrt(self.variance)

    @property
    def span(self) -> int:
        """gcd of the support; sums of offspring counts live on this lattice."""
        support = np.flatnonzero(self.pmf > 0)
        return reduce(math.gcd, (int(s) for s in support), 0)

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        """Table-lookup (inverse CDF) draws."""
        u = rng.random(size)
        return np.searchsorted(self._cdf, u, side="right").astype(np.int64)

    @classmethod
    def poisson1(cls) -> "OffspringLaw":
        kmax = 1
        while math.exp(-1.0) / math.factorial(kmax) > _PMF_TAIL:
            kmax += 1
        pmf = np.array([math.exp(-1.0) / math.factorial(k) for k in range(kmax + 1)])
        return cls("poisson1", pmf / pmf.sum())

    @classmethod
    def geometric(cls, p: float = 0.5) -> "OffspringLaw":
        """P(k) = p (1-p)^k; only p = 1/2 is critical."""
        if not 0 < p < 1:
            raise ValueError("geometric parameter must lie in (0, 1)")
        if abs((1 - p) / p - 1.0) > 1e-12:
            raise ValueError(f"geometric({p}) has mean {(1 - p) / p}, not 1")
        kmax = int(math.ceil(math.log(_PMF_TAIL / p) / math.log(1 - p)))
        pmf = p * (1 - p) ** np.arange(kmax + 1)
        return cls("geometric", pmf / pmf.sum(), {"p": p})

    @classmethod
    def binary_half(cls) -> "OffspringLaw":
        return cls("binary_half", np.array([0.5, 0.0, 0.5]))

    @classmethod
    def table(cls, pmf) -> "OffspringLaw":
        return cls("table", np.asarray(pmf, dtype=float))

    @classmethod
    def from_spec(cls, spec) -> "OffspringLaw":
        """Build from a config fragment such as ``"poisson1"`` or
        ``{"kind": "table", "pmf": [...]}``."""
        if isinstance(spec, str):
            spec = {"kind": spec}
        kind = spec["kind"].lower()
        if kind == "poisson1":
            return cls.poisson1()
        if kind == "geometric":
            return cls.geometric(spec.get("p", 0.5))
        if kind == "binary_half":
            return cls.binary_half()
        if kind == "table":
            return cls.table(spec["pmf"])
        raise ValueError(f"unknown offspring law {kind!r}")

    def to_spec(self) -> dict:
        out = {"kind": self.kind, **self.params}
        if self.kind == "table":
            out["pmf"] = [float(x) for x in self.pmf]
        return out


@nb.njit(cache=True)
def _decode_lukasiewicz(xi):
    n = xi.shape[0]
    parent = np.full(n, -1, dtype=np.int64)
    stack = np.empty(n, dtype=np.int64)
    remaining = np.empty(n, dtype=np.int64)
    top = -1
    for v in range(n):
        if v > 0:
            if top < 0:
                return parent, False
            parent[v] = stack[top]
            remaining[top] -= 1
            if remaining[top] == 0:
                top -= 1
        if xi[v] > 0:
            top += 1
            stack[top] = v
            remaining[top] = xi[v]
    return parent, top == -1


@nb.njit(cache=True)
def _bfs(child_ptr, child_idx, root, n):
    order = np.empty(n, dtype=np.int64)
    depth = np.zeros(n, dtype=np.int64)
    order[0] = root
    head, tail = 0, 1
    while head < tail:
        v = order[head]
        head += 1
        for k in range(child_ptr[v], child_ptr[v + 1]):
            if tail == n:
                return order, depth, -1
            c = child_idx[k]
            depth[c] = depth[v] + 1
            order[tail] = c
            tail += 1
    return order, depth, tail


class DiscreteTree:
    """Rooted finite tree.

    Attributes:
        n: number of vertices.
        root: root vertex id.
        parent: int64[n], ``-1`` at the root.
        child_ptr, child_idx: CSR child lists (children in increasing id).
        nbr_ptr, nbr_idx: CSR adjacency (parent first, then children).
        degree: int64[n] graph degree.
    """

    def __init__(self, parent):
        parent = np.asarray(parent, dtype=np.int64).copy()
        n = parent.size
        if n == 0:
            raise ValueError("a tree needs at least one vertex")
        roots = np.flatnonzero(parent < 0)
        if roots.size != 1:
            raise ValueError(f"expected exactly one root, found {roots.size}")
        if np.any(parent >= n):
            raise ValueError("parent id out of range")
        self.n = n
        self.root = int(roots[0])
        self.parent = parent
        nonroot = np.flatnonzero(parent >= 0)
        order = nonroot[np.argsort(parent[nonroot], kind="stable")]
        counts = np.bincount(parent[nonroot], minlength=n)
        self.child_ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        self.child_idx = order.astype(np.int64)
        self.degree = counts + (parent >= 0)
        # adjacency: parent first so that index 0 is "up"
        has_parent = (parent >= 0).astype(np.int64)
        self.nbr_ptr = np.concatenate([[0], np.cumsum(self.degree)]).astype(np.int64)
        nbr = np.empty(self.nbr_ptr[-1], dtype=np.int64)
        nbr[self.nbr_ptr[nonroot]] = parent[nonroot]
        owner = parent[order]
        rank = np.arange(order.size) - self.child_ptr[owner]
        nbr[self.nbr_ptr[owner] + has_parent[owner] + rank] = order
        self.nbr_idx = nbr
        self._depth = None
        self._order = None
        self._index = None
        self._check_acyclic()
        for arr in (self.parent, self.child_ptr, self.child_idx, self.degree,
                    self.nbr_ptr, self.nbr_idx):
            arr.setflags(write=False)

    def _check_acyclic(self):
        self._traverse()

    @classmethod
    def from_offspring(cls, xi) -> "DiscreteTree":
        """Decode a Lukasiewicz word (preorder child counts)."""
        xi = np.asarray(xi, dtype=np.int64)
        parent, ok = _decode_lukasiewicz(xi)
        if not ok or xi.sum() != xi.size - 1:
            raise ValueError("offspring vector is not a Lukasiewicz word")
        return cls(parent)

    @classmethod
    def from_edges(cls, n: int, edges, root: int = 0) -> "DiscreteTree":
        adj = [[] for _ in range(n)]
        for a, b in edges:
            adj[a].append(b)
            adj[b].append(a)
        parent = np.full(n, -2, dtype=np.int64)
        parent[root] = -1
        queue = deque([root])
        while queue:
            v = queue.popleft()
            for w in adj[v]:
                if parent[w] == -2:
                    parent[w] = v
                    queue.append(w)
        if np.any(parent == -2):
            raise ValueError("edge list is not connected")
        return cls(parent)

    @classmethod
    def path(cls, n: int) -> "DiscreteTree":
        return cls(np.arange(-1, n - 1))

    @classmethod
    def star(cls, leaves: int) -> "DiscreteTree":
        return cls(np.concatenate([[-1], np.zeros(leaves, dtype=np.int64)]))

    def children(self, v: int) -> np.ndarray:
        return self.child_idx[self.child_ptr[v]:self.child_ptr[v + 1]]

    def neighbors(self, v: int) -> np.ndarray:
        return self.nbr_idx[self.nbr_ptr[v]:self.nbr_ptr[v + 1]]

    def _traverse(self):
        order, depth, count = _bfs(self.child_ptr, self.child_idx, self.root, self.n)
        if count != self.n:
            raise ValueError("parent pointers do not form a tree")
        order.setflags(write=False)
        depth.setflags(write=False)
        self._order, self._depth = order, depth

    @property
    def bfs_order(self) -> np.ndarray:
        if self._order is None:
            self._traverse()
        return self._order

    @property
    def depth(self) -> np.ndarray:
        if self._depth is None:
            self._traverse()
        return self._depth

    @property
    def index(self) -> "TreeMetricIndex":
        """Lazily built LCA index, cached on the (immutable) tree."""
        if self._index is None:
            self._index = TreeMetricIndex(self)
        return self._index

    @property
    def n_edges(self) -> int:
        return self.n - 1

    def offspring_counts(self) -> np.ndarray:
        return np.diff(self.child_ptr)

    def rerooted(self, root: int) -> "DiscreteTree":
        """Same graph with a different root (vertex ids unchanged)."""
        edges = [(int(v), int(p)) for v, p in enumerate(self.parent) if p >= 0]
        return DiscreteTree.from_edges(self.n, edges, root)

    def __repr__(self):
        return f"DiscreteTree(n={self.n}, root={self.root})"


def is_lukasiewicz(xi) -> bool:
    steps = np.asarray(xi, dtype=np.int64) - 1
    walk = np.cumsum(steps)
    return bool(walk[-1] == -1 and np.all(walk[:-1] >= 0))


def cycle_lemma_rotation(xi) -> int:
    """Shift ``j`` such that ``np.roll(xi, -j)`` is a Lukasiewicz word.

    Requires ``sum(xi) == len(xi) - 1``; the shift is one past the first
    index where the partial sums of ``xi - 1`` reach their minimum.
    """
    xi = np.asarray(xi, dtype=np.int64)
    if xi.sum() != xi.size - 1:
        raise ValueError("cycle lemma needs sum(xi) == n - 1")
    walk = np.cumsum(xi - 1)
    return int(np.argmin(walk) + 1) % xi.size


def sample_offspring_conditioned(law: OffspringLaw, n: int, rng: np.random.Generator,
                                 max_attempts: int = 200_000) -> np.ndarray:
    """i.i.d. offspring counts conditioned on summing to ``n - 1``.

    Plain rejection on whole vectors, drawn in blocks.  Poisson(1) counts
    use the equivalent multinomial draw.
    """
    if n < 1:
        raise ValueError("n must be positive")
    target = n - 1
    span = law.span
    if target % span != 0:
        raise UnsupportedSizeError(
            f"{law.kind}: total progeny {n} has probability zero (lattice span {span})")
    if law.kind == "poisson1":
        # i.i.d. Poisson(1) counts given their sum are multinomial: exact, no rejection
        return rng.multinomial(target, np.full(n, 1.0 / n)).astype(np.int64)
    p_guess = span / (law.sigma * math.sqrt(2 * math.pi * n))
    block = int(min(max(8, 2.0 / p_guess), max(8, 4_000_000 // n)))
    attempts = 0
    while attempts < max_attempts:
        k = min(block, max_attempts - attempts)
        draws = law.sample(rng, (k, n))
        hits = np.flatnonzero(draws.sum(axis=1) == target)
        if hits.size:
            return draws[hits[0]]
        attempts += k
    raise RejectionBudgetError(
        f"no offspring vector summing to {target} after {attempts} attempts")


def sample_conditioned_gw(law: OffspringLaw, n: int, rng: np.random.Generator,
                          max_attempts: int = 200_000) -> DiscreteTree:
    """Galton-Watson tree with offspring law ``law`` conditioned on n vertices."""
    xi = sample_offspring_conditioned(law, n, rng, max_attempts)
    word = np.roll(xi, -cycle_lemma_rotation(xi))
    return DiscreteTree.from_offspring(word)


@nb.njit(cache=True)
def _euler_tour(child_ptr, child_idx, root, n):
    tour = np.empty(2 * n - 1, dtype=np.int64)
    first = np.empty(n, dtype=np.int64)
    depth = np.zeros(n, dtype=np.int64)
    stack = np.empty(n, dtype=np.int64)
    cursor = np.empty(n, dtype=np.int64)
    top = 0
    stack[0] = root
    cursor[0] = child_ptr[root]
    k = 0
    tour[k] = root
    first[root] = 0
    k += 1
    while top >= 0:
        v = stack[top]
        if cursor[top] < child_ptr[v + 1]:
            c = child_idx[cursor[top]]
            cursor[top] += 1
            depth[c] = depth[v] + 1
            top += 1
            stack[top] = c
            cursor[top] = child_ptr[c]
            first[c] = k
            tour[k] = c
            k += 1
        else:
            top -= 1
            if top >= 0:
                tour[k] = stack[top]
                k += 1
    return tour, first, depth


class TreeMetricIndex:
    """Depths plus an Euler-tour sparse table for O(1) LCA queries."""

    def __init__(self, tree: DiscreteTree):
        self.tree = tree
        tour, first, depth = _euler_tour(tree.child_ptr, tree.child_idx, tree.root, tree.n)
        self.tour = tour
        self.first = first
        self.depth = depth
        m = tour.size
        levels = max(1, int(m).bit_length())
        table = np.empty((levels, m), dtype=np.int64)
        table[0] = tour
        tour_depth = depth[tour]
        span = 1
        for j in range(1, levels):
            prev = table[j - 1]
            a = prev[: m - span]
            b = prev[span: m]
            pick = np.where(depth[a] <= depth[b], a, b)
            table[j, : m - span] = pick
            table[j, m - span:] = prev[m - span:]
            span *= 2
        self._table = table
        self._tour_depth = tour_depth
        self._log2 = np.zeros(m + 1, dtype=np.int64)
        self._log2[2:] = np.floor(np.log2(np.arange(2, m + 1))).astype(np.int64)

    def lca(self, u, v):
        """Lowest common ancestor; accepts scalars or equal-shape arrays."""
        a = self.first[np.asarray(u)]
        b = self.first[np.asarray(v)]
        lo = np.minimum(a, b)
        hi = np.maximum(a, b)
        k = self._log2[hi - lo + 1]
        x = self._table[k, lo]
        y = self._table[k, hi - (1 << k) + 1]
        out = np.where(self.depth[x] <= self.depth[y], x, y)
        return int(out) if out.ndim == 0 else out

    def distance(self, u, v):
        w = self.lca(u, v)
        d = self.depth[np.asarray(u)] + self.depth[np.asarray(v)] - 2 * self.depth[w]
        return int(d) if np.ndim(d) == 0 else d

    def branch_point(self, x, y, z):
        """Median of x, y, z: the deepest of the three pairwise LCAs."""
        c1 = np.asarray(self.lca(x, y))
        c2 = np.asarray(self.lca(y, z))
        c3 = np.asarray(self.lca(z, x))
        best = np.where(self.depth[c2] > self.depth[c1], c2, c1)
        best = np.where(self.depth[c3] > self.depth[best], c3, best)
        return int(best) if best.ndim == 0 else best

    def on_path(self, x, y, z) -> bool:
        """True when z lies on the geodesic [[x, y]]."""
        return self.distance(x, z) + self.distance(z, y) == self.distance(x, y)


def branch_point(index: TreeMetricIndex, x, y, z):
    return index.branch_point(x, y, z)


def graph_distance(index: TreeMetricIndex, u, v):
    return index.distance(u, v)


def bfs_distances(tree: DiscreteTree, source: int) -> np.ndarray:
    dist = np.full(tree.n, -1, dtype=np.int64)
    dist[source] = 0
    queue = deque([source])
    ptr, nbr = tree.nbr_ptr, tree.nbr_idx
    while queue:
        v = queue.popleft()
        for w in nbr[ptr[v]:ptr[v + 1]]:
            if dist[w] < 0:
                dist[w] = dist[v] + 1
                queue.append(w)
    return dist


def diameter(tree: DiscreteTree) -> int:
    """Largest graph distance, by the double-BFS sweep."""
    far = int(np.argmax(bfs_distances(tree, tree.root)))
    return int(bfs_distances(tree, far).max())


def height(tree: DiscreteTree) -> int:
    return int(tree.depth.max())


def covering_number(tree: DiscreteTree, r: int) -> int:
    """Minimum number of centres such that every vertex is within graph
    distance ``r`` of one of them.

    Leaf-up greedy: a centre is placed at a vertex exactly when the farthest
    still-uncovered vertex below it sits at distance ``r``.
    """
    r = int(r)
    if r < 0:
        raise ValueError("radius must be nonnegative")
    if r == 0:
        return tree.n
    n = tree.n
    uncovered = np.full(n, -1, dtype=np.int64)    # farthest uncovered below, -1 if none
    centre = np.full(n, n + r + 1, dtype=np.int64)  # nearest centre below
    count = 0
    parent = tree.parent
    for v in tree.bfs_order[::-1]:
        f = max(0, uncovered[v])
        g = centre[v]
        if f + g <= r:
            f = -1
        elif f == r:
            count += 1
            g = 0
            f = -1
        uncovered[v] = f
        centre[v] = g
        p = parent[v]
        if p >= 0:
            if f >= 0:
                uncovered[p] = max(uncovered[p], f + 1)
            centre[p] = min(centre[p], g + 1)
    if uncovered[tree.root] >= 0:
        count += 1
    return count


@dataclass(frozen=True)
class ContourPath:
    """Depth-first contour: heights at the 2(n-1)+1 integer times."""

    values: np.ndarray
    vertices: np.ndarray

    @property
    def n(self) -> int:
        return (self.values.size - 1) // 2 + 1


def contour_path(tree: DiscreteTree) -> ContourPath:
    if tree.n < 2:
        raise ValueError("contour of a single-vertex tree is degenerate")
    index = TreeMetricIndex(tree)
    verts = index.tour.copy()
    return ContourPath(index.depth[verts], verts)


def normalized_contour(tree_or_path, t):
    """n^{-1/2} C(2(n-1)t), linearly interpolated, for t in [0, 1]."""
    path = tree_or_path if isinstance(tree_or_path, ContourPath) else contour_path(tree_or_path)
    n = path.n
    t = np.asarray(t, dtype=float)
    if np.any((t < 0) | (t > 1)):
        raise ValueError("t must lie in [0, 1]")
    grid = np.arange(path.values.size, dtype=float)
    out = np.interp(2 * (n - 1) * t, grid, path.values.astype(float)) / math.sqrt(n)
    return float(out) if out.ndim == 0 else out


def tree_from_contour(values) -> DiscreteTree:
    """Rebuild the plane tree whose contour has the given heights."""
    values = np.asarray(values, dtype=np.int64)
    steps = np.diff(values)
    if values[0] != 0 or values[-1] != 0 or np.any(np.abs(steps) != 1):
        raise ValueError("not a contour path")
    parent = [-1]
    current = 0
    for s in steps:
        if s > 0:
            parent.append(current)
            current = len(parent) - 1
        else:
            current = parent[current]
    return DiscreteTree(np.array(parent))


def canonical_form(tree: DiscreteTree, root: int | None = None) -> str:
    """AHU string; equal iff the rooted (unordered) trees are isomorphic."""
    if root is not None and root != tree.root:
        tree = tree.rerooted(root)
    labels = [""] * tree.n
    for v in tree.bfs_order[::-1]:
        kids = sorted(labels[c] for c in tree.children(v))
        labels[v] = "(" + "".join(kids) + ")"
    return labels[tree.root]


def lukasiewicz_words(n: int):
    """Yield every Lukasiewicz word of length n (one per plane tree)."""
    word = [0] * n

    def rec(i, height):
        # height = pending subtrees still to be opened before position i
        if i == n:
            if height == 0:
                yield np.array(word, dtype=np.int64)
            return
        if height == 0:
            return
        for k in range(0, n - i):
            new = height - 1 + k
            if new > n - i - 1:
                break
            word[i] = k
            yield from rec(i + 1, new)

    if n == 1:
        yield np.zeros(1, dtype=np.int64)
        return
    for k in range(1, n):
        word[0] = k
        yield from rec(1, k)


def enumerate_rooted_trees(n: int) -> list[DiscreteTree]:
    """One representative per isomorphism class of rooted trees on n vertices."""
    seen = {}
    for word in lukasiewicz_words(n):
        tree = DiscreteTree.from_offspring(word)
        key = canonical_form(tree)
        if key not in seen:
            seen[key] = tree
    return [seen[k] for k in sorted(seen)]
