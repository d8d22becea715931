"""Tree-indexed Gaussian fields and the Gaussian side of Ray-Knight.

All matrices are in resistance units, which on a unit-conductance tree is
plain graph distance.  For the walk killed at ``y`` the relevant covariance
is ``Sigma_ij = R(y, b(y, z_i, z_j))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rand_tree import DiscreteTree, covering_number, diameter
from .walk_engine import CSRW, LambdaTooLargeError, WalkMode, hit_batch

__all__ = [
    "SigmaMatrices",
    "GaussianFieldSample",
    "IsomorphismReport",
    "sample_tree_gaussian",
    "sample_tree_gaussian_batch",
    "build_sigma_matrices",
    "mgf_determinant",
    "admissible_lambda_bound",
    "check_isomorphism",
    "gff_max_expectation",
    "bdnp_bound",
    "bdnp_terms",
    "off_path_components",
]


@dataclass(frozen=True)
class SigmaMatrices:
    """Covariance data for marks ``z_1..z_M`` of the walk from ``x`` killed at ``y``.

    ``marks`` is stored in the sorted order used by the matrices:
    nondecreasing ``R(y, b(x, y, z))``, path marks before off-path marks at
    equal height, and each off-path component kept together.  In this order
    ``SigmaHat`` is block upper triangular with zero blocks on the path.
    ``perm[i]`` is the position in the caller's list of ``marks[i]``.
    """

    Sigma: np.ndarray
    SigmaHat: np.ndarray
    marks: np.ndarray
    x: int
    y: int
    perm: np.ndarray
    component: np.ndarray  # -1 on the path, else the id of the off-path component

    def reorder(self, values) -> np.ndarray:
        """Put per-mark values given in caller order into matrix order."""
        return np.asarray(values)[self.perm]


@dataclass(frozen=True)
class GaussianFieldSample:
    values: np.ndarray
    root: int
    scale: float


def _edge_order(tree: DiscreteTree, root: int):
    """BFS order and parents of ``tree`` re-rooted at ``root``."""
    if root == tree.root:
        return tree.bfs_order, tree.parent
    rerooted = tree.rerooted(root)
    return rerooted.bfs_order, rerooted.parent


def sample_tree_gaussian_batch(tree: DiscreteTree, root: int, scale: float, replicas: int,
                               rng: np.random.Generator) -> np.ndarray:
    """``replicas x n`` array of independent fields pinned at ``root``."""
    if not scale > 0:
        raise ValueError("scale must be positive")
    order, parent = _edge_order(tree, root)
    steps = rng.standard_normal((replicas, tree.n)) * math.sqrt(scale)
    out = np.zeros((replicas, tree.n))
    for v in order[1:]:
        out[:, v] = out[:, parent[v]] + steps[:, v]
    return out


def sample_tree_gaussian(tree: DiscreteTree, root: int, scale: float,
                         rng: np.random.Generator) -> GaussianFieldSample:
    values = sample_tree_gaussian_batch(tree, root, scale, 1, rng)[0]
    return GaussianFieldSample(values, int(root), float(scale))


def off_path_components(tree: DiscreteTree, x: int, y: int, vertices) -> np.ndarray:
    """Component label of each vertex after deleting the path [[x, y]].

    Vertices on the path get ``-1``; the others are labelled by the path
    vertex they hang from together with the first step away from it.
    """
    index = tree.index
    vertices = np.asarray(vertices, dtype=np.int64)
    attach = np.atleast_1d(index.branch_point(np.full_like(vertices, x),
                                              np.full_like(vertices, y), vertices))
    labels = np.full(vertices.size, -1, dtype=np.int64)
    seen: dict[tuple[int, int], int] = {}
    for i, (z, b) in enumerate(zip(vertices, attach)):
        if z == b:
            continue
        # the neighbour of b towards z identifies the component
        step = next(int(w) for w in tree.neighbors(int(b))
                    if index.distance(int(w), int(z)) < index.distance(int(b), int(z)))
        labels[i] = seen.setdefault((int(b), step), len(seen))
    return labels


def build_sigma_matrices(tree: DiscreteTree, x: int, y: int, marks) -> SigmaMatrices:
    marks_in = np.asarray(marks, dtype=np.int64)
    if np.any(marks_in == y):
        raise ValueError("marks must exclude the kill vertex y")
    index = tree.index
    m = marks_in.size
    ys = np.full(m, y)
    xs = np.full(m, x)
    height_on_path = np.atleast_1d(index.distance(ys, index.branch_point(xs, ys, marks_in)))
    comp = off_path_components(tree, x, y, marks_in)
    perm = np.lexsort((marks_in, comp, comp >= 0, height_on_path))
    z = marks_in[perm]
    comp = comp[perm]
    zi, zj = np.meshgrid(z, z, indexing="ij")
    sigma = index.distance(np.full(zi.shape, y), index.branch_point(np.full(zi.shape, y), zi, zj))
    sigma = np.asarray(sigma, dtype=float).reshape(m, m)
    sigma_hat = sigma - height_on_path[perm][None, :].astype(float)
    return SigmaMatrices(sigma, sigma_hat, z, int(x), int(y), perm, comp)


def _check_admissible(m: SigmaMatrices, lam: np.ndarray):
    """Raise unless I - Sigma Lambda has a positive spectrum."""
    if not np.any(lam):
        return
    w, v = np.linalg.eigh(m.Sigma)
    root = (v * np.sqrt(np.clip(w, 0, None))) @ v.T
    sym = np.eye(lam.size) - root @ np.diag(lam) @ root
    if np.linalg.eigvalsh((sym + sym.T) / 2).min() <= 0:
        raise LambdaTooLargeError("lambda too large: I - Sigma Lambda not positive")


def mgf_determinant(m: SigmaMatrices, lambdas, order: str = "marks") -> float:
    """det(I - SigmaHat Lambda) / det(I - Sigma Lambda).

    ``lambdas`` are aligned with ``m.marks`` by default; pass
    ``order="input"`` to give them in the caller's original mark order.
    """
    lam = np.asarray(lambdas, dtype=float)
    if order == "input":
        lam = m.reorder(lam)
    elif order != "marks":
        raise ValueError("order must be 'marks' or 'input'")
    if lam.shape != m.marks.shape:
        raise ValueError("one lambda per mark required")
    _check_admissible(m, lam)
    eye = np.eye(lam.size)
    den = np.linalg.det(eye - m.Sigma * lam[None, :])
    if not den > 0:
        raise LambdaTooLargeError("lambda too large: det(I - Sigma Lambda) <= 0")
    num = np.linalg.det(eye - m.SigmaHat * lam[None, :])
    return float(num / den)


def admissible_lambda_bound(m: SigmaMatrices) -> float:
    """Largest c such that lambda_i < c for all i keeps the MGF finite."""
    if m.marks.size == 0:
        return math.inf
    return float(1.0 / np.linalg.eigvalsh(m.Sigma).max())


@dataclass(frozen=True)
class IsomorphismReport:
    """Per-mark moment comparison, marks in the caller's order."""

    marks: np.ndarray
    lhs_mean: np.ndarray
    rhs_mean: np.ndarray
    lhs_second: np.ndarray
    rhs_second: np.ndarray
    z_mean: np.ndarray
    z_second: np.ndarray
    replicas: int

    @property
    def max_abs_z(self) -> float:
        z = np.concatenate([self.z_mean, self.z_second])
        return float(np.nanmax(np.abs(z))) if z.size else 0.0


def _two_sample_z(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    se = np.sqrt(a.var(axis=0, ddof=1) / a.shape[0] + b.var(axis=0, ddof=1) / b.shape[0])
    diff = a.mean(axis=0) - b.mean(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        z = np.where(se > 0, diff / np.where(se > 0, se, 1.0), np.where(diff == 0, 0.0, np.inf))
    return z


def check_isomorphism(tree: DiscreteTree, x: int, y: int, marks, replicas: int,
                      rng: np.random.Generator, mode: WalkMode = CSRW) -> IsomorphismReport:
    """Compare L(z) + (G_z - G_b)^2 + (G'_z - G'_b)^2 with G_z^2 + G'_z^2.

    ``b = b(x, y, z)``; the fields have covariance R(y, b(y, ., .)) / 2 and
    are independent of the walk. The two sides use independent samples.
    """
    if replicas < 10_000:
        raise ValueError("isomorphism check needs at least 1e4 replicas")
    mode = WalkMode.parse(mode)
    if not mode.continuous:
        raise ValueError("the isomorphism is exact only for continuous-time walks")
    marks = np.asarray(marks, dtype=np.int64)
    index = tree.index
    branch = np.atleast_1d(index.branch_point(np.full_like(marks, x), np.full_like(marks, y),
                                              marks))
    key = int(rng.integers(0, 2**63))
    _, local = hit_batch(tree, mode, x, y, marks, key, 0, replicas)
    g1 = sample_tree_gaussian_batch(tree, y, 0.5, replicas, rng)
    g2 = sample_tree_gaussian_batch(tree, y, 0.5, replicas, rng)
    lhs = local + (g1[:, marks] - g1[:, branch]) ** 2 + (g2[:, marks] - g2[:, branch]) ** 2
    h1 = sample_tree_gaussian_batch(tree, y, 0.5, replicas, rng)
    h2 = sample_tree_gaussian_batch(tree, y, 0.5, replicas, rng)
    rhs = h1[:, marks] ** 2 + h2[:, marks] ** 2
    return IsomorphismReport(
        marks, lhs.mean(0), rhs.mean(0), (lhs**2).mean(0), (rhs**2).mean(0),
        _two_sample_z(lhs, rhs), _two_sample_z(lhs**2, rhs**2), replicas)


def gff_max_expectation(tree: DiscreteTree, root: int, replicas: int,
                        rng: np.random.Generator, chunk: int = 4096) -> tuple[float, float]:
    """Monte Carlo E[max_x G(x)] for the unit-scale field pinned at ``root``.

    Returns ``(estimate, standard error)``.  The pinned value 0 takes part in
    the maximum.
    """
    if replicas < 1000:
        raise ValueError("use at least 1e3 field draws")
    maxima = []
    done = 0
    while done < replicas:
        k = min(chunk, replicas - done)
        maxima.append(sample_tree_gaussian_batch(tree, root, 1.0, k, rng).max(axis=1))
        done += k
    maxima = np.concatenate(maxima)
    return float(maxima.mean()), float(maxima.std(ddof=1) / math.sqrt(replicas))


def bdnp_terms(tree: DiscreteTree) -> tuple[np.ndarray, int]:
    """Covering numbers A_i = N(2^-i D) for i = 1..K, K = max(1, ceil(log2 ln n))."""
    if tree.n < 4:
        raise ValueError("the chaining functional needs n >= 4")
    d = diameter(tree)
    k = max(1, math.ceil(math.log2(math.log(tree.n))))
    counts = np.array([covering_number(tree, int(d * 2.0**-i)) for i in range(1, k + 1)])
    return counts, d


def bdnp_bound(tree: DiscreteTree) -> float:
    """sum_i sqrt(2^-i ln A_i), the bracket of the chaining cover-time bound."""
    counts, _ = bdnp_terms(tree)
    i = np.arange(1, counts.size + 1)
    return float(np.sum(np.sqrt(2.0**-i * np.log(counts))))
