"""Squared Bessel processes: exact transitions, an Euler-Maruyama oracle,
and BESQ fields indexed by real trees.

The exact transition uses the Poisson mixture of Gamma laws

    X_t | X_0 = x  ~  2t * Gamma(N + delta/2),   N ~ Poisson(x / (2t)),

with the convention Gamma(0) = 0, so dimension 0 returns an exact zero with
probability exp(-x / (2t)).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numba as nb
import numpy as np

if TYPE_CHECKING:
    from .crt import RealTree

__all__ = [
    "Clock",
    "TreeBesqField",
    "besq_transition",
    "euler_maruyama_besq",
    "euler_maruyama_terminal",
    "tree_indexed_besq",
    "tree_hits_zero",
    "zero_statistics",
    "zero_cluster_sizes",
    "besq_laplace_transform",
]


class Clock(str, enum.Enum):
    """How edge lengths of a real tree turn into BESQ time."""

    METRIC_DISTANCE = "metric"
    HALF_RESISTANCE = "half_resistance"

    @property
    def factor(self) -> float:
        return 1.0 if self is Clock.METRIC_DISTANCE else 0.5


def besq_laplace_transform(lam, x0: float, t: float, dim: float):
    """E[exp(-lam X_t)] for BESQ^dim started at x0."""
    lam = np.asarray(lam, dtype=float)
    s = 1.0 + 2.0 * lam * t
    return s ** (-dim / 2.0) * np.exp(-lam * x0 / s)


def besq_transition(x, dt: float, dim: float, rng: np.random.Generator, size=None):
    """Exact draw(s) of X_{dt} given X_0 = x. ``x`` may be an array."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    if dim < 0:
        raise ValueError("dimension must be nonnegative")
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("BESQ values are nonnegative")
    shape_out = np.broadcast_shapes(x.shape, size if size is not None else ())
    counts = np.asarray(rng.poisson(np.broadcast_to(x / (2.0 * dt), shape_out)))
    shape = counts + dim / 2.0
    positive = shape > 0
    out = np.zeros(shape_out)
    out[positive] = 2.0 * dt * rng.gamma(shape[positive])
    return float(out) if out.ndim == 0 else out


def euler_maruyama_terminal(x: float, step: float, horizon: float, dim: float, paths: int,
                            rng: np.random.Generator) -> np.ndarray:
    """Terminal values of ``paths`` Euler-Maruyama paths.

    Dimension 0 absorbs at zero; positive dimension clamps at zero.
    """
    if not 0 < step <= horizon:
        raise ValueError("need 0 < step <= horizon")
    steps = int(round(horizon / step))
    h = horizon / steps
    root_h = math.sqrt(h)
    cur = np.full(paths, float(x))
    for _ in range(steps):
        noise = rng.standard_normal(paths)
        cur = cur + dim * h + 2.0 * np.sqrt(cur) * root_h * noise
        if dim == 0:
            cur = np.where(cur > 0, cur, 0.0)  # absorbed paths stay at 0: drift and noise vanish
        else:
            np.maximum(cur, 0.0, out=cur)
    return cur


def euler_maruyama_besq(x: float, step: float, horizon: float, dim: float,
                        rng: np.random.Generator) -> np.ndarray:
    """One Euler-Maruyama path on the grid 0, step, ..., horizon."""
    if not 0 < step <= horizon:
        raise ValueError("need 0 < step <= horizon")
    steps = int(round(horizon / step))
    h = horizon / steps
    noise = rng.standard_normal(steps) * math.sqrt(h)
    path = np.empty(steps + 1)
    path[0] = x
    for k in range(steps):
        cur = path[k]
        nxt = cur + dim * h + 2.0 * math.sqrt(cur) * noise[k]
        if dim == 0 and (cur == 0 or nxt <= 0):
            path[k + 1:] = 0.0
            break
        path[k + 1] = max(nxt, 0.0)
    return path


@dataclass(frozen=True)
class TreeBesqField:
    """Values of a tree-indexed BESQ at the nodes of a real tree."""

    tree: "RealTree"
    values: np.ndarray
    z0: float
    dim: float
    clock: Clock


@nb.njit(cache=True)
def _field_kernel(parent, length, z0, dim, rng, stop_at_zero):
    n = parent.size
    vals = np.zeros(n)
    vals[0] = z0
    for i in range(1, n):
        x = vals[parent[i]]
        if x == 0.0 and dim == 0.0:
            continue
        dt = length[i]
        count = rng.poisson(x / (2.0 * dt)) if x > 0 else 0
        shape = count + dim / 2.0
        if shape > 0:
            vals[i] = 2.0 * dt * rng.gamma(shape, 1.0)
        elif stop_at_zero:
            return vals, True
    if stop_at_zero:
        return vals, False
    hit = False
    for i in range(n):
        if vals[i] == 0.0:
            hit = True
            break
    return vals, hit


def _check_tree(tree):
    if tree.parent.size > 1 and not np.all(tree.edge_length[1:] > 0):
        raise ValueError("real-tree edge lengths must be positive")


def tree_indexed_besq(realtree: "RealTree", z0: float, clock, rng: np.random.Generator,
                      dim: float = 0.0) -> TreeBesqField:
    """Sample BESQ^dim(z0) along the tree, branches independent given the branch value."""
    clock = Clock(clock)
    if z0 < 0:
        raise ValueError("z0 must be nonnegative")
    _check_tree(realtree)
    lengths = realtree.edge_length * clock.factor
    vals, _ = _field_kernel(realtree.parent, lengths, float(z0), float(dim), rng, False)
    return TreeBesqField(realtree, vals, float(z0), float(dim), clock)


def tree_hits_zero(realtree: "RealTree", z0: float, clock, rng: np.random.Generator) -> bool:
    """Whether a BESQ^0(z0) field on the tree has a zero; stops at the first one."""
    clock = Clock(clock)
    if z0 == 0:
        return True
    lengths = realtree.edge_length * clock.factor
    _, hit = _field_kernel(realtree.parent, lengths, float(z0), 0.0, rng, True)
    return bool(hit)


def _node_weights(field: TreeBesqField) -> np.ndarray:
    weight = getattr(field.tree, "weight", None)
    if weight is None:
        return np.ones(field.values.size)
    return np.asarray(weight, dtype=float)


def zero_statistics(field: TreeBesqField) -> tuple[bool, float]:
    """``(hit_zero, zero_mass)``; mass counts grid points when the tree carries weights."""
    zero = field.values == 0.0
    weight = _node_weights(field)
    total = weight.sum()
    mass = float(weight[zero].sum() / total) if total > 0 else 0.0
    return bool(zero.any()), mass


def zero_cluster_sizes(field: TreeBesqField) -> np.ndarray:
    """Grid mass of each maximal zero subtree (the zero set is descendant closed)."""
    zero = field.values == 0.0
    parent = field.tree.parent
    weight = _node_weights(field)
    top = np.arange(zero.size)
    for i in range(1, zero.size):
        if zero[i] and zero[parent[i]]:
            top[i] = top[parent[i]]
    if zero.size and zero[0]:
        top[0] = 0
    heads = top[zero]
    if heads.size == 0:
        return np.zeros(0)
    uniq, inv = np.unique(heads, return_inverse=True)
    return np.bincount(inv, weights=weight[zero], minlength=uniq.size)
