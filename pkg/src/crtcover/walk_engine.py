"""Random walks on trees: cover times, local times at hitting times, and
exact small-instance oracles.

Local times are occupation divided by the speed measure ``mu``.  In
discrete time the occupation of ``x`` up to ``t`` counts the times
``0 <= s <= t`` with ``X_s = x``, so the cover time is exactly the first
time every local time is positive.  At a hitting time ``tau_y`` the arrival
at ``y`` itself is not counted, which makes ``L(y) = 0`` in every mode.

Continuous-time walks jump to a uniform neighbour after an exponential
holding time with mean ``mu(v) / deg(v)``: mean 1 for the conductance
measure (constant speed) and ``1/deg`` for the counting measure (variable
speed).  With that choice the Ray-Knight identities hold exactly.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numba as nb
import numpy as np
import scipy.linalg

from ._rng import next_below, next_exponential, seed_state
from .rand_tree import DiscreteTree

__all__ = [
    "WalkKind",
    "Measure",
    "WalkMode",
    "CoverRecord",
    "CoverBatch",
    "LocalTimeVector",
    "WalkBudgetError",
    "LambdaTooLargeError",
    "OracleSizeError",
    "DEFAULT_STEP_BUDGET",
    "DTRW",
    "CSRW",
    "VSRW",
    "run_cover",
    "cover_batch",
    "cover_trajectory",
    "run_until_hit",
    "hit_batch",
    "expected_hitting_exact",
    "expected_cover_exact_small",
    "mgf_local_times_exact",
    "green_killed",
    "killed_laplacian",
]

DEFAULT_STEP_BUDGET = 10**10
MAX_ORACLE_SIZE = 14


class WalkBudgetError(RuntimeError):
    """A walk exceeded its step budget."""


class LambdaTooLargeError(ValueError):
    """The Feynman-Kac system is not positive definite."""


class OracleSizeError(ValueError):
    """Tree too large for the exponential-state oracle."""


class WalkKind(str, enum.Enum):
    DISCRETE_TIME = "discrete"
    CONSTANT_SPEED = "constant_speed"


class Measure(str, enum.Enum):
    COUNTING = "counting"
    CONDUCTANCE = "conductance"


@dataclass(frozen=True)
class WalkMode:
    kind: WalkKind = WalkKind.DISCRETE_TIME
    measure: Measure = Measure.CONDUCTANCE

    def __post_init__(self):
        object.__setattr__(self, "kind", WalkKind(self.kind))
        object.__setattr__(self, "measure", Measure(self.measure))

    @property
    def continuous(self) -> bool:
        return self.kind is WalkKind.CONSTANT_SPEED

    def mu(self, tree: DiscreteTree) -> np.ndarray:
        if self.measure is Measure.COUNTING:
            return np.ones(tree.n)
        return tree.degree.astype(float)

    def hold_mean(self, tree: DiscreteTree) -> np.ndarray:
        """Mean time spent per visit."""
        if not self.continuous:
            return np.ones(tree.n)
        return self.mu(tree) / np.maximum(tree.degree, 1)

    @classmethod
    def parse(cls, spec) -> "WalkMode":
        if isinstance(spec, WalkMode):
            return spec
        if isinstance(spec, str):
            aliases = {
                "dtrw": ("discrete", "conductance"),
                "discrete": ("discrete", "conductance"),
                "csrw": ("constant_speed", "conductance"),
                "vsrw": ("constant_speed", "counting"),
            }
            return cls(*aliases[spec.lower()])
        return cls(spec.get("kind", "discrete"), spec.get("measure", "conductance"))


DTRW = WalkMode(WalkKind.DISCRETE_TIME, Measure.CONDUCTANCE)
CSRW = WalkMode(WalkKind.CONSTANT_SPEED, Measure.CONDUCTANCE)
VSRW = WalkMode(WalkKind.CONSTANT_SPEED, Measure.COUNTING)


@dataclass(frozen=True)
class LocalTimeVector:
    vertices: np.ndarray
    values: np.ndarray
    measure: Measure

    def as_dict(self) -> dict:
        return {int(v): float(x) for v, x in zip(self.vertices, self.values)}


@dataclass(frozen=True)
class CoverRecord:
    tau_cov: float
    tau_cov_plus: float
    start: int
    last_covered: int
    local_times_cov: np.ndarray | None = None
    local_times_plus: np.ndarray | None = None


@dataclass(frozen=True)
class CoverBatch:
    """Column-oriented cover records for consecutive replicas of one stream."""

    tau_cov: np.ndarray
    tau_cov_plus: np.ndarray
    last_covered: np.ndarray
    start: int
    local_times_cov: np.ndarray | None = None
    local_times_plus: np.ndarray | None = None

    def __len__(self):
        return self.tau_cov.size

    def record(self, i: int) -> CoverRecord:
        lt_c = None if self.local_times_cov is None else self.local_times_cov[i]
        lt_p = None if self.local_times_plus is None else self.local_times_plus[i]
        return CoverRecord(float(self.tau_cov[i]), float(self.tau_cov_plus[i]), self.start,
                           int(self.last_covered[i]), lt_c, lt_p)


@nb.njit(cache=True)
def _cover_kernel(nbr_ptr, nbr_idx, hold_mean, continuous, start, key, first, count,
                  budget, record, until_return):
    n = nbr_ptr.size - 1
    tau = np.zeros(count)
    plus = np.zeros(count)
    last = np.full(count, start, dtype=np.int64)
    rows = count if record else 1
    occ_cov = np.zeros((rows, n))
    occ_plus = np.zeros((rows, n))
    occ = np.zeros(n)
    visited = np.zeros(n, dtype=np.uint8)
    if n == 1:
        if record:
            for r in range(count):
                occ_cov[r, 0] = 0.0 if continuous else 1.0
                occ_plus[r, 0] = occ_cov[r, 0]
        return tau, plus, last, occ_cov, occ_plus, True
    for r in range(count):
        s = seed_state(key, first + r)
        visited[:] = 0
        visited[start] = 1
        if record:
            occ[:] = 0.0
            if not continuous:
                occ[start] = 1.0
        remaining = n - 1
        v = start
        t = 0.0
        steps = 0
        while True:
            if continuous:
                dt = next_exponential(s) * hold_mean[v]
                t += dt
                if record:
                    occ[v] += dt
            else:
                t += 1.0
            lo = nbr_ptr[v]
            v = nbr_idx[lo + next_below(s, nbr_ptr[v + 1] - lo)]
            if record and not continuous:
                occ[v] += 1.0
            steps += 1
            if steps > budget:
                return tau, plus, last, occ_cov, occ_plus, False
            if remaining > 0:
                if visited[v] == 0:
                    visited[v] = 1
                    remaining -= 1
                    if remaining == 0:
                        tau[r] = t
                        last[r] = v
                        if record:
                            occ_cov[r, :] = occ
                        if not until_return:
                            plus[r] = np.nan
                            break
            elif v == start:
                plus[r] = t
                if record:
                    occ_plus[r, :] = occ
                break
    return tau, plus, last, occ_cov, occ_plus, True


@nb.njit(cache=True)
def _hit_kernel(nbr_ptr, nbr_idx, hold_mean, continuous, start, target, key, first, count,
                budget):
    n = nbr_ptr.size - 1
    times = np.zeros(count)
    occ = np.zeros((count, n))
    if start == target:
        return times, occ, True
    for r in range(count):
        s = seed_state(key, first + r)
        v = start
        t = 0.0
        steps = 0
        while v != target:
            if continuous:
                dt = next_exponential(s) * hold_mean[v]
            else:
                dt = 1.0
            t += dt
            occ[r, v] += dt
            lo = nbr_ptr[v]
            v = nbr_idx[lo + next_below(s, nbr_ptr[v + 1] - lo)]
            steps += 1
            if steps > budget:
                return times, occ, False
        times[r] = t
    return times, occ, True


@nb.njit(cache=True)
def _trajectory_kernel(nbr_ptr, nbr_idx, start, key, replica, budget):
    n = nbr_ptr.size - 1
    s = seed_state(key, replica)
    visited = np.zeros(n, dtype=np.uint8)
    visited[start] = 1
    remaining = n - 1
    cap = 1024
    path = np.empty(cap, dtype=np.int64)
    path[0] = start
    k = 1
    v = start
    while remaining > 0:
        lo = nbr_ptr[v]
        v = nbr_idx[lo + next_below(s, nbr_ptr[v + 1] - lo)]
        if k == cap:
            cap *= 2
            grown = np.empty(cap, dtype=np.int64)
            grown[:k] = path[:k]
            path = grown
        path[k] = v
        k += 1
        if visited[v] == 0:
            visited[v] = 1
            remaining -= 1
        if k > budget:
            return path[:k], False
    return path[:k], True


def _key_from_rng(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**63))


def cover_batch(tree: DiscreteTree, mode: WalkMode, start: int, key: int,
                first_replica: int = 0, count: int = 1, record_local_times: bool = False,
                budget: int = DEFAULT_STEP_BUDGET, until_return: bool = True) -> CoverBatch:
    """Run replicas ``first_replica .. first_replica + count - 1`` of stream ``key``.

    With ``until_return=False`` walks stop at the cover time and
    ``tau_cov_plus`` is NaN.
    """
    mode = WalkMode.parse(mode)
    if not 0 <= start < tree.n:
        raise ValueError("start vertex out of range")
    tau, plus, last, occ_c, occ_p, ok = _cover_kernel(
        tree.nbr_ptr, tree.nbr_idx, mode.hold_mean(tree), mode.continuous, int(start),
        np.uint64(key), np.uint64(first_replica), int(count), int(budget),
        bool(record_local_times), bool(until_return))
    if not ok:
        raise WalkBudgetError(f"cover walk exceeded {budget} steps")
    lt_c = lt_p = None
    if record_local_times:
        mu = mode.mu(tree)
        lt_c, lt_p = occ_c / mu, occ_p / mu
    return CoverBatch(tau, plus, last, int(start), lt_c, lt_p)


def run_cover(tree: DiscreteTree, mode: WalkMode, start: int, rng: np.random.Generator,
              record_local_times: bool = False,
              budget: int = DEFAULT_STEP_BUDGET) -> CoverRecord:
    """One walk from ``start`` until it has covered the tree and come back."""
    batch = cover_batch(tree, mode, start, _key_from_rng(rng), 0, 1, record_local_times, budget)
    return batch.record(0)


def cover_trajectory(tree: DiscreteTree, start: int, key: int, replica: int = 0,
                     budget: int = DEFAULT_STEP_BUDGET) -> np.ndarray:
    """Discrete-time path ``X_0 .. X_{tau_cov}``.

    Uses the same stream as :func:`cover_batch`, so for a discrete-time
    walk the path length minus one equals that replica's cover time.
    """
    path, ok = _trajectory_kernel(tree.nbr_ptr, tree.nbr_idx, int(start), np.uint64(key),
                                  np.uint64(replica), int(budget))
    if not ok:
        raise WalkBudgetError(f"cover walk exceeded {budget} steps")
    return path


def hit_batch(tree: DiscreteTree, mode: WalkMode, start: int, target: int, marks, key: int,
              first_replica: int = 0, count: int = 1,
              budget: int = DEFAULT_STEP_BUDGET) -> tuple[np.ndarray, np.ndarray]:
    """Hitting times of ``target`` and local times at ``marks`` (``count x M``)."""
    mode = WalkMode.parse(mode)
    marks = np.asarray(marks, dtype=np.int64)
    times, occ, ok = _hit_kernel(tree.nbr_ptr, tree.nbr_idx, mode.hold_mean(tree),
                                 mode.continuous, int(start), int(target), np.uint64(key),
                                 np.uint64(first_replica), int(count), int(budget))
    if not ok:
        raise WalkBudgetError(f"hitting walk exceeded {budget} steps")
    return times, occ[:, marks] / mode.mu(tree)[marks]


def run_until_hit(tree: DiscreteTree, mode: WalkMode, start: int, target: int, marks,
                  rng: np.random.Generator,
                  budget: int = DEFAULT_STEP_BUDGET) -> tuple[float, LocalTimeVector]:
    mode = WalkMode.parse(mode)
    times, lt = hit_batch(tree, mode, start, target, marks, _key_from_rng(rng), 0, 1, budget)
    return float(times[0]), LocalTimeVector(np.asarray(marks, dtype=np.int64), lt[0],
                                            mode.measure)


def killed_laplacian(tree: DiscreteTree, y: int) -> tuple[np.ndarray, np.ndarray]:
    """Graph Laplacian restricted to ``V - {y}`` and the kept vertex ids."""
    keep = np.delete(np.arange(tree.n), y)
    lap = np.diag(tree.degree.astype(float))
    child = np.flatnonzero(tree.parent >= 0)
    lap[child, tree.parent[child]] = -1.0
    lap[tree.parent[child], child] = -1.0
    return lap[np.ix_(keep, keep)], keep


def _solve_refined(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Dense LU solve plus one step of iterative refinement."""
    lu = scipy.linalg.lu_factor(a)
    x = scipy.linalg.lu_solve(lu, b)
    return x + scipy.linalg.lu_solve(lu, b - a @ x)


def expected_hitting_exact(tree: DiscreteTree, mode: WalkMode, x: int, y: int) -> float:
    """E_x[tau_y] from the first-step linear system."""
    mode = WalkMode.parse(mode)
    if x == y:
        return 0.0
    lap, keep = killed_laplacian(tree, y)
    # deg(z) h(z) - sum_{w~z} h(w) = deg(z) * mean holding time at z
    rhs = (tree.degree * mode.hold_mean(tree))[keep]
    h = _solve_refined(lap, rhs)
    return float(h[np.searchsorted(keep, x)])


def green_killed(tree: DiscreteTree, y: int, z: int, w: int) -> float:
    """Expected local time at ``w`` before hitting ``y``, starting at ``z``.

    Equal to the resistance from ``y`` to the branch point of ``y, z, w``;
    graph distance for unit conductances.
    """
    index = tree.index
    return float(index.distance(y, index.branch_point(y, z, w)))


def mgf_local_times_exact(tree: DiscreteTree, measure, x: int, y: int, marks, lambdas) -> float:
    """E_x[exp(sum_i lambda_i L_{tau_y}(z_i))] for a continuous-time walk.

    Solves the Feynman-Kac system. Multiplying by ``mu`` removes the measure,
    so the answer is the same for both measures (``measure`` is validated
    only).
    """
    Measure(measure)
    marks = np.asarray(marks, dtype=np.int64)
    lambdas = np.asarray(lambdas, dtype=float)
    if marks.shape != lambdas.shape:
        raise ValueError("marks and lambdas must have equal length")
    if x == y:
        return 1.0
    lap, keep = killed_laplacian(tree, y)
    potential = np.zeros(tree.n)
    np.add.at(potential, marks, lambdas)
    potential[y] = 0.0
    a = lap - np.diag(potential[keep])
    try:
        chol = scipy.linalg.cho_factor(a)
    except np.linalg.LinAlgError:
        raise LambdaTooLargeError("lambda too large: Feynman-Kac system not positive definite")
    rhs = np.zeros(tree.n)
    rhs[tree.neighbors(y)] = 1.0
    h = scipy.linalg.cho_solve(chol, rhs[keep])
    h = h + scipy.linalg.cho_solve(chol, rhs[keep] - a @ h)
    return float(h[np.searchsorted(keep, x)])


def expected_cover_exact_small(tree: DiscreteTree, mode: WalkMode, start: int,
                               until_return: bool = False) -> float:
    """Exact E[tau_cov] by dynamic programming over connected visited sets.

    For a visited set ``S`` the expected remaining time ``T_S(v)`` solves an
    ``|S| x |S|`` system whose right side involves ``T_{S+w}(w)`` for the
    newly discovered vertex ``w``; sets are handled from largest to smallest.
    With ``until_return`` the full set starts from ``E_v tau_start`` instead
    of zero, giving E[tau_cov^+].
    """
    mode = WalkMode.parse(mode)
    n = tree.n
    if n > MAX_ORACLE_SIZE:
        raise OracleSizeError(f"exact cover oracle limited to n <= {MAX_ORACLE_SIZE}")
    if n == 1:
        return 0.0
    hold = mode.hold_mean(tree)
    nbrs = [tree.neighbors(v).tolist() for v in range(n)]
    full = (1 << n) - 1

    # all connected vertex sets containing start, grown one neighbour at a time
    levels = [{1 << start}]
    for _ in range(n - 1):
        nxt = set()
        for mask in levels[-1]:
            for v in range(n):
                if mask >> v & 1:
                    for w in nbrs[v]:
                        if not mask >> w & 1:
                            nxt.add(mask | 1 << w)
        levels.append(nxt)

    if until_return:
        value = {full: np.array([expected_hitting_exact(tree, mode, v, start)
                                 for v in range(n)])}
    else:
        value = {full: np.zeros(n)}
    for level in reversed(levels[:-1]):
        for mask in level:
            members = [v for v in range(n) if mask >> v & 1]
            pos = {v: i for i, v in enumerate(members)}
            k = len(members)
            a = np.zeros((k, k))
            b = np.zeros(k)
            for i, v in enumerate(members):
                deg = len(nbrs[v])
                a[i, i] = deg
                b[i] = deg * hold[v]
                for w in nbrs[v]:
                    if w in pos:
                        a[i, pos[w]] -= 1.0
                    else:
                        b[i] += value[mask | 1 << w][w]
            sol = np.linalg.solve(a, b)
            out = np.zeros(n)
            out[members] = sol
            value[mask] = out
    return float(value[1 << start][start])
