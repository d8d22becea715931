"""Random streams keyed by (master seed, experiment, n, replica).

Two kinds of stream are used:

* numpy ``Generator`` objects (PCG64 fed by ``SeedSequence``) for vectorised
  sampling of trees, Gaussian fields and BESQ transitions;
* a xoshiro256** state held in a ``uint64[4]`` array for the numba walk
  kernels, where building a ``Generator`` per replica would dominate the cost
  of small walks.

Both are pure functions of their key, so results never depend on how
replicas are scheduled across workers.
"""

from __future__ import annotations

import zlib

import numba as nb
import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_DOUBLE_UNIT = 1.0 / 9007199254740992.0  # 2**-53


def label_id(label: str) -> int:
    """Stable 32-bit id of an experiment name."""
    return zlib.crc32(label.encode("utf-8"))


def seed_sequence(master_seed: int, *labels: int | str) -> np.random.SeedSequence:
    key = tuple(label_id(x) if isinstance(x, str) else int(x) for x in labels)
    return np.random.SeedSequence(int(master_seed), spawn_key=key)


def generator(master_seed: int, *labels: int | str) -> np.random.Generator:
    """numpy Generator for the stream identified by ``labels``."""
    return np.random.Generator(np.random.PCG64(seed_sequence(master_seed, *labels)))


def stream_key(master_seed: int, *labels: int | str) -> int:
    """64-bit key for numba walk streams; replicas are mixed in by the kernels."""
    words = seed_sequence(master_seed, *labels).generate_state(2, np.uint32)
    return int(words[0]) << 32 | int(words[1])


def stream_id(experiment: str, n: int, replica: int) -> str:
    return f"{experiment}/{n}/{replica}"


@nb.njit(cache=True)
def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@nb.njit(cache=True)
def seed_state(key, replica):
    """xoshiro256** state for replica ``replica`` of stream ``key``."""
    x = _mix64(np.uint64(key) + _mix64(np.uint64(replica) + np.uint64(1)))
    s = np.empty(4, dtype=np.uint64)
    for i in range(4):
        x = x + _GOLDEN
        s[i] = _mix64(x)
    return s


@nb.njit(cache=True)
def _rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


@nb.njit(cache=True)
def next_u64(s):
    result = _rotl(s[1] * np.uint64(5), 7) * np.uint64(9)
    t = s[1] << np.uint64(17)
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return result


@nb.njit(cache=True)
def next_double(s):
    """Uniform on [0, 1) with 53 random bits."""
    return float(next_u64(s) >> np.uint64(11)) * _DOUBLE_UNIT


@nb.njit(cache=True)
def next_exponential(s):
    return -np.log(1.0 - next_double(s))


@nb.njit(cache=True)
def next_below(s, k):
    return int(next_double(s) * k)


def state_from_generator(rng: np.random.Generator) -> np.ndarray:
    """Seed a walk state from a numpy Generator (single-replica calls)."""
    key = int(rng.integers(0, 2**63))
    return seed_state(np.uint64(key), np.uint64(0))
