"""Keyed counter-based random streams.

Every draw is ``mix64(stream_seed + (n + 1) * GAMMA)`` where ``n`` is the
draw counter, i.e. SplitMix64 evaluated at an arbitrary position.  A stream
is identified by ``(master_seed, tag, k1, k2)``; the same identity always
yields the same sequence, and the counter can be jumped to any position
without replaying earlier draws.  All hot-path helpers are ``njit`` so the
simulation kernels share them with the Python API.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_S63 = np.uint64(63)
_ONE = np.uint64(1)
_TWO53 = 1.0 / 9007199254740992.0
_MASK64 = (1 << 64) - 1

# stream tags
TAG_WALK = 1
TAG_SCHED = 2
TAG_REPLICA = 3
TAG_COUPLE = 4
TAG_AUX = 5
TAG_MISC = 6

_TAG_NAMES = {
    "walk": TAG_WALK,
    "sched": TAG_SCHED,
    "replica": TAG_REPLICA,
    "couple": TAG_COUPLE,
    "aux": TAG_AUX,
    "misc": TAG_MISC,
}


@njit(cache=True)
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True)
def _as_u64(x):
    # two's complement view of a signed key component
    return np.uint64(np.int64(x))


@njit(cache=True)
def stream_seed(master_seed, tag, k1, k2):
    """Seed of the stream keyed by ``(master_seed, tag, k1, k2)``."""
    h = mix64(np.uint64(master_seed) ^ np.uint64(0x6A09E667F3BCC908))
    h = mix64(h + np.uint64(tag) * GAMMA)
    h = mix64(h ^ _as_u64(k1))
    h = mix64(h + _as_u64(k2) * GAMMA)
    return h


@njit(cache=True)
def draw_u64(seed, n):
    return mix64(seed + (np.uint64(n) + _ONE) * GAMMA)


@njit(cache=True)
def draw_uniform(seed, n):
    """Uniform on the open interval (0, 1)."""
    return (np.float64(draw_u64(seed, n) >> _S11) + 0.5) * _TWO53


@njit(cache=True)
def draw_exponential(seed, n, rate):
    return -np.log(draw_uniform(seed, n)) / rate


@njit(cache=True)
def draw_step(seed, n):
    return 1 if (draw_u64(seed, n) >> _S63) == _ONE else -1


@njit(cache=True)
def _fill_uniform(seed, start, out):
    for j in range(out.shape[0]):
        out[j] = draw_uniform(seed, start + j)


@njit(cache=True)
def _fill_step(seed, start, out):
    for j in range(out.shape[0]):
        out[j] = draw_step(seed, start + j)


def _mix64_py(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(master_seed: int, *path: int) -> int:
    """Keyed hash of ``master_seed`` and an integer path, as a 63-bit int.

    Used for replica seeds: ``derive_seed(master, TAG_REPLICA, i)``.
    """
    h = _mix64_py((master_seed & _MASK64) ^ 0x6A09E667F3BCC908)
    for p in path:
        h = _mix64_py((h + (p & _MASK64) * 0x9E3779B97F4A7C15) & _MASK64)
    return h >> 1


class ParameterError(ValueError):
    """Invalid numerical parameter."""


@dataclass
class RngStream:
    """A reproducible stream ``(master_seed, stream_key)`` with a draw counter.

    ``stream_key`` is ``(tag, k1, k2)``; ``tag`` may be a name such as
    ``"walk"``.  Two streams with equal seed and key produce identical draws.
    A stream must not be shared between threads.
    """

    master_seed: int
    stream_key: tuple = ("misc", 0, 0)
    counter: int = 0
    _seed: np.uint64 = field(init=False, repr=False)

    def __post_init__(self):
        tag, k1, k2 = self.stream_key
        tag = _TAG_NAMES.get(tag, tag)
        self._seed = np.uint64(stream_seed(np.uint64(self.master_seed & _MASK64), tag, k1, k2))

    @property
    def seed(self) -> np.uint64:
        return self._seed

    def uniform(self, size: int | None = None):
        if size is None:
            u = draw_uniform(self._seed, self.counter)
            self.counter += 1
            return float(u)
        out = np.empty(size)
        _fill_uniform(self._seed, self.counter, out)
        self.counter += size
        return out

    def exponential(self, rate: float, size: int | None = None):
        return sample_exponential(rate, self, size)

    def step(self, size: int | None = None):
        return sample_step(self, size)

    def copy(self) -> "RngStream":
        return RngStream(self.master_seed, self.stream_key, self.counter)


def sample_exponential(rate: float, rng: RngStream, size: int | None = None):
    """Exponential waiting time(s) of the given rate; strictly positive."""
    if not rate > 0:
        raise ParameterError(f"rate must be positive, got {rate}")
    u = rng.uniform(size)
    return -np.log(u) / rate


def sample_step(rng: RngStream, size: int | None = None):
    """Symmetric +/-1 step(s)."""
    if size is None:
        s = draw_step(rng.seed, rng.counter)
        rng.counter += 1
        return int(s)
    out = np.empty(size, dtype=np.int64)
    _fill_step(rng.seed, rng.counter, out)
    rng.counter += size
    return out
