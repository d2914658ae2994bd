"""Continuous-time symmetric simple random walks of total jump rate 2.

The walk attached to a particle label ``(x, i)`` reads the stream keyed
``("walk", x, i)``: draw ``2j`` is the holding time before jump ``j`` and draw
``2j + 1`` its direction.  The combustion kernel uses the same convention, so
a particle's trajectory can always be regenerated from its label alone.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit
from scipy import stats

from .rng import (
    TAG_WALK,
    ParameterError,
    RngStream,
    draw_exponential,
    draw_step,
    sample_exponential,
    sample_step,
    stream_seed,
)

JUMP_RATE = 2.0


class RangeError(ValueError):
    """Query outside the materialized horizon of a path."""


class WalkPath:
    """Lazily materialized walk path.

    ``times`` are strictly increasing jump times and ``steps`` the matching
    +/-1 increments.  The path is known on ``[0, horizon]`` and can be
    extended with :meth:`extend`.
    """

    def __init__(self, start_site: int, rng: RngStream):
        self.start_site = int(start_site)
        self._rng = rng
        self._times: list[float] = []
        self._steps: list[int] = []
        self._next = sample_exponential(JUMP_RATE, rng)
        self.horizon = 0.0

    @property
    def times(self) -> np.ndarray:
        return np.asarray(self._times, dtype=float)

    @property
    def steps(self) -> np.ndarray:
        return np.asarray(self._steps, dtype=np.int64)

    @property
    def events(self) -> list[tuple[float, int]]:
        return list(zip(self._times, self._steps))

    def extend(self, t_end: float) -> "WalkPath":
        if t_end < 0:
            raise ParameterError("t_end must be >= 0")
        while self._next <= t_end:
            self._times.append(self._next)
            self._steps.append(sample_step(self._rng))
            self._next += sample_exponential(JUMP_RATE, self._rng)
        self.horizon = max(self.horizon, float(t_end))
        return self

    def position(self, t: float) -> int:
        if t > self.horizon:
            raise RangeError(f"t={t} beyond horizon {self.horizon}")
        k = int(np.searchsorted(self.times, t, side="right"))
        return self.start_site + int(sum(self._steps[:k]))


def simulate_walk(start: int, t_end: float, rng: RngStream) -> WalkPath:
    """Walk from ``start`` materialized up to ``t_end``."""
    return WalkPath(start, rng).extend(t_end)


def label_walk(master_seed: int, origin: int, index: int, t_end: float) -> WalkPath:
    """The walk ``Y_{origin,index}`` used by the combustion process."""
    return simulate_walk(origin, t_end, RngStream(master_seed, ("walk", origin, index)))


def running_max_abs(path: WalkPath, t: float) -> int:
    """``start + sup_{s<=t} |X_s - start|``."""
    if t > path.horizon:
        raise RangeError(f"t={t} beyond horizon {path.horizon}")
    k = int(np.searchsorted(path.times, t, side="right"))
    if k == 0:
        return path.start_site
    disp = np.cumsum(path.steps[:k])
    return path.start_site + int(np.max(np.abs(disp)))


def gambler_ruin_oracle(n: int) -> float:
    """Probability that a symmetric walk from 0 hits +1 before -n."""
    if n < 1:
        raise ParameterError("n must be >= 1")
    return n / (n + 1.0)


@njit(cache=True)
def _walk_endpoint_max(master_seed, first_key, n_paths, t):
    end = np.empty(n_paths, dtype=np.int64)
    mx = np.empty(n_paths, dtype=np.int64)
    up = np.empty(n_paths, dtype=np.int64)
    for p in range(n_paths):
        seed = stream_seed(master_seed, TAG_WALK, first_key + p, 1)
        x = 0
        m = 0
        u = 0
        c = 0
        s = draw_exponential(seed, c, JUMP_RATE)
        while s <= t:
            x += draw_step(seed, c + 1)
            c += 2
            if abs(x) > m:
                m = abs(x)
            if x > u:
                u = x
            s += draw_exponential(seed, c, JUMP_RATE)
        end[p] = x
        mx[p] = m
        up[p] = u
    return end, mx, up


def walk_sample(master_seed: int, n_paths: int, t: float, start: int = 0, first_key: int = 0,
                one_sided: bool = False):
    """Endpoints ``X_t`` and running maxima ``M_t`` of independent walks.

    ``M_t = start + sup_{s<=t} |X_s - start|``, or ``start + sup (X_s - start)``
    with ``one_sided``.  Path ``p`` reads the walk stream of label
    ``(first_key + p, 1)``, so this is the batch counterpart of
    :func:`label_walk`.
    """
    end, mx, up = _walk_endpoint_max(np.uint64(master_seed), first_key, n_paths, float(t))
    return start + end, start + (up if one_sided else mx)


@njit(cache=True)
def _ruin_hits(master_seed, first_key, n_paths, n):
    hits = 0
    for p in range(n_paths):
        seed = stream_seed(master_seed, TAG_WALK, first_key + p, 2)
        x = 0
        c = 0
        while -n < x < 1:
            x += draw_step(seed, c)
            c += 1
        if x == 1:
            hits += 1
    return hits


def ruin_frequency(master_seed: int, n: int, n_paths: int) -> float:
    """Monte Carlo frequency of hitting +1 before -n from 0."""
    gambler_ruin_oracle(n)
    return _ruin_hits(np.uint64(master_seed), 0, n_paths, n) / n_paths


def exp_moment_exact(theta: float, t: float, x: float = 0.0) -> float:
    """``E[exp(theta X_t)]`` for the rate-2 walk started at ``x``."""
    return float(np.exp(theta * x + 2.0 * (np.cosh(theta) - 1.0) * t))


def _escape_probs(t: float, m_max: int) -> np.ndarray:
    """``P(sup_{s<=t} |X_s| >= m)`` for ``m = 0..m_max`` (walk from 0).

    Uniformized: the jump count is Poisson(2t) and the embedded chain is a
    simple walk killed on leaving ``{-(m-1), ..., m-1}``; the killed mass is
    accumulated directly, so small probabilities keep full relative precision.
    """
    lam = JUMP_RATE * t
    n_max = int(lam + 20.0 * math.sqrt(lam) + 50)
    at_least = stats.poisson.sf(np.arange(n_max + 1) - 1, lam)  # P(N >= n)
    esc = np.zeros(m_max + 1)
    esc[0] = 1.0
    for m in range(1, m_max + 1):
        v = np.zeros(2 * m - 1)
        v[m - 1] = 1.0
        out = 0.0
        for n in range(1, n_max + 1):
            out += 0.5 * (v[0] + v[-1]) * at_least[n]
            w = np.zeros_like(v)
            w[1:] += 0.5 * v[:-1]
            w[:-1] += 0.5 * v[1:]
            v = w
        esc[m] = out
    return esc


def max_moment_exact(theta: float, t: float, x: float = 0.0, one_sided: bool = False) -> float:
    """``E[exp(theta M_t)]`` for the running maximum of the walk from ``x``.

    Two-sided ``M_t = x + sup |X_s - x|`` by uniformization; one-sided
    ``M_t = x + sup (X_s - x)`` from ``P(M = n) = P(X = n) + P(X = n + 1)``.
    """
    if not theta > 0 or t < 0:
        raise ParameterError("need theta > 0 and t >= 0")
    if t == 0:
        return math.exp(theta * x)
    if one_sided:
        n = np.arange(0, int(2 * JUMP_RATE * t + 60 + 40 * math.sqrt(t)))
        pm = stats.skellam.pmf(n, t, t) + stats.skellam.pmf(n + 1, t, t)
        return math.exp(theta * x) * float((pm * np.exp(theta * n)).sum())
    m_max = int(JUMP_RATE * t + 20.0 * math.sqrt(JUMP_RATE * t) + 40)
    esc = _escape_probs(t, m_max)
    m = np.arange(1, m_max + 1)
    tail = ((np.exp(theta * m) - np.exp(theta * (m - 1))) * esc[1:]).sum()
    return math.exp(theta * x) * (1.0 + float(tail))
