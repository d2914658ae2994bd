"""Exponential density norms seen from the front.

``phi_z = sum_{origin <= z} exp(theta (pos - r))`` weighs the particles born
at or left of ``z``; ``psi_z`` replaces each position by the running maximum
``start + sup |Z(s) - start|`` since an anchor time, so ``psi_z >= phi_z``.
:class:`NormTracker` keeps both up to date in O(1) per event.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

from .process import Configuration, EventChunk, EventLog
from .rng import ParameterError


class StateError(RuntimeError):
    """Norm state queried or updated inconsistently."""


def _check_theta(theta: float) -> None:
    if not theta > 0:
        raise ParameterError(f"theta must be positive, got {theta}")


def phi(config: Configuration, z: int, theta: float) -> float:
    """``sum_{origin <= z} exp(theta (pos - r))``."""
    _check_theta(theta)
    o = config.origins()
    x = config.positions()[o <= z]
    return float(np.exp(theta * (x - config.r)).sum())


def psi(config: Configuration, z: int, theta: float, maxima: np.ndarray | None = None) -> float:
    """``sum_{origin <= z} exp(theta (M - r))`` with ``M`` the tracked maxima.

    ``maxima`` is aligned with ``config.positions()``; use
    :attr:`NormTracker.psi` for maxima tracked since an anchor.
    """
    _check_theta(theta)
    if maxima is None:
        raise StateError("running maxima are not tracked for this configuration")
    maxima = np.asarray(maxima)
    if maxima.shape != config.positions().shape:
        raise StateError("maxima do not match the particle table")
    o = config.origins()
    return float(np.exp(theta * (maxima[o <= z] - config.r)).sum())


def m_count(config: Configuration, z1: int, z2: int) -> int:
    """Particles whose origin and position both lie in ``(z1, z2]``."""
    if not z1 < z2:
        raise ParameterError(f"need z1 < z2, got {z1}, {z2}")
    o = config.origins()
    x = config.positions()
    return int(np.count_nonzero((o > z1) & (o <= z2) & (x > z1) & (x <= z2)))


def f_theta(config: Configuration, theta: float) -> float:
    """``sum_x eta(x) exp(theta x)`` in absolute coordinates."""
    return float(np.exp(theta * config.positions()).sum())


def lambda2(theta: float, a: int) -> float:
    """Growth rate ``(a+1)e^theta + e^-theta - 2`` bounding ``E f_theta``."""
    return (a + 1) * math.exp(theta) + math.exp(-theta) - 2.0


def n_martingale(config: Configuration, z: int, theta: float) -> float:
    """``exp(theta r - 2(cosh theta - 1) t) phi_z``."""
    _check_theta(theta)
    g = theta * config.r - 2.0 * (math.cosh(theta) - 1.0) * config.time
    return math.exp(g) * phi(config, z, theta)


# ---------------------------------------------------------------- tracker


@njit(cache=True)
def _consume(pid, old, new, front, pos, origin, start, dmax, st, z, theta, a, psi_on):
    # st = [phi, psi, r, n]
    ep = math.exp(theta)
    em = math.exp(-theta)
    phi_v = st[0]
    psi_v = st[1]
    r = int(st[2])
    n = int(st[3])
    for k in range(pid.shape[0]):
        p = pid[k]
        if pos[p] != old[k]:
            return k
        nw = new[k]
        pos[p] = nw
        if origin[p] <= z:
            term = math.exp(theta * (old[k] - r))
            phi_v += term * (ep - 1.0) if nw > old[k] else term * (em - 1.0)
            if psi_on:
                d = abs(nw - start[p])
                if d > dmax[p]:
                    psi_v += math.exp(theta * (start[p] + dmax[p] - r)) * (ep - 1.0)
                    dmax[p] = d
        elif psi_on:
            d = abs(nw - start[p])
            if d > dmax[p]:
                dmax[p] = d
        if front[k]:
            r = nw
            phi_v *= em
            psi_v *= em
            for i in range(a):
                q = n + i
                origin[q] = r
                pos[q] = r
                start[q] = r
                dmax[q] = 0
                if r <= z:
                    phi_v += 1.0
                    psi_v += 1.0
            n += a
    st[0] = phi_v
    st[1] = psi_v
    st[2] = r
    st[3] = n
    return -1


class NormTracker:
    """Incremental ``phi_z`` and ``psi_z`` along a run.

    Running maxima are anchored at construction time: particles present then
    start from their current positions, later ones from their birth site.
    ``check_every`` triggers a full recomputation every that many events and
    records the largest discrepancy in ``max_error``.
    """

    def __init__(self, config: Configuration, z: int, theta: float, track_psi: bool = True,
                 check_every: int | None = None):
        _check_theta(theta)
        self.z = int(z)
        self.theta = float(theta)
        self.a = config.a
        self.track_psi = track_psi
        self.check_every = check_every
        n = config.n
        cap = max(2 * n, 1024)
        self._pos = np.zeros(cap, dtype=np.int64)
        self._origin = np.zeros(cap, dtype=np.int64)
        self._start = np.zeros(cap, dtype=np.int64)
        self._dmax = np.zeros(cap, dtype=np.int64)
        self._alive = np.zeros(cap, dtype=np.bool_)
        self._pos[:n] = config.pos[:n]
        self._origin[:n] = config.origin[:n]
        self._start[:n] = config.pos[:n]
        self._alive[:n] = config.alive[:n]
        self._state = np.array([0.0, 0.0, float(config.r), float(n)])
        self.time = config.time
        self.events = 0
        self.max_error = 0.0
        self._since_check = 0
        v = self.recompute()
        self._state[0] = v
        self._state[1] = v

    @classmethod
    def from_log(cls, log: EventLog, z: int, theta: float, **kw) -> "NormTracker":
        c = Configuration.from_arrays(log.a, log.master_seed, log.r0, log.t0, log.init_origin,
                                      log.init_index, log.init_pos)
        return cls(c, z, theta, **kw)

    @property
    def r(self) -> int:
        return int(self._state[2])

    @property
    def n(self) -> int:
        return int(self._state[3])

    @property
    def value(self) -> float:
        return float(self._state[0])

    @property
    def psi(self) -> float:
        if not self.track_psi:
            raise StateError("psi is not tracked")
        return float(self._state[1])

    def _live(self):
        n = self.n
        return self._alive[:n] if n else np.zeros(0, dtype=np.bool_)

    def recompute(self) -> float:
        n = self.n
        sel = self._live() & (self._origin[:n] <= self.z)
        return float(np.exp(self.theta * (self._pos[:n][sel] - self.r)).sum())

    def recompute_psi(self) -> float:
        n = self.n
        sel = self._live() & (self._origin[:n] <= self.z)
        m = self._start[:n][sel] + self._dmax[:n][sel]
        return float(np.exp(self.theta * (m - self.r)).sum())

    def n_martingale(self) -> float:
        g = self.theta * self.r - 2.0 * (math.cosh(self.theta) - 1.0) * self.time
        return math.exp(g) * self.value

    def _ensure(self, extra: int) -> None:
        need = self.n + extra
        cap = self._pos.shape[0]
        if need <= cap:
            return
        new_cap = max(2 * cap, need)
        for name in ("_pos", "_origin", "_start", "_dmax", "_alive"):
            old = getattr(self, name)
            arr = np.zeros(new_cap, dtype=old.dtype)
            arr[:cap] = old
            setattr(self, name, arr)

    def consume(self, chunk: EventChunk) -> None:
        """Apply a chunk of events in log order."""
        if len(chunk) == 0:
            return
        if chunk.t[0] < self.time:
            raise StateError(f"event at {chunk.t[0]} precedes tracker time {self.time}")
        n_front = int(np.count_nonzero(chunk.front))
        self._ensure(self.a * n_front)
        n_before = self.n
        bad = _consume(chunk.pid, chunk.old, chunk.new, chunk.front, self._pos, self._origin,
                       self._start, self._dmax, self._state, self.z, self.theta, self.a,
                       self.track_psi)
        if bad >= 0:
            raise StateError(f"event {self.events + bad} does not match the tracked position")
        self._alive[n_before:self.n] = True
        self.time = float(chunk.t[-1])
        self.events += len(chunk)
        if self.check_every:
            self._since_check += len(chunk)
            if self._since_check >= self.check_every:
                self.check()
                self._since_check = 0

    def check(self) -> float:
        """Compare with a full recomputation; returns the absolute difference."""
        err = abs(self.recompute() - self.value)
        self.max_error = max(self.max_error, err)
        return err

    # single-event hooks
    def on_jump(self, pid: int, step: int, t: float | None = None) -> None:
        if step not in (-1, 1):
            raise ParameterError("step must be +/-1")
        old = int(self._pos[pid])
        new = old + step
        front = new > self.r
        tt = self.time if t is None else t
        self.consume(EventChunk(np.array([tt]), np.array([pid], dtype=np.int32),
                                np.array([old], dtype=np.int32), np.array([new], dtype=np.int32),
                                np.array([front])))

    def on_front_advance(self, spawned_origins) -> None:
        """Advance without a tracked mover: scale by ``e^-theta`` and add spawns."""
        spawned_origins = list(spawned_origins)
        self._ensure(len(spawned_origins))
        n = self.n
        r = self.r + 1
        v = self.value * math.exp(-self.theta)
        s = self._state[1] * math.exp(-self.theta)
        for i, o in enumerate(spawned_origins):
            if o != r:
                raise StateError(f"spawned origin {o} differs from the new front {r}")
            q = n + i
            self._origin[q] = o
            self._pos[q] = o
            self._start[q] = o
            self._dmax[q] = 0
            self._alive[q] = True
            if o <= self.z:
                v += 1.0
                s += 1.0
        self._state[:] = [v, s, r, n + len(spawned_origins)]


def norm_series(log: EventLog, anchor: float, L: int, theta: float, alpha1: float) -> np.ndarray:
    """``(t, r_t, phi_{r-L}, threshold)`` at every front advance after ``anchor``.

    ``r`` is the front at the anchor and ``t`` runs from the anchor; the
    threshold is ``exp(theta (floor(alpha1 t) - (r_t - r)))``.
    """
    base = Configuration.from_arrays(log.a, log.master_seed, log.r0, log.t0, log.init_origin,
                                     log.init_index, log.init_pos)
    ev = log.concat()
    k0 = int(np.searchsorted(ev.t, anchor, side="right"))
    r_anchor = log.r0 + int(np.count_nonzero(ev.front[:k0]))
    tr = NormTracker(base, r_anchor - L, theta, track_psi=False)
    tr.consume(EventChunk(ev.t[:k0], ev.pid[:k0], ev.old[:k0], ev.new[:k0], ev.front[:k0]))
    rows = [(0.0, r_anchor, tr.value, 1.0)]
    idx = np.flatnonzero(ev.front[k0:]) + k0
    prev = k0
    for k in idx:
        tr.consume(EventChunk(ev.t[prev:k + 1], ev.pid[prev:k + 1], ev.old[prev:k + 1],
                              ev.new[prev:k + 1], ev.front[prev:k + 1]))
        prev = k + 1
        t = float(ev.t[k]) - anchor
        thr = math.exp(theta * (math.floor(alpha1 * t) - (tr.r - r_anchor)))
        rows.append((t, tr.r, tr.value, thr))
    return np.array(rows)


def write_norm_csv(path, rows: np.ndarray) -> None:
    with open(path, "w") as fh:
        fh.write("time,r,phi,threshold\n")
        for t, r, v, thr in rows:
            fh.write(f"{t!r},{int(r)},{v!r},{thr!r}\n")
