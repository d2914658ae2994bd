"""Labeled X + Y -> 2X combustion process on Z.

Particles are stored in flat arrays indexed by a particle id (pid).  Pids
are assigned in creation order: initial particles first, then ``a`` new ids
at every front advance.  Each particle carries its label ``(origin, index)``
and reads the walk stream of that label from its birth time, so the whole
trajectory is a deterministic function of ``(master_seed, initial data)``.

The default scheduler keeps one exponential clock per particle in a binary
heap (next-reaction method).  The alternative ``"uniform"`` scheduler draws
``Exp(2N)`` waiting times and a uniform mover from a separate scheduler
stream; it has the same law but breaks the per-label time parametrization,
so it exists only for cross-checking.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Iterator, Sequence

import numpy as np
from numba import njit

from .rng import (
    TAG_COUPLE,
    TAG_SCHED,
    TAG_WALK,
    ParameterError,
    draw_exponential,
    draw_step,
    draw_uniform,
    stream_seed,
)
from .walks import JUMP_RATE

DEFAULT_EVENT_CEILING = 10**8
DEFAULT_CHUNK = 1 << 20

# kernel status codes
ST_STOP = 0
ST_BUFFER_FULL = 1
ST_GROW = 2
ST_EMPTY = 3
ST_CEILING = 4

# integer scalar slots
I_R, I_N, I_EVENTS, I_HEAP, I_ALIVE = 0, 1, 2, 3, 4
N_ISCAL = 5


class InvalidInitialCondition(ValueError):
    pass


class CannotStep(RuntimeError):
    pass


class PreconditionError(ValueError):
    pass


# ---------------------------------------------------------------- initial data


@dataclass(frozen=True)
class InitialConditionSpec:
    """Initial X-particle configuration with the front at 0.

    ``kind`` is ``"a_delta_0"`` (``a`` particles at 0), ``"explicit_finite"``
    (``counts`` = list of ``(site, count)``) or ``"geometric_tail"``
    (``round(A q**|x|)`` particles at each ``-depth < x <= 0`` plus one forced
    particle at 0).  ``cut`` keeps only the sites ``x > -cut``.
    """

    kind: str = "a_delta_0"
    counts: tuple = ()
    q: float = 0.5
    A: float = 4.0
    depth: int = 30
    cut: int | None = None

    @classmethod
    def a_delta_0(cls) -> "InitialConditionSpec":
        return cls("a_delta_0")

    @classmethod
    def explicit(cls, counts: Sequence[tuple[int, int]]) -> "InitialConditionSpec":
        return cls("explicit_finite", counts=tuple((int(x), int(c)) for x, c in counts))

    @classmethod
    def geometric(cls, q: float, A: float, depth: int) -> "InitialConditionSpec":
        return cls("geometric_tail", q=float(q), A=float(A), depth=int(depth))

    def truncated(self, depth: int) -> "InitialConditionSpec":
        """The same data restricted to the ``depth`` sites ``-depth < x <= 0``."""
        if depth < 1:
            raise InvalidInitialCondition("truncation depth must be >= 1")
        return replace(self, cut=int(depth))

    def site_counts(self, a: int) -> list[tuple[int, int]]:
        counts = self._site_counts(a)
        if self.cut is None:
            return counts
        return [(x, c) for x, c in counts if x > -self.cut]

    def _site_counts(self, a: int) -> list[tuple[int, int]]:
        if self.kind == "a_delta_0":
            return [(0, a)]
        if self.kind == "explicit_finite":
            out: dict[int, int] = {}
            for x, c in self.counts:
                if x > 0:
                    raise InvalidInitialCondition(f"site {x} is right of the front")
                if c < 0:
                    raise InvalidInitialCondition(f"negative count at {x}")
                out[x] = out.get(x, 0) + c
            return sorted(((x, c) for x, c in out.items() if c > 0), reverse=True)
        if self.kind == "geometric_tail":
            if not (0.0 < self.q < 1.0) or self.A < 0 or self.depth < 0:
                raise InvalidInitialCondition("geometric_tail needs 0<q<1, A>=0, depth>=0")
            res = []
            for k in range(self.depth):
                c = int(np.floor(self.A * self.q**k + 0.5))
                if k == 0:
                    c += 1
                if c > 0:
                    res.append((-k, c))
            if self.depth == 0:
                res.append((0, 1))
            return res
        raise InvalidInitialCondition(f"unknown kind {self.kind!r}")

    def f_theta(self, theta: float, a: int = 1) -> float:
        return float(sum(c * np.exp(theta * x) for x, c in self.site_counts(a)))


# ---------------------------------------------------------------- kernels


@njit(cache=True)
def _sift_down(heap, hsize, key, i):
    pid = heap[i]
    k = key[pid]
    while True:
        c = 2 * i + 1
        if c >= hsize:
            break
        if c + 1 < hsize and key[heap[c + 1]] < key[heap[c]]:
            c += 1
        if key[heap[c]] >= k:
            break
        heap[i] = heap[c]
        i = c
    heap[i] = pid


@njit(cache=True)
def _sift_up(heap, key, i):
    pid = heap[i]
    k = key[pid]
    while i > 0:
        par = (i - 1) >> 1
        if key[heap[par]] <= k:
            break
        heap[i] = heap[par]
        i = par
    heap[i] = pid


@njit(cache=True)
def _spawn(master_seed, a, r, t, origin, index, pos, birth, seed, cnt, nextt, alive,
           heap, iscal):
    n = iscal[I_N]
    for i in range(a):
        p = n + i
        origin[p] = r
        index[p] = i + 1
        pos[p] = r
        birth[p] = t
        s = stream_seed(master_seed, TAG_WALK, r, i + 1)
        seed[p] = s
        cnt[p] = 0
        nextt[p] = t + draw_exponential(s, 0, 2.0)
        alive[p] = True
        h = iscal[I_HEAP]
        heap[h] = p
        iscal[I_HEAP] = h + 1
        _sift_up(heap, nextt, h)
    iscal[I_N] = n + a
    iscal[I_ALIVE] += a


@njit(cache=True)
def _advance_clocks(master_seed, a, origin, index, pos, birth, seed, cnt, nextt, alive,
                    heap, iscal, fscal, t_stop, r_stop, ev_stop, cutoff,
                    ev_t, ev_pid, ev_old, ev_new, ev_front, ev_len):
    """Run events with time <= t_stop until a stop condition or a full buffer.

    The stop on ``r_stop`` / ``ev_stop`` is checked after each event.  When
    the next clock rings after ``t_stop`` the configuration time is set to
    ``t_stop``.
    """
    cap = origin.shape[0]
    bufcap = ev_t.shape[0]
    m = ev_len
    while True:
        if iscal[I_R] >= r_stop or iscal[I_EVENTS] >= ev_stop:
            return ST_STOP, m
        if iscal[I_HEAP] == 0:
            return ST_EMPTY, m
        if m >= bufcap:
            return ST_BUFFER_FULL, m
        if iscal[I_N] + a > cap:
            return ST_GROW, m
        p = heap[0]
        t = nextt[p]
        if t > t_stop:
            fscal[0] = t_stop
            return ST_STOP, m
        c = cnt[p]
        step = draw_step(seed[p], c + 1)
        old = pos[p]
        new = old + step
        pos[p] = new
        cnt[p] = c + 2
        fscal[0] = t
        front = new > iscal[I_R]
        ev_t[m] = t
        ev_pid[m] = p
        ev_old[m] = old
        ev_new[m] = new
        ev_front[m] = front
        m += 1
        iscal[I_EVENTS] += 1
        if cutoff > 0 and new < iscal[I_R] - cutoff:
            alive[p] = False
            iscal[I_ALIVE] -= 1
            h = iscal[I_HEAP] - 1
            heap[0] = heap[h]
            iscal[I_HEAP] = h
            if h > 0:
                _sift_down(heap, h, nextt, 0)
        else:
            nextt[p] = t + draw_exponential(seed[p], c + 2, 2.0)
            _sift_down(heap, iscal[I_HEAP], nextt, 0)
        if front:
            iscal[I_R] = new
            _spawn(master_seed, a, new, t, origin, index, pos, birth, seed, cnt, nextt,
                   alive, heap, iscal)


@njit(cache=True)
def _advance_uniform(master_seed, sched_seed, a, origin, index, pos, birth, seed, cnt,
                     nextt, alive, heap, iscal, fscal, sched_cnt, t_stop, r_stop, ev_stop,
                     ev_t, ev_pid, ev_old, ev_new, ev_front, ev_len):
    cap = origin.shape[0]
    bufcap = ev_t.shape[0]
    m = ev_len
    while True:
        if iscal[I_R] >= r_stop or iscal[I_EVENTS] >= ev_stop:
            return ST_STOP, m
        n = iscal[I_N]
        if n == 0:
            return ST_EMPTY, m
        if m >= bufcap:
            return ST_BUFFER_FULL, m
        if n + a > cap:
            return ST_GROW, m
        c0 = sched_cnt[0]
        t = fscal[0] + draw_exponential(sched_seed, c0, 2.0 * n)
        if t > t_stop:
            # memoryless: the pending draw is discarded, not reused
            fscal[0] = t_stop
            sched_cnt[0] = c0 + 1
            return ST_STOP, m
        p = int(draw_uniform(sched_seed, c0 + 1) * n)
        if p >= n:
            p = n - 1
        sched_cnt[0] = c0 + 2
        c = cnt[p]
        step = draw_step(seed[p], c + 1)
        cnt[p] = c + 2
        old = pos[p]
        new = old + step
        pos[p] = new
        fscal[0] = t
        front = new > iscal[I_R]
        ev_t[m] = t
        ev_pid[m] = p
        ev_old[m] = old
        ev_new[m] = new
        ev_front[m] = front
        m += 1
        iscal[I_EVENTS] += 1
        if front:
            iscal[I_R] = new
            for i in range(a):
                q = n + i
                origin[q] = new
                index[q] = i + 1
                pos[q] = new
                birth[q] = t
                seed[q] = stream_seed(master_seed, TAG_WALK, new, i + 1)
                cnt[q] = 0
                alive[q] = True
            iscal[I_N] = n + a
            iscal[I_ALIVE] += a


# ---------------------------------------------------------------- event log


@dataclass
class EventChunk:
    t: np.ndarray
    pid: np.ndarray
    old: np.ndarray
    new: np.ndarray
    front: np.ndarray

    def __len__(self) -> int:
        return len(self.t)


@dataclass
class EventLog:
    """Append-only record of jumps, with the initial particle table.

    Applying the records to ``initial`` reproduces the final configuration.
    Particles created by a front advance get the next ``a`` pids, in label
    index order.
    """

    a: int
    master_seed: int
    init_origin: np.ndarray
    init_index: np.ndarray
    init_pos: np.ndarray
    r0: int = 0
    t0: float = 0.0
    init_cnt: np.ndarray | None = None
    init_birth: np.ndarray | None = None
    e0: int = 0
    chunks: list[EventChunk] = field(default_factory=list)
    t_end: float | None = None

    def __post_init__(self):
        n = len(self.init_pos)
        if self.init_cnt is None:
            self.init_cnt = np.zeros(n, dtype=np.int64)
        if self.init_birth is None:
            self.init_birth = np.full(n, float(self.t0))

    def append(self, chunk: EventChunk) -> None:
        if len(chunk):
            self.chunks.append(chunk)

    def __len__(self) -> int:
        return sum(len(c) for c in self.chunks)

    def iter_chunks(self) -> Iterator[EventChunk]:
        return iter(self.chunks)

    def concat(self) -> EventChunk:
        if not self.chunks:
            z = np.zeros(0)
            zi = np.zeros(0, dtype=np.int32)
            return EventChunk(z, zi, zi.copy(), zi.copy(), np.zeros(0, dtype=np.bool_))
        return EventChunk(*(np.concatenate([getattr(c, f) for c in self.chunks])
                            for f in ("t", "pid", "old", "new", "front")))

    def compact(self) -> "EventLog":
        """Merge all chunks into one, in place."""
        if len(self.chunks) > 1:
            merged = self.concat()
            self.chunks = [merged]
        return self

    def front_advances(self) -> tuple[np.ndarray, np.ndarray]:
        """Times and new front values of every front advance."""
        ev = self.concat()
        return ev.t[ev.front], ev.new[ev.front]

    def labels(self) -> tuple[np.ndarray, np.ndarray]:
        """Origin and index of every pid appearing in the log."""
        _, newr = self.front_advances()
        origin = np.concatenate([self.init_origin, np.repeat(newr, self.a)])
        index = np.concatenate([self.init_index, np.tile(np.arange(1, self.a + 1), len(newr))])
        return origin.astype(np.int64), index.astype(np.int64)

    def replay(self) -> "Configuration":
        """Configuration obtained by applying the log to the initial data.

        Draw counters and birth times are reconstructed too, so the result
        continues exactly like the configuration that produced the log.
        """
        origin, index = self.labels()
        ft, fr = self.front_advances()
        n0 = len(self.init_pos)
        pos = np.concatenate([self.init_pos, origin[n0:]]).astype(np.int64)
        cnt = np.concatenate([self.init_cnt, np.zeros(len(origin) - n0, dtype=np.int64)])
        birth = np.concatenate([self.init_birth, np.repeat(ft, self.a)])
        r, t = self.r0, self.t0
        for c in self.chunks:
            _apply(pos, cnt, c.pid, c.new)
            if len(c):
                t = float(c.t[-1])
        if len(fr):
            r = int(fr[-1])
        if self.t_end is not None:
            t = self.t_end
        return Configuration.from_arrays(self.a, self.master_seed, r, t, origin, index, pos,
                                         event_count=self.e0 + len(self), counters=cnt,
                                         birth=birth)

    # -- serialization: one record per line
    def write(self, path) -> None:
        origin, index = self.labels()
        with open(path, "w") as fh:
            fh.write(f"# a={self.a} seed={self.master_seed} r0={self.r0} t0={self.t0!r} "
                     f"e0={self.e0} t_end={self.t_end!r}\n")
            for o, i, z, c, b in zip(self.init_origin, self.init_index, self.init_pos,
                                     self.init_cnt, self.init_birth.tolist()):
                fh.write(f"# init {o} {i} {z} {c} {b!r}\n")
            for c in self.chunks:
                spawned = np.where(c.front, self.a, 0)
                for t, p, u, w, f, s in zip(c.t.tolist(), c.pid.tolist(), c.old.tolist(),
                                            c.new.tolist(), c.front.tolist(), spawned.tolist()):
                    fh.write(f"{t!r} {origin[p]} {index[p]} {u} {w} {int(f)} {s}\n")

    @classmethod
    def read(cls, path) -> "EventLog":
        init = []
        meta = {}
        with open(path) as fh:
            for line in fh:
                if line.startswith("# init"):
                    f = line.split()[2:]
                    init.append((int(f[0]), int(f[1]), int(f[2]), int(f[3]), float(f[4])))
                elif line.startswith("#"):
                    meta = dict(kv.split("=") for kv in line[1:].split())
                else:
                    break
        a = int(meta["a"])
        r0 = int(meta["r0"])
        io = np.array([x[0] for x in init], dtype=np.int64)
        ii = np.array([x[1] for x in init], dtype=np.int64)
        iz = np.array([x[2] for x in init], dtype=np.int64)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            rec = np.loadtxt(path, comments="#", dtype=np.float64, ndmin=2)
        if rec.shape[0] == 0:
            rec = np.zeros((0, 7))
        t = rec[:, 0].copy()
        o = rec[:, 1].astype(np.int64)
        i = rec[:, 2].astype(np.int64)
        # spawned particles get pids in order of creation, initial ones by label
        pid = len(io) + (o - r0 - 1) * a + (i - 1)
        old_lab = o <= r0
        if old_lab.any():
            key0 = io * (a + 1) + ii
            order = np.argsort(key0)
            key = o[old_lab] * (a + 1) + i[old_lab]
            j = np.searchsorted(key0[order], key)
            j = np.minimum(j, len(order) - 1)
            if len(order) == 0 or not np.array_equal(key0[order][j], key):
                raise ValueError(f"{path}: event for an unknown label")
            pid[old_lab] = order[j]
        ic = np.array([x[3] for x in init], dtype=np.int64)
        ib = np.array([x[4] for x in init], dtype=float)
        log = cls(a, int(meta["seed"]), io, ii, iz, r0, float(meta["t0"]), ic, ib,
                  int(meta.get("e0", 0)))
        te = meta.get("t_end", "None")
        log.t_end = None if te == "None" else float(te)
        log.append(EventChunk(t, pid.astype(np.int32), rec[:, 3].astype(np.int32),
                              rec[:, 4].astype(np.int32), rec[:, 5] == 1))
        return log


@njit(cache=True)
def _apply(pos, cnt, pid, new):
    for k in range(pid.shape[0]):
        pos[pid[k]] = new[k]
        cnt[pid[k]] += 2


# ---------------------------------------------------------------- configuration


class Configuration:
    """Front position, time and the labeled particle store."""

    def __init__(self, a: int, master_seed: int, capacity: int = 1024):
        if a < 1:
            raise ParameterError("a must be >= 1")
        self.a = int(a)
        self.master_seed = int(master_seed)
        cap = max(int(capacity), 16)
        self.origin = np.zeros(cap, dtype=np.int64)
        self.index = np.zeros(cap, dtype=np.int64)
        self.pos = np.zeros(cap, dtype=np.int64)
        self.birth = np.zeros(cap)
        self.seed = np.zeros(cap, dtype=np.uint64)
        self.cnt = np.zeros(cap, dtype=np.int64)
        self.nextt = np.zeros(cap)
        self.alive = np.zeros(cap, dtype=np.bool_)
        self.heap = np.zeros(cap, dtype=np.int64)
        self.iscal = np.zeros(N_ISCAL, dtype=np.int64)
        self.fscal = np.zeros(1)
        self.sched_cnt = np.zeros(1, dtype=np.int64)
        self.cutoff = 0
        self.truncated = False

    # -- construction
    @classmethod
    def from_arrays(cls, a, master_seed, r, t, origin, index, pos, event_count=0,
                    counters=None, birth=None) -> "Configuration":
        n = len(origin)
        c = cls(a, master_seed, capacity=max(2 * n + 2 * a, 1024))
        c.origin[:n] = origin
        c.index[:n] = index
        c.pos[:n] = pos
        c.alive[:n] = True
        if birth is not None:
            c.birth[:n] = birth
        for p in range(n):
            c.seed[p] = stream_seed(np.uint64(c.master_seed), TAG_WALK, int(origin[p]),
                                    int(index[p]))
        if counters is not None:
            c.cnt[:n] = counters
        c.iscal[I_R] = r
        c.iscal[I_N] = n
        c.iscal[I_ALIVE] = n
        c.iscal[I_EVENTS] = event_count
        c.fscal[0] = t
        c._rebuild_heap(resume=counters is not None)
        return c

    def _rebuild_heap(self, resume: bool = False) -> None:
        n = self.n
        for p in range(n):
            if resume:
                self.nextt[p] = self._pending_time(p)
            else:
                self.nextt[p] = self.time + draw_exponential(self.seed[p], self.cnt[p], JUMP_RATE)
        live = np.flatnonzero(self.alive[:n])
        order = live[np.argsort(self.nextt[live], kind="stable")]
        self.heap[: len(order)] = order
        self.iscal[I_HEAP] = len(order)

    def _pending_time(self, p: int) -> float:
        # replay the holding times of pid p from its birth
        t = self.birth[p]
        for j in range(0, int(self.cnt[p]) + 1, 2):
            t += draw_exponential(self.seed[p], j, JUMP_RATE)
        return t

    # -- views
    @property
    def r(self) -> int:
        return int(self.iscal[I_R])

    @property
    def time(self) -> float:
        return float(self.fscal[0])

    @property
    def n(self) -> int:
        return int(self.iscal[I_N])

    @property
    def n_alive(self) -> int:
        return int(self.iscal[I_ALIVE])

    @property
    def event_count(self) -> int:
        return int(self.iscal[I_EVENTS])

    def positions(self) -> np.ndarray:
        n = self.n
        return self.pos[:n][self.alive[:n]]

    def origins(self) -> np.ndarray:
        n = self.n
        return self.origin[:n][self.alive[:n]]

    def particles(self) -> dict[tuple[int, int], int]:
        """Mapping label -> position."""
        n = self.n
        return {(int(o), int(i)): int(z) for o, i, z, al in
                zip(self.origin[:n], self.index[:n], self.pos[:n], self.alive[:n]) if al}

    def eta(self) -> dict[int, int]:
        xs, cs = np.unique(self.positions(), return_counts=True)
        return dict(zip(xs.tolist(), cs.tolist()))

    def copy(self) -> "Configuration":
        c = Configuration.__new__(Configuration)
        for k, v in self.__dict__.items():
            setattr(c, k, v.copy() if isinstance(v, np.ndarray) else v)
        return c

    def snapshot_log(self) -> EventLog:
        n = self.n
        live = self.alive[:n]
        return EventLog(self.a, self.master_seed, self.origin[:n][live].copy(),
                        self.index[:n][live].copy(), self.pos[:n][live].copy(),
                        self.r, self.time, self.cnt[:n][live].copy(),
                        self.birth[:n][live].copy(), self.event_count)

    def _grow(self) -> None:
        cap = self.origin.shape[0]
        for name in ("origin", "index", "pos", "birth", "seed", "cnt", "nextt", "alive", "heap"):
            old = getattr(self, name)
            new = np.zeros(2 * cap, dtype=old.dtype)
            new[:cap] = old
            setattr(self, name, new)

    # -- dynamics
    def advance(self, t_stop=np.inf, r_stop=None, ev_stop=None, scheduler="clocks",
                chunk=DEFAULT_CHUNK, sched_seed=None):
        """Generator of event chunks until a stop condition holds."""
        r_stop = np.iinfo(np.int64).max if r_stop is None else int(r_stop)
        ev_stop = np.iinfo(np.int64).max if ev_stop is None else int(ev_stop)
        t_stop = float(t_stop)
        if scheduler == "uniform" and sched_seed is None:
            sched_seed = stream_seed(np.uint64(self.master_seed), TAG_SCHED, 0, 0)
        if sched_seed is not None:
            sched_seed = np.uint64(sched_seed)
        while True:
            bt = np.empty(chunk)
            bp = np.empty(chunk, dtype=np.int32)
            bo = np.empty(chunk, dtype=np.int32)
            bn = np.empty(chunk, dtype=np.int32)
            bf = np.empty(chunk, dtype=np.bool_)
            m = 0
            while True:
                if scheduler == "clocks":
                    st, m = _advance_clocks(
                        np.uint64(self.master_seed), self.a, self.origin, self.index, self.pos,
                        self.birth, self.seed, self.cnt, self.nextt, self.alive, self.heap,
                        self.iscal, self.fscal, t_stop, r_stop, ev_stop, self.cutoff,
                        bt, bp, bo, bn, bf, m)
                elif scheduler == "uniform":
                    st, m = _advance_uniform(
                        np.uint64(self.master_seed), sched_seed, self.a, self.origin,
                        self.index, self.pos, self.birth, self.seed, self.cnt, self.nextt,
                        self.alive, self.heap, self.iscal, self.fscal, self.sched_cnt,
                        t_stop, r_stop, ev_stop, bt, bp, bo, bn, bf, m)
                else:
                    raise ParameterError(f"unknown scheduler {scheduler!r}")
                if st == ST_GROW:
                    self._grow()
                    continue
                break
            if m:
                yield EventChunk(bt[:m].copy(), bp[:m].copy(), bo[:m].copy(), bn[:m].copy(),
                                 bf[:m].copy())
            if st == ST_EMPTY:
                if m == 0 and self.n_alive == 0:
                    raise CannotStep("configuration has no particles")
                return
            if st == ST_STOP:
                return

    def step(self, scheduler: str = "clocks") -> EventChunk:
        """Perform exactly one event and return its record."""
        if self.n_alive == 0:
            raise CannotStep("configuration has no particles")
        chunks = list(self.advance(ev_stop=self.event_count + 1, scheduler=scheduler, chunk=1))
        return chunks[0]


def init(spec: InitialConditionSpec, a: int, master_seed: int = 0) -> Configuration:
    """Configuration at time 0 with front 0 built from ``spec``."""
    if a < 1:
        raise ParameterError("a must be >= 1")
    counts = spec.site_counts(a)
    if not any(x == 0 and c >= 1 for x, c in counts):
        raise InvalidInitialCondition("need at least one particle at the front site 0")
    origin, index, pos = [], [], []
    for x, c in counts:
        for i in range(1, c + 1):
            origin.append(x)
            index.append(i)
            pos.append(x)
    return Configuration.from_arrays(a, master_seed, 0, 0.0, np.array(origin, dtype=np.int64),
                                     np.array(index, dtype=np.int64),
                                     np.array(pos, dtype=np.int64))


@dataclass
class Stop:
    """Stop predicate on ``(time, r, event count)``; first to hold wins."""

    time: float = np.inf
    r: int | None = None
    events: int | None = None

    def __call__(self, t: float, r: int, events: int) -> bool:
        return (t >= self.time or (self.r is not None and r >= self.r)
                or (self.events is not None and events >= self.events))


@dataclass
class RunResult:
    config: Configuration
    log: EventLog | None
    truncated: bool = False


def run_until(config: Configuration, stop: Stop | Callable, keep_log: bool = True,
              ceiling: int = DEFAULT_EVENT_CEILING, scheduler: str = "clocks",
              observers: Sequence = ()) -> RunResult:
    """Advance ``config`` in place until ``stop`` holds.

    ``stop`` is a :class:`Stop` (fast path) or an arbitrary callable on
    ``(time, r, event_count)``, evaluated after every event.  A run reaching
    ``ceiling`` events is returned with ``truncated=True``.  Each observer's
    ``consume(chunk)`` receives the chunks in order.
    """
    log = config.snapshot_log() if keep_log else None
    start_events = config.event_count
    limit = start_events + ceiling
    if isinstance(stop, Stop):
        ev = limit if stop.events is None else min(limit, stop.events)
        if stop(config.time, config.r, config.event_count):
            return RunResult(config, log)
        gen = config.advance(t_stop=stop.time, r_stop=stop.r, ev_stop=ev, scheduler=scheduler)
        for chunk in gen:
            if log is not None:
                log.append(chunk)
            for ob in observers:
                ob.consume(chunk)
    else:
        while not stop(config.time, config.r, config.event_count):
            if config.event_count >= limit:
                break
            chunk = config.step(scheduler)
            if log is not None:
                log.append(chunk)
            for ob in observers:
                ob.consume(chunk)
    truncated = config.event_count >= limit
    config.truncated = truncated
    if log is not None:
        log.t_end = config.time
    return RunResult(config, log, truncated)


def environment_view(config: Configuration, depth: int) -> np.ndarray:
    """Occupation numbers ``eta(r - k)`` for ``k = 0..depth``."""
    off = config.r - config.positions()
    off = off[off <= depth]
    return np.bincount(off, minlength=depth + 1)[: depth + 1]


def metric_d(c1: Configuration, c2: Configuration, theta: float) -> float:
    """Front-anchored weighted l1 distance between two configurations."""
    e1 = {x - c1.r: c for x, c in c1.eta().items()}
    e2 = {x - c2.r: c for x, c in c2.eta().items()}
    tot = float(abs(c1.r - c2.r))
    for k in set(e1) | set(e2):
        tot += np.exp(theta * k) * abs(e1.get(k, 0) - e2.get(k, 0))
    return tot


def truncation_study(spec: InitialConditionSpec, depths: Sequence[int], horizon: float,
                     master_seed: int, a: int = 1) -> dict:
    """Front at ``horizon`` for the truncations of ``spec`` at each depth.

    All runs share the walk streams, so ``r^depth`` is nondecreasing in depth.
    ``stable_depth`` is the least tested depth after which the front no longer
    changes (None when the last two values differ).
    """
    rows = []
    for ell in depths:
        c = init(spec.truncated(ell), a, master_seed)
        run_until(c, Stop(time=horizon), keep_log=False)
        rows.append((int(ell), c.r))
    rs = [r for _, r in rows]
    stable = None
    for k in range(len(rs)):
        if all(v == rs[-1] for v in rs[k:]):
            stable = rows[k][0]
            break
    if len(rs) >= 2 and rs[-1] != rs[-2]:
        stable = None
    return {"rows": rows, "monotone": all(x <= y for x, y in zip(rs, rs[1:])),
            "stable_depth": stable}


# ---------------------------------------------------------------- coupling

_SHARED, _PLUS, _MINUS = 0, 1, 2


@njit(cache=True)
def _couple_kernel(master_seed, a, typ, pos, seed, cnt, nextt, alive, n0, r0, horizon):
    """Coupled evolution of shared / surplus(+) / deficit(-) particles.

    Returns (tau, t_path, r1_path, r2_path, n).  After tau the second system
    is continued with fresh streams so both marginals stay exact.
    """
    cap = typ.shape[0]
    n = n0
    r1 = r0
    r2 = r0
    t = 0.0
    tau = np.inf
    tp = [0.0]
    p1 = [r0]
    p2 = [r0]
    # after tau, members of system 2 that are copies: typ 3 (= copy of shared)
    while True:
        best = -1
        bt = np.inf
        for p in range(n):
            if alive[p] and nextt[p] < bt:
                bt = nextt[p]
                best = p
        if best < 0 or bt > horizon:
            break
        p = best
        t = bt
        c = cnt[p]
        step = draw_step(seed[p], c + 1)
        cnt[p] = c + 2
        nextt[p] = t + draw_exponential(seed[p], c + 2, 2.0)
        pos[p] += step
        tp_ = typ[p]
        spawn1 = False
        spawn2 = False
        if tau == np.inf:
            if tp_ == _SHARED and pos[p] > r1:
                r1 += 1
                r2 += 1
                spawn1 = True
            elif tp_ != _SHARED:
                # annihilation with an opposite surplus particle on the same site
                for q in range(n):
                    if alive[q] and q != p and typ[q] + tp_ == 3 and pos[q] == pos[p]:
                        typ[p] = _SHARED
                        alive[q] = False
                        break
                if typ[p] != _SHARED and pos[p] >= r1:
                    tau = t
                    # split: copies of shared particles for system 2 on fresh streams
                    m = n
                    for q in range(n):
                        if alive[q] and typ[q] == _SHARED:
                            if m >= cap:
                                return -1.0, tp, p1, p2, m
                            typ[m] = 3
                            pos[m] = pos[q]
                            seed[m] = stream_seed(master_seed, TAG_COUPLE, m, 7)
                            cnt[m] = 0
                            nextt[m] = t + draw_exponential(seed[m], 0, 2.0)
                            alive[m] = True
                            m += 1
                    n = m
                    if typ[p] == _PLUS and pos[p] > r1:
                        r1 = pos[p]
                        spawn1 = True
                    elif typ[p] == _MINUS and pos[p] > r2:
                        r2 = pos[p]
                        spawn2 = True
        else:
            # decoupled: system 1 = {0, 1}, system 2 = {2, 3}
            if (tp_ == _SHARED or tp_ == _PLUS) and pos[p] > r1:
                r1 = pos[p]
                spawn1 = True
            elif (tp_ == _MINUS or tp_ == 3) and pos[p] > r2:
                r2 = pos[p]
                spawn2 = True
        if spawn1 or spawn2:
            if n + a > cap:
                return -1.0, tp, p1, p2, n
            for i in range(a):
                q = n + i
                if spawn1:
                    typ[q] = _SHARED if tau == np.inf else _PLUS
                    pos[q] = r1
                    seed[q] = stream_seed(master_seed, TAG_WALK, r1, i + 1)
                else:
                    typ[q] = _MINUS
                    pos[q] = r2
                    seed[q] = stream_seed(master_seed, TAG_COUPLE, r2, 100 + i)
                cnt[q] = 0
                nextt[q] = t + draw_exponential(seed[q], 0, 2.0)
                alive[q] = True
            n += a
        tp.append(t)
        p1.append(r1)
        p2.append(r2)
    return tau, tp, p1, p2, n


@dataclass
class CoupledRun:
    tau: float | None
    times: np.ndarray
    r1: np.ndarray
    r2: np.ndarray

    def r1_at(self, t: float) -> int:
        return int(self.r1[np.searchsorted(self.times, t, side="right") - 1])

    def r2_at(self, t: float) -> int:
        return int(self.r2[np.searchsorted(self.times, t, side="right") - 1])


def couple_runs(c1: Configuration, c2: Configuration, horizon: float,
                master_seed: int | None = None) -> CoupledRun:
    """Run two configurations with equal fronts under the basic coupling.

    Particles common to both move together; surplus particles of either
    sign move independently and merge into a common particle when two of
    opposite sign meet.  ``tau`` is the first time a surplus particle reaches
    the running front (None when it does not happen before ``horizon``).
    Common particles keep their label streams, so for ``c1`` the coupled
    front has the law of an uncoupled run.
    """
    if c1.r != c2.r:
        raise PreconditionError("couple_runs needs equal fronts")
    seed = c1.master_seed if master_seed is None else master_seed
    p1 = c1.particles()
    p2 = c2.particles()
    # match by label first, then pair unlabeled surplus by site
    typ, pos, keys = [], [], []
    for lab, z in p1.items():
        if lab in p2 and p2[lab] == z:
            typ.append(_SHARED)
        else:
            typ.append(_PLUS)
        pos.append(z)
        keys.append(lab)
    for lab, z in p2.items():
        if not (lab in p1 and p1[lab] == z):
            typ.append(_MINUS)
            pos.append(z)
            keys.append((lab[0], 1000 + lab[1]))
    n0 = len(typ)
    cap = 64 * (n0 + 64 * c1.a)
    t_arr = np.zeros(cap, dtype=np.int64)
    z_arr = np.zeros(cap, dtype=np.int64)
    s_arr = np.zeros(cap, dtype=np.uint64)
    cnt = np.zeros(cap, dtype=np.int64)
    nt = np.zeros(cap)
    al = np.zeros(cap, dtype=np.bool_)
    for k in range(n0):
        t_arr[k] = typ[k]
        z_arr[k] = pos[k]
        tag = TAG_WALK if typ[k] != _MINUS else TAG_COUPLE
        s_arr[k] = stream_seed(np.uint64(seed), tag, keys[k][0], keys[k][1])
        nt[k] = draw_exponential(s_arr[k], 0, 2.0)
        al[k] = True
    # surplus pairs sitting on the same site merge immediately
    for k in range(n0):
        if al[k] and t_arr[k] == _PLUS:
            for q in range(n0):
                if al[q] and t_arr[q] == _MINUS and z_arr[q] == z_arr[k]:
                    t_arr[k] = _SHARED
                    al[q] = False
                    break
    tau, tp, r1, r2, _ = _couple_kernel(np.uint64(seed), c1.a, t_arr, z_arr, s_arr, cnt, nt,
                                        al, n0, c1.r, float(horizon))
    if tau < 0:
        raise MemoryError("coupling capacity exceeded")
    return CoupledRun(None if tau == np.inf else float(tau), np.asarray(tp),
                      np.asarray(r1), np.asarray(r2))
