"""Regeneration times of the front, computed offline from an event log.

An anchor is a hitting time ``s = T_y`` selected by the ``J`` search.  From
an anchor three monitors look for a failure:

* ``W``: the backlog ``sum_{origin <= r-L} exp(theta (pos - r))`` reaches
  ``exp(theta floor(alpha1 t))`` (the front terms of the threshold cancel);
* ``V``: a particle with origin in ``(r-L, r)`` gets beyond ``r + floor(alpha1 t)``;
* ``U``: the auxiliary front from ``r`` falls below ``floor(alpha2 t)``.

``D`` is the first of the three.  An anchor with no failure up to the log
horizon ``H`` and ``s <= H - delta_conf`` is certified as a regeneration time.
All quantities are deterministic functions of the log and its seed.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from numba import njit

from .auxiliary import estimate_alpha, u_violation_time, window_size
from .process import EventLog
from .rng import ParameterError

DEFAULT_DELTA_CONF = 50.0
_SNAP_EVERY = 1 << 20


# ---------------------------------------------------------------- parameters


@dataclass
class RegenParams:
    a: int
    theta: float
    L: int
    p: float
    alpha1: float
    alpha2: float
    M: int
    horizon: float = np.inf
    delta_conf: float = DEFAULT_DELTA_CONF
    alpha_hat: float = np.nan
    include_spawned: bool = True

    @property
    def mu(self) -> float:
        return self.theta * self.alpha1 - 2.0 * (math.cosh(self.theta) - 1.0)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RegenParams":
        return cls(**d)


def validate_params(params: RegenParams) -> list[str]:
    """Violated constraints, each with both sides; empty when all hold."""
    a, th, L, p = params.a, params.theta, params.L, params.p
    out = []
    if params.M != window_size(a):
        out.append(f"mcond: M={params.M} != 4(a+5)={window_size(a)}")
    if not a * L >= params.M:
        out.append(f"lbound: aL={a * L} < M={params.M}")
    lo = 2.0 * math.sinh(2.0 * th)
    chain = [0.0, lo, params.alpha1, params.alpha2, params.alpha_hat]
    if not (th > 0 and all(x < y for x, y in zip(chain, chain[1:]))):
        msg = (f"teta: need 0 < 2sinh(2theta)={lo:.6g} < alpha1={params.alpha1:.6g} "
               f"< alpha2={params.alpha2:.6g} < alpha={params.alpha_hat:.6g}")
        if th > 0 and not lo < params.alpha_hat:
            msg += "; reduce theta"
        out.append(msg)
    pe = p * math.exp(th)
    if not 0 < pe < 1:
        out.append(f"pbound: p e^theta={pe:.6g} not in (0, 1)")
    lc = (a - 1) * math.exp(-L * th)
    if not lc < p:
        out.append(f"lc: (a-1)e^(-L theta)={lc:.6g} >= p={p:.6g}")
    if not params.mu > 0:
        out.append(f"mu: theta alpha1 - 2(cosh theta - 1)={params.mu:.6g} <= 0")
    return out


def theta_star(alpha_hat: float) -> float:
    """Solution of ``2 sinh(2 theta) = alpha_hat / 2``."""
    return 0.5 * math.asinh(alpha_hat / 4.0)


def params_from_alpha(a: int, alpha_hat: float, theta_max: float = 0.1,
                      L: int | None = None, **kw) -> RegenParams:
    """Placement rule for ``theta, alpha1, alpha2, L, p`` given ``alpha_hat``.

    ``L`` defaults to the smallest admissible value; passing a larger ``L``
    keeps every constraint and makes anchors with a small backlog common.
    """
    M = window_size(a)
    th = min(theta_max, theta_star(alpha_hat))
    lo = 2.0 * math.sinh(2.0 * th)
    gap = alpha_hat - lo
    p = 0.5 / math.exp(th)
    if p > 0.45:
        p = 0.45
    L_min = math.ceil(M / a)
    if a > 1:
        L_min = max(L_min, math.floor(math.log(a - 1) - math.log(p)) // th + 1)
        while not (a - 1) * math.exp(-L_min * th) < p:
            L_min += 1
    L_min = int(L_min)
    if L is None:
        L = L_min
    elif L < L_min:
        raise ParameterError(f"L={L} below the admissible minimum {L_min}")
    return RegenParams(a, th, int(L), p, lo + 0.4 * gap, lo + 0.7 * gap, M,
                       alpha_hat=alpha_hat, **kw)


def calibrate(a: int, theta_max: float, master_seed: int, horizon: float = 2000.0,
              replicas: int = 20, L: int | None = None, **kw) -> RegenParams:
    """Estimate the auxiliary speed and place the parameters around it."""
    est = estimate_alpha(a, horizon, replicas, master_seed)
    if not est.ci[0] > 0:
        raise ParameterError(f"alpha interval {est.ci} contains 0")
    return params_from_alpha(a, est.alpha, theta_max, L, **kw)


# ---------------------------------------------------------------- log index


@njit(cache=True)
def _replay_to(pos, pid, new, start, stop):
    for k in range(start, stop):
        pos[pid[k]] = new[k]


@njit(cache=True)
def _site_tables(origin, pos0, pid, new, front, r0, L, theta, a, include_spawned):
    n_sites = 0
    for k in range(front.shape[0]):
        if front[k]:
            n_sites += 1
    n0 = pos0.shape[0]
    pos = np.empty(n0 + a * n_sites, dtype=np.int64)
    pos[:n0] = pos0
    for q in range(n0, pos.shape[0]):
        pos[q] = origin[q]
    phi = np.empty(n_sites)
    m = np.empty(n_sites, dtype=np.int64)
    n = n0
    j = 0
    for k in range(pid.shape[0]):
        pos[pid[k]] = new[k]
        if front[k]:
            y = new[k]
            n += a
            z = y - L
            s = 0.0
            c = 0
            for q in range(n):
                o = origin[q]
                if o <= z:
                    s += math.exp(theta * (pos[q] - y))
                elif pos[q] > z and pos[q] <= y and (include_spawned or o != y):
                    c += 1
            phi[j] = s
            m[j] = c
            j += 1
    return phi, m


class LogIndex:
    """Random access to the state of a compacted log.

    ``positions(e)`` is the particle table right after event ``e`` (post
    spawn); ``e = -1`` is the initial state.
    """

    def __init__(self, log: EventLog):
        log.compact()
        self.log = log
        self.ev = log.chunks[0] if log.chunks else log.concat()
        self.origin, self.index = log.labels()
        self.a = log.a
        self.r0 = log.r0
        self.t0 = log.t0
        self.n0 = len(log.init_pos)
        self.front_idx = np.flatnonzero(self.ev.front)
        self.front_t = self.ev.t[self.front_idx]
        self.r_final = self.r0 + len(self.front_idx)
        self.horizon = log.t_end if log.t_end is not None else (
            float(self.ev.t[-1]) if len(self.ev) else self.t0)
        self._snaps: dict[int, np.ndarray] = {}
        base = np.concatenate([log.init_pos, self.origin[self.n0:]]).astype(np.int64)
        self._snaps[-1] = base
        pos = base.copy()
        E = len(self.ev)
        for e in range(_SNAP_EVERY - 1, E, _SNAP_EVERY):
            prev = e - _SNAP_EVERY
            _replay_to(pos, self.ev.pid, self.ev.new, prev + 1, e + 1)
            self._snaps[e] = pos.copy()
        self._tables: dict = {}

    def positions(self, e: int) -> np.ndarray:
        key = -1 if e < _SNAP_EVERY - 1 else ((e + 1) // _SNAP_EVERY) * _SNAP_EVERY - 1
        pos = self._snaps[key].copy()
        _replay_to(pos, self.ev.pid, self.ev.new, key + 1, e + 1)
        return pos

    def n_at(self, e: int) -> int:
        """Number of pids created up to and including event ``e``."""
        return self.n0 + self.a * int(np.searchsorted(self.front_idx, e, side="right"))

    def hit_index(self, y: int) -> int | None:
        """Event index of ``T_y``; -1 when ``y <= r0``, None when not reached."""
        if y <= self.r0:
            return -1
        j = y - self.r0 - 1
        return int(self.front_idx[j]) if j < len(self.front_idx) else None

    def front_at(self, t: float) -> int:
        return self.r0 + int(np.searchsorted(self.front_t, t, side="right"))

    def time_of(self, e: int) -> float:
        return self.t0 if e < 0 else float(self.ev.t[e])

    def tables(self, L: int, theta: float, include_spawned: bool = True):
        """``phi_{y-L}(T_y)`` and ``m_{y-L,y}(T_y)`` for ``y = r0+1..r_final``."""
        key = (L, theta, include_spawned)
        if key not in self._tables:
            self._tables[key] = _site_tables(self.origin, self.log.init_pos.astype(np.int64),
                                             self.ev.pid, self.ev.new, self.ev.front,
                                             self.r0, L, theta, self.a, include_spawned)
        return self._tables[key]


def _index(log) -> LogIndex:
    return log if isinstance(log, LogIndex) else LogIndex(log)


# ---------------------------------------------------------------- stopping times


def detect_T(log, y: int) -> float:
    """``T_y``; ``inf`` when the log never reaches ``y``."""
    ix = _index(log)
    e = ix.hit_index(y)
    return np.inf if e is None else ix.time_of(e)


@dataclass
class JResult:
    x: int
    J: int | None
    site: int | None
    time: float
    event: int | None

    @property
    def censored(self) -> bool:
        return self.J is None


def detect_J(log, x: int, params: RegenParams) -> JResult:
    """Least ``j >= 1`` with ``phi <= p`` and ``m >= aL/2`` at ``T_{x+jL}``."""
    ix = _index(log)
    L = params.L
    phi, m = ix.tables(L, params.theta, params.include_spawned)
    need = params.a * L / 2.0
    j = 1
    while True:
        y = x + j * L
        if y > ix.r_final:
            return JResult(x, None, None, np.inf, None)
        if y > ix.r0:
            k = y - ix.r0 - 1
            if phi[k] <= params.p and m[k] >= need:
                e = ix.hit_index(y)
                return JResult(x, j, y, ix.time_of(e), e)
        j += 1


@njit(cache=True)
def _scan_vw(t, pid, new, e0, pos, origin, n0, r, s, L, alpha1, ew, off, t_stop,
             want_v, want_w, stop_first):
    """First V and W violation times (relative to ``s``) after event ``e0``.

    ``ew[d + off] = exp(theta d)``.  Stops at ``s + t_stop``, once every
    wanted monitor has fired, or with ``stop_first`` at the first firing.
    """
    zw = r - L
    sw = 0.0
    for q in range(n0):
        if origin[q] <= zw:
            sw += ew[pos[q] - r + off]
    tv = np.inf
    tw = np.inf
    if want_w and sw >= 1.0:
        tw = 0.0
        if not want_v or stop_first:
            return tv, tw
    for k in range(e0 + 1, t.shape[0]):
        tk = t[k] - s
        if tk > t_stop:
            break
        p = pid[k]
        if p >= n0:
            continue
        o = origin[p]
        if o >= r:
            continue
        nw = new[k]
        old = pos[p]
        pos[p] = nw
        if nw < old:
            if o <= zw:
                sw += ew[nw - r + off] - ew[old - r + off]
            continue
        line = math.floor(alpha1 * tk)
        if o <= zw:
            sw += ew[nw - r + off] - ew[old - r + off]
            if want_w and tw == np.inf and sw >= ew[line + off]:
                tw = tk
                if stop_first or not want_v or tv < np.inf:
                    break
        elif want_v and tv == np.inf and nw > r + line:
            tv = tk
            if stop_first or not want_w or tw < np.inf:
                break
    return tv, tw


def _exp_table(ix: LogIndex, theta: float, alpha1: float):
    lo = min(int(ix.ev.new.min()) if len(ix.ev) else 0, int(ix.log.init_pos.min()))
    lo = lo - ix.r_final - 1
    hi = max(ix.r_final - ix.r0, int(alpha1 * (ix.horizon - ix.t0))) + 2
    off = -lo
    return np.exp(theta * np.arange(lo, hi + 1, dtype=float)), off


def _monitor_vw(ix: LogIndex, e: int, params: RegenParams, t_stop: float,
                want_v=True, want_w=True, stop_first=False) -> tuple[float, float]:
    key = ("ew", params.theta, params.alpha1)
    if key not in ix._tables:
        ix._tables[key] = _exp_table(ix, params.theta, params.alpha1)
    ew, off = ix._tables[key]
    r = ix.front_at(ix.time_of(e)) if e >= 0 else ix.r0
    pos = ix.positions(e)
    return _scan_vw(ix.ev.t, ix.ev.pid, ix.ev.new, e, pos, ix.origin, ix.n_at(e), r,
                    ix.time_of(e), params.L, params.alpha1, ew, off, float(t_stop),
                    want_v, want_w, stop_first)


def _anchor_event(ix: LogIndex, s: float) -> int:
    e = int(np.searchsorted(ix.ev.t, s, side="right")) - 1
    return e


def monitor_W(log, anchor: float, params: RegenParams) -> float:
    """First ``t >= 0`` with the backlog above the ``alpha1`` threshold, or inf."""
    ix = _index(log)
    e = _anchor_event(ix, anchor)
    return _monitor_vw(ix, e, params, ix.horizon - anchor, want_v=False)[1]


def monitor_V(log, anchor: float, params: RegenParams) -> float:
    """First ``t`` with a tracked particle beyond ``r + floor(alpha1 t)``, or inf."""
    ix = _index(log)
    e = _anchor_event(ix, anchor)
    return _monitor_vw(ix, e, params, ix.horizon - anchor, want_w=False)[0]


def monitor_U(r: int, params: RegenParams, master_seed: int, horizon: float) -> float:
    """First time the auxiliary front from ``r`` is below ``floor(alpha2 t)``, or inf."""
    return u_violation_time(r, params.a, params.alpha2, horizon, master_seed, params.M)


# ---------------------------------------------------------------- sequence


@dataclass
class AnchorAnalysis:
    """Monitor outcomes from one anchor.

    Times are relative to ``s``.  Within a regeneration sequence each monitor
    is only followed up to ``D``, so ``inf`` reads "not before D"; an anchor
    with ``D = inf`` is clean up to the log horizon.
    """

    s: float
    r: int
    event: int
    J: int
    u: float
    v: float
    w: float
    status: str = "censored"

    @property
    def d(self) -> float:
        # ties resolved in the order U, V, W
        return min(self.u, self.v, self.w)

    @property
    def cause(self) -> str | None:
        d = self.d
        if d == np.inf:
            return None
        for name in ("u", "v", "w"):
            if getattr(self, name) == d:
                return name.upper()
        return None

    def to_json(self) -> str:
        d = {k: (None if isinstance(v, float) and math.isinf(v) else v)
             for k, v in asdict(self).items()}
        d["cause"] = self.cause
        return json.dumps(d)


@dataclass
class CycleRecord:
    """Cycle ``n`` runs from ``kappa_{n-1}`` to ``kappa_n`` (``kappa_0`` = log start)."""

    n: int
    kappa_start: float
    kappa_end: float
    r_start: int
    r_end: int
    rounds: int
    J_values: list[int]
    env: np.ndarray
    certified: bool = True

    @property
    def d_kappa(self) -> float:
        return self.kappa_end - self.kappa_start

    @property
    def d_r(self) -> int:
        return self.r_end - self.r_start


@dataclass
class RegenResult:
    cycles: list[CycleRecord]
    anchors: list[AnchorAnalysis]
    horizon: float
    censored_from: float
    reason: str
    params: RegenParams
    seed: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def kappas(self) -> np.ndarray:
        return np.array([c.kappa_end for c in self.cycles])

    def usable(self) -> list[CycleRecord]:
        """Cycles with ``n >= 2``."""
        return [c for c in self.cycles if c.n >= 2]

    def write_cycles(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("n,kappa_n,kappa_next,d_kappa,d_r,rounds,J_values,certified_flag\n")
            for c in self.cycles:
                js = ";".join(str(j) for j in c.J_values)
                fh.write(f"{c.n},{c.kappa_start!r},{c.kappa_end!r},{c.d_kappa!r},{c.d_r},"
                         f"{c.rounds},{js},{int(c.certified)}\n")

    def write_anchors(self, path) -> None:
        with open(path, "w") as fh:
            for an in self.anchors:
                fh.write(an.to_json() + "\n")


def _env_at(ix: LogIndex, e: int, depth: int) -> np.ndarray:
    pos = ix.positions(e)[: ix.n_at(e)]
    r = ix.front_at(ix.time_of(e)) if e >= 0 else ix.r0
    off = r - pos
    off = off[off <= depth]
    return np.bincount(off, minlength=depth + 1)[: depth + 1]


def regeneration_sequence(log, params: RegenParams, delta_conf: float | None = None,
                          env_depth: int = 10) -> RegenResult:
    """Regeneration times ``kappa_1 < kappa_2 < ...`` of a recorded run.

    From the current base ``R`` the search takes ``S = T_{R + J_R L}``, runs
    the three monitors from ``S``, and on a failure at ``D`` restarts from
    ``R = r_D``.  An anchor clean up to the horizon is certified when
    ``S <= H - delta_conf``; the search then restarts from it.
    """
    ix = _index(log)
    dc = params.delta_conf if delta_conf is None else float(delta_conf)
    H = ix.horizon
    seed = ix.log.master_seed
    cycles: list[CycleRecord] = []
    anchors: list[AnchorAnalysis] = []
    R = ix.r0
    k_start, r_start = ix.t0, ix.r0
    rounds, js = 0, []
    reason = "horizon"
    censored_from = ix.t0
    while True:
        jr = detect_J(ix, R, params)
        if jr.censored:
            reason = "J not found before the end of the log"
            break
        s, y, e = jr.time, jr.site, jr.event
        rounds += 1
        js.append(jr.J)
        u = monitor_U(y, params, seed, H - s)
        v, w = _monitor_vw(ix, e, params, min(u, H - s), stop_first=True)
        an = AnchorAnalysis(s, y, e, jr.J, u, v, w)
        anchors.append(an)
        if an.d < np.inf:
            an.status = "violated"
            R = ix.front_at(s + an.d)
            continue
        if s > H - dc:
            an.status = "censored"
            reason = "last clean anchor inside the confirmation window"
            break
        an.status = "confirmed_infinite"
        cycles.append(CycleRecord(len(cycles) + 1, k_start, s, r_start, y, rounds, js,
                                  _env_at(ix, e, env_depth)))
        k_start, r_start = s, y
        rounds, js = 0, []
        R = y
        censored_from = s
    return RegenResult(cycles, anchors, H, censored_from, reason, params, seed)


def censoring_sensitivity(log, params: RegenParams, deltas) -> list[dict]:
    """Cycle count and estimates for each confirmation window."""
    from .estimators import CycleEnsemble, estimate_sigma2, estimate_speed

    deltas = list(deltas)
    if len(deltas) < 2:
        raise ParameterError("need at least two confirmation windows")
    ix = _index(log)
    rows = []
    for dc in deltas:
        res = regeneration_sequence(ix, params, dc)
        ens = CycleEnsemble.from_results([res])
        row = {"delta_conf": float(dc), "cycles": len(res.cycles),
               "certified": dc > 0}
        if len(ens):
            v = estimate_speed(ens)
            row["v_hat"] = v.value
            row["sigma2_hat"] = estimate_sigma2(ens, v.value).value
        rows.append(row)
    return rows


def violation_samples(log, params: RegenParams, sites, t_stop: float,
                      L_w: int | None = None) -> dict:
    """First V and W violation times from anchors at ``T_y`` for each ``y``.

    Unlike inside :func:`regeneration_sequence`, each monitor runs on its own
    up to ``t_stop``, so the samples are not cut at ``D``; anchors with less
    than ``t_stop`` of log left are skipped.
    ``L_w`` overrides the backlog depth used for W.  Anchors whose W holds
    already at time 0 are counted in ``w_at_zero`` and left out of ``W``.
    """
    ix = _index(log)
    pw = params if L_w is None else replace(params, L=int(L_w))
    out = {"V": [], "W": [], "anchors": 0, "w_at_zero": 0}
    for y in sites:
        e = ix.hit_index(int(y))
        if e is None:
            continue
        stop = float(t_stop)
        if ix.time_of(e) + stop > ix.horizon:
            continue
        out["anchors"] += 1
        v, _ = _monitor_vw(ix, e, params, stop, want_w=False)
        _, w = _monitor_vw(ix, e, pw, stop, want_v=False)
        if v < np.inf:
            out["V"].append(v)
        if w == 0.0:
            out["w_at_zero"] += 1
        elif w < np.inf:
            out["W"].append(w)
    return out
