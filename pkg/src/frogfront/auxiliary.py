"""Windowed auxiliary front built from the label walks.

Stage ``k`` lasts ``nu_k``: the first time one of the walks ``Y_{z,i}`` with
``max(r, r+k-M) <= z <= r+k-1`` hits ``r+k``, every walk read from its own
time zero.  Because the main process runs particle ``(z, i)`` along the same
walk from its birth, the main front's inter-advance times satisfy
``rho_k <= nu_k`` pathwise.

First-passage ("ladder") times of each walk are cached, so a walk is only
ever simulated forward, and only as far as the current stage minimum needs.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import stats

from .process import EventLog, PreconditionError
from .rng import TAG_WALK, ParameterError, draw_exponential, draw_step, derive_seed, stream_seed


def window_size(a: int) -> int:
    """Default window ``M = 4(a + 5)``."""
    return 4 * (a + 5)


@njit(cache=True)
def _walk_to(w, target, tcap, z, wseed, wcnt, wpos, wmax, wnext, ladder, M):
    # advance walk w until its maximum reaches `target` or its clock passes tcap
    while wmax[w] < target and wnext[w] <= tcap:
        c = wcnt[w]
        wpos[w] += draw_step(wseed[w], c + 1)
        if wpos[w] > wmax[w]:
            wmax[w] = wpos[w]
            off = wpos[w] - z
            if off <= M:
                ladder[w, off] = wnext[w]
        wcnt[w] = c + 2
        wnext[w] += draw_exponential(wseed[w], c + 2, 2.0)


@njit(cache=True)
def _aux_kernel(master_seed, r, a, M, max_stages, horizon, alpha2, caps, continuing,
                cap_continue, nu_out, consulted):
    """Stages of the auxiliary front from base ``r``.

    Stops after ``max_stages`` stages, when the elapsed time would pass
    ``horizon``, or (``alpha2 > 0``) at the first time the front falls below
    ``floor(alpha2 t)``.  ``caps[k-1] > 0`` bounds stage ``k`` (used to test
    ``nu_k < cap``); with ``cap_continue`` an unbeaten cap records
    ``nu_k = inf`` and the run goes on.  Returns ``(n_done, u_time, status)``;
    status 0 = stage limit, 1 = horizon, 2 = alpha2 violation, 3 = cap not
    beaten.
    """
    nw = (max_stages + 1) * a
    wseed = np.empty(nw, dtype=np.uint64)
    wcnt = np.zeros(nw, dtype=np.int64)
    wpos = np.empty(nw, dtype=np.int64)
    wmax = np.empty(nw, dtype=np.int64)
    wnext = np.empty(nw)
    ladder = np.full((nw, M + 1), np.inf)
    born = np.zeros(max_stages + 1)  # aux time at which site r+j was reached
    for j in range(max_stages + 1):
        for i in range(a):
            w = j * a + i
            s = stream_seed(master_seed, TAG_WALK, r + j, i + 1)
            wseed[w] = s
            wpos[w] = r + j
            wmax[w] = r + j
            wnext[w] = draw_exponential(s, 0, 2.0)
    elapsed = 0.0
    for k in range(1, max_stages + 1):
        limit = horizon - elapsed
        status = 1
        if alpha2 > 0:
            dl = k / alpha2 - elapsed
            if dl < limit:
                limit = dl
                status = 2
        if caps[k - 1] > 0 and caps[k - 1] < limit:
            limit = caps[k - 1]
            status = 3
        lo = r + k - M
        if lo < r:
            lo = r
        best = np.inf
        # doubling windows keep one slow walk from running unbounded; the
        # last pass at the final window makes the minimum exact
        tc = 1.0
        while True:
            if tc > limit:
                tc = limit
            for z in range(r + k - 1, lo - 1, -1):
                j = z - r
                shift = born[j] - elapsed if continuing else 0.0
                for i in range(a):
                    w = j * a + i
                    need = best if best < tc else tc
                    _walk_to(w, r + k, need - shift, z, wseed, wcnt, wpos, wmax, wnext,
                             ladder, M)
                    if wmax[w] >= r + k:
                        h = ladder[w, r + k - z] + shift
                        if h < best:
                            best = h
            if best <= tc or tc >= limit:
                break
            tc *= 2.0
        consulted[k - 1] = (r + k - lo) * a
        if not best <= limit and status == 3 and cap_continue:
            nu_out[k - 1] = np.inf
            elapsed += limit
            born[k] = elapsed
            continue
        if not best <= limit:
            if status == 2:
                return k - 1, k / alpha2, 2
            return k - 1, np.inf, status
        nu_out[k - 1] = best
        elapsed += best
        born[k] = elapsed
    return max_stages, np.inf, 0


@dataclass
class AuxRun:
    """Result of an auxiliary run from base ``r``."""

    r: int
    M: int
    nu: np.ndarray
    status: str
    u_time: float = np.inf
    consulted: np.ndarray | None = None

    @property
    def stage_ends(self) -> np.ndarray:
        return np.cumsum(self.nu)

    def front_at(self, t: float) -> int:
        """``r + n`` on ``[sum nu_{<=n}, sum nu_{<=n+1})``."""
        return self.r + int(np.searchsorted(self.stage_ends, t, side="right"))

    def path(self) -> tuple[np.ndarray, np.ndarray]:
        """Jump times and front values of the piecewise-constant front."""
        return np.concatenate([[0.0], self.stage_ends]), self.r + np.arange(len(self.nu) + 1)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("k,nu_k,t,front\n")
            for k, (nu, t) in enumerate(zip(self.nu, self.stage_ends), start=1):
                fh.write(f"{k},{nu!r},{t!r},{self.r + k}\n")


_STATUS = {0: "stages", 1: "horizon", 2: "alpha2_violation", 3: "cap"}


def run_auxiliary(r: int, n_stages: int, a: int, master_seed: int, M: int | None = None,
                  horizon: float = np.inf, alpha2: float = 0.0, caps=None,
                  continuing: bool = False, cap_continue: bool = False) -> AuxRun:
    """Auxiliary front from base ``r`` for up to ``n_stages`` stages.

    ``continuing=True`` selects the variant in which each walk runs on from
    the moment its site is reached instead of restarting every stage.
    """
    if n_stages < 1:
        raise ParameterError("n_stages must be >= 1")
    M = window_size(a) if M is None else int(M)
    nu = np.zeros(n_stages)
    consulted = np.zeros(n_stages, dtype=np.int64)
    caps = np.zeros(n_stages) if caps is None else np.asarray(caps, dtype=float)
    n, u, st = _aux_kernel(np.uint64(master_seed), int(r), int(a), M, int(n_stages),
                           float(horizon), float(alpha2), caps, continuing, cap_continue, nu,
                           consulted)
    return AuxRun(int(r), M, nu[:n].copy(), _STATUS[st], float(u), consulted[: max(n, 1)])


def u_violation_time(r: int, a: int, alpha2: float, horizon: float, master_seed: int,
                     M: int | None = None) -> float:
    """First time the auxiliary front from ``r`` drops below ``floor(alpha2 t)``.

    ``inf`` when no violation occurs up to ``horizon``.
    """
    if horizon <= 0:
        return np.inf
    n_stages = int(alpha2 * horizon) + 2
    run = run_auxiliary(r, n_stages, a, master_seed, M, horizon=horizon, alpha2=alpha2)
    return run.u_time


@dataclass
class AlphaEstimate:
    alpha: float
    ci: tuple[float, float]
    per_replica: np.ndarray
    min_stages: int
    warning: str | None = None


def estimate_alpha(a: int, horizon: float, replicas: int, master_seed: int,
                   M: int | None = None, burn_fraction: float = 0.2,
                   level: float = 0.95) -> AlphaEstimate:
    """Speed of the auxiliary front from independent replicas.

    Each replica's speed is the front gain over ``[burn*H, H]`` divided by
    ``(1 - burn) H``; the interval is a t-interval over replicas.
    """
    M = window_size(a) if M is None else M
    speeds = np.empty(replicas)
    stages = np.empty(replicas, dtype=np.int64)
    guess = int(4 * horizon) + 10
    for j in range(replicas):
        seed = derive_seed(master_seed, 5, j)
        run = run_auxiliary(0, guess, a, seed, M, horizon=horizon)
        t0 = burn_fraction * horizon
        speeds[j] = (len(run.nu) - run.front_at(t0)) / (horizon - t0)
        stages[j] = len(run.nu)
    m = float(speeds.mean())
    if replicas > 1:
        half = stats.t.ppf(0.5 + level / 2, replicas - 1) * speeds.std(ddof=1) / np.sqrt(replicas)
    else:
        half = np.inf
    warn = None
    if stages.min() < 100:
        warn = f"only {stages.min()} stages in some replica; interval widened"
        half *= 2
        warnings.warn(warn)
    return AlphaEstimate(m, (m - half, m + half), speeds, int(stages.min()), warn)


def rho_sequence(log: EventLog, n: int | None = None) -> np.ndarray:
    """Inter-advance times of the main front, starting at the log's t0."""
    ft, _ = log.front_advances()
    rho = np.diff(np.concatenate([[log.t0], ft]))
    return rho if n is None else rho[:n]


def coupled_subadditivity(log: EventLog, n_stages: int, M: int | None = None) -> dict:
    """Count stages with ``rho_k > nu_k`` on a shared-stream pair.

    The log must start with labels ``(r0, 1..a)`` sitting at ``r0``.  Stage
    ``k`` of the auxiliary run is capped at ``rho_k``, so a stage that
    finishes strictly earlier is a violation.
    """
    r0 = log.r0
    at_front = {(int(o), int(i)) for o, i, z in zip(log.init_origin, log.init_index,
                                                    log.init_pos) if z == r0 and o == r0}
    if not all((r0, i) in at_front for i in range(1, log.a + 1)):
        raise PreconditionError("labels (r0, 1..a) must start at r0")
    if log.init_cnt.any():
        raise PreconditionError("log must start from fresh walk streams")
    rho = rho_sequence(log, n_stages)
    k_max = len(rho)
    if k_max == 0:
        return {"violations": 0, "stages": 0, "rho": rho}
    M = window_size(log.a) if M is None else M
    # nu_k does not depend on earlier stages, so each stage is capped at rho_k:
    # a finite nu_k below the cap is a violation
    run = run_auxiliary(r0, k_max, log.a, log.master_seed, M, caps=rho, cap_continue=True)
    nu = run.nu
    # rho_k is a difference of absolute times, so allow for rounding
    tol = 1e-9 * (1.0 + np.cumsum(rho))
    violations = int(np.sum(np.isfinite(nu) & (nu < rho - tol)))
    return {"violations": violations, "stages": k_max, "rho": rho, "nu_capped": nu}
