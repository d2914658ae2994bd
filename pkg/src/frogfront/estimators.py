"""Estimators and tests built on regeneration cycles and replica ensembles."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import stats

from .rng import ParameterError

RESULTS_SCHEMA_VERSION = 1
DEFAULT_CAP = 32


@dataclass
class Estimate:
    value: float
    ci: tuple[float, float]
    reliable: bool = True
    note: str | None = None

    def to_dict(self) -> dict:
        return {"value": self.value, "ci": list(self.ci), "reliable": self.reliable,
                "note": self.note}


# ---------------------------------------------------------------- ensembles


@dataclass
class CycleEnsemble:
    """Certified cycles with ``n >= 2``, in replica order then cycle order."""

    d_kappa: np.ndarray
    d_r: np.ndarray
    replica: np.ndarray
    n: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.d_kappa)

    @classmethod
    def from_arrays(cls, d_kappa, d_r, replica=None, n=None, meta=None) -> "CycleEnsemble":
        d_kappa = np.asarray(d_kappa, dtype=float)
        d_r = np.asarray(d_r, dtype=float)
        if d_kappa.shape != d_r.shape:
            raise ParameterError("d_kappa and d_r differ in length")
        k = len(d_kappa)
        replica = np.zeros(k, dtype=np.int64) if replica is None else np.asarray(replica)
        n = np.arange(2, k + 2) if n is None else np.asarray(n)
        return cls(d_kappa, d_r, replica, n, dict(meta or {}))

    @classmethod
    def from_results(cls, results, min_n: int = 2) -> "CycleEnsemble":
        dk, dr, rep, nn = [], [], [], []
        for i, res in enumerate(results):
            for c in res.cycles:
                if c.n >= min_n and c.certified:
                    dk.append(c.d_kappa)
                    dr.append(c.d_r)
                    rep.append(i)
                    nn.append(c.n)
        return cls(np.array(dk, dtype=float), np.array(dr, dtype=float),
                   np.array(rep, dtype=np.int64), np.array(nn, dtype=np.int64))

    def merge(self, other: "CycleEnsemble") -> "CycleEnsemble":
        off = int(self.replica.max()) + 1 if len(self) else 0
        return CycleEnsemble(np.concatenate([self.d_kappa, other.d_kappa]),
                             np.concatenate([self.d_r, other.d_r]),
                             np.concatenate([self.replica, other.replica + off]),
                             np.concatenate([self.n, other.n]), {**self.meta, **other.meta})


# ---------------------------------------------------------------- generic statistics


def _batches(k: int, n_batches: int) -> list[slice]:
    edges = np.linspace(0, k, n_batches + 1).round().astype(int)
    return [slice(a, b) for a, b in zip(edges[:-1], edges[1:])]


def ci_batch_means(series, n_batches: int = 10, level: float = 0.95) -> Estimate:
    """Mean with a batch-means t-interval."""
    x = np.asarray(series, dtype=float)
    if n_batches < 2 or len(x) < n_batches:
        raise ParameterError("need at least two batches with one point each")
    means = np.array([x[s].mean() for s in _batches(len(x), n_batches)])
    m = float(x.mean())
    half = stats.t.ppf(0.5 + level / 2, n_batches - 1) * means.std(ddof=1) / math.sqrt(n_batches)
    return Estimate(m, (m - half, m + half), reliable=n_batches >= 10)


def classical_ci(series, level: float = 0.95) -> tuple[float, float]:
    x = np.asarray(series, dtype=float)
    m = x.mean()
    half = stats.t.ppf(0.5 + level / 2, len(x) - 1) * x.std(ddof=1) / math.sqrt(len(x))
    return (m - half, m + half)


@dataclass
class TestResult:
    name: str
    statistic: float
    p: float
    passed: bool
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "statistic": self.statistic, "p": self.p,
                "pass": bool(self.passed), **self.detail}


def normality_test(samples, level: float = 0.01) -> TestResult:
    """One-sample KS against a normal with the sample mean and sd."""
    x = np.asarray(samples, dtype=float)
    if len(x) < 50:
        raise ParameterError("need at least 50 samples")
    sd = x.std(ddof=1)
    if not sd > 0:
        return TestResult("normality", np.nan, np.nan, False, {"degenerate": True})
    res = stats.kstest(x, "norm", args=(x.mean(), sd))
    return TestResult("normality", float(res.statistic), float(res.pvalue),
                      bool(res.pvalue > level), {"degenerate": False})


def autocorrelation(x, lag: int) -> float:
    x = np.asarray(x, dtype=float) - np.mean(x)
    den = float(np.dot(x, x))
    if den == 0 or lag >= len(x):
        return np.nan
    return float(np.dot(x[:-lag], x[lag:]) / den)


# ---------------------------------------------------------------- speed and variance


def _ratio_ci(num, den, n_batches, level, center):
    b = _batches(len(num), n_batches)
    vals = np.array([num[s].sum() / den[s].sum() for s in b])
    half = stats.t.ppf(0.5 + level / 2, n_batches - 1) * vals.std(ddof=1) / math.sqrt(n_batches)
    return (center - half, center + half)


def estimate_speed(ens: CycleEnsemble, n_batches: int = 10, level: float = 0.95) -> Estimate:
    """``sum d_r / sum d_kappa`` with a batch-means interval."""
    k = len(ens)
    if k == 0:
        raise ParameterError("no cycles")
    v = float(ens.d_r.sum() / ens.d_kappa.sum())
    if k < 2:
        return Estimate(v, (-np.inf, np.inf), False, "fewer than two cycles")
    nb = min(n_batches, k)
    ci = _ratio_ci(ens.d_r, ens.d_kappa, nb, level, v)
    note = None if k >= 30 else "fewer than 30 cycles"
    return Estimate(v, ci, k >= 30, note)


def estimate_sigma2(ens: CycleEnsemble, v: float, n_batches: int = 10,
                    level: float = 0.95) -> Estimate:
    """``sum (d_r - v d_kappa)^2 / sum d_kappa`` with a batch-means interval."""
    k = len(ens)
    if k == 0:
        raise ParameterError("no cycles")
    sq = (ens.d_r - v * ens.d_kappa) ** 2
    s2 = float(sq.sum() / ens.d_kappa.sum())
    if k < 2:
        return Estimate(s2, (-np.inf, np.inf), False, "fewer than two cycles")
    nb = min(n_batches, k)
    ci = _ratio_ci(sq, ens.d_kappa, nb, level, s2)
    note = None if k >= 100 else "fewer than 100 cycles"
    return Estimate(s2, ci, k >= 100, note)


# ---------------------------------------------------------------- Donsker scaling


@dataclass
class DonskerSample:
    grid: np.ndarray
    paths: np.ndarray
    endpoints: np.ndarray

    def variance_ratio(self, t1: float = 0.5, t2: float = 1.0) -> float:
        i = int(np.argmin(np.abs(self.grid - t1)))
        j = int(np.argmin(np.abs(self.grid - t2)))
        return float(self.paths[:, i].var(ddof=1) / self.paths[:, j].var(ddof=1))


def donsker_paths(fronts, grid, eps_inv: float, v: float, sigma2: float) -> DonskerSample:
    """``B_t = eps^(1/2)(r_{t/eps} - v t/eps)`` for each replica.

    ``fronts[k, j]`` is replica ``k``'s front at time ``grid[j] * eps_inv``;
    ``endpoints`` are ``B_1 / sigma``.
    """
    fronts = np.asarray(fronts, dtype=float)
    grid = np.asarray(grid, dtype=float)
    B = (fronts - v * eps_inv * grid) / math.sqrt(eps_inv)
    j = int(np.argmin(np.abs(grid - 1.0)))
    if not abs(grid[j] - 1.0) < 1e-12:
        raise ParameterError("grid must contain t = 1")
    return DonskerSample(grid, B, B[:, j] / math.sqrt(sigma2))


# ---------------------------------------------------------------- environment


@dataclass
class EnvHistogram:
    """Per-offset occupation law behind the front.

    ``w[k, j]`` is the weight of ``eta(r - k) = j`` for ``j <= cap``;
    column ``cap + 1`` collects larger occupancies.
    """

    depth: int
    cap: int
    w: np.ndarray

    @classmethod
    def empty(cls, depth: int, cap: int = DEFAULT_CAP) -> "EnvHistogram":
        return cls(depth, cap, np.zeros((depth + 1, cap + 2)))

    @classmethod
    def from_views(cls, views, cap: int = DEFAULT_CAP) -> "EnvHistogram":
        views = np.asarray(views, dtype=np.int64)
        depth = views.shape[1] - 1
        h = cls.empty(depth, cap)
        c = np.minimum(views, cap + 1)
        for k in range(depth + 1):
            h.w[k] += np.bincount(c[:, k], minlength=cap + 2)
        return h

    @property
    def total(self) -> float:
        return float(self.w[0].sum())

    def normalized(self) -> "EnvHistogram":
        tot = self.w.sum(axis=1, keepdims=True)
        tot[tot == 0] = 1.0
        return EnvHistogram(self.depth, self.cap, self.w / tot)

    def merge(self, other: "EnvHistogram") -> "EnvHistogram":
        if (self.depth, self.cap) != (other.depth, other.cap):
            raise ParameterError("histogram shapes differ")
        return EnvHistogram(self.depth, self.cap, self.w + other.w)

    @property
    def overflow_fraction(self) -> float:
        p = self.normalized().w
        return float(p[:, -1].max())

    def tv(self, other: "EnvHistogram") -> float:
        """Largest total-variation distance between per-offset marginals."""
        a = self.normalized().w
        b = other.normalized().w
        return float(0.5 * np.abs(a - b).sum(axis=1).max())

    def to_csv(self, path) -> None:
        p = self.normalized().w
        with open(path, "w") as fh:
            fh.write("offset,occupancy,mass\n")
            for k in range(self.depth + 1):
                for j in range(self.cap + 2):
                    occ = str(j) if j <= self.cap else f">{self.cap}"
                    fh.write(f"{k},{occ},{p[k, j]!r}\n")


@njit(cache=True)
def _occupation(t, pid, new, front, pos, r, e_start, e_stop, t_start, t_stop, depth, cap, a,
                n, w):
    # counts near the front, updated per event; w accumulates time
    cnt = np.zeros(depth + 1, dtype=np.int64)
    for q in range(n):
        d = r - pos[q]
        if 0 <= d <= depth:
            cnt[d] += 1
    last = t_start
    for k in range(e_start, e_stop):
        tk = t[k]
        if tk > t_stop:
            break
        dt = tk - last
        if dt > 0:
            for d in range(depth + 1):
                c = cnt[d] if cnt[d] <= cap else cap + 1
                w[d, c] += dt
            last = tk
        p = pid[k]
        od = r - pos[p]
        if 0 <= od <= depth:
            cnt[od] -= 1
        pos[p] = new[k]
        if front[k]:
            r = new[k]
            for d in range(depth, 0, -1):
                cnt[d] = cnt[d - 1]
            cnt[0] = 1 + a
            n += a
        else:
            nd = r - new[k]
            if 0 <= nd <= depth:
                cnt[nd] += 1
    dt = t_stop - last
    if dt > 0:
        for d in range(depth + 1):
            c = cnt[d] if cnt[d] <= cap else cap + 1
            w[d, c] += dt


def env_occupation(ix, t_start: float, t_stop: float, depth: int,
                   cap: int = DEFAULT_CAP) -> EnvHistogram:
    """Time-weighted occupation law over ``[t_start, t_stop]`` of an indexed log."""
    e0 = int(np.searchsorted(ix.ev.t, t_start, side="right")) - 1
    pos = ix.positions(e0)
    n = ix.n_at(e0)
    r = ix.front_at(t_start)
    h = EnvHistogram.empty(depth, cap)
    _occupation(ix.ev.t, ix.ev.pid, ix.ev.new, ix.ev.front, pos, r, e0 + 1, len(ix.ev),
                float(t_start), float(t_stop), depth, cap, ix.a, n, h.w)
    return h


def cycle_histograms(ix, result, depth: int, cap: int = DEFAULT_CAP) -> list[EnvHistogram]:
    """Occupation law over ``[kappa_n, kappa_{n+1}]`` for ``n = 1, 2, ...``."""
    k = result.kappas
    return [env_occupation(ix, k[i], k[i + 1], depth, cap) for i in range(len(k) - 1)]


def required_N(depth: int, alpha1: float, alpha2: float) -> int:
    """Least ``N`` with ``N (alpha2 - alpha1) > depth``."""
    return int(math.floor(depth / (alpha2 - alpha1))) + 1


def invariant_estimate(per_replica, N: int, depth: int, alpha1: float, alpha2: float,
                       cap: int = DEFAULT_CAP) -> EnvHistogram:
    """Pool the ``[kappa_N, kappa_{N+1}]`` occupation laws across replicas.

    ``per_replica[i][n - 1]`` is replica ``i``'s histogram over
    ``[kappa_n, kappa_{n+1}]``.  Requires ``N (alpha2 - alpha1) > depth``.
    """
    if not N * (alpha2 - alpha1) > depth:
        raise ParameterError(f"N={N} violates N(alpha2-alpha1) > {depth}; "
                             f"need N >= {required_N(depth, alpha1, alpha2)}")
    out = EnvHistogram.empty(depth, cap)
    used = 0
    for hs in per_replica:
        if len(hs) >= N:
            h = hs[N - 1]
            if (h.depth, h.cap) != (depth, cap):
                raise ParameterError("histogram shapes differ")
            out = out.merge(h)
            used += 1
    if used == 0:
        raise ParameterError(f"no replica reaches kappa_{N + 1}")
    return out


def mu_t_convergence(views_by_t: dict, reference: EnvHistogram) -> list[tuple[float, float]]:
    """``(t, distance)`` between the law of the environment at ``t`` and ``reference``."""
    rows = []
    for t in sorted(views_by_t):
        h = EnvHistogram.from_views(np.asarray(views_by_t[t])[:, : reference.depth + 1],
                                    reference.cap)
        rows.append((float(t), h.tv(reference)))
    return rows


# ---------------------------------------------------------------- diagnostics


def iid_diagnostics(ens: CycleEnsemble, max_lag: int = 5, level: float = 0.01) -> dict:
    """Autocorrelations and split-sample KS tests of the cycle increments."""
    k = len(ens)
    if k < 2 * max_lag + 2:
        raise ParameterError("too few cycles")
    bound = 2.0 / math.sqrt(k)
    out = {"n_cycles": k, "bound": bound, "acf": {}, "ks": {}, "halves": {}}
    ok = True
    for name, x in (("d_kappa", ens.d_kappa), ("d_r", ens.d_r)):
        acf = [autocorrelation(x, h) for h in range(1, max_lag + 1)]
        out["acf"][name] = acf
        ok &= all(abs(c) <= bound for c in acf)
        ks_oe = stats.ks_2samp(x[0::2], x[1::2])
        h = k // 2
        ks_half = stats.ks_2samp(x[:h], x[h:])
        out["ks"][name] = {"odd_even": float(ks_oe.pvalue), "halves": float(ks_half.pvalue)}
        ok &= ks_oe.pvalue > level
        out["halves"][name] = {"mean": [float(x[:h].mean()), float(x[h:].mean())],
                               "var": [float(x[:h].var(ddof=1)), float(x[h:].var(ddof=1))]}
    out["pass"] = bool(ok)
    return out


@dataclass
class TailFit:
    name: str
    scale: str
    n: int
    slope: float
    r2: float
    t: np.ndarray
    survival: np.ndarray

    def to_dict(self) -> dict:
        return {"name": self.name, "scale": self.scale, "n": self.n, "slope": self.slope,
                "r2": self.r2}


def survival(samples) -> tuple[np.ndarray, np.ndarray]:
    """Empirical ``P(X > t)`` at the sorted sample points (last point dropped)."""
    x = np.sort(np.asarray(samples, dtype=float))
    s = 1.0 - np.arange(1, len(x) + 1) / len(x)
    return x[:-1], s[:-1]


def tail_fit(samples, scale: str = "semilog", name: str = "", lo=None, hi=None,
             min_samples: int = 200) -> TailFit | None:
    """Least-squares slope of the log survival against ``t`` or ``log t``.

    ``None`` when fewer than ``min_samples`` samples are available.
    """
    x = np.asarray(samples, dtype=float)
    x = x[np.isfinite(x)]
    if len(x) < min_samples:
        return None
    t, s = survival(x)
    sel = (s > 0) & (t > 0)
    if lo is not None:
        sel &= t >= lo
    if hi is not None:
        sel &= t <= hi
    t, s = t[sel], s[sel]
    u = t if scale == "semilog" else np.log(t)
    y = np.log(s)
    if len(u) < 3 or np.ptp(u) == 0:
        return TailFit(name, scale, len(x), np.nan, np.nan, t, s)
    A = np.vstack([u, np.ones_like(u)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    pred = A @ coef
    ss = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float(((y - pred) ** 2).sum()) / ss if ss > 0 else np.nan
    return TailFit(name, scale, len(x), float(coef[0]), r2, t, s)


def tail_diagnostics(violations: dict, d_kappa=None, min_samples: int = 200) -> dict:
    """Survival fits for monitor violation times and cycle lengths.

    ``violations`` maps ``"W"``, ``"V"``, ``"U"`` to finite violation times.
    W and V are fitted on a semi-log scale over the central sample range,
    U and ``d_kappa`` on a log-log scale over the upper decade.
    """
    out = {}
    for name in ("W", "V"):
        x = np.asarray(violations.get(name, []), dtype=float)
        if len(x) >= min_samples:
            lo, hi = np.quantile(x, [0.1, 0.99])
            out[name] = tail_fit(x, "semilog", name, lo, hi, min_samples)
        else:
            out[name] = None
    for name, x in (("U", violations.get("U", [])), ("d_kappa", d_kappa)):
        x = np.asarray([] if x is None else x, dtype=float)
        x = x[np.isfinite(x)]
        need = min_samples if name == "U" else 30
        if len(x) >= need:
            hi = float(np.quantile(x, 0.99))
            out[name] = tail_fit(x, "loglog", name, hi / 10.0, hi, need)
        else:
            out[name] = None
    return out


# ---------------------------------------------------------------- results


def results_json(path, v: Estimate, sigma2: Estimate, n_cycles: int,
                 censoring_fraction: float, tests: list[TestResult], extra=None) -> dict:
    doc = {"schema_version": RESULTS_SCHEMA_VERSION,
           "v_hat": v.value, "v_ci": list(v.ci),
           "sigma2_hat": sigma2.value, "sigma2_ci": list(sigma2.ci),
           "n_cycles": int(n_cycles), "censoring_fraction": float(censoring_fraction),
           "tests": [t.to_dict() for t in tests]}
    if extra:
        doc.update(extra)
    if path is not None:
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True, default=float)
    return doc


RESULTS_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "v_hat", "v_ci", "sigma2_hat", "sigma2_ci", "n_cycles",
                 "censoring_fraction", "tests"],
    "properties": {
        "schema_version": {"type": "integer"},
        "v_hat": {"type": "number"},
        "v_ci": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        "sigma2_hat": {"type": "number"},
        "sigma2_ci": {"type": "array", "items": {"type": "number"}, "minItems": 2,
                      "maxItems": 2},
        "n_cycles": {"type": "integer"},
        "censoring_fraction": {"type": "number"},
        "tests": {"type": "array", "items": {
            "type": "object", "required": ["name", "statistic", "p", "pass"]}},
    },
}
