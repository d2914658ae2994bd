"""Experiment orchestration: configs, replicas, manifests and the command line.

Replica ``i`` of a run uses the seed ``derive_seed(master_seed, TAG_REPLICA, i)``.
Every output file is listed in ``manifest.json`` with its SHA-256, and rerunning
a command with the same config reproduces all outputs except the manifest's
timestamps byte for byte.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .auxiliary import estimate_alpha
from .estimators import (
    CycleEnsemble,
    TestResult,
    cycle_histograms,
    donsker_paths,
    estimate_sigma2,
    estimate_speed,
    invariant_estimate,
    normality_test,
    required_N,
    results_json,
)
from .process import (
    EventLog,
    InitialConditionSpec,
    Stop,
    couple_runs,
    environment_view,
    init,
    run_until,
)
from .regeneration import (
    LogIndex,
    RegenParams,
    params_from_alpha,
    regeneration_sequence,
    validate_params,
    violation_samples,
)
from .rng import TAG_REPLICA, ParameterError, derive_seed

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_RESOURCE = 0, 1, 2, 3


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


# ---------------------------------------------------------------- config


@dataclass
class RunConfig:
    """Flat run configuration; zero for a regeneration parameter means "calibrate"."""

    a: int = 1
    theta: float = 0.0
    theta_max: float = 0.1
    L: int = 0
    p: float = 0.0
    alpha1: float = 0.0
    alpha2: float = 0.0
    alpha_hat: float = 0.0
    alpha_horizon: float = 2000.0
    alpha_replicas: int = 20
    horizon: float = 5000.0
    delta_conf: float = 50.0
    delta_sweep: str = ""
    replicas: int = 4
    master_seed: int = 1
    initial_condition: str = "a_delta_0"
    output_dir: str = "out"
    log_events: bool = True
    norms_export: bool = False
    env_depth: int = 10
    invariant_N: int = 0
    grid_points: int = 20
    workers: int = 0
    checkpoint_every: int = 10**7

    def dumps(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.type in ("float", float):
                s = repr(float(v))
            elif f.type in ("bool", bool):
                s = "true" if v else "false"
            else:
                s = str(v)
            lines.append(f"{f.name} = {s}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "RunConfig":
        kinds = {f.name: f.type for f in dataclasses.fields(cls)}
        vals = {}
        for no, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {no}: expected key = value")
            k, v = (s.strip() for s in line.split("=", 1))
            if k not in kinds:
                raise ConfigError(f"line {no}: unknown key {k!r}")
            vals[k] = _parse_value(kinds[k], v, k)
        return cls(**vals)

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.loads(Path(path).read_text())

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    def digest(self) -> str:
        return hashlib.sha256(self.dumps().encode()).hexdigest()

    def spec(self) -> InitialConditionSpec:
        return parse_initial_condition(self.initial_condition)


def _parse_value(kind, v: str, key: str):
    try:
        if kind in ("int", int):
            return int(v)
        if kind in ("float", float):
            return float(v)
        if kind in ("bool", bool):
            if v.lower() not in ("true", "false", "1", "0"):
                raise ValueError(v)
            return v.lower() in ("true", "1")
        return v
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {v!r}") from exc


def parse_initial_condition(text: str) -> InitialConditionSpec:
    """``a_delta_0``, ``explicit:0x2,-1x3`` or ``geometric:q=0.5,A=4,depth=30``."""
    text = text.strip()
    if text == "a_delta_0":
        return InitialConditionSpec.a_delta_0()
    kind, _, body = text.partition(":")
    try:
        if kind == "explicit":
            pairs = []
            for item in body.split(","):
                x, c = item.split("x")
                pairs.append((int(x), int(c)))
            return InitialConditionSpec.explicit(pairs)
        if kind == "geometric":
            kv = dict(item.split("=") for item in body.split(","))
            return InitialConditionSpec.geometric(float(kv["q"]), float(kv["A"]),
                                                  int(kv["depth"]))
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"bad initial condition {text!r}") from exc
    raise ConfigError(f"unknown initial condition {text!r}")


def replica_seed(master_seed: int, i: int) -> int:
    return derive_seed(master_seed, TAG_REPLICA, i)


# ---------------------------------------------------------------- manifest


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config_hash: str
    code_version: str
    seeds: list[int]
    started: float
    finished: float = 0.0
    outputs: dict[str, str] = field(default_factory=dict)
    censoring: dict = field(default_factory=dict)
    status: int = 0
    config_text: str = ""

    def record(self, out_dir: Path, paths) -> None:
        for p in paths:
            self.outputs[str(Path(p).relative_to(out_dir))] = file_digest(p)

    def write(self, out_dir: Path) -> Path:
        self.finished = time.time()
        path = out_dir / f"manifest_{self.command}.json"
        path.write_text(json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True))
        return path

    @classmethod
    def read(cls, path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text()))


# ---------------------------------------------------------------- parameters


def resolve_params(cfg: RunConfig) -> RegenParams:
    """Regeneration parameters from the config, calibrating what is left at zero."""
    alpha_hat = cfg.alpha_hat
    if not alpha_hat > 0:
        est = estimate_alpha(cfg.a, cfg.alpha_horizon, cfg.alpha_replicas,
                             derive_seed(cfg.master_seed, 5))
        if not est.ci[0] > 0:
            raise ParameterError(f"alpha interval {est.ci} contains 0")
        alpha_hat = est.alpha
    theta_max = cfg.theta if cfg.theta > 0 else cfg.theta_max
    P = params_from_alpha(cfg.a, alpha_hat, theta_max, cfg.L if cfg.L > 0 else None,
                          horizon=cfg.horizon, delta_conf=cfg.delta_conf)
    if cfg.theta > 0:
        P.theta = cfg.theta
        lo = 2.0 * math.sinh(2.0 * P.theta)
        gap = alpha_hat - lo
        P.alpha1, P.alpha2 = lo + 0.4 * gap, lo + 0.7 * gap
    if cfg.p > 0:
        P.p = cfg.p
    if cfg.alpha1 > 0:
        P.alpha1 = cfg.alpha1
    if cfg.alpha2 > 0:
        P.alpha2 = cfg.alpha2
    return P


def load_params(out: Path) -> RegenParams:
    path = out / "params.json"
    if not path.exists():
        raise FileNotFoundError(f"{path} missing; run calibrate first")
    return RegenParams.from_dict(json.loads(path.read_text())["params"])


# ---------------------------------------------------------------- replicas


@dataclass
class ReplicaSummary:
    """What the ensemble statistics keep from one analyzed replica."""

    index: int
    seed: int
    horizon: float
    r_final: int
    events: int
    truncated: bool
    regen: dict
    histograms: list
    tails: dict | None = None


def analyze_replica(spec: InitialConditionSpec, a: int, seed: int, horizon: float,
                    params: RegenParams, deltas=(), env_depth: int = 10, tail_sites=(),
                    tail_L_w: int | None = None, tail_t_stop: float = 100.0,
                    index: int = 0) -> ReplicaSummary:
    """Simulate one replica and extract cycles for each confirmation window.

    The event log is dropped before returning.  Cycle histograms are taken
    for the first window; ``tail_sites`` adds free-running V/W samples.
    """
    c = init(spec, a, seed)
    res = run_until(c, Stop(time=horizon))
    ix = LogIndex(res.log)
    regen, hists = {}, []
    for k, dc in enumerate(deltas or (params.delta_conf,)):
        out = regeneration_sequence(ix, params, dc, env_depth)
        regen[float(dc)] = out
        if k == 0:
            hists = cycle_histograms(ix, out, env_depth)
    tails = None
    if len(tail_sites):
        tails = violation_samples(ix, params, tail_sites, tail_t_stop, L_w=tail_L_w)
    return ReplicaSummary(index, seed, horizon, c.r, c.event_count, res.truncated, regen,
                          hists, tails)


def fronts_at(spec: InitialConditionSpec, a: int, seed: int, times) -> np.ndarray:
    """Front at each of the increasing ``times``, without keeping a log."""
    c = init(spec, a, seed)
    out = np.empty(len(times), dtype=np.int64)
    for j, t in enumerate(times):
        run_until(c, Stop(time=float(t)), keep_log=False)
        out[j] = c.r
    return out


def environments_at(spec: InitialConditionSpec, a: int, seed: int, times,
                    depth: int) -> np.ndarray:
    """``eta(r_t - k)``, ``k = 0..depth``, at each of the increasing ``times``."""
    c = init(spec, a, seed)
    out = np.empty((len(times), depth + 1), dtype=np.int64)
    for j, t in enumerate(times):
        run_until(c, Stop(time=float(t)), keep_log=False)
        out[j] = environment_view(c, depth)
    return out


def _pool_map(fn, jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        futs = [ex.submit(fn, *j) for j in jobs]
        return [f.result() for f in futs]


def _workers(cfg: RunConfig) -> int:
    return cfg.workers if cfg.workers > 0 else (os.cpu_count() or 1)


# ---------------------------------------------------------------- commands


def _manifest(command: str, cfg: RunConfig, seeds) -> RunManifest:
    return RunManifest(command, cfg.digest(), __version__, list(seeds), time.time(),
                       config_text=cfg.dumps())


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_calibrate(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    man = _manifest("calibrate", cfg, [])
    P = resolve_params(cfg)
    report = validate_params(P)
    path = out / "params.json"
    path.write_text(json.dumps({"params": P.to_dict(), "violations": report}, indent=2,
                               sort_keys=True, default=float))
    man.record(out, [path])
    man.status = EXIT_OK if not report else EXIT_FAIL
    man.write(out)
    for line in report:
        print(line, file=sys.stderr)
    return man.status


def _replica_log_path(out: Path, i: int) -> Path:
    return out / f"replica_{i:04d}.log"


def _simulate_one(spec, a, seed, horizon, i, out, log_events, ckpt):
    """One replica with exact checkpoint and resume through ``replica_i.partial``."""
    partial = out / f"replica_{i:04d}.partial"
    if partial.exists():
        log = EventLog.read(partial)
        c = log.replay()
    else:
        c = init(spec, a, seed)
        log = c.snapshot_log()
    truncated = False
    while True:
        ev = c.event_count + ckpt if ckpt > 0 else None
        res = run_until(c, Stop(time=horizon, events=ev))
        for ch in res.log.chunks:
            log.append(ch)
        log.t_end = c.time
        truncated = res.truncated
        if c.time >= horizon or truncated or ev is None or c.event_count < ev:
            break
        log.write(partial)
    log.compact()
    written = []
    if log_events:
        p = _replica_log_path(out, i)
        log.write(p)
        written.append(p)
    if partial.exists():
        partial.unlink()
    ft, fr = log.front_advances()
    traj = out / f"replica_{i:04d}_front.csv"
    step = max(1, len(ft) // 2000)
    with open(traj, "w") as fh:
        fh.write("t,r\n")
        fh.write(f"{log.t0!r},{log.r0}\n")
        for t, r in zip(ft[::step].tolist(), fr[::step].tolist()):
            fh.write(f"{t!r},{r}\n")
    written.append(traj)
    return [str(p) for p in written], truncated


def cmd_simulate(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    seeds = [replica_seed(cfg.master_seed, i) for i in range(cfg.replicas)]
    man = _manifest("simulate", cfg, seeds)
    jobs = [(cfg.spec(), cfg.a, s, cfg.horizon, i, out, cfg.log_events, cfg.checkpoint_every)
            for i, s in enumerate(seeds)]
    res = _pool_map(_simulate_one, jobs, _workers(cfg))
    files = [p for paths, _ in res for p in paths]
    man.record(out, files)
    man.status = EXIT_RESOURCE if any(t for _, t in res) else EXIT_OK
    man.write(out)
    return man.status


def _regen_one(path, params, deltas, depth):
    log = EventLog.read(path)
    ix = LogIndex(log)
    results = {float(d): regeneration_sequence(ix, params, d, depth) for d in deltas}
    return results, float(log.t_end or 0.0), ix.r_final


def cmd_regen(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    P = load_params(out)
    seeds = [replica_seed(cfg.master_seed, i) for i in range(cfg.replicas)]
    paths = [_replica_log_path(out, i) for i in range(cfg.replicas)]
    missing = [str(p) for p in paths if not p.exists()]
    if missing:
        print(f"missing event logs: {missing[:3]}", file=sys.stderr)
        return EXIT_USAGE
    deltas = [cfg.delta_conf] + [float(x) for x in cfg.delta_sweep.split(",") if x.strip()]
    man = _manifest("regen", cfg, seeds)
    res = _pool_map(_regen_one, [(p, P, deltas, cfg.env_depth) for p in paths], _workers(cfg))
    files = []
    for i, (results, _, _) in enumerate(res):
        main = results[float(cfg.delta_conf)]
        cp = out / f"replica_{i:04d}_cycles.csv"
        ap = out / f"replica_{i:04d}_anchors.jsonl"
        main.write_cycles(cp)
        main.write_anchors(ap)
        files += [cp, ap]
    runs = [r[float(cfg.delta_conf)] for r, _, _ in res]
    ens = CycleEnsemble.from_results(runs)
    total = sum(len(r.cycles) for r in runs)
    cens = float(np.mean([(r.horizon - r.censored_from) / r.horizon for r in runs]))
    man.censoring = {"certified_cycles": total, "usable_cycles": len(ens),
                     "censoring_fraction": cens}
    if len(ens) == 0:
        print(f"no usable cycles (certified: {total})", file=sys.stderr)
        man.status = EXIT_FAIL
        man.record(out, files)
        man.write(out)
        return EXIT_FAIL
    v = estimate_speed(ens)
    s2 = estimate_sigma2(ens, v.value)
    direct = float(np.mean([rf / h for _, h, rf in res]))
    tests = [TestResult("sigma2_positive", s2.ci[0], float("nan"), s2.ci[0] > 0)]
    extra = {"v_direct": direct, "usable_cycles_by_replica":
             [sum(1 for c in r.cycles if c.n >= 2) for r in runs]}
    if len(deltas) > 1:
        sweep = []
        for d in deltas:
            e = CycleEnsemble.from_results([r[float(d)] for r, _, _ in res])
            row = {"delta_conf": d, "cycles": len(e)}
            if len(e):
                vv = estimate_speed(e)
                row.update(v_hat=vv.value, sigma2_hat=estimate_sigma2(e, vv.value).value)
            sweep.append(row)
        extra["sensitivity"] = sweep
    rp = out / "results.json"
    results_json(rp, v, s2, len(ens), cens, tests, extra)
    files.append(rp)
    man.record(out, files)
    man.write(out)
    return EXIT_OK


def cmd_clt(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    rp = out / "results.json"
    if not rp.exists():
        print(f"{rp} missing; run regen first", file=sys.stderr)
        return EXIT_USAGE
    doc = json.loads(rp.read_text())
    v, s2 = doc["v_hat"], doc["sigma2_hat"]
    seeds = [replica_seed(derive_seed(cfg.master_seed, 10), i) for i in range(cfg.replicas)]
    man = _manifest("clt", cfg, seeds)
    grid = np.linspace(0.0, 1.0, cfg.grid_points + 1)
    jobs = [(cfg.spec(), cfg.a, s, grid * cfg.horizon) for s in seeds]
    fronts = np.array(_pool_map(fronts_at, jobs, _workers(cfg)))
    ds = donsker_paths(fronts, grid, cfg.horizon, v, s2)
    ep = out / "clt_endpoints.csv"
    with open(ep, "w") as fh:
        fh.write("replica,seed,b1_standardized\n")
        for i, (s, b) in enumerate(zip(seeds, ds.endpoints.tolist())):
            fh.write(f"{i},{s},{b!r}\n")
    tests = []
    if len(seeds) >= 50:
        tests.append(normality_test(ds.endpoints))
    ratio = ds.variance_ratio(0.5, 1.0)
    tests.append(TestResult("variance_ratio", ratio, float("nan"), abs(ratio - 0.5) <= 0.075))
    tp = out / "clt_report.json"
    tp.write_text(json.dumps({"tests": [t.to_dict() for t in tests],
                              "var_rH_over_H": float(fronts[:, -1].var(ddof=1) / cfg.horizon)},
                             indent=2, sort_keys=True, default=float))
    man.record(out, [ep, tp])
    man.status = EXIT_OK if all(t.passed for t in tests) else EXIT_FAIL
    man.write(out)
    return man.status


def cmd_invariant(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    P = load_params(out)
    N = cfg.invariant_N
    if not N * (P.alpha2 - P.alpha1) > cfg.env_depth:
        need = required_N(cfg.env_depth, P.alpha1, P.alpha2)
        print(f"invariant_N={N} violates N(alpha2-alpha1) > {cfg.env_depth}; need N >= {need}",
              file=sys.stderr)
        return EXIT_USAGE
    paths = [_replica_log_path(out, i) for i in range(cfg.replicas)]
    if not all(p.exists() for p in paths):
        print("missing event logs", file=sys.stderr)
        return EXIT_USAGE
    seeds = [replica_seed(cfg.master_seed, i) for i in range(cfg.replicas)]
    man = _manifest("invariant", cfg, seeds)
    per = []
    for p in paths:
        ix = LogIndex(EventLog.read(p))
        res = regeneration_sequence(ix, P, cfg.delta_conf, cfg.env_depth)
        per.append(cycle_histograms(ix, res, cfg.env_depth))
    try:
        h = invariant_estimate(per, N, cfg.env_depth, P.alpha1, P.alpha2)
    except ParameterError as exc:
        print(str(exc), file=sys.stderr)
        man.status = EXIT_FAIL
        man.write(out)
        return EXIT_FAIL
    hp = out / "invariant_histogram.csv"
    h.to_csv(hp)
    man.record(out, [hp])
    man.write(out)
    return EXIT_OK


def cmd_couple(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    seeds = [replica_seed(derive_seed(cfg.master_seed, 11), i) for i in range(cfg.replicas)]
    man = _manifest("couple", cfg, seeds)
    taus = []
    for s in seeds:
        c1 = init(cfg.spec(), cfg.a, s)
        c2 = init(cfg.spec(), cfg.a, s)
        c2 = _with_extra_particle(c2, -30)
        taus.append(couple_runs(c1, c2, cfg.horizon, s).tau)
    hit = [t is not None for t in taus]
    cp = out / "coupling.json"
    cp.write_text(json.dumps({"tau": taus, "p_tau_le_horizon": float(np.mean(hit))},
                             indent=2, sort_keys=True))
    man.record(out, [cp])
    man.write(out)
    return EXIT_OK


def _with_extra_particle(c, offset: int):
    from .process import Configuration
    n = c.n
    origin = np.append(c.origin[:n], c.r + offset)
    index = np.append(c.index[:n], 1)
    pos = np.append(c.pos[:n], c.r + offset)
    return Configuration.from_arrays(c.a, c.master_seed, c.r, c.time, origin, index, pos)


def cmd_validate(cfg: RunConfig) -> int:
    from .acceptance import run_all

    rows = run_all(scale=float(os.environ.get("FROGFRONT_SCALE", "1")))
    for r in rows:
        print(r.line())
    return EXIT_OK if all(r.passed for r in rows) else EXIT_FAIL


COMMANDS = {
    "calibrate": cmd_calibrate,
    "simulate": cmd_simulate,
    "regen": cmd_regen,
    "clt": cmd_clt,
    "invariant": cmd_invariant,
    "validate": cmd_validate,
    "couple": cmd_couple,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="frogfront", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", type=Path)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--replicas", type=int)
    ap.add_argument("--horizon", type=float)
    ap.add_argument("--out", type=str)
    ap.add_argument("--delta-conf", type=float)
    ap.add_argument("--log-events", type=str, choices=["true", "false"])
    return ap


def config_from_args(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    over = {"master_seed": args.seed, "replicas": args.replicas, "horizon": args.horizon,
            "output_dir": args.out, "delta_conf": args.delta_conf}
    for k, v in over.items():
        if v is not None:
            setattr(cfg, k, v)
    if args.log_events is not None:
        cfg.log_events = args.log_events == "true"
    if cfg.replicas < 0 or cfg.horizon < 0:
        raise ConfigError("replicas and horizon must be nonnegative")
    return cfg


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        cfg = config_from_args(args)
        return COMMANDS[args.command](cfg)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
