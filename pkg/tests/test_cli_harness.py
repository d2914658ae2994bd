import json

import jsonschema
import pytest
from hypothesis import given, strategies as st

from frogfront.estimators import RESULTS_SCHEMA
from frogfront.harness import (
    EXIT_FAIL,
    EXIT_OK,
    EXIT_USAGE,
    ConfigError,
    RunConfig,
    RunManifest,
    file_digest,
    main,
    parse_initial_condition,
    replica_seed,
)
from frogfront.process import InitialConditionSpec
from frogfront.regeneration import RegenParams, validate_params
from frogfront.rng import derive_seed

# valid parameters for which short runs already regenerate
FAST = dict(a=1, theta=0.1, L=48, p=0.45, alpha1=0.6, alpha2=0.62, alpha_hat=0.7)


def write_config(path, **kw):
    cfg = RunConfig(**kw)
    cfg.save(path)
    return cfg


def run_cli(*args):
    return main([str(a) for a in args])


# ---------------------------------------------------------------- config


@given(st.integers(1, 5), st.floats(0.0, 1.0), st.integers(0, 100), st.floats(0.0, 1e4),
       st.integers(0, 2**62), st.booleans(), st.sampled_from(["a_delta_0", "explicit:0x2,-1x3",
                                                              "geometric:q=0.5,A=4,depth=30"]))
def test_config_roundtrip(a, theta, L, horizon, seed, flag, ic):
    cfg = RunConfig(a=a, theta=theta, L=L, horizon=horizon, master_seed=seed, log_events=flag,
                    initial_condition=ic)
    text = cfg.dumps()
    back = RunConfig.loads(text)
    assert back == cfg
    assert back.dumps() == text
    assert back.digest() == cfg.digest()


def test_config_rejects_unknown_key():
    with pytest.raises(ConfigError, match="unknown key"):
        RunConfig.loads("a = 1\nthetta = 0.1\n")


def test_config_rejects_bad_value_and_syntax():
    with pytest.raises(ConfigError):
        RunConfig.loads("a = one\n")
    with pytest.raises(ConfigError):
        RunConfig.loads("log_events = maybe\n")
    with pytest.raises(ConfigError):
        RunConfig.loads("horizon 5\n")


def test_config_comments():
    cfg = RunConfig.loads("# header\nreplicas = 7  # trailing\n\n")
    assert cfg.replicas == 7


def test_initial_condition_parsing():
    assert parse_initial_condition("a_delta_0") == InitialConditionSpec.a_delta_0()
    assert parse_initial_condition("explicit:0x2,-1x3") == InitialConditionSpec.explicit(
        [(0, 2), (-1, 3)])
    assert parse_initial_condition("geometric:q=0.5,A=4,depth=30") == \
        InitialConditionSpec.geometric(0.5, 4, 30)
    for bad in ("explicit:0-2", "geometric:q=0.5", "uniform"):
        with pytest.raises(ConfigError):
            parse_initial_condition(bad)


def test_replica_seeds():
    assert replica_seed(5, 3) == derive_seed(5, 3, 3)
    assert len({replica_seed(5, i) for i in range(100)}) == 100


# ---------------------------------------------------------------- command line


def test_usage_errors(tmp_path):
    assert run_cli("nonsense") == EXIT_USAGE
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = red\n")
    assert run_cli("simulate", "--config", bad) == EXIT_USAGE
    assert run_cli("simulate", "--config", tmp_path / "missing.cfg") == EXIT_USAGE
    assert run_cli("regen", "--out", tmp_path / "empty") == EXIT_USAGE
    assert run_cli("clt", "--out", tmp_path / "empty") == EXIT_USAGE


def test_calibrate_default_and_repeat(tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"c{k}"
        assert run_cli("calibrate", "--out", out, "--seed", 3) == EXIT_OK
        outs.append((out / "params.json").read_bytes())
    assert outs[0] == outs[1]
    doc = json.loads(outs[0])
    assert doc["violations"] == []
    assert validate_params(RegenParams.from_dict(doc["params"])) == []


def test_calibrate_reports_large_theta(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    write_config(cfg, theta=0.5, alpha_hat=0.7)
    assert run_cli("calibrate", "--config", cfg, "--out", tmp_path / "o") == EXIT_FAIL
    assert "teta" in capsys.readouterr().err
    doc = json.loads((tmp_path / "o" / "params.json").read_text())
    assert any(v.startswith("teta") for v in doc["violations"])


def test_simulate_replicas_distinct_and_deterministic(tmp_path):
    logs = []
    for k in range(2):
        out = tmp_path / f"s{k}"
        assert run_cli("simulate", "--out", out, "--replicas", 4, "--horizon", 30,
                       "--seed", 9) == EXIT_OK
        logs.append([(out / f"replica_{i:04d}.log").read_bytes() for i in range(4)])
    assert logs[0] == logs[1]
    assert len(set(logs[0])) == 4
    man = RunManifest.read(tmp_path / "s0" / "manifest_simulate.json")
    for name, digest in man.outputs.items():
        assert file_digest(tmp_path / "s0" / name) == digest
    assert man.seeds == [replica_seed(9, i) for i in range(4)]


def test_simulate_zero_horizon(tmp_path):
    assert run_cli("simulate", "--out", tmp_path, "--replicas", 2, "--horizon", 0) == EXIT_OK
    lines = (tmp_path / "replica_0000.log").read_text().splitlines()
    assert all(line.startswith("#") for line in lines)
    man = json.loads((tmp_path / "manifest_simulate.json").read_text())
    assert len(man["outputs"]) == 4 and man["status"] == EXIT_OK


def test_rerun_from_manifest_is_identical(tmp_path):
    cfg = tmp_path / "run.cfg"
    write_config(cfg, replicas=2, horizon=25.0, master_seed=12, output_dir=str(tmp_path / "a"))
    assert run_cli("simulate", "--config", cfg) == EXIT_OK
    man = RunManifest.read(tmp_path / "a" / "manifest_simulate.json")
    again = tmp_path / "again.cfg"
    again.write_text(man.config_text.replace(str(tmp_path / "a"), str(tmp_path / "b")))
    assert run_cli("simulate", "--config", again) == EXIT_OK
    man2 = RunManifest.read(tmp_path / "b" / "manifest_simulate.json")
    assert man.outputs == man2.outputs


def test_regen_without_cycles_fails(tmp_path):
    cfg = tmp_path / "r.cfg"
    write_config(cfg, replicas=1, horizon=50.0, output_dir=str(tmp_path), **FAST)
    assert run_cli("calibrate", "--config", cfg) == EXIT_OK
    assert run_cli("simulate", "--config", cfg) == EXIT_OK
    assert run_cli("regen", "--config", cfg) == EXIT_FAIL
    man = json.loads((tmp_path / "manifest_regen.json").read_text())
    assert man["censoring"]["usable_cycles"] == 0
    assert not (tmp_path / "results.json").exists()


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    out = tmp_path_factory.mktemp("pipe")
    cfg = out / "p.cfg"
    write_config(cfg, replicas=1, horizon=2000.0, master_seed=4, output_dir=str(out),
                 delta_sweep="100", invariant_N=3, **FAST)
    codes = [run_cli(c, "--config", cfg) for c in ("calibrate", "simulate", "regen")]
    return out, cfg, codes


def test_regen_results_schema(pipeline):
    out, _, codes = pipeline
    assert codes == [EXIT_OK] * 3
    doc = json.loads((out / "results.json").read_text())
    jsonschema.validate(doc, RESULTS_SCHEMA)
    assert doc["n_cycles"] >= 1
    assert [row["delta_conf"] for row in doc["sensitivity"]] == [50.0, 100.0]
    assert (out / "replica_0000_cycles.csv").read_text().startswith("n,kappa_n")


def test_invariant_enforces_constraint(pipeline):
    out, cfg, _ = pipeline
    # 3 (0.62 - 0.6) < 10
    assert run_cli("invariant", "--config", cfg) == EXIT_USAGE


def test_clt_writes_endpoints(pipeline, tmp_path):
    out, _, _ = pipeline
    cfg = tmp_path / "clt.cfg"
    write_config(cfg, replicas=6, horizon=40.0, output_dir=str(out))
    run_cli("clt", "--config", cfg)
    rows = (out / "clt_endpoints.csv").read_text().splitlines()
    assert rows[0] == "replica,seed,b1_standardized" and len(rows) == 7
    assert "variance_ratio" in (out / "clt_report.json").read_text()


def test_couple_command(tmp_path):
    assert run_cli("couple", "--out", tmp_path, "--replicas", 20, "--horizon", 10) == EXIT_OK
    doc = json.loads((tmp_path / "coupling.json").read_text())
    assert len(doc["tau"]) == 20 and 0 <= doc["p_tau_le_horizon"] <= 1
