import json
import math

import jsonschema
import numpy as np
import pytest
from hypothesis import given, strategies as st

from frogfront.estimators import (
    RESULTS_SCHEMA,
    CycleEnsemble,
    EnvHistogram,
    Estimate,
    TestResult as Outcome,
    ci_batch_means,
    classical_ci,
    donsker_paths,
    estimate_sigma2,
    estimate_speed,
    iid_diagnostics,
    invariant_estimate,
    mu_t_convergence,
    normality_test,
    required_N,
    results_json,
    survival,
    tail_diagnostics,
    tail_fit,
)
from frogfront.rng import ParameterError


def ens(dk, dr):
    return CycleEnsemble.from_arrays(dk, dr)


# ---------------------------------------------------------------- speed and variance


def test_speed_constant_cycles():
    v = estimate_speed(ens([2.0] * 40, [1.0] * 40))
    assert v.value == 0.5
    assert v.ci[0] == pytest.approx(0.5) and v.ci[1] == pytest.approx(0.5)
    assert v.reliable


def test_speed_is_a_ratio_of_sums():
    v = estimate_speed(ens([1.0, 3.0] * 20, [1.0, 1.0] * 20))
    assert v.value == pytest.approx(0.5)


def test_speed_few_cycles_flagged():
    assert not estimate_speed(ens([1.0] * 5, [1.0] * 5)).reliable
    with pytest.raises(ParameterError):
        estimate_speed(ens([], []))


@given(st.lists(st.tuples(st.floats(0.1, 100), st.integers(1, 200)), min_size=2, max_size=60),
       st.randoms())
def test_speed_invariant_under_reordering(cycles, rnd):
    dk, dr = zip(*cycles)
    perm = list(range(len(dk)))
    rnd.shuffle(perm)
    a = estimate_speed(ens(dk, dr)).value
    b = estimate_speed(ens([dk[i] for i in perm], [dr[i] for i in perm])).value
    assert a == pytest.approx(b, rel=1e-12)


def test_sigma2_deterministic_is_zero():
    e = ens([2.0] * 50, [1.0] * 50)
    assert estimate_sigma2(e, estimate_speed(e).value).value == 0


def test_sigma2_two_point():
    e = ens([1.0] * 200, [0.0, 2.0] * 100)
    v = estimate_speed(e).value
    assert v == 1.0
    assert estimate_sigma2(e, v).value == pytest.approx(1.0)


@given(st.lists(st.tuples(st.floats(0.1, 100), st.integers(0, 200)), min_size=1, max_size=60))
def test_sigma2_nonnegative(cycles):
    dk, dr = zip(*cycles)
    e = ens(dk, dr)
    assert estimate_sigma2(e, estimate_speed(e).value).value >= 0


def test_merge_offsets_replicas():
    a = CycleEnsemble.from_arrays([1.0, 2.0], [1.0, 1.0], replica=[0, 1])
    b = CycleEnsemble.from_arrays([3.0], [2.0], replica=[0])
    m = a.merge(b)
    assert m.replica.tolist() == [0, 1, 2] and len(m) == 3


# ---------------------------------------------------------------- Donsker scaling


def test_donsker_exact_line_gives_zeros():
    grid = np.linspace(0, 1, 11)
    fronts = np.tile(0.8 * 2000 * grid, (7, 1))
    ds = donsker_paths(fronts, grid, 2000.0, 0.8, 2.0)
    assert np.allclose(ds.endpoints, 0) and np.allclose(ds.paths, 0)


def test_donsker_requires_unit_time():
    with pytest.raises(ParameterError):
        donsker_paths(np.zeros((3, 4)), np.linspace(0, 0.9, 4), 100.0, 1.0, 1.0)


def test_donsker_variance_ratio_of_random_walk():
    rng = np.random.default_rng(0)
    grid = np.linspace(0, 1, 21)
    steps = rng.normal(0.0, 1.0, (4000, 2000))
    path = np.cumsum(steps, axis=1)
    fronts = np.concatenate([np.zeros((4000, 1)), path[:, (grid[1:] * 2000).astype(int) - 1]],
                            axis=1)
    ds = donsker_paths(fronts, grid, 2000.0, 0.0, 1.0)
    assert abs(ds.variance_ratio() - 0.5) < 0.05
    assert normality_test(ds.endpoints).passed


# ---------------------------------------------------------------- environment laws


views = st.lists(st.lists(st.integers(0, 40), min_size=4, max_size=4), min_size=1, max_size=30)


@given(views)
def test_histogram_is_a_distribution(vs):
    h = EnvHistogram.from_views(vs, cap=8).normalized()
    assert np.allclose(h.w.sum(axis=1), 1.0)
    assert (h.w >= 0).all()
    assert 0 <= h.overflow_fraction <= 1


@given(views, views, views)
def test_histogram_merge_associative_commutative(a, b, c):
    ha, hb, hc = (EnvHistogram.from_views(v, cap=8) for v in (a, b, c))
    assert np.array_equal(ha.merge(hb).w, hb.merge(ha).w)
    assert np.allclose(ha.merge(hb).merge(hc).w, ha.merge(hb.merge(hc)).w)


def test_tv_properties():
    h1 = EnvHistogram.from_views([[1, 0], [2, 1]], cap=4)
    h2 = EnvHistogram.from_views([[3, 3]], cap=4)
    assert h1.tv(h1) == 0
    assert h1.tv(h2) == h2.tv(h1) == 1.0
    with pytest.raises(ParameterError):
        h1.merge(EnvHistogram.empty(3, 4))


def test_required_N_and_constraint():
    assert required_N(10, 0.4, 0.5) == 101
    h = EnvHistogram.from_views([[1] * 11], cap=32)
    with pytest.raises(ParameterError, match="need N >= 101"):
        invariant_estimate([[h] * 200], 100, 10, 0.4, 0.5)
    out = invariant_estimate([[h] * 200, [h] * 50], 101, 10, 0.4, 0.5)
    assert out.total == h.total
    assert np.allclose(out.normalized().w.sum(axis=1), 1.0)


def test_invariant_estimate_needs_a_long_replica():
    h = EnvHistogram.from_views([[1] * 11], cap=32)
    with pytest.raises(ParameterError):
        invariant_estimate([[h] * 3], 101, 10, 0.4, 0.5)


def test_mu_t_self_distance_small():
    rng = np.random.default_rng(1)
    sample = rng.poisson(1.5, size=(20000, 11))
    ref = EnvHistogram.from_views(sample[:10000])
    (t, d), = mu_t_convergence({5.0: sample[10000:]}, ref)
    assert t == 5.0 and d < 0.03


# ---------------------------------------------------------------- diagnostics


def test_iid_diagnostics_accept_iid():
    rng = np.random.default_rng(2)
    e = ens(rng.exponential(50.0, 400), rng.poisson(30, 400))
    assert iid_diagnostics(e)["pass"]


def test_iid_diagnostics_reject_ar1():
    rng = np.random.default_rng(3)
    x = np.zeros(400)
    for i in range(1, 400):
        x[i] = 0.5 * x[i - 1] + rng.normal()
    e = ens(np.exp(x), rng.poisson(30, 400))
    out = iid_diagnostics(e)
    assert abs(out["acf"]["d_kappa"][0]) > out["bound"]
    assert not out["pass"]


def test_iid_diagnostics_too_few():
    with pytest.raises(ParameterError):
        iid_diagnostics(ens([1.0] * 5, [1.0] * 5))


def test_tail_fit_recovers_exponential_rate():
    rng = np.random.default_rng(4)
    x = rng.exponential(1 / 0.3, 5000)
    lo, hi = np.quantile(x, [0.1, 0.99])
    fit = tail_fit(x, "semilog", "W", lo, hi)
    assert abs(fit.slope / -0.3 - 1) < 0.1 and fit.r2 > 0.98


def test_tail_fit_recovers_power_law():
    rng = np.random.default_rng(5)
    x = rng.pareto(3.0, 20000) + 1
    hi = np.quantile(x, 0.99)
    fit = tail_fit(x, "loglog", "k", hi / 10, hi)
    assert abs(fit.slope / -3.0 - 1) < 0.1


def test_tail_diagnostics_partial_report():
    out = tail_diagnostics({"W": [1.0] * 10, "V": list(np.arange(1.0, 400.0))})
    assert out["W"] is None and out["V"] is not None and out["U"] is None


def test_survival_is_decreasing():
    t, s = survival([3.0, 1.0, 2.0, 5.0])
    assert t.tolist() == [1.0, 2.0, 3.0]
    assert np.all(np.diff(s) < 0)


def test_normality_calibration():
    rng = np.random.default_rng(6)
    acc = sum(normality_test(rng.normal(size=10**4)).passed for _ in range(100))
    assert acc >= 98


def test_normality_degenerate_and_small():
    assert normality_test(np.ones(60)).detail["degenerate"]
    with pytest.raises(ParameterError):
        normality_test(np.ones(10))


def test_batch_means_matches_classical():
    rng = np.random.default_rng(7)
    ratios = []
    for _ in range(50):
        x = rng.normal(size=10**4)
        bm = ci_batch_means(x, 100)
        lo, hi = classical_ci(x)
        ratios.append((bm.ci[1] - bm.ci[0]) / (hi - lo))
        assert bm.value == pytest.approx(x.mean())
    assert abs(np.mean(ratios) - 1) < 0.1


def test_batch_means_needs_batches():
    with pytest.raises(ParameterError):
        ci_batch_means([1.0, 2.0], 10)


# ---------------------------------------------------------------- results file


def test_results_json_schema(tmp_path):
    p = tmp_path / "results.json"
    doc = results_json(p, Estimate(0.8, (0.7, 0.9)), Estimate(2.0, (1.0, 3.0)), 42, 0.1,
                       [Outcome("normality", 0.02, 0.4, True)])
    jsonschema.validate(json.loads(p.read_text()), RESULTS_SCHEMA)
    assert doc["n_cycles"] == 42 and doc["tests"][0]["pass"] is True
