import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from frogfront.process import (
    Configuration,
    EventChunk,
    InitialConditionSpec,
    Stop,
    init,
    run_until,
)
from frogfront.norms import (
    NormTracker,
    StateError,
    f_theta,
    lambda2,
    m_count,
    n_martingale,
    norm_series,
    phi,
    psi,
)
from frogfront.rng import ParameterError


def config_at(sites, r=0, origins=None):
    sites = np.asarray(sites)
    origins = sites if origins is None else np.asarray(origins)
    return Configuration.from_arrays(1, 0, r, 0.0, origins, np.arange(1, len(sites) + 1), sites)


# ---------------------------------------------------------------- phi / psi


def test_phi_examples():
    assert phi(config_at([0]), 0, 0.1) == 1.0
    assert phi(config_at([-3]), 0, 0.1) == pytest.approx(0.740818, abs=1e-6)
    assert phi(config_at([0, -3]), -5, 0.1) == 0.0


def test_phi_rejects_nonpositive_theta():
    with pytest.raises(ParameterError):
        phi(config_at([0]), 0, 0.0)


def test_psi_requires_maxima():
    c = config_at([0, -1])
    with pytest.raises(StateError):
        psi(c, 0, 0.1)
    with pytest.raises(StateError):
        psi(c, 0, 0.1, maxima=np.zeros(3))


def test_psi_equals_phi_at_anchor():
    c = init(InitialConditionSpec.geometric(0.5, 4.0, 10), 1, 0)
    tr = NormTracker(c, 0, 0.1)
    assert tr.psi == tr.value == pytest.approx(phi(c, 0, 0.1))


def test_psi_term_after_up_then_two_down():
    c = config_at([-5, 0])
    tr = NormTracker(c, -5, 0.1)
    tr.on_jump(0, 1, 0.1)
    tr.on_jump(0, -1, 0.2)
    tr.on_jump(0, -1, 0.3)
    assert tr.value == pytest.approx(math.exp(0.1 * (-6)))
    assert tr.psi == pytest.approx(math.exp(0.1 * (-4)))
    assert tr.psi / tr.value == pytest.approx(math.exp(0.2))


@given(st.integers(0, 10**9), st.integers(-8, 3), st.sampled_from([0.05, 0.1, 0.3]))
def test_psi_dominates_phi(seed, z, theta):
    c = init(InitialConditionSpec.geometric(0.5, 4.0, 10), 1, seed)
    tr = NormTracker(c, z, theta)
    for ch in c.advance(t_stop=20.0, chunk=64):
        tr.consume(ch)
        assert tr.psi >= tr.value - 1e-12
        assert tr.recompute_psi() == pytest.approx(tr.psi, rel=1e-9, abs=1e-12)


# ---------------------------------------------------------------- m and f_theta


def test_m_count_examples():
    c = init(InitialConditionSpec.a_delta_0(), 1, 3)
    assert m_count(c, -24, 0) == 1
    run_until(c, Stop(r=1))
    assert m_count(c, -24, 0) == 0
    with pytest.raises(ParameterError):
        m_count(c, 0, 0)


@given(st.integers(0, 10**9), st.integers(1, 3), st.integers(1, 30))
def test_m_count_bounds(seed, a, width):
    c = init(InitialConditionSpec.explicit([(0, 2), (-2, 1)]), a, seed)
    run_until(c, Stop(time=15.0), keep_log=False)
    z2 = c.r
    m = m_count(c, z2 - width, z2)
    initial = sum(n for x, n in [(0, 2), (-2, 1)] if z2 - width < x <= z2)
    assert isinstance(m, int) and 0 <= m <= c.n
    assert m <= a * width + initial


def test_f_theta_examples():
    assert f_theta(init(InitialConditionSpec.a_delta_0(), 3, 0), 0.4) == 3
    assert f_theta(config_at([-10]), 0.1) == pytest.approx(0.367879, abs=1e-6)


def test_lambda2_value():
    assert lambda2(0.1, 1) == pytest.approx(2 * math.exp(0.1) + math.exp(-0.1) - 2)
    assert lambda2(0.1, 1) == pytest.approx(1.115179, abs=1e-6)


def test_f_theta_growth_bound():
    n = 10**5
    vals = np.empty(n)
    for s in range(n):
        c = init(InitialConditionSpec.a_delta_0(), 1, s)
        run_until(c, Stop(time=1.0), keep_log=False)
        vals[s] = f_theta(c, 0.1)
    se = vals.std(ddof=1) / math.sqrt(n)
    assert vals.mean() <= math.exp(lambda2(0.1, 1)) + 3 * se


# ---------------------------------------------------------------- martingale


def test_n_martingale_at_zero():
    c = init(InitialConditionSpec.explicit([(0, 1), (-2, 2)]), 1, 0)
    assert n_martingale(c, -1, 0.2) == pytest.approx(phi(c, -1, 0.2))


def test_n_martingale_mean_is_constant():
    spec = InitialConditionSpec.explicit([(0, 1)] + [(-k, 1) for k in range(1, 6)])
    times = [0.0, 1.0, 2.0, 5.0]
    n = 10**4
    vals = np.empty((n, len(times)))
    for s in range(n):
        c = init(spec, 1, s)
        for j, t in enumerate(times):
            run_until(c, Stop(time=t), keep_log=False)
            vals[s, j] = n_martingale(c, -1, 0.2)
    m = vals.mean(axis=0)
    se = vals.std(axis=0, ddof=1) / math.sqrt(n)
    for j in range(1, len(times)):
        assert abs(m[j] - m[0]) < 3 * math.hypot(se[j], se[0])


# ---------------------------------------------------------------- tracker


def test_hook_jump_updates_one_term():
    c = config_at([-4, 0])
    tr = NormTracker(c, 0, 0.1, track_psi=False)
    before = tr.value
    term = math.exp(-0.4)
    tr.on_jump(0, 1)
    assert tr.value == pytest.approx(before - term + term * math.exp(0.1))


def test_hook_front_advance_without_spawns_in_scope():
    c = config_at([-4, 0])
    tr = NormTracker(c, 0, 0.1, track_psi=False)
    before = tr.value
    tr.on_front_advance([1])
    assert tr.value == pytest.approx(before * math.exp(-0.1))
    assert tr.r == 1


def test_hook_front_advance_wrong_origin():
    tr = NormTracker(config_at([0]), 0, 0.1)
    with pytest.raises(StateError):
        tr.on_front_advance([5])


def test_out_of_order_events_rejected():
    c = init(InitialConditionSpec.a_delta_0(), 1, 4)
    tr = NormTracker(c, 0, 0.1)
    chunks = list(c.advance(ev_stop=40, chunk=8))
    tr.consume(chunks[0])
    tr.consume(chunks[1])
    with pytest.raises(StateError):
        tr.consume(chunks[0])
    with pytest.raises(StateError):
        tr.consume(chunks[3])


def test_mismatched_event_rejected():
    tr = NormTracker(config_at([0]), 0, 0.1)
    bad = EventChunk(np.array([0.1]), np.array([0], dtype=np.int32),
                     np.array([-3], dtype=np.int32), np.array([-2], dtype=np.int32),
                     np.array([False]))
    with pytest.raises(StateError):
        tr.consume(bad)


@pytest.mark.parametrize("z", [0, 50, -20])
def test_tracker_matches_recompute_after_a_million_events(z):
    c = init(InitialConditionSpec.geometric(0.5, 4.0, 30), 1, 17)
    tr = NormTracker(c, z, 0.1)
    run_until(c, Stop(events=10**6), keep_log=False, observers=[tr])
    assert tr.events == 10**6
    assert abs(tr.value - tr.recompute()) < 1e-9
    assert abs(tr.value - phi(c, z, 0.1)) < 1e-9
    assert tr.n_martingale() == pytest.approx(n_martingale(c, z, 0.1), rel=1e-9)


@given(st.integers(0, 10**9), st.integers(1, 3), st.integers(-10, 10))
def test_tracker_matches_recompute(seed, a, z):
    c = init(InitialConditionSpec.explicit([(0, 1), (-3, 2)]), a, seed)
    tr = NormTracker(c, z, 0.2, check_every=50)
    run_until(c, Stop(time=25.0), keep_log=False, observers=[tr])
    assert tr.max_error < 1e-9
    assert abs(tr.value - phi(c, z, 0.2)) < 1e-9


def test_norm_series_threshold_starts_at_one():
    c = init(InitialConditionSpec.a_delta_0(), 1, 2)
    log = run_until(c, Stop(time=200.0)).log
    rows = norm_series(log, 50.0, 24, 0.1, 0.3)
    assert rows[0, 0] == 0.0 and rows[0, 3] == 1.0
    assert np.all(np.diff(rows[:, 1]) == 1)
