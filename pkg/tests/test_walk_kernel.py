import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import expm

from frogfront.rng import ParameterError, RngStream, derive_seed, sample_exponential, sample_step
from frogfront.walks import (
    RangeError,
    WalkPath,
    exp_moment_exact,
    gambler_ruin_oracle,
    label_walk,
    max_moment_exact,
    running_max_abs,
    ruin_frequency,
    simulate_walk,
    walk_sample,
)


# ---------------------------------------------------------------- oracles


def ruin_linear_solve(n):
    """P(hit +1 before -n) from 0 by solving the chain on {-n, ..., 1}."""
    sites = list(range(-n, 2))
    k = len(sites)
    A = np.eye(k)
    b = np.zeros(k)
    for j, x in enumerate(sites):
        if x == 1:
            b[j] = 1.0
        elif x > -n:
            A[j, j - 1] -= 0.5
            A[j, j + 1] -= 0.5
    return float(np.linalg.solve(A, b)[sites.index(0)])


def max_moment_expm(theta, t):
    """E exp(theta sup|X_s|) from killed generators with a cemetery state."""
    total = 1.0
    m = 1
    while True:
        k = 2 * m - 1
        Q = np.zeros((k + 1, k + 1))
        Q[:k, :k] = -2.0 * np.eye(k) + np.eye(k, k=1) + np.eye(k, k=-1)
        Q[0, k] += 1.0
        Q[k - 1, k] += 1.0
        esc = float(expm(Q * t)[m - 1, k])
        total += (math.exp(theta * m) - math.exp(theta * (m - 1))) * esc
        if esc * math.exp(theta * m) < 1e-16 * total:
            return total
        m += 1


# ---------------------------------------------------------------- streams


def test_exponential_mean():
    x = RngStream(11, ("misc", 1, 0)).exponential(2.0, 10**6)
    assert (x > 0).all()
    assert abs(x.mean() - 0.5) < 0.005


def test_exponential_same_state_same_value():
    s = RngStream(5, ("walk", 3, 1), counter=17)
    assert sample_exponential(1.0, s.copy()) == sample_exponential(1.0, s.copy())


@pytest.mark.parametrize("rate", [0.0, -1.0])
def test_exponential_rejects_nonpositive_rate(rate):
    with pytest.raises(ParameterError):
        sample_exponential(rate, RngStream(1))


def test_step_symmetry_and_lag1():
    s = RngStream(12, ("misc", 2, 0)).step(10**6)
    assert set(np.unique(s)) == {-1, 1}
    assert 0.498 <= (s == 1).mean() <= 0.502
    x = s - s.mean()
    acf = float((x[:-1] * x[1:]).sum() / (x * x).sum())
    assert abs(acf) < 3 / math.sqrt(10**6)


@given(st.integers(0, 2**62), st.integers(-50, 50), st.integers(1, 4))
def test_stream_determinism(seed, k1, k2):
    a = RngStream(seed, ("walk", k1, k2))
    b = RngStream(seed, ("walk", k1, k2))
    assert np.array_equal(a.uniform(20), b.uniform(20))
    assert [sample_step(a) for _ in range(5)] == [sample_step(b) for _ in range(5)]


@given(st.integers(0, 2**62), st.integers(0, 1000))
def test_derive_seed_is_a_function(seed, i):
    assert derive_seed(seed, 3, i) == derive_seed(seed, 3, i)
    assert derive_seed(seed, 3, i) != derive_seed(seed, 3, i + 1)


def test_distinct_keys_give_distinct_draws():
    a = RngStream(1, ("walk", 0, 1)).uniform(8)
    b = RngStream(1, ("walk", 0, 2)).uniform(8)
    assert not np.array_equal(a, b)


# ---------------------------------------------------------------- paths


def test_empty_path():
    p = simulate_walk(7, 0.0, RngStream(1))
    assert p.events == []
    assert p.position(0.0) == 7
    assert running_max_abs(p, 0.0) == 7


def test_single_up_step_maximum():
    for seed in range(200):
        p = simulate_walk(0, 3.0, RngStream(seed))
        if len(p.steps) >= 1 and p.steps[0] == 1:
            t = p.times[0]
            if len(p.times) == 1 or p.times[1] > t + 1e-9:
                assert running_max_abs(p, t) == 1
                return
    pytest.fail("no path with an initial up step")


def test_query_beyond_horizon():
    p = simulate_walk(0, 1.0, RngStream(2))
    with pytest.raises(RangeError):
        p.position(2.0)
    with pytest.raises(RangeError):
        running_max_abs(p, 2.0)


@given(st.integers(0, 10**9), st.floats(0.1, 20.0))
def test_path_invariants(seed, t_end):
    p = simulate_walk(-3, t_end, RngStream(seed))
    assert np.all(np.diff(p.times) > 0)
    assert set(p.steps.tolist()) <= {-1, 1}
    grid = np.linspace(0, t_end, 9)
    maxima = [running_max_abs(p, t) for t in grid]
    assert all(b >= a for a, b in zip(maxima, maxima[1:]))
    for t in grid:
        assert maxima[-1] >= -3 + abs(p.position(t) + 3)


@given(st.integers(0, 10**9), st.floats(0.5, 10.0))
def test_extend_is_consistent(seed, t):
    whole = simulate_walk(0, 2 * t, RngStream(seed))
    piece = WalkPath(0, RngStream(seed)).extend(t).extend(2 * t)
    assert np.array_equal(whole.times, piece.times)
    assert np.array_equal(whole.steps, piece.steps)


def test_batch_sampler_matches_label_walks():
    end, mx = walk_sample(9, 5, 4.0)
    for p in range(5):
        w = label_walk(9, p, 1, 4.0)
        assert end[p] == w.position(4.0) - p
        assert mx[p] == running_max_abs(w, 4.0) - p


@pytest.mark.parametrize("theta", [0.1, 0.2])
@pytest.mark.parametrize("t", [1.0, 5.0])
def test_exponential_moment_identity(theta, t):
    end, _ = walk_sample(101, 10**6, t)
    y = np.exp(theta * end)
    se = y.std(ddof=1) / math.sqrt(len(y))
    assert abs(y.mean() - exp_moment_exact(theta, t)) < 3 * se


def test_exponential_moment_relative_error():
    end, _ = walk_sample(102, 10**6, 1.0)
    target = math.exp(2 * (math.cosh(0.2) - 1))
    assert abs(np.exp(0.2 * end).mean() / target - 1) < 0.01


def test_variance_of_endpoint():
    end, _ = walk_sample(103, 10**6, 1.0)
    assert abs(end.var() / 2.0 - 1) < 0.02


@pytest.mark.parametrize("t", [1.0, 5.0])
def test_reflection_bound_small_times(t):
    _, mx = walk_sample(104, 10**5, t)
    assert np.exp(0.2 * mx).mean() <= 3 * exp_moment_exact(0.2, t)
    assert max_moment_exact(0.2, t) <= 3 * exp_moment_exact(0.2, t)


# ---------------------------------------------------------------- running-max moments


@pytest.mark.parametrize("theta,t", [(0.2, 1.0), (0.5, 3.0), (0.3, 6.0)])
def test_max_moment_matches_generator_oracle(theta, t):
    assert max_moment_exact(theta, t) == pytest.approx(max_moment_expm(theta, t), rel=1e-9)


def test_max_moment_matches_monte_carlo():
    _, mx = walk_sample(105, 10**6, 10.0)
    y = np.exp(0.5 * mx)
    se = y.std(ddof=1) / math.sqrt(len(y))
    assert abs(y.mean() - max_moment_exact(0.5, 10.0)) < 4 * se


def test_one_sided_max_moment_matches_monte_carlo():
    _, up = walk_sample(106, 10**6, 10.0, one_sided=True)
    y = np.exp(0.5 * up)
    se = y.std(ddof=1) / math.sqrt(len(y))
    assert abs(y.mean() - max_moment_exact(0.5, 10.0, one_sided=True)) < 4 * se


@pytest.mark.parametrize("theta", [0.1, 0.5, 1.0])
@pytest.mark.parametrize("t", [1.0, 20.0, 50.0])
def test_one_sided_max_moment_bound(theta, t):
    e = exp_moment_exact(theta, t)
    assert max_moment_exact(theta, t, one_sided=True) <= (1 + math.exp(-theta)) * e * (1 + 1e-12)


def test_two_sided_max_moment_exceeds_triple_bound():
    # the two-sided maximum is heavier than the triple bound at large theta t
    assert max_moment_exact(0.5, 20.0) / exp_moment_exact(0.5, 20.0) == pytest.approx(
        3 * 1.064, rel=2e-3)
    assert max_moment_exact(0.5, 10.0) > 3 * exp_moment_exact(0.5, 10.0)


def test_max_moment_shift():
    assert max_moment_exact(0.3, 2.0, x=4) == pytest.approx(
        math.exp(1.2) * max_moment_exact(0.3, 2.0))


# ---------------------------------------------------------------- gambler's ruin


def test_ruin_oracle_values():
    assert gambler_ruin_oracle(1) == 0.5
    assert gambler_ruin_oracle(4) == pytest.approx(0.8)


@pytest.mark.parametrize("n", [1, 2, 4, 9])
def test_ruin_oracle_matches_linear_solve(n):
    assert gambler_ruin_oracle(n) == pytest.approx(ruin_linear_solve(n), abs=1e-12)


def test_ruin_rejects_bad_n():
    with pytest.raises(ParameterError):
        gambler_ruin_oracle(0)


def test_ruin_frequency():
    f = ruin_frequency(7, 4, 10**5)
    se = math.sqrt(0.8 * 0.2 / 10**5)
    assert abs(f - 0.8) < 3 * se
