import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qbnn.errors import DimensionMismatch, DomainError, ZeroNormVector
from qbnn.ipe import (
    IpeParams,
    estimate_error_stats,
    nearest_grid_point,
    normalized_amplitude,
    outcome_distribution,
    sample_estimate,
    sample_from_dots,
    target_phase,
)

SIXTY = (math.cos(math.pi / 3), math.sin(math.pi / 3))


def brute_force(v_i, v_j, n):
    """Direct evaluation of the phase-estimation law, loops and all."""
    v_i, v_j = np.asarray(v_i, float), np.asarray(v_j, float)
    norms = np.linalg.norm(v_i) * np.linalg.norm(v_j)
    a = (np.dot(v_i, v_j) / norms + 1) / 2
    omega = math.asin(math.sqrt(a)) / math.pi
    N = 2**n
    b = min(range(N + 1), key=lambda i: abs(i / N - omega))
    delta = omega - b / N
    probs, values = [], []
    for l in range(N):
        den = math.sin(math.pi * (delta - l / N)) ** 2
        if den < 1e-300:
            p = 1.0
        else:
            p = math.sin(math.pi * (N * delta - l)) ** 2 / (N * N * den)
        w = ((b + l) % N) / N
        probs.append(p)
        values.append((2 * math.sin(math.pi * w) ** 2 - 1) * norms)
    return np.array(values), np.array(probs), b, delta


def tv(values_a, probs_a, values_b, probs_b, decimals=9):
    agg = {}
    for v, p in zip(values_a, probs_a):
        agg.setdefault(round(float(v), decimals), [0.0, 0.0])[0] += p
    for v, p in zip(values_b, probs_b):
        agg.setdefault(round(float(v), decimals), [0.0, 0.0])[1] += p
    return 0.5 * sum(abs(a - b) for a, b in agg.values())


def test_amplitude_examples():
    assert normalized_amplitude([1, 0], [0, 1]) == 0.5
    assert normalized_amplitude([2, 0], [3, 0]) == 1.0
    assert normalized_amplitude([1, 0], SIXTY) == pytest.approx(0.75, abs=1e-15)


def test_amplitude_errors():
    with pytest.raises(ZeroNormVector):
        normalized_amplitude([0, 0], [1, 0])
    with pytest.raises(DimensionMismatch):
        normalized_amplitude([1, 0], [1, 0, 0])


def test_target_phase_examples():
    assert target_phase(0.5) == 0.25
    assert target_phase(1.0) == 0.5
    assert target_phase(0.75) == pytest.approx(1 / 3, abs=1e-15)
    assert target_phase(0.0) == 0.0
    with pytest.raises(DomainError):
        target_phase(1.1)


def test_nearest_grid_point_examples():
    assert nearest_grid_point(0.25, 5) == (8, 0.0)
    assert nearest_grid_point(0.5, 1) == (1, 0.0)
    b, delta = nearest_grid_point(1 / 3, 3)
    assert b == 3
    assert delta == pytest.approx(-1 / 24, abs=1e-15)


@given(st.floats(0.0, 0.5), st.integers(1, 16))
def test_nearest_grid_point_is_argmin(omega, n):
    b, delta = nearest_grid_point(omega, n)
    N = 2**n
    best = min(abs(i / N - omega) for i in range(max(0, b - 2), min(N, b + 2) + 1))
    assert abs(delta) == pytest.approx(best, abs=1e-15)
    assert abs(delta) <= 0.5 / N + 1e-15


def test_point_masses():
    d = outcome_distribution([1, 0], [0, 1], IpeParams(5))
    assert d.probabilities[0] == 1.0
    assert d.values[0] == 0.0
    assert d.probabilities[1:].sum() == 0.0
    d = outcome_distribution([2, 0], [3, 0], IpeParams(4))
    assert d.probabilities[0] == 1.0
    assert d.values[0] == 6.0


def test_sixty_degree_distribution_matches_brute_force():
    d = outcome_distribution([1, 0], SIXTY, IpeParams(3))
    values, probs, b, delta = brute_force([1, 0], SIXTY, 3)
    assert d.grid_index == b == 3
    assert d.grid_offset == pytest.approx(-1 / 24, abs=1e-15)
    assert probs.sum() == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(d.probabilities, probs, atol=1e-13)
    np.testing.assert_allclose(d.values, values, atol=1e-13)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(-10, 10), min_size=3, max_size=3),
    st.lists(st.floats(-10, 10), min_size=3, max_size=3),
    st.integers(1, 10),
)
def test_distribution_matches_brute_force(u, v, n):
    if np.linalg.norm(u) < 1e-3 or np.linalg.norm(v) < 1e-3:
        return
    d = outcome_distribution(u, v, IpeParams(n))
    values, probs, _, _ = brute_force(u, v, n)
    assert abs(d.probabilities.sum() - 1.0) <= 1e-9
    assert tv(d.values, d.probabilities, values, probs, decimals=6) < 1e-9
    assert len(d.support()) <= 2**n


def test_sampler_point_mass_any_seed():
    for seed in range(5):
        rng = np.random.default_rng(seed)
        assert sample_estimate([1, 0], [0, 1], IpeParams(5), rng) == 0.0
        assert sample_estimate([2, 0], [3, 0], IpeParams(6), rng) == 6.0


@pytest.mark.parametrize("n", [3, 5, 9])
def test_sampler_matches_distribution(n):
    d = outcome_distribution([1, 0], SIXTY, IpeParams(n))
    rng = np.random.default_rng(11)
    draws = sample_from_dots(np.full(100_000, d.true_inner_product), d.norms_product, IpeParams(n), rng)
    vals, counts = np.unique(draws, return_counts=True)
    assert tv(vals, counts / counts.sum(), d.values, d.probabilities) < 0.02


def test_tail_sampler_large_grid():
    # n = 12 has 4096 outcomes, most drawn through the rejection tail
    u, v = np.array([0.3, -0.7, 0.2]), np.array([0.9, 0.1, 0.4])
    d = outcome_distribution(u, v, IpeParams(12))
    rng = np.random.default_rng(3)
    draws = sample_from_dots(np.full(200_000, d.true_inner_product), d.norms_product, IpeParams(12), rng)
    # compare mass far from the truth, where only the tail sampler contributes
    far = np.abs(d.values - d.true_inner_product) > 0.05
    expected = d.probabilities[far].sum()
    observed = np.mean(np.abs(draws - d.true_inner_product) > 0.05)
    se = math.sqrt(expected * (1 - expected) / draws.size)
    assert abs(observed - expected) < 4 * se + 1e-12


def test_sampler_zero_norm_returns_zero():
    out = sample_from_dots([0.0, 0.5], [0.0, 1.0], IpeParams(6), np.random.default_rng(0))
    assert out[0] == 0.0


def test_sampler_deterministic():
    a = sample_from_dots(np.linspace(-1, 1, 50), 1.0, IpeParams(7), np.random.default_rng(4))
    b = sample_from_dots(np.linspace(-1, 1, 50), 1.0, IpeParams(7), np.random.default_rng(4))
    assert np.array_equal(a, b)


def test_median_repetitions_concentrate():
    dot = 0.3
    single = sample_from_dots(np.full(20_000, dot), 1.0, IpeParams(4), np.random.default_rng(1))
    median = sample_from_dots(np.full(20_000, dot), 1.0, IpeParams(4, 5), np.random.default_rng(1))
    assert np.mean(np.abs(median - dot)) < np.mean(np.abs(single - dot))
    with pytest.raises(ValueError):
        IpeParams(4, 2)


def test_error_stats():
    s = estimate_error_stats([1, 0], [0, 1], IpeParams(5))
    assert s["bias"] == 0 and s["mae"] == 0 and s["rmse"] == 0
    s = estimate_error_stats([2, 0], [3, 0], IpeParams(4))
    assert s["bias"] == 0 and s["mae"] == 0
    values, probs, _, _ = brute_force([1, 0], SIXTY, 3)
    s = estimate_error_stats([1, 0], SIXTY, IpeParams(3))
    truth = 0.5
    assert s["mean"] == pytest.approx(np.dot(probs, values), abs=1e-12)
    assert s["bias"] == pytest.approx(np.dot(probs, values) - truth, abs=1e-12)
    assert s["mae"] == pytest.approx(np.dot(probs, np.abs(values - truth)), abs=1e-12)
    assert s["rmse"] == pytest.approx(math.sqrt(np.dot(probs, (values - truth) ** 2)), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(-1.0, 1.0), st.integers(2, 12))
def test_estimates_bounded_by_norms(c, n):
    v = [c, math.sqrt(max(0.0, 1 - c * c))]
    d = outcome_distribution([1.0, 0.0], v, IpeParams(n))
    assert np.all(np.abs(d.values) <= d.norms_product * (1 + 1e-12))


def test_params_validation():
    with pytest.raises(ValueError):
        IpeParams(0)
    with pytest.raises(ValueError):
        IpeParams(25)
    with pytest.raises(ValueError):
        outcome_distribution([1, 0], [0, 1], IpeParams(3, 3))


def test_write_csv(tmp_path):
    d = outcome_distribution([1, 0], SIXTY, IpeParams(3))
    path = tmp_path / "dist.csv"
    d.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "value,probability"
    assert len(lines) == 9
