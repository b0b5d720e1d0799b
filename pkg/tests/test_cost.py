import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_R, random_telemetry
from qbnn.bnn import Dataset, MlpArchitecture, ModelSpec
from qbnn.cost import (
    PassTelemetry,
    RunTelemetry,
    collect_run_telemetry,
    compute_R,
    compute_Re,
    empirical_epsilon,
    exact_epsilon,
    mean_prediction_Re,
    runtime_report,
)
from qbnn.errors import EmptyInput, IncompleteTelemetry


def hand_fixture():
    return PassTelemetry((2, 2, 1), [np.array([1.0, 1.0]), np.array([3.0])], [2.0, 1.0])


def test_Re_hand_value():
    assert compute_Re(hand_fixture()) == pytest.approx(7 / 3, abs=1e-12)


def test_Re_zero_activations_and_linearity():
    t = hand_fixture()
    zero = PassTelemetry(t.layer_sizes, t.row_norms, [0.0, 0.0])
    assert compute_Re(zero) == 0.0
    doubled = PassTelemetry(t.layer_sizes, t.row_norms, [4.0, 2.0])
    assert compute_Re(doubled) == pytest.approx(2 * compute_Re(t), abs=1e-12)


def test_Re_incomplete():
    with pytest.raises(IncompleteTelemetry):
        compute_Re(PassTelemetry((2, 2, 1), [np.array([1.0, 1.0])], [2.0]))


def test_R_zero_history():
    t = random_telemetry((2, 2, 1), 3, 4, np.random.default_rng(0))
    for arrs in (t.history_row_norms, t.history_col_norms):
        for a in arrs:
            a[:] = 0.0
    assert compute_R(t) == {"r_a": 0.0, "r_delta": 0.0, "r_w": 0.0, "r": 0.0}


def test_R_tiny_hand_sum():
    # K = N = 1, sizes (1, 1, 1): every sum has one term
    t = RunTelemetry(
        (1, 1, 1),
        act_norms=[np.array([[2.0]]), np.array([[3.0]])],
        delta_norms=[np.array([[0.5]]), np.array([[0.25]])],
        row_norms=[np.array([[1.0]]), np.array([[4.0]])],
        col_norms=[np.array([[2.0]]), np.array([[5.0]])],
        history_row_norms=[np.array([[1.5]]), np.array([[2.0]])],
        history_col_norms=[np.array([[3.0]]), np.array([[1.0]])],
    )
    r = compute_R(t)
    assert r["r_a"] == pytest.approx((1.5 * 2 + 2 * 3) / 2, abs=1e-12)
    assert r["r_delta"] == pytest.approx((3 * 0.5 + 1 * 0.25) / 2, abs=1e-12)
    assert r["r_w"] == pytest.approx((1.5 / 1 + 3 / 2 + 2 / 4 + 1 / 5) / 2, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(1, 4), min_size=2, max_size=4), st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_R_matches_brute_force(sizes, K, N, seed):
    t = random_telemetry(sizes, K, N, np.random.default_rng(seed))
    r = compute_R(t)
    ra, rd, rw = brute_R(t)
    assert r["r_a"] == pytest.approx(ra, rel=1e-12)
    assert r["r_delta"] == pytest.approx(rd, rel=1e-12)
    assert r["r_w"] == pytest.approx(rw, rel=1e-12)
    assert r["r"] == r["r_a"] + r["r_delta"] + r["r_w"]
    assert min(r.values()) >= 0


def test_R_rejects_bad_shapes():
    t = random_telemetry((2, 2, 1), 2, 2, np.random.default_rng(1))
    t.act_norms[0] = np.ones((2, 3))
    with pytest.raises(IncompleteTelemetry):
        compute_R(t)


def test_empirical_epsilon():
    eps = empirical_epsilon({5: [0.0, 0.0], 7: [0.25]})
    assert eps[5] == {"max": 0.0, "mean": 0.0, "count": 2}
    assert eps[7]["max"] == eps[7]["mean"] == 0.25
    with pytest.raises(EmptyInput):
        empirical_epsilon({})
    with pytest.raises(EmptyInput):
        empirical_epsilon({3: []})


def test_exact_epsilon_decreases_with_qubits():
    rng = np.random.default_rng(2)
    pairs = [tuple(v / np.linalg.norm(v) for v in rng.normal(size=(2, 4))) for _ in range(30)]
    eps = exact_epsilon(pairs, [5, 10])
    assert eps[10]["mean"] < eps[5]["mean"]
    assert exact_epsilon([(np.array([1.0, 0]), np.array([0, 1.0]))], [3, 6, 9]) == {3: {"mean": 0.0}, 6: {"mean": 0.0}, 9: {"mean": 0.0}}


def test_runtime_report_unit_inputs():
    rep = runtime_report(1, 1, 1, 1, 1, 1.0, 1.0, epsilon=1.0)
    assert rep.quantum_inference_cost == 1.0
    assert rep.classical_inference_cost == 1.0


@pytest.mark.parametrize("K,N,omega,verdict", [(4, 4, 5, True), (100, 100, 5, False), (5, 5, 5, False)])
def test_speedup_verdict(K, N, omega, verdict):
    rep = runtime_report(omega, 10, K, N, 3, 1.0, 1.0, epsilon=0.1)
    assert rep.speedup_inference is verdict
    assert rep.speedup_prediction is verdict
    assert rep.speedup_inference == (math.sqrt(K * N) < omega)


def test_report_json_fields():
    rep = runtime_report(12, 46, 200, 32, 8, {"r_a": 1.0, "r_delta": 0.5, "r_w": 2.0}, 1.5, epsilon=0.01, qubits=7,
                         epsilon_by_qubits={7: {"mean": 0.01}})
    d = json.loads(rep.to_json())
    for key in ("omega", "p", "k", "n", "m", "epsilon_by_qubits", "r", "r_e", "speedup_inference", "speedup_prediction"):
        assert key in d
    assert d["r"] == 3.5
    assert d["quantum_inference_cost"] == pytest.approx((200 * 32) ** 1.5 * 12 * 3.5 / 0.01)
    assert d["quantum_prediction_cost"] == pytest.approx(200**1.5 * math.sqrt(32) * 8 * 12 * 1.5 / 0.01)
    assert d["quantum_prediction_cost_classical_inference"] == pytest.approx(200 * 8 * 12 * 1.5 / 0.01)
    assert d["classical_prediction_cost"] == 200 * 8 * 46
    assert d["load_time"] == "polylog(d)"
    assert "X[k,l,j]" in d["notes"][0]


def test_collected_telemetry_matches_direct_norms():
    rng = np.random.default_rng(3)
    spec = ModelSpec(MlpArchitecture((2, 3, 1)))
    samples = rng.normal(size=(4, spec.n_params))
    data = Dataset(rng.normal(size=(5, 2)), rng.normal(size=5))
    t = collect_run_telemetry(spec, samples, data)
    t.check()
    W2 = samples[:, :9].reshape(4, 3, 3)
    np.testing.assert_allclose(t.row_norms[0], np.linalg.norm(W2, axis=2), atol=1e-14)
    np.testing.assert_allclose(t.col_norms[0], np.linalg.norm(W2[:, :, :2], axis=1), atol=1e-14)
    np.testing.assert_allclose(t.history_row_norms[0][-1], np.sqrt((np.linalg.norm(W2, axis=2) ** 2).sum(axis=0)))
    # input activation norm includes the constant bias entry
    np.testing.assert_allclose(t.act_norms[0][0], np.sqrt((data.inputs**2).sum(axis=1) + 1.0))
    assert mean_prediction_Re(spec, samples, data.inputs) > 0
