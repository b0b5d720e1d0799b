"""Norm-dependent runtime factors and quantum-vs-classical cost comparison.

Update-history matrices: under MCMC there is no training update sequence,
so ``X[k, l, j]`` is taken to be the stack of the first ``k`` posterior
snapshots of row ``j`` of ``W^l``, and ``X~[k, l, j]`` the same for column
``j``. Their Frobenius norms are therefore cumulative root-sum-squares of the
per-sample row/column norms. This is an interpretation and is flagged in
every report.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .bnn import _augment, _forward, _log_likelihood_terms, backward_signals, IpeProvider, weight_matrices
from .errors import EmptyInput, IncompleteTelemetry

HISTORY_NOTE = (
    "X[k,l,j] is interpreted as the stack of posterior snapshots 1..k of weight "
    "row j of layer l (X~ likewise for columns); R_W is averaged over samples k."
)
LOAD_TIME = "polylog(d)"


@dataclass
class PassTelemetry:
    """Norms recorded during one forward pass (one sample, one input)."""

    layer_sizes: tuple
    row_norms: list  # entry l-2: ||W_j^l|| for j < n_l
    act_norms: list  # entry l-2: ||a^{l-1}||

    def check(self):
        L = len(self.layer_sizes)
        if len(self.row_norms) != L - 1 or len(self.act_norms) != L - 1:
            raise IncompleteTelemetry(f"expected records for {L - 1} layers")
        for i, rows in enumerate(self.row_norms):
            if np.shape(rows) != (self.layer_sizes[i + 1],):
                raise IncompleteTelemetry(f"layer {i + 2}: expected {self.layer_sizes[i + 1]} row norms")


@dataclass
class RunTelemetry:
    """Per-sample, per-datapoint norms from an inference run.

    Lists are indexed by layer: ``act_norms[i]`` holds ``||a^{k,n,i+1}||``
    (shape K x N) for layers 1..L-1; ``delta_norms[i]``, ``row_norms[i]``,
    ``col_norms[i]``, ``history_row_norms[i]``, ``history_col_norms[i]`` belong
    to layer ``i + 2``.
    """

    layer_sizes: tuple
    act_norms: list
    delta_norms: list
    row_norms: list
    col_norms: list
    history_row_norms: list
    history_col_norms: list
    provider_calls: int = 0

    @property
    def n_samples(self):
        return self.row_norms[0].shape[0] if self.row_norms else 0

    @property
    def n_points(self):
        return self.act_norms[0].shape[1] if self.act_norms else 0

    def check(self):
        s = self.layer_sizes
        L = len(s)
        lists = {
            "act_norms": self.act_norms,
            "delta_norms": self.delta_norms,
            "row_norms": self.row_norms,
            "col_norms": self.col_norms,
            "history_row_norms": self.history_row_norms,
            "history_col_norms": self.history_col_norms,
        }
        for name, arrs in lists.items():
            if len(arrs) != L - 1:
                raise IncompleteTelemetry(f"{name}: expected {L - 1} layers, got {len(arrs)}")
        K, N = self.n_samples, self.n_points
        for i in range(L - 1):
            for name, arr, shape in (
                ("act_norms", self.act_norms[i], (K, N)),
                ("delta_norms", self.delta_norms[i], (K, N)),
                ("row_norms", self.row_norms[i], (K, s[i + 1])),
                ("col_norms", self.col_norms[i], (K, s[i])),
                ("history_row_norms", self.history_row_norms[i], (K, s[i + 1])),
                ("history_col_norms", self.history_col_norms[i], (K, s[i])),
            ):
                if np.shape(arr) != shape:
                    raise IncompleteTelemetry(f"{name}[layer {i + 2}]: shape {np.shape(arr)} != {shape}")
        if np.any([np.any(np.asarray(a) < 0) for arrs in lists.values() for a in arrs]):
            raise IncompleteTelemetry("norms must be non-negative")


def _hidden_and_output(layer_sizes):
    return sum(layer_sizes) - layer_sizes[0]


def compute_Re(telemetry):
    """Average of ||W_j^l|| * ||a^{l-1}|| over all non-input neurons."""
    telemetry.check()
    total = 0.0
    for rows, act in zip(telemetry.row_norms, telemetry.act_norms):
        total += float(np.sum(rows)) * float(act)
    return total / _hidden_and_output(telemetry.layer_sizes)


def compute_R(telemetry):
    """Return ``{"r_a", "r_delta", "r_w", "r"}`` for an inference run."""
    telemetry.check()
    K, N = telemetry.n_samples, telemetry.n_points
    if K == 0 or N == 0:
        raise IncompleteTelemetry("telemetry holds no samples or no data points")
    denom = _hidden_and_output(telemetry.layer_sizes)
    r_a = 0.0
    r_delta = 0.0
    for i in range(len(telemetry.layer_sizes) - 1):
        # sum_j ||X[k,l,j]|| * sum_n ||a^{k,n,l-1}||, accumulated over k
        x_rows = telemetry.history_row_norms[i].sum(axis=1)
        r_a += float(x_rows @ telemetry.act_norms[i].sum(axis=1))
        x_cols = telemetry.history_col_norms[i].sum(axis=1)
        r_delta += float(x_cols @ telemetry.delta_norms[i].sum(axis=1))
    r_a /= K * N * denom
    r_delta /= K * N * denom

    r_w = 0.0
    skipped = 0
    for i in range(len(telemetry.layer_sizes) - 1):
        for hist, norms in (
            (telemetry.history_row_norms[i], telemetry.row_norms[i]),
            (telemetry.history_col_norms[i], telemetry.col_norms[i]),
        ):
            ok = norms > 0
            skipped += int(np.count_nonzero(~ok))
            r_w += float(np.sum(hist[ok] / norms[ok]))
    if skipped:
        warnings.warn(f"R_W: skipped {skipped} terms with zero weight norm", RuntimeWarning, stacklevel=2)
    r_w /= K * denom
    return {"r_a": r_a, "r_delta": r_delta, "r_w": r_w, "r": r_a + r_delta + r_w}


def empirical_epsilon(observations):
    """Max and mean absolute error per qubit count.

    ``observations`` maps qubit count to an iterable of ``|estimate - truth|``.
    """
    if not observations:
        raise EmptyInput("no qubit counts given")
    out = {}
    for n in sorted(observations):
        err = np.abs(np.fromiter(observations[n], dtype=float))
        if err.size == 0:
            raise EmptyInput(f"no observations for n={n}")
        out[int(n)] = {"max": float(err.max()), "mean": float(err.mean()), "count": int(err.size)}
    return out


def exact_epsilon(pairs, qubits):
    """Exact-distribution mean absolute error per qubit count over vector pairs."""
    from .ipe import IpeParams, estimate_error_stats

    return {
        int(n): {"mean": float(np.mean([estimate_error_stats(u, v, IpeParams(n))["mae"] for u, v in pairs]))}
        for n in qubits
    }


@dataclass
class CostReport:
    omega: int
    p: int
    k: int
    n: int
    m: int
    epsilon_by_qubits: dict
    r_a: float
    r_delta: float
    r_w: float
    r: float
    r_e: float
    quantum_inference_cost: float | None
    classical_inference_cost: float
    quantum_prediction_cost: float | None
    classical_prediction_cost: float
    speedup_inference: bool
    speedup_prediction: bool
    qubits: int | None = None
    epsilon: float | None = None
    quantum_prediction_cost_classical_inference: float | None = None
    speedup_prediction_classical_inference: bool = True
    load_time: str = LOAD_TIME
    notes: list = field(default_factory=lambda: [HISTORY_NOTE])

    def to_dict(self):
        d = asdict(self)
        d["epsilon_by_qubits"] = {str(k): v for k, v in sorted(self.epsilon_by_qubits.items())}
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, allow_nan=False) + "\n"


def runtime_report(omega, p, k, n, m, r_terms, r_e, epsilon=None, qubits=None, epsilon_by_qubits=None):
    """Evaluate the big-O expressions with unit constants.

    Quantum inference ``(KN)^1.5 * Omega * R / eps`` vs classical ``K N P``;
    quantum prediction ``K^1.5 sqrt(N) M Omega R_e / eps`` vs ``K M P``, and
    the variant after classical inference, which drops ``sqrt(KN)``.
    """
    if isinstance(r_terms, dict):
        r_a, r_delta, r_w = r_terms["r_a"], r_terms["r_delta"], r_terms["r_w"]
        r = r_terms.get("r", r_a + r_delta + r_w)
    else:
        r_a = r_delta = r_w = 0.0
        r = float(r_terms)
    classical_inf = float(k * n * p)
    classical_pred = float(k * m * p)
    q_inf = q_pred = q_pred_ci = None
    if epsilon is not None:
        inv_eps = 1.0 / epsilon
        q_inf = (k * n) ** 1.5 * omega * inv_eps * r
        q_pred = k**1.5 * math.sqrt(n) * m * omega * inv_eps * r_e
        q_pred_ci = k * m * omega * inv_eps * r_e
    # the sqrt(KN) implicit-storage overhead has to stay below the width
    speedup = math.sqrt(k * n) < omega
    return CostReport(
        omega=int(omega),
        p=int(p),
        k=int(k),
        n=int(n),
        m=int(m),
        epsilon_by_qubits=dict(epsilon_by_qubits or {}),
        r_a=float(r_a),
        r_delta=float(r_delta),
        r_w=float(r_w),
        r=float(r),
        r_e=float(r_e),
        quantum_inference_cost=q_inf,
        classical_inference_cost=classical_inf,
        quantum_prediction_cost=q_pred,
        classical_prediction_cost=classical_pred,
        speedup_inference=speedup,
        speedup_prediction=speedup,
        qubits=qubits,
        epsilon=epsilon,
        quantum_prediction_cost_classical_inference=q_pred_ci,
    )


def collect_run_telemetry(spec, samples, data):
    """Exact (classical) norms for every posterior sample and training point."""
    arch = spec.architecture
    samples = np.atleast_2d(samples)
    K = samples.shape[0]
    L = arch.n_layers
    act = [np.zeros((K, len(data))) for _ in range(L - 1)]
    delta = [np.zeros((K, len(data))) for _ in range(L - 1)]
    rows = [np.zeros((K, arch.layer_sizes[i + 1])) for i in range(L - 1)]
    cols = [np.zeros((K, arch.layer_sizes[i])) for i in range(L - 1)]
    provider = IpeProvider.classical()
    for k in range(K):
        mats = weight_matrices(arch, samples[k])
        for i, W in enumerate(mats):
            rows[i][k] = np.linalg.norm(W, axis=1)
            cols[i][k] = np.linalg.norm(W[:, :-1], axis=0)
        if len(data):
            acts = _forward(arch, mats, data.inputs, provider)
            _, dout = _log_likelihood_terms(spec, acts[-1][:, 0], data.targets)
            deltas = backward_signals(mats, acts, dout[:, None], provider)
            for i in range(L - 1):
                act[i][k] = np.linalg.norm(_augment(acts[i]), axis=1)
                delta[i][k] = np.linalg.norm(deltas[i], axis=1)
    hist_rows = [np.sqrt(np.cumsum(r**2, axis=0)) for r in rows]
    hist_cols = [np.sqrt(np.cumsum(c**2, axis=0)) for c in cols]
    return RunTelemetry(arch.layer_sizes, act, delta, rows, cols, hist_rows, hist_cols)


def mean_prediction_Re(spec, samples, X):
    """R_e averaged over all K x M prediction passes."""
    arch = spec.architecture
    samples = np.atleast_2d(samples)
    X = np.asarray(X, dtype=float)
    if samples.shape[0] == 0 or X.shape[0] == 0:
        return 0.0
    provider = IpeProvider.classical()
    total = 0.0
    for theta in samples:
        mats = weight_matrices(arch, theta)
        acts = _forward(arch, mats, X, provider)
        for W, a in zip(mats, acts[:-1]):
            total += float(np.linalg.norm(W, axis=1).sum() * np.linalg.norm(_augment(a), axis=1).sum())
    return total / (_hidden_and_output(arch.layer_sizes) * samples.shape[0] * X.shape[0])
