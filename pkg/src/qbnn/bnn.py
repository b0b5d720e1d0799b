"""Small tanh MLP with hand-written backprop over a pluggable inner-product oracle.

Every pre-activation ``W_j . [a; 1]`` and every backward signal
``W[:, j] . delta`` is requested from an :class:`IpeProvider`, so swapping the
classical provider for a quantum one turns exact passes into noisy ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NonFiniteValue, RankTooLarge
from .ipe import IpeParams, sample_from_dots

OUTPUT_KINDS = ("regression", "classification")
_ERROR_LOG_CAP = 200_000


class IpeProvider:
    """Computes batches of inner products, exactly or through the IPE oracle.

    ``inner(A, B)`` returns the matrix of row-by-row inner products
    ``A @ B.T``. The quantum kind draws a fresh independent estimate for every
    entry and keeps a tally of calls and absolute errors for cost reporting.
    """

    def __init__(self, params=None, rng=None):
        self.params = params
        if params is not None and rng is None:
            raise ValueError("a quantum provider needs an explicit random generator")
        self.rng = rng
        self.calls = 0
        self.error_sum = 0.0
        self.error_max = 0.0
        self._error_log = []
        self._logged = 0

    @classmethod
    def classical(cls):
        return cls()

    @classmethod
    def quantum(cls, params, seed):
        if isinstance(params, int):
            params = IpeParams(params)
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        return cls(params, rng)

    @property
    def kind(self):
        return "classical" if self.params is None else "quantum"

    @property
    def is_quantum(self):
        return self.params is not None

    def inner(self, A, B):
        A = np.atleast_2d(A)
        B = np.atleast_2d(B)
        if A.shape[1] != B.shape[1]:
            raise DimensionMismatch(f"inner products of length {A.shape[1]} vs {B.shape[1]}")
        exact = A @ B.T
        self.calls += exact.size
        if self.params is None:
            return exact
        sq_a = np.einsum("ij,ij->i", A, A)
        sq_b = np.einsum("ij,ij->i", B, B)
        norms = np.sqrt(np.outer(sq_a, sq_b))
        est = sample_from_dots(exact, norms, self.params, self.rng)
        err = np.abs(est - exact).ravel()
        self.error_sum += float(err.sum())
        if err.size:
            self.error_max = max(self.error_max, float(err.max()))
        if self._logged < _ERROR_LOG_CAP:
            chunk = err[: _ERROR_LOG_CAP - self._logged]
            self._error_log.append(chunk)
            self._logged += chunk.size
        return est

    def dot(self, u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        if u.shape != v.shape or u.ndim != 1:
            raise DimensionMismatch(f"cannot take inner product of shapes {u.shape} and {v.shape}")
        return float(self.inner(u[None, :], v[None, :])[0, 0])

    def recorded_errors(self):
        """First absolute errors observed (capped), for epsilon summaries."""
        if not self._error_log:
            return np.zeros(0)
        return np.concatenate(self._error_log)


@dataclass(frozen=True)
class MlpArchitecture:
    layer_sizes: tuple
    output_kind: str = "regression"
    hidden_activation: str = "tanh"

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2 or min(sizes) < 1:
            raise ValueError(f"need at least two layers of positive width, got {sizes}")
        if self.output_kind not in OUTPUT_KINDS:
            raise ValueError(f"output_kind must be one of {OUTPUT_KINDS}")
        if self.hidden_activation != "tanh":
            raise ValueError("only tanh hidden layers are supported")

    @property
    def n_layers(self):
        return len(self.layer_sizes)

    @property
    def omega(self):
        """Total neuron count."""
        return sum(self.layer_sizes)

    @property
    def weight_shapes(self):
        s = self.layer_sizes
        return [(s[i], s[i - 1] + 1) for i in range(1, len(s))]

    @property
    def n_params(self):
        return sum(r * c for r, c in self.weight_shapes)


@dataclass(frozen=True)
class ModelSpec:
    architecture: MlpArchitecture
    prior_scale: float = 1.0
    init_rank: int | None = None  # None means full rank
    likelihood_scale: float = 0.1  # Gaussian noise std, regression only

    def __post_init__(self):
        if not self.prior_scale > 0:
            raise ValueError("prior_scale must be positive")
        if self.architecture.output_kind == "regression" and not self.likelihood_scale > 0:
            raise ValueError("likelihood_scale must be positive for regression")
        if self.init_rank is not None and self.init_rank < 1:
            raise ValueError("init_rank must be a positive integer or None")

    @property
    def likelihood(self):
        return "gaussian" if self.architecture.output_kind == "regression" else "bernoulli"

    @property
    def n_params(self):
        return self.architecture.n_params


@dataclass
class Dataset:
    inputs: np.ndarray
    targets: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=float)
        self.targets = np.asarray(self.targets, dtype=float).ravel()
        if self.inputs.ndim == 1:
            self.inputs = self.inputs.reshape(-1, 1) if self.inputs.size else self.inputs.reshape(0, 1)
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise DimensionMismatch(
                f"{self.inputs.shape[0]} input rows but {self.targets.shape[0]} targets"
            )
        if not (np.all(np.isfinite(self.inputs)) and np.all(np.isfinite(self.targets))):
            raise NonFiniteValue("dataset contains non-finite entries")

    def __len__(self):
        return self.targets.shape[0]

    @classmethod
    def empty(cls, n_inputs):
        return cls(np.zeros((0, n_inputs)), np.zeros(0))

    def subset(self, idx):
        return Dataset(self.inputs[idx], self.targets[idx], dict(self.meta))


def weight_matrices(arch, theta):
    """Views of ``theta`` as per-layer matrices; the last column holds the bias."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (arch.n_params,):
        raise DimensionMismatch(f"expected {arch.n_params} parameters, got shape {theta.shape}")
    mats, start = [], 0
    for rows, cols in arch.weight_shapes:
        mats.append(theta[start : start + rows * cols].reshape(rows, cols))
        start += rows * cols
    return mats


def weight_row(arch, theta, layer, j):
    """Row ``j`` (0-based) of the matrix feeding layer ``layer`` (1-based, >= 2)."""
    return weight_matrices(arch, theta)[layer - 2][j]


def _augment(a):
    return np.hstack([a, np.ones((a.shape[0], 1))])


def _forward(arch, mats, X, provider):
    acts = [X]
    last = len(mats) - 1
    for i, W in enumerate(mats):
        z = provider.inner(_augment(acts[-1]), W)
        acts.append(z if i == last else np.tanh(z))
    return acts


def _check_inputs(arch, X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != arch.layer_sizes[0]:
        raise DimensionMismatch(f"inputs have {X.shape[1]} features, network expects {arch.layer_sizes[0]}")
    return X


def forward_batch(spec, theta, X, provider=None):
    """Activations ``[a^1, ..., a^L]`` for every row of ``X``."""
    arch = spec.architecture
    provider = provider or IpeProvider.classical()
    return _forward(arch, weight_matrices(arch, theta), _check_inputs(arch, X), provider)


def forward(spec, theta, x, provider=None):
    """Per-layer activations for a single input vector."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DimensionMismatch("forward expects a single input vector")
    return [a[0] for a in forward_batch(spec, theta, x[None, :], provider)]


def predict(spec, theta, X, provider=None):
    """Network output: regression value or class-1 logit, one per row."""
    out = forward_batch(spec, theta, X, provider)[-1]
    return out[:, 0] if out.shape[1] == 1 else out


def jvp_inner_product(provider, v_i, v_j, t_1, t_2):
    """Directional derivative of ``v_i . v_j`` along ``(t_1, t_2)``: two inner products."""
    arrs = [np.asarray(v, dtype=float) for v in (v_i, v_j, t_1, t_2)]
    if len({a.shape for a in arrs}) != 1:
        raise DimensionMismatch("jvp operands must share one shape")
    v_i, v_j, t_1, t_2 = arrs
    total = 0.0
    for v, t in ((v_j, t_1), (v_i, t_2)):
        if np.any(t) and np.any(v):
            total += provider.dot(v, t)
    return total


def _log_prior(spec, theta):
    P = theta.size
    s2 = spec.prior_scale**2
    return -0.5 * float(theta @ theta) / s2 - 0.5 * P * math.log(2 * math.pi * s2)


def _log_likelihood_terms(spec, out, y):
    """Per-point log likelihood and its derivative w.r.t. the network output."""
    if spec.likelihood == "gaussian":
        s2 = spec.likelihood_scale**2
        r = y - out
        return -0.5 * r**2 / s2 - 0.5 * math.log(2 * math.pi * s2), r / s2
    # y z - log(1 + e^z), stable for either sign of z
    ll = y * out - np.logaddexp(0.0, out)
    return ll, y - _expit(out)


def _expit(z):
    return np.exp(-np.logaddexp(0.0, -z))


def _check_data(spec, data):
    arch = spec.architecture
    if arch.layer_sizes[-1] != 1:
        raise DimensionMismatch("likelihoods are defined for a single output neuron")
    if len(data) and data.inputs.shape[1] != arch.layer_sizes[0]:
        raise DimensionMismatch(
            f"dataset has {data.inputs.shape[1]} features, network expects {arch.layer_sizes[0]}"
        )


def log_posterior(spec, theta, data, provider=None):
    """Unnormalised log posterior (log prior + log likelihood, constants included)."""
    lp, _ = log_posterior_and_grad(spec, theta, data, provider, need_grad=False)
    return lp


def grad_log_posterior(spec, theta, data, provider=None):
    return log_posterior_and_grad(spec, theta, data, provider)[1]


def log_posterior_and_grad(spec, theta, data, provider=None, need_grad=True):
    """Log posterior and its gradient from one forward and one backward pass.

    With a quantum provider both the forward pre-activations and the backward
    signals are noisy; the returned pair comes from the same forward draw.
    """
    _check_data(spec, data)
    arch = spec.architecture
    provider = provider or IpeProvider.classical()
    theta = np.asarray(theta, dtype=float)
    mats = weight_matrices(arch, theta)
    lp = _log_prior(spec, theta)
    grad = -theta / spec.prior_scale**2 if need_grad else None
    if len(data):
        acts = _forward(arch, mats, data.inputs, provider)
        ll, dout = _log_likelihood_terms(spec, acts[-1][:, 0], data.targets)
        lp += float(ll.sum())
        if need_grad:
            grad = grad + _backward(mats, acts, dout[:, None], provider)
    if not math.isfinite(lp) or (need_grad and not np.all(np.isfinite(grad))):
        raise NonFiniteValue("log posterior evaluation overflowed")
    return lp, grad


def backward_signals(mats, acts, dout, provider):
    """Backward signals ``delta^l`` for l = 2..L (each N x n_l)."""
    deltas = [dout]
    for i in range(len(mats) - 1, 0, -1):
        W = mats[i][:, :-1]
        back = provider.inner(deltas[0], W.T)
        deltas.insert(0, back * (1.0 - acts[i] ** 2))
    return deltas


def _backward(mats, acts, dout, provider):
    deltas = backward_signals(mats, acts, dout, provider)
    grads = [d.T @ _augment(a) for d, a in zip(deltas, acts[:-1])]
    return np.concatenate([g.ravel() for g in grads])


def sample_prior(spec, rng):
    """Initial chain position from the prior, optionally low rank.

    With ``init_rank = r`` each weight block (bias column excluded) is built as
    ``A @ B`` with ``r`` inner columns, whose factor scale keeps the per-entry
    variance at ``prior_scale**2``. Blocks whose smaller side is at most ``r``
    stay full rank.
    """
    arch = spec.architecture
    s = spec.prior_scale
    r = spec.init_rank
    if r is None:
        return rng.normal(0.0, s, arch.n_params)
    sizes = arch.layer_sizes
    hidden = [min(sizes[i], sizes[i - 1]) for i in range(2, len(sizes) - 1)]
    limit = min(hidden) if hidden else max(min(rows, cols - 1) for rows, cols in arch.weight_shapes)
    if r > limit:
        raise RankTooLarge(f"init_rank {r} exceeds the smallest hidden block dimension {limit}")
    factor_std = math.sqrt(s) / r**0.25
    blocks = []
    for rows, cols in arch.weight_shapes:
        inner_cols = cols - 1
        if r < min(rows, inner_cols):
            A = rng.normal(0.0, factor_std, (rows, r))
            B = rng.normal(0.0, factor_std, (r, inner_cols))
            W = A @ B
        else:
            W = rng.normal(0.0, s, (rows, inner_cols))
        bias = rng.normal(0.0, s, (rows, 1))
        blocks.append(np.hstack([W, bias]).ravel())
    return np.concatenate(blocks)
