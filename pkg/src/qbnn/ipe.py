"""Closed-form model of the quantum inner-product estimation (IPE) oracle.

An IPE call on ``v_i, v_j`` encodes the cosine of the two vectors as an
amplitude ``a``, runs phase estimation with ``n`` qubits on the phase
``arcsin(sqrt(a)) / pi`` and maps the measured grid point back to an inner
product estimate. Nothing here simulates gates; the output distribution of
phase estimation is known exactly and is sampled directly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, DomainError, ZeroNormVector

MAX_QUBITS = 24
CLAMP_TOL = 1e-12
NORMALIZATION_TOL = 1e-9

# Offsets |k| <= _WINDOW around the nearest grid point are enumerated when
# sampling; the (rarely visited) tail is drawn by rejection.
_WINDOW = 16


@dataclass(frozen=True)
class IpeParams:
    qubits: int
    repetitions: int = 1

    def __post_init__(self):
        if int(self.qubits) != self.qubits or not 1 <= self.qubits <= MAX_QUBITS:
            raise ValueError(f"qubits must be an integer in [1, {MAX_QUBITS}], got {self.qubits!r}")
        if int(self.repetitions) != self.repetitions or self.repetitions < 1:
            raise ValueError(f"repetitions must be a positive integer, got {self.repetitions!r}")
        if self.repetitions > 1 and self.repetitions % 2 == 0:
            raise ValueError("repetitions must be odd so the median is a single draw")


@dataclass(frozen=True)
class EstimateDistribution:
    """Exact distribution of one IPE estimate over its ``2**n`` outcomes.

    Entry ``l`` of ``values``/``probabilities`` belongs to the measured
    integer ``(grid_index + l) mod 2**n``.
    """

    values: np.ndarray
    probabilities: np.ndarray
    true_inner_product: float
    norms_product: float
    amplitude: float
    target_phase: float
    grid_index: int
    grid_offset: float

    @property
    def outcomes(self):
        return list(zip(self.values.tolist(), self.probabilities.tolist()))

    def mean(self):
        return float(np.dot(self.probabilities, self.values))

    def support(self, atol=0.0):
        """Distinct attainable values carrying probability above ``atol``."""
        return np.unique(self.values[self.probabilities > atol])

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["value", "probability"])
            for v, p in zip(self.values, self.probabilities):
                writer.writerow([repr(float(v)), repr(float(p))])


def _as_vector(v):
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1 or arr.size < 1:
        raise DimensionMismatch(f"expected a non-empty 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError("vector has non-finite entries")
    return arr


def _pair(v_i, v_j):
    v_i, v_j = _as_vector(v_i), _as_vector(v_j)
    if v_i.shape != v_j.shape:
        raise DimensionMismatch(f"dimensions differ: {v_i.size} vs {v_j.size}")
    sq_i, sq_j = float(np.dot(v_i, v_i)), float(np.dot(v_j, v_j))
    if sq_i == 0.0 or sq_j == 0.0:
        raise ZeroNormVector("inner product estimation needs non-zero vectors")
    return float(np.dot(v_i, v_j)), math.sqrt(sq_i * sq_j)


def _amplitude(dot, norms):
    a = 0.5 * (np.asarray(dot, dtype=float) / norms + 1.0)
    return np.clip(a, 0.0, 1.0)


def normalized_amplitude(v_i, v_j):
    """Amplitude ``(cos(v_i, v_j) + 1) / 2`` fed to amplitude estimation."""
    dot, norms = _pair(v_i, v_j)
    return float(_amplitude(dot, norms))


def _phase(a):
    # atan2 form of arcsin(sqrt(a)) / pi; exact at a = 1/2
    return np.arctan2(np.sqrt(a), np.sqrt(1.0 - a)) / np.pi


def target_phase(a):
    if not -CLAMP_TOL <= a <= 1.0 + CLAMP_TOL:
        raise DomainError(f"amplitude must lie in [0, 1], got {a!r}")
    return float(_phase(min(max(a, 0.0), 1.0)))


def nearest_grid_point(omega, n):
    """Return ``(b, delta)`` with ``b / 2**n`` the grid point nearest to ``omega``.

    Ties go to the smaller index, so ``|delta| <= 2**-(n + 1)``.
    """
    scaled = omega * 2.0**n  # exact scaling by a power of two
    b = int(math.ceil(scaled - 0.5))
    return b, (scaled - b) / 2.0**n


def _cos_2pi(frac):
    """``cos(2*pi*frac)`` with exact results at quarter turns."""
    t = np.mod(np.asarray(frac, dtype=float), 1.0) * 4.0
    quadrant = np.floor(t).astype(np.int64) % 4
    r = (t - np.floor(t)) * (np.pi / 2.0)
    c, s = np.cos(r), np.sin(r)
    c = np.where(r == 0.0, 1.0, c)
    s = np.where(r == 0.0, 0.0, s)
    return np.choose(quadrant, [c, -s, -c, s])


def _offset_probabilities(scaled_offset, k, grid):
    """Probability of landing ``k`` grid steps away from the nearest point.

    ``scaled_offset`` is ``2**n * delta``; broadcasting over both arguments.
    """
    u = np.asarray(scaled_offset, dtype=float)
    num = np.sin(np.pi * u) ** 2
    # sin(pi (u - k) / grid) expanded so only O(len(u) + len(k)) trig calls are needed
    su, cu = np.sin(np.pi * u / grid), np.cos(np.pi * u / grid)
    sk, ck = np.sin(np.pi * k / grid), np.cos(np.pi * k / grid)
    den = (grid * (su * ck - cu * sk)) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        p = num / den
    # vanishing denominator only at u = k = 0, where the limit is 1
    return np.where(den == 0.0, 1.0, p)


def _signed_offsets(grid):
    return np.arange(-(grid // 2) + 1, grid // 2 + 1) if grid > 1 else np.zeros(1, dtype=np.int64)


def _estimates_from_outcomes(measured, grid, norms):
    # 2 sin^2(pi w) - 1 == -cos(2 pi w)
    return -_cos_2pi(measured / grid) * norms


def outcome_distribution(v_i, v_j, params):
    """Enumerate all ``2**n`` outcomes of a single IPE call."""
    if params.repetitions != 1:
        raise ValueError("outcome_distribution describes a single draw (repetitions=1)")
    n = params.qubits
    dot, norms = _pair(v_i, v_j)
    a = float(_amplitude(dot, norms))
    omega = float(_phase(a))
    b, delta = nearest_grid_point(omega, n)
    grid = 2**n
    offsets = np.arange(grid)
    u = omega * grid - b
    # shift each offset to the representative nearest zero; p is periodic in k
    k = np.where(offsets <= grid // 2, offsets, offsets - grid)
    probs = np.clip(_offset_probabilities(u, k, grid), 0.0, 1.0)
    total = probs.sum()
    if abs(total - 1.0) > NORMALIZATION_TOL:
        raise RuntimeError(f"phase estimation probabilities sum to {total!r}")
    probs = probs / total
    values = _estimates_from_outcomes((b + offsets) % grid, grid, norms)
    return EstimateDistribution(
        values=values,
        probabilities=probs,
        true_inner_product=dot,
        norms_product=norms,
        amplitude=a,
        target_phase=omega,
        grid_index=b,
        grid_offset=delta,
    )


def _sample_tail(u, grid, rng):
    """Rejection-sample offsets with |k| > _WINDOW.

    Proposal: side uniformly, magnitude m = floor(x) + 1 with x having density
    proportional to (x - 1/2)**-2 on [W, inf). Since |sin(y)| >= 2|y|/pi on
    [-pi/2, pi/2], p_k <= sin^2(pi u) / (4 (m - 1/2)^2), which the proposal
    dominates.
    """
    w = _WINDOW
    out = np.empty(u.size, dtype=np.int64)
    todo = np.arange(u.size)
    half = grid // 2
    while todo.size:
        uu = u[todo]
        positive = rng.random(todo.size) < 0.5
        v = 1.0 - rng.random(todo.size)
        x = 0.5 + (w - 0.5) / v
        m = np.floor(np.minimum(x, 4.0 * grid)).astype(np.int64) + 1
        in_range = np.where(positive, m <= half, m <= half - 1)
        k = np.where(positive, m, -m)
        env = np.sin(np.pi * uu) ** 2 / 4.0
        p = _offset_probabilities(uu, k, grid)
        ratio = np.where(in_range, p * (m - 1.5) * (m - 0.5) / env, 0.0)
        accept = rng.random(todo.size) < ratio
        out[todo[accept]] = k[accept]
        todo = todo[~accept]
    return out


def _sample_offsets(u, n, rng):
    """Draw signed grid offsets for scaled offsets ``u`` (one draw each)."""
    grid = 2**n
    u = np.asarray(u, dtype=float)
    if grid <= 2 * _WINDOW + 1:
        k = _signed_offsets(grid)
    else:
        k = np.arange(-_WINDOW, _WINDOW + 1)
    probs = _offset_probabilities(u[:, None], k[None, :], grid)
    cum = np.cumsum(probs, axis=1)
    draws = rng.random(u.size)
    if grid <= 2 * _WINDOW + 1:
        draws = draws * cum[:, -1]
        idx = np.minimum((cum < draws[:, None]).sum(axis=1), k.size - 1)
        return k[idx]
    mass = cum[:, -1]
    # u == 0 puts all mass at k = 0; guard against rounding in the window sum
    in_window = (draws < mass) | (u == 0.0)
    idx = np.minimum((cum < draws[:, None]).sum(axis=1), k.size - 1)
    result = k[idx]
    tail = np.flatnonzero(~in_window)
    if tail.size:
        result[tail] = _sample_tail(u[tail], grid, rng)
    return result


def sample_from_dots(dots, norms, params, rng):
    """Vectorised IPE draws given exact inner products and norm products.

    Zero norm products return exactly 0 without consulting the oracle.
    """
    dots = np.asarray(dots, dtype=float)
    norms = np.asarray(norms, dtype=float)
    shape = np.broadcast(dots, norms).shape
    dots = np.broadcast_to(dots, shape).ravel()
    norms = np.broadcast_to(norms, shape).ravel()
    out = np.zeros(dots.size)
    live = np.flatnonzero(norms > 0.0)
    if live.size == 0:
        return out.reshape(shape)
    n = params.qubits
    grid = 2**n
    d, nrm = dots[live], norms[live]
    omega = _phase(_amplitude(d, nrm))
    scaled = omega * grid
    b = np.ceil(scaled - 0.5)
    u = scaled - b
    reps = params.repetitions
    if reps == 1:
        k = _sample_offsets(u, n, rng)
        est = _estimates_from_outcomes(np.mod(b + k, grid), grid, nrm)
    else:
        k = _sample_offsets(np.repeat(u, reps), n, rng).reshape(-1, reps)
        draws = _estimates_from_outcomes(np.mod(b[:, None] + k, grid), grid, nrm[:, None])
        est = np.median(draws, axis=1)
    out[live] = est
    return out.reshape(shape)


def sample_estimate(v_i, v_j, params, rng):
    """One noisy inner product estimate (median of ``repetitions`` draws)."""
    dot, norms = _pair(v_i, v_j)
    return float(sample_from_dots(dot, norms, params, rng))


def estimate_error_stats(v_i, v_j, params):
    dist = outcome_distribution(v_i, v_j, params)
    p, err = dist.probabilities, dist.values - dist.true_inner_product
    mean = dist.mean()
    return {
        "mean": mean,
        "bias": mean - dist.true_inner_product,
        "mae": float(np.dot(p, np.abs(err))),
        "rmse": float(math.sqrt(np.dot(p, err**2))),
    }
