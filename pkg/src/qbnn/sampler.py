"""HMC and NUTS over an arbitrary (possibly noisy) log density.

Samplers take a single callable ``logp_grad(theta) -> (logp, grad)`` so that a
noisy oracle supplies the log density and gradient from the same forward
pass. Identity mass matrix throughout.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteValue


@dataclass(frozen=True)
class SamplerConfig:
    n_samples: int = 200
    warmup: int = 200
    algorithm: str = "nuts"
    step_size: float | None = None  # None: heuristic initial step
    leapfrog_steps: int = 10  # hmc only
    step_jitter: float = 0.2  # hmc only: step drawn from step * U(1 - j, 1 + j)
    max_tree_depth: int = 10  # nuts only
    target_accept: float = 0.8
    adapt_step_size: bool = True
    divergence_threshold: float = 1000.0
    min_step_ratio: float = 0.2  # noisy targets only
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 0 or self.warmup < 0:
            raise ValueError("n_samples and warmup must be non-negative")
        if self.algorithm not in ("nuts", "hmc"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if not 1 <= self.max_tree_depth <= 12:
            raise ValueError("max_tree_depth must lie in [1, 12]")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError("target_accept must lie in (0, 1)")
        if self.step_size is not None and not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if self.leapfrog_steps < 1:
            raise ValueError("leapfrog_steps must be positive")
        if not 0.0 <= self.step_jitter < 1.0:
            raise ValueError("step_jitter must lie in [0, 1)")


@dataclass
class State:
    theta: np.ndarray
    p: np.ndarray
    logp: float
    grad: np.ndarray


@dataclass
class PosteriorSamples:
    samples: np.ndarray
    logp: np.ndarray
    accept_stat: np.ndarray
    tree_depth: np.ndarray
    n_leapfrog: np.ndarray
    divergent: np.ndarray
    step_size: float
    warmup_accept_stat: np.ndarray = field(default_factory=lambda: np.zeros(0))
    provider_calls: int = 0
    failure: str | None = None

    @property
    def n_samples(self):
        return self.samples.shape[0]

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            P = self.samples.shape[1] if self.samples.ndim == 2 else 0
            writer.writerow(
                ["draw", "logp", "accept_stat", "tree_depth", "n_leapfrog", "divergent"]
                + [f"theta_{i}" for i in range(P)]
            )
            for k in range(self.n_samples):
                writer.writerow(
                    [k, repr(float(self.logp[k])), repr(float(self.accept_stat[k])),
                     int(self.tree_depth[k]), int(self.n_leapfrog[k]), int(self.divergent[k])]
                    + [repr(float(v)) for v in self.samples[k]]
                )


def _evaluate(logp_grad, theta):
    try:
        with np.errstate(over="raise", invalid="raise"):
            logp, grad = logp_grad(theta)
    except (NonFiniteValue, FloatingPointError, OverflowError):
        return -math.inf, None
    logp = float(logp)
    if not math.isfinite(logp) or not np.all(np.isfinite(grad)):
        return -math.inf, None
    return logp, np.asarray(grad, dtype=float)


def leapfrog(logp_grad, theta, p, step, grad=None):
    """One Stormer-Verlet step: half kick, drift, half kick.

    Returns ``(theta, p, logp, grad)`` at the new point; ``logp`` is ``-inf``
    and ``grad`` is ``None`` when the density could not be evaluated there.
    """
    if grad is None:
        _, grad = _evaluate(logp_grad, theta)
        if grad is None:
            return theta, p, -math.inf, None
    p_half = p + 0.5 * step * grad
    theta_new = theta + step * p_half
    logp_new, grad_new = _evaluate(logp_grad, theta_new)
    if grad_new is None:
        return theta_new, p_half, -math.inf, None
    return theta_new, p_half + 0.5 * step * grad_new, logp_new, grad_new


def _hamiltonian(logp, p):
    return -logp + 0.5 * float(p @ p)


def hmc_draw(logp_grad, state, step, n_steps, rng, divergence_threshold=1000.0):
    """One Metropolis-corrected HMC transition from ``state`` (momentum ignored)."""
    p0 = rng.standard_normal(state.theta.size)
    h0 = _hamiltonian(state.logp, p0)
    theta, p, logp, grad = state.theta, p0, state.logp, state.grad
    for _ in range(n_steps):
        theta, p, logp, grad = leapfrog(logp_grad, theta, p, step, grad)
        if grad is None:
            break
    h1 = _hamiltonian(logp, p) if grad is not None else math.inf
    log_ratio = h0 - h1
    divergent = not (h1 - h0 <= divergence_threshold)
    accept_prob = 0.0 if divergent else min(1.0, math.exp(min(log_ratio, 0.0)))
    accepted = rng.random() < accept_prob
    new = State(theta, p, logp, grad) if accepted else state
    info = {
        "accept_stat": accept_prob,
        "tree_depth": 0,
        "n_leapfrog": n_steps,
        "divergent": divergent,
        "accepted": accepted,
    }
    return new, info


@dataclass
class _Tree:
    left: State
    right: State
    sample: State
    log_weight: float
    rho: np.ndarray
    sum_accept: float
    n_leapfrog: int
    valid: bool = True
    divergent: bool = False


def _no_u_turn(p_left, p_right, rho):
    return float(p_left @ rho) > 0.0 and float(p_right @ rho) > 0.0


class _NutsBuilder:
    def __init__(self, logp_grad, step, h0, rng, threshold):
        self.logp_grad = logp_grad
        self.step = step
        self.h0 = h0
        self.rng = rng
        self.threshold = threshold

    def leaf(self, edge, direction):
        theta, p, logp, grad = leapfrog(self.logp_grad, edge.theta, edge.p, direction * self.step, edge.grad)
        if grad is None:
            dead = State(theta, p, -math.inf, None)
            return _Tree(dead, dead, dead, -math.inf, p, 0.0, 1, valid=False, divergent=True)
        s = State(theta, p, logp, grad)
        h = _hamiltonian(logp, p)
        delta = self.h0 - h
        if not math.isfinite(h) or -delta > self.threshold:
            return _Tree(s, s, s, -math.inf, p, 0.0, 1, valid=False, divergent=True)
        return _Tree(s, s, s, delta, p.copy(), min(1.0, math.exp(min(delta, 0.0))), 1)

    def build(self, edge, direction, depth):
        if depth == 0:
            return self.leaf(edge, direction)
        first = self.build(edge, direction, depth - 1)
        if not first.valid:
            return first
        outer = first.right if direction > 0 else first.left
        second = self.build(outer, direction, depth - 1)
        if not second.valid:
            second.sum_accept += first.sum_accept
            second.n_leapfrog += first.n_leapfrog
            return second
        lw = np.logaddexp(first.log_weight, second.log_weight)
        take_second = self.rng.random() < math.exp(second.log_weight - lw)
        sample = second.sample if take_second else first.sample
        left_t, right_t = (first, second) if direction > 0 else (second, first)
        return _merge(left_t, right_t, sample, lw, first.sum_accept + second.sum_accept,
                      first.n_leapfrog + second.n_leapfrog)


def _merge(left_t, right_t, sample, lw, sum_accept, n_leapfrog):
    rho = left_t.rho + right_t.rho
    ok = _no_u_turn(left_t.left.p, right_t.right.p, rho)
    # extra checks across the seam between the two halves
    ok = ok and _no_u_turn(left_t.left.p, right_t.left.p, left_t.rho + right_t.left.p)
    ok = ok and _no_u_turn(left_t.right.p, right_t.right.p, right_t.rho + left_t.right.p)
    return _Tree(left_t.left, right_t.right, sample, lw, rho, sum_accept, n_leapfrog, valid=ok)


def nuts_draw(logp_grad, state, step, max_depth, rng, divergence_threshold=1000.0):
    """One multinomial NUTS transition with the generalised no-U-turn rule."""
    p0 = rng.standard_normal(state.theta.size)
    start = State(state.theta, p0, state.logp, state.grad)
    h0 = _hamiltonian(state.logp, p0)
    builder = _NutsBuilder(logp_grad, step, h0, rng, divergence_threshold)
    tree = _Tree(start, start, start, 0.0, p0.copy(), 0.0, 0)
    sum_accept, n_leapfrog, depth, divergent = 0.0, 0, 0, False
    while depth < max_depth:
        direction = 1 if rng.random() < 0.5 else -1
        edge = tree.right if direction > 0 else tree.left
        sub = builder.build(edge, direction, depth)
        sum_accept += sub.sum_accept
        n_leapfrog += sub.n_leapfrog
        depth += 1
        if not sub.valid:
            divergent = sub.divergent
            break
        # biased progressive sampling favours the new subtree
        sample = tree.sample
        if rng.random() < math.exp(min(sub.log_weight - tree.log_weight, 0.0)):
            sample = sub.sample
        lw = float(np.logaddexp(tree.log_weight, sub.log_weight))
        left_t, right_t = (tree, sub) if direction > 0 else (sub, tree)
        tree = _merge(left_t, right_t, sample, lw, 0.0, 0)
        if not tree.valid:
            break
    chosen = tree.sample
    info = {
        "accept_stat": sum_accept / max(n_leapfrog, 1),
        "tree_depth": depth,
        "n_leapfrog": n_leapfrog,
        "divergent": divergent,
        "max_depth_hit": depth >= max_depth and tree.valid,
        "accepted": chosen is not start,
    }
    return State(chosen.theta, chosen.p, chosen.logp, chosen.grad), info


class DualAveraging:
    """Nesterov dual averaging of log step size towards a target acceptance."""

    def __init__(self, initial_step, target_accept=0.8, gamma=0.05, t0=10.0, kappa=0.75, min_step=None):
        self.mu = math.log(10.0 * initial_step)
        self.log_floor = math.log(min_step) if min_step else -math.inf
        self.target = target_accept
        self.gamma, self.t0, self.kappa = gamma, t0, kappa
        self.log_step = math.log(initial_step)
        self.log_step_bar = 0.0
        self.h_bar = 0.0
        self.t = 0

    def update(self, accept_stat):
        self.t += 1
        eta = 1.0 / (self.t + self.t0)
        self.h_bar = (1.0 - eta) * self.h_bar + eta * (self.target - accept_stat)
        self.log_step = max(self.mu - math.sqrt(self.t) / self.gamma * self.h_bar, self.log_floor)
        w = self.t ** (-self.kappa)
        self.log_step_bar = w * self.log_step + (1.0 - w) * self.log_step_bar
        return math.exp(self.log_step)

    @property
    def step(self):
        return math.exp(self.log_step)

    @property
    def final_step(self):
        return math.exp(self.log_step_bar) if self.t else self.step


def adapt_step_size(accept_history, target_accept, initial_step=1.0):
    """Step-size schedule produced by dual averaging over ``accept_history``.

    Returns ``(schedule, final_step)``; ``schedule[t]`` is the step used after
    the ``t``-th update.
    """
    da = DualAveraging(initial_step, target_accept)
    schedule = [da.update(a) for a in accept_history]
    return schedule, da.final_step


def find_reasonable_step(logp_grad, state, rng, initial=1.0, max_iter=50):
    """Double or halve the step until one leapfrog acceptance crosses 1/2."""
    step = initial
    p0 = rng.standard_normal(state.theta.size)
    h0 = _hamiltonian(state.logp, p0)

    def log_accept(eps):
        _, p, logp, grad = leapfrog(logp_grad, state.theta, p0, eps, state.grad)
        if grad is None:
            return -math.inf
        return h0 - _hamiltonian(logp, p)

    la = log_accept(step)
    direction = 1.0 if la > math.log(0.5) else -1.0
    for _ in range(max_iter):
        if direction * la <= direction * math.log(0.5):
            break
        step *= 2.0**direction
        la = log_accept(step)
    return step


def sample_chain(logp_grad, theta0, cfg, rng=None, noisy=False):
    """Run warmup plus ``cfg.n_samples`` draws from ``theta0``.

    ``noisy`` marks a stochastic ``logp_grad``: the current point is then
    re-evaluated at the start of every transition instead of reusing the value
    from the step that produced it, and the adapted step size is kept within
    ``cfg.min_step_ratio`` of the initial one.
    """
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    theta0 = np.asarray(theta0, dtype=float).copy()
    logp, grad = _evaluate(logp_grad, theta0)
    if grad is None:
        raise NonFiniteValue("log density is not finite at the initial point")
    state = State(theta0, np.zeros_like(theta0), logp, grad)
    step = cfg.step_size if cfg.step_size is not None else find_reasonable_step(logp_grad, state, rng)
    adapter = None
    if cfg.adapt_step_size and cfg.warmup:
        floor = step * cfg.min_step_ratio if noisy else None
        adapter = DualAveraging(step, cfg.target_accept, min_step=floor)

    def transition(st, eps):
        if noisy:
            lp, g = _evaluate(logp_grad, st.theta)
            if g is not None:
                st = State(st.theta, st.p, lp, g)
        if cfg.algorithm == "nuts":
            return nuts_draw(logp_grad, st, eps, cfg.max_tree_depth, rng, cfg.divergence_threshold)
        if cfg.step_jitter:
            # jitter breaks the periodic orbits HMC falls into on Gaussian-like targets
            eps = eps * rng.uniform(1.0 - cfg.step_jitter, 1.0 + cfg.step_jitter)
        return hmc_draw(logp_grad, st, eps, cfg.leapfrog_steps, rng, cfg.divergence_threshold)

    warm_accept = np.zeros(cfg.warmup)
    for t in range(cfg.warmup):
        state, info = transition(state, step)
        warm_accept[t] = info["accept_stat"]
        if adapter is not None:
            step = adapter.update(info["accept_stat"])
    if adapter is not None:
        step = adapter.final_step

    K, P = cfg.n_samples, theta0.size
    out = PosteriorSamples(
        samples=np.zeros((K, P)),
        logp=np.zeros(K),
        accept_stat=np.zeros(K),
        tree_depth=np.zeros(K, dtype=int),
        n_leapfrog=np.zeros(K, dtype=int),
        divergent=np.zeros(K, dtype=bool),
        step_size=step,
        warmup_accept_stat=warm_accept,
    )
    for k in range(K):
        state, info = transition(state, step)
        out.samples[k] = state.theta
        out.logp[k] = state.logp
        out.accept_stat[k] = info["accept_stat"]
        out.tree_depth[k] = info["tree_depth"]
        out.n_leapfrog[k] = info["n_leapfrog"]
        out.divergent[k] = info["divergent"]
    return out


def run_chain(spec, data, provider, cfg, theta0=None):
    """Posterior samples of a BNN whose passes go through ``provider``.

    The initial point is drawn with ``sample_prior`` from a stream derived from
    ``cfg.seed``; the transition randomness uses a sibling stream, so the chain
    does not depend on how much randomness the provider consumes.
    """
    from .bnn import log_posterior_and_grad, sample_prior

    init_seq, mcmc_seq = np.random.SeedSequence(cfg.seed).spawn(2)
    if theta0 is None:
        theta0 = sample_prior(spec, np.random.default_rng(init_seq))

    def logp_grad(theta):
        return log_posterior_and_grad(spec, theta, data, provider)

    calls_before = provider.calls
    result = sample_chain(logp_grad, theta0, cfg, np.random.default_rng(mcmc_seq), noisy=provider.is_quantum)
    result.provider_calls = provider.calls - calls_before
    return result
