"""Experiment orchestration over the four inference/prediction mode combinations.

A mode string such as ``"QICP"`` says which stage uses the quantum oracle:
the first letter for inference (the MCMC chain), the third for prediction
(the posterior-predictive forward passes). ``CICP`` is the fully classical
reference every other mode is compared against.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import cost
from .bnn import IpeProvider, MlpArchitecture, ModelSpec, _log_likelihood_terms, forward_batch
from .data import gen_binclass, gen_linreg, load_csv_dataset, split_dataset
from .errors import ConfigError, EmptyInput
from .ipe import IpeParams, outcome_distribution, sample_from_dots
from .sampler import SamplerConfig, run_chain

log = logging.getLogger(__name__)

MODES = ("CICP", "CIQP", "QICP", "QIQP")
TASKS = ("linreg", "binclass", "csv-regression")


@dataclass
class ExperimentConfig:
    task: str = "linreg"
    mode: str = "CICP"
    qubits: int | None = None
    repetitions: int = 1
    hidden: list = field(default_factory=lambda: [5, 5])
    prior_scale: float = 1.0
    likelihood_scale: float = 0.1
    init_rank: int | None = None
    n_samples: int = 200
    warmup: int = 200
    algorithm: str = "nuts"
    max_tree_depth: int = 6
    target_accept: float = 0.8
    step_size: float | None = None
    leapfrog_steps: int = 10
    seed: int = 0
    train_fraction: float = 0.8
    n_splits: int = 1
    data_path: str | None = None
    standardize: bool = True
    n_points: int = 40
    slope: float = 1.0
    intercept: float = 0.0
    noise_std: float = 0.1
    x_range: list = field(default_factory=lambda: [-1.0, 1.0])
    points_per_class: int = 20
    centers: list = field(default_factory=lambda: [[-1.0, -1.0], [1.0, 1.0]])
    spread: float = 0.5
    grid_points: int = 50
    force_classical: bool = False
    out_dir: str | None = None

    @classmethod
    def field_names(cls):
        return [f.name for f in dataclasses.fields(cls)]

    @classmethod
    def from_dict(cls, values):
        known = set(cls.field_names())
        for key in values:
            if key not in known:
                raise ConfigError(key, "unknown configuration key")
        cfg = cls(**values)
        cfg.validate()
        return cfg

    def to_dict(self):
        return dataclasses.asdict(self)

    @property
    def quantum_inference(self):
        return self.mode[0] == "Q"

    @property
    def quantum_prediction(self):
        return self.mode[2] == "Q"

    def validate(self):
        self.mode = str(self.mode).upper()
        if self.mode not in MODES:
            raise ConfigError("mode", f"must be one of {', '.join(MODES)}")
        if self.task not in TASKS:
            raise ConfigError("task", f"must be one of {', '.join(TASKS)}")
        if (self.quantum_inference or self.quantum_prediction) and self.qubits is None:
            raise ConfigError("qubits", f"mode {self.mode} has a quantum stage and needs qubits")
        if self.qubits is not None:
            _check_int(self, "qubits", 1, 24)
        _check_int(self, "repetitions", 1)
        if self.repetitions % 2 == 0 and self.repetitions > 1:
            raise ConfigError("repetitions", "must be odd")
        if not self.hidden or any(int(h) != h or h < 1 for h in self.hidden):
            raise ConfigError("hidden", "must be a non-empty list of positive widths")
        for key in ("prior_scale", "likelihood_scale", "spread"):
            value = getattr(self, key)
            if not isinstance(value, (int, float)) or value < 0 or (value == 0 and key != "spread"):
                raise ConfigError(key, "must be positive")
        _check_int(self, "n_samples", 0)
        _check_int(self, "warmup", 0)
        _check_int(self, "n_splits", 1)
        _check_int(self, "seed", 0)
        _check_int(self, "grid_points", 1)
        _check_int(self, "max_tree_depth", 1, 12)
        if self.algorithm not in ("nuts", "hmc"):
            raise ConfigError("algorithm", "must be 'nuts' or 'hmc'")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("train_fraction", "must lie strictly between 0 and 1")
        if not 0.0 < self.target_accept < 1.0:
            raise ConfigError("target_accept", "must lie strictly between 0 and 1")
        if self.task == "csv-regression" and not self.data_path:
            raise ConfigError("data_path", "csv-regression needs a data file")
        if self.init_rank is not None:
            _check_int(self, "init_rank", 1)
        return self

    def model_spec(self, n_inputs):
        output = "classification" if self.task == "binclass" else "regression"
        arch = MlpArchitecture((n_inputs, *[int(h) for h in self.hidden], 1), output)
        return ModelSpec(arch, self.prior_scale, self.init_rank, self.likelihood_scale)

    def sampler_config(self, seed):
        return SamplerConfig(
            n_samples=self.n_samples,
            warmup=self.warmup,
            algorithm=self.algorithm,
            step_size=self.step_size,
            leapfrog_steps=self.leapfrog_steps,
            max_tree_depth=self.max_tree_depth,
            target_accept=self.target_accept,
            seed=seed,
        )


def _check_int(cfg, key, lo, hi=None):
    value = getattr(cfg, key)
    if isinstance(value, bool) or not isinstance(value, int) or value < lo or (hi is not None and value > hi):
        bound = f"[{lo}, {hi}]" if hi is not None else f">= {lo}"
        raise ConfigError(key, f"must be an integer {bound}, got {value!r}")


@dataclass
class PredictiveSummary:
    mean: np.ndarray
    std: np.ndarray
    draws: np.ndarray  # K x M network outputs (values or logits)


def posterior_predictive(spec, samples, X, provider=None):
    """Per-point predictive mean and population std over the posterior samples.

    Regression summarises the network output; classification summarises the
    class-1 probability. Every (sample, point) pair is one forward pass.
    """
    samples = samples.samples if hasattr(samples, "samples") else np.atleast_2d(samples)
    provider = provider or IpeProvider.classical()
    X = np.asarray(X, dtype=float)
    draws = np.stack([forward_batch(spec, theta, X, provider)[-1][:, 0] for theta in samples]) if len(samples) else np.zeros((0, X.shape[0]))
    values = draws if spec.likelihood == "gaussian" else np.exp(-np.logaddexp(0.0, -draws))
    if values.shape[0] == 0:
        nan = np.full(X.shape[0], np.nan)
        return PredictiveSummary(nan, nan, draws)
    return PredictiveSummary(values.mean(axis=0), values.std(axis=0), draws)


def point_log_predictive(spec, draws, targets):
    """``log((1/K) sum_i p(y | theta_i))`` per point, via log-sum-exp."""
    draws = np.atleast_2d(draws)
    ll, _ = _log_likelihood_terms(spec, draws, np.asarray(targets, dtype=float)[None, :])
    K = draws.shape[0]
    peak = ll.max(axis=0)
    return peak + np.log(np.exp(ll - peak).sum(axis=0)) - math.log(K)


def log_likelihood_metric(spec, split_draws, split_targets, target_scales=None):
    """Mean predictive log-likelihood per split, then mean and standard error.

    ``target_scales`` converts standardised-target log densities back to the
    original units (subtracting ``log(scale)``).
    """
    if not split_draws:
        raise EmptyInput("no splits to evaluate")
    per_split = []
    for s, (draws, targets) in enumerate(zip(split_draws, split_targets)):
        lp = point_log_predictive(spec, draws, targets)
        if lp.size == 0:
            raise EmptyInput(f"split {s} has no test points")
        value = float(lp.mean())
        if target_scales is not None and spec.likelihood == "gaussian":
            value -= math.log(target_scales[s])
        per_split.append(value)
    per_split = np.asarray(per_split)
    stderr = float(per_split.std(ddof=1) / math.sqrt(per_split.size)) if per_split.size > 1 else 0.0
    return float(per_split.mean()), stderr, per_split


def _derived_seeds(seed, split):
    """Independent integer seeds for each random consumer of one split."""
    seq = np.random.SeedSequence([int(seed), int(split)])
    chain, qi, qp = (int(s.generate_state(1, np.uint64)[0] >> np.uint64(1)) for s in seq.spawn(3))
    return {"chain": chain, "qi": qi, "qp": qp}


def build_dataset(cfg):
    rng = np.random.default_rng(np.random.SeedSequence([int(cfg.seed), 0xDA7A]))
    if cfg.task == "linreg":
        return gen_linreg(cfg.n_points, cfg.slope, cfg.intercept, cfg.noise_std, tuple(cfg.x_range), rng)
    if cfg.task == "binclass":
        return gen_binclass(cfg.points_per_class, cfg.centers, cfg.spread, rng)
    return load_csv_dataset(cfg.data_path, cfg.standardize)


def prediction_grid(cfg, data, test):
    """Inputs at which the predictive mean/std is written out."""
    if cfg.task == "linreg":
        return np.linspace(cfg.x_range[0], cfg.x_range[1], cfg.grid_points)[:, None]
    if cfg.task == "binclass":
        lo = data.inputs.min(axis=0) - 0.5
        hi = data.inputs.max(axis=0) + 0.5
        axes = [np.linspace(a, b, cfg.grid_points) for a, b in zip(lo, hi)]
        mesh = np.meshgrid(*axes, indexing="xy")
        return np.column_stack([m.ravel() for m in mesh])
    return test.inputs


def _provider(quantum, cfg, seed):
    if quantum and not cfg.force_classical:
        return IpeProvider.quantum(IpeParams(cfg.qubits, cfg.repetitions), seed)
    return IpeProvider.classical()


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    metrics: dict
    cost_report: cost.CostReport
    grid_inputs: np.ndarray
    grid: PredictiveSummary
    chains: list
    split_loglik: np.ndarray
    files: dict = field(default_factory=dict)


def _inference_key(cfg, split):
    quantum = cfg.quantum_inference and not cfg.force_classical
    return (cfg.seed, split, cfg.qubits if quantum else None, cfg.repetitions if quantum else None)


def run_experiment(cfg, reference=None, cache=None, write=True):
    """Run inference and prediction for every split, then score and report.

    ``reference`` is a CICP :class:`ExperimentResult` for the same data and
    seed; it is computed on the fly when missing. ``cache`` may be shared
    between calls to reuse chains whose inference stage is identical.
    """
    cfg.validate()
    cache = {} if cache is None else cache
    data = build_dataset(cfg)
    spec = cfg.model_spec(data.inputs.shape[1])
    split_draws, split_targets, scales, chains = [], [], [], []
    qp_errors, qi_errors = [], []
    grid_inputs = grid = None
    first_train = first_test = None
    qp_calls = 0
    for s in range(cfg.n_splits):
        train, test = split_dataset(data, cfg.train_fraction, s, cfg.seed)
        seeds = _derived_seeds(cfg.seed, s)
        key = _inference_key(cfg, s)
        if key in cache:
            chain, qi_err = cache[key]
        else:
            qi = _provider(cfg.quantum_inference, cfg, seeds["qi"])
            log.info("split %d: %s inference", s, qi.kind)
            chain = run_chain(spec, train, qi, cfg.sampler_config(seeds["chain"]))
            qi_err = qi.recorded_errors()
            cache[key] = (chain, qi_err)
        chains.append(chain)
        qi_errors.append(qi_err)
        qp = _provider(cfg.quantum_prediction, cfg, seeds["qp"])
        pred = posterior_predictive(spec, chain, test.inputs, qp)
        split_draws.append(pred.draws)
        split_targets.append(test.targets)
        scales.append(test.meta.get("target_scale", 1.0))
        if s == 0:
            first_train, first_test = train, test
            grid_inputs = prediction_grid(cfg, data, test)
            grid = pred if cfg.task == "csv-regression" else posterior_predictive(spec, chain, grid_inputs, qp)
        qp_calls += qp.calls
        qp_errors.append(qp.recorded_errors())

    mean_ll, stderr_ll, per_split = log_likelihood_metric(spec, split_draws, split_targets, scales)
    if cfg.mode == "CICP":
        rmse_ref = 0.0
    else:
        if reference is None:
            ref_cfg = dataclasses.replace(cfg, mode="CICP", out_dir=None)
            reference = run_experiment(ref_cfg, cache=cache, write=False)
        rmse_ref = float(np.sqrt(np.mean((grid.mean - reference.grid.mean) ** 2)))

    report = _cost_report(cfg, spec, chains[0], first_train, first_test, qi_errors, qp_errors)
    metrics = {
        "mean_loglik": mean_ll,
        "stderr_loglik": stderr_ll,
        "rmse_vs_reference": rmse_ref,
        "task": cfg.task,
        "mode": cfg.mode,
        "qubits": cfg.qubits,
        "seed": cfg.seed,
        "n_splits": cfg.n_splits,
        "n_samples": cfg.n_samples,
        "split_loglik": [float(v) for v in per_split],
        "divergences": int(sum(int(c.divergent.sum()) for c in chains)),
        "mean_accept_stat": float(np.mean([c.accept_stat.mean() if c.n_samples else 0.0 for c in chains])),
        "step_sizes": [float(c.step_size) for c in chains],
        "inference_provider_calls": int(sum(c.provider_calls for c in chains)),
        "prediction_provider_calls": int(qp_calls),
    }
    result = ExperimentResult(cfg, metrics, report, grid_inputs, grid, chains, per_split)
    if write and cfg.out_dir:
        result.files = write_outputs(result, cfg.out_dir)
    return result


def _cost_report(cfg, spec, chain, train, test, qi_errors, qp_errors):
    arch = spec.architecture
    K, N, M = chain.n_samples, len(train), len(test)
    if K and N:
        r_terms = cost.compute_R(cost.collect_run_telemetry(spec, chain.samples, train))
    else:
        r_terms = {"r_a": 0.0, "r_delta": 0.0, "r_w": 0.0, "r": 0.0}
    r_e = cost.mean_prediction_Re(spec, chain.samples, test.inputs)
    errors = np.concatenate([e for e in qi_errors + qp_errors if e.size] or [np.zeros(0)])
    eps_by_n, epsilon = {}, None
    if errors.size and cfg.qubits is not None and not cfg.force_classical:
        eps_by_n = cost.empirical_epsilon({cfg.qubits: errors})
        epsilon = eps_by_n[cfg.qubits]["mean"] or None
    return cost.runtime_report(
        arch.omega, arch.n_params, K, N, M, r_terms, r_e,
        epsilon=epsilon, qubits=cfg.qubits, epsilon_by_qubits=eps_by_n,
    )


def _fmt(x):
    return repr(float(x))


def write_outputs(result, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "predictive_grid": out / "predictive_grid.csv",
        "metrics": out / "metrics.json",
        "cost_report": out / "cost_report.json",
        "samples": out / "posterior_samples.csv",
    }
    X = result.grid_inputs
    with open(files["predictive_grid"], "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"x{i}" for i in range(X.shape[1])] + ["mean", "std"])
        for x, m, s in zip(X, result.grid.mean, result.grid.std):
            writer.writerow([_fmt(v) for v in x] + [_fmt(m), _fmt(s)])
    _write_text(files["metrics"], json.dumps(result.metrics, indent=2) + "\n")
    _write_text(files["cost_report"], result.cost_report.to_json())
    result.chains[0].write_csv(files["samples"])
    return {k: str(v) for k, v in files.items()}


def _write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def ipe_noise_scan(n, x_grid, samples_per_x, rng, other=(1.0, 0.5)):
    """Noisy estimates of ``(x, 1) . other`` across ``x_grid``.

    Returns ``(rows, exact)``: ``rows`` are ``(x, estimate)`` pairs in grid
    order, ``exact`` maps each x to its distribution aggregated by value as
    ``(values, probabilities)``.
    """
    x_grid = np.asarray(x_grid, dtype=float).ravel()
    if x_grid.size == 0:
        raise EmptyInput("noise scan grid is empty")
    params = IpeParams(n)
    other = np.asarray(other, dtype=float)
    exact, dots, norms = {}, [], []
    for x in x_grid:
        dist = outcome_distribution(np.array([x, 1.0]), other, params)
        values, inverse = np.unique(dist.values, return_inverse=True)
        exact[float(x)] = (values, np.bincount(inverse, weights=dist.probabilities))
        dots.append(dist.true_inner_product)
        norms.append(dist.norms_product)
    est = sample_from_dots(
        np.repeat(dots, samples_per_x), np.repeat(norms, samples_per_x), params, rng
    )
    rows = list(zip(np.repeat(x_grid, samples_per_x).tolist(), est.tolist()))
    return rows, exact


def write_noise_scan(rows, exact, path):
    """Write ``(x, estimate)`` rows plus an ``*_exact.csv`` sidecar next to them."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "estimate"])
        for x, e in rows:
            writer.writerow([_fmt(x), _fmt(e)])
    sidecar = path.with_name(path.stem + "_exact.csv")
    with open(sidecar, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "value", "probability"])
        for x, (values, probs) in exact.items():
            for v, p in zip(values, probs):
                writer.writerow([_fmt(x), _fmt(v), _fmt(p)])
    return str(path), str(sidecar)


def expand_grid(base, modes, qubits, seeds):
    """Cells of a mode x qubits x seed sweep; classical-only cells ignore qubits."""
    cells = []
    for seed in seeds:
        for mode in modes:
            mode = mode.upper()
            qs = [None] if mode == "CICP" else list(qubits)
            for q in qs:
                name = f"{mode.lower()}_n{q}_s{seed}" if q is not None else f"{mode.lower()}_s{seed}"
                out = os.path.join(base.out_dir, name) if base.out_dir else None
                cells.append((name, dataclasses.replace(base, mode=mode, qubits=q, seed=seed, out_dir=out)))
    return cells


def _run_seed_group(cfgs):
    cache, reference = {}, None
    results = []
    for cfg in sorted(cfgs, key=lambda c: (c.mode != "CICP", c.mode, c.qubits or 0)):
        if cfg.mode == "CICP":
            reference = run_experiment(cfg, cache=cache)
            results.append(reference)
        else:
            if reference is None:
                reference = run_experiment(dataclasses.replace(cfg, mode="CICP", qubits=None, out_dir=None), cache=cache, write=False)
            results.append(run_experiment(cfg, reference=reference, cache=cache))
    return [(r.config.out_dir, r.metrics) for r in results]


def run_grid(base, modes, qubits, seeds, jobs=1):
    """Run every cell; cells sharing a seed share the CICP reference and chains."""
    cells = expand_grid(base, modes, qubits, seeds)
    groups = {}
    for _, cfg in cells:
        groups.setdefault(cfg.seed, []).append(cfg)
    ordered = [groups[s] for s in sorted(groups)]
    if jobs > 1 and len(ordered) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outputs = list(pool.map(_run_seed_group, ordered))
    else:
        outputs = [_run_seed_group(g) for g in ordered]
    summary = sorted((item for group in outputs for item in group), key=lambda t: str(t[0]))
    return summary
