"""Bayesian neural networks with simulated quantum inner-product estimation.

Inner products inside the network can be routed through a classical
simulation of amplitude-estimation-based inner product estimation (IPE),
whose outcome distribution is known in closed form.
"""

from .bnn import (
    Dataset,
    IpeProvider,
    MlpArchitecture,
    ModelSpec,
    forward,
    forward_batch,
    grad_log_posterior,
    jvp_inner_product,
    log_posterior,
    predict,
    sample_prior,
)
from .cost import CostReport, compute_R, compute_Re, empirical_epsilon, runtime_report
from .data import gen_binclass, gen_linreg, load_csv_dataset, split_dataset
from .errors import *  # noqa: F401,F403
from .harness import ExperimentConfig, ipe_noise_scan, posterior_predictive, run_experiment, run_grid
from .ipe import EstimateDistribution, IpeParams, outcome_distribution, sample_estimate
from .sampler import PosteriorSamples, SamplerConfig, hmc_draw, nuts_draw, run_chain

__version__ = "0.1.0"
