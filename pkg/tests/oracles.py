"""Independent reference computations shared by the tests."""

import math

import numpy as np

from qbnn.cost import RunTelemetry


def batch_means_mcse(x, n_batches=40):
    """Monte-Carlo standard error of the mean of each column via batch means."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    size = x.shape[0] // n_batches
    means = x[: size * n_batches].reshape(n_batches, size, -1).mean(axis=1)
    return means.std(axis=0, ddof=1) / math.sqrt(n_batches)


def conjugate_linreg_posterior(X, y, prior_scale, noise_scale):
    """Posterior mean and covariance of (w, b) for y = X w + b + noise."""
    A = np.hstack([X, np.ones((X.shape[0], 1))])
    precision = np.eye(A.shape[1]) / prior_scale**2 + A.T @ A / noise_scale**2
    cov = np.linalg.inv(precision)
    return cov @ A.T @ y / noise_scale**2, cov


def gaussian_logp_grad(mean, cov):
    prec = np.linalg.inv(cov)
    mean = np.asarray(mean, dtype=float)

    def f(theta):
        d = theta - mean
        return -0.5 * float(d @ prec @ d), -(prec @ d)

    return f


def log_mean_exp(values):
    """Brute force: exponentiate, average with exact summation, take the log."""
    return math.log(math.fsum(math.exp(v) for v in values) / len(values))


def random_telemetry(sizes, K, N, rng):
    L = len(sizes)
    pos = lambda *shape: rng.uniform(0.1, 2.0, shape)
    return RunTelemetry(
        tuple(sizes),
        act_norms=[pos(K, N) for _ in range(L - 1)],
        delta_norms=[pos(K, N) for _ in range(L - 1)],
        row_norms=[pos(K, sizes[i + 1]) for i in range(L - 1)],
        col_norms=[pos(K, sizes[i]) for i in range(L - 1)],
        history_row_norms=[pos(K, sizes[i + 1]) for i in range(L - 1)],
        history_col_norms=[pos(K, sizes[i]) for i in range(L - 1)],
    )


def brute_R(t):
    """Loop-by-loop re-summation, one term at a time."""
    s = t.layer_sizes
    K, N = t.n_samples, t.n_points
    denom = sum(s) - s[0]
    r_a = r_d = r_w = 0.0
    for k in range(K):
        for i in range(len(s) - 1):
            for j in range(s[i + 1]):
                for n in range(N):
                    r_a += t.history_row_norms[i][k, j] * t.act_norms[i][k, n]
                r_w += t.history_row_norms[i][k, j] / t.row_norms[i][k, j]
            for j in range(s[i]):
                for n in range(N):
                    r_d += t.history_col_norms[i][k, j] * t.delta_norms[i][k, n]
                r_w += t.history_col_norms[i][k, j] / t.col_norms[i][k, j]
    return r_a / (K * N * denom), r_d / (K * N * denom), r_w / (K * denom)
