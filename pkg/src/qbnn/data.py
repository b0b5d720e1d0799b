"""Synthetic task generators, CSV ingestion and train/test splitting."""

from __future__ import annotations

import csv
import math

import numpy as np

from .bnn import Dataset
from .errors import DegenerateCenters, EmptyFile, ParseError, TooFewRows


def gen_linreg(n_points, slope=1.0, intercept=0.0, noise_std=0.1, x_range=(-1.0, 1.0), rng=None, x=None):
    """``y = slope * x + intercept + N(0, noise_std^2)``, x uniform on ``x_range``.

    Pass ``x`` to fix the inputs instead of drawing them.
    """
    if noise_std < 0:
        raise ValueError("noise_std must be non-negative")
    rng = rng if rng is not None else np.random.default_rng(0)
    if x is None:
        if n_points < 1:
            raise ValueError("n_points must be positive")
        x = rng.uniform(x_range[0], x_range[1], n_points)
    x = np.asarray(x, dtype=float).ravel()
    y = slope * x + intercept
    if noise_std > 0:
        y = y + rng.normal(0.0, noise_std, x.size)
    return Dataset(x[:, None], y, {"task": "linreg"})


def gen_binclass(n_points_per_class, centers=((-1.0, -1.0), (1.0, 1.0)), spread=0.5, rng=None):
    """Two isotropic Gaussian blobs; rows of class 0 come first."""
    centers = np.asarray(centers, dtype=float)
    if centers.shape[0] != 2:
        raise ValueError("binary classification needs exactly two centers")
    if np.array_equal(centers[0], centers[1]):
        raise DegenerateCenters("class centers coincide")
    if spread < 0:
        raise ValueError("spread must be non-negative")
    rng = rng if rng is not None else np.random.default_rng(0)
    d = centers.shape[1]
    blobs = [c + spread * rng.standard_normal((n_points_per_class, d)) for c in centers]
    labels = np.repeat([0.0, 1.0], n_points_per_class)
    return Dataset(np.vstack(blobs), labels, {"task": "binclass"})


def _is_number(cell):
    try:
        float(cell)
    except ValueError:
        return False
    return True


def load_csv_dataset(path, standardize=False):
    """Numeric CSV, last column is the target, optional header row.

    Standardisation is only recorded here; :func:`split_dataset` fits it on
    each training portion.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise EmptyFile(f"{path} contains no rows")
    header = None
    if not any(_is_number(c) for c in rows[0]):
        header, rows = rows[0], rows[1:]
        if not rows:
            raise EmptyFile(f"{path} has a header but no data")
    width = len(rows[0])
    if width < 2:
        raise ParseError(2 if header else 1, 2, "need at least one input column and a target")
    offset = 2 if header else 1
    values = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        if len(row) != width:
            raise ParseError(i + offset, min(len(row), width) + 1, f"expected {width} columns, found {len(row)}")
        for j, cell in enumerate(row):
            try:
                values[i, j] = float(cell)
            except ValueError:
                raise ParseError(i + offset, j + 1, f"non-numeric cell {cell!r}") from None
            if not math.isfinite(values[i, j]):
                raise ParseError(i + offset, j + 1, f"non-finite cell {cell!r}")
    meta = {"task": "csv-regression", "standardize": bool(standardize), "source": str(path)}
    if header:
        meta["columns"] = [c.strip() for c in header]
    return Dataset(values[:, :-1], values[:, -1], meta)


def fit_standardizer(values):
    values = np.asarray(values, dtype=float)
    mean = values.mean(axis=0)
    std = values.std(axis=0)
    return mean, np.where(std > 0, std, 1.0)


def split_dataset(data, train_fraction, split_index, base_seed=0):
    """Shuffled train/test partition reproducible from ``(base_seed, split_index)``.

    If ``data.meta['standardize']`` is set, inputs and targets are scaled with
    statistics of the training part; the target scale lands in ``meta``.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    N = len(data)
    n_train = int(math.floor(train_fraction * N + 0.5))
    if n_train < 1 or n_train >= N:
        raise TooFewRows(f"{N} rows cannot be split {train_fraction:g}/{1 - train_fraction:g} with both parts non-empty")
    rng = np.random.default_rng([int(base_seed), int(split_index)])
    perm = rng.permutation(N)
    train_idx, test_idx = np.sort(perm[:n_train]), np.sort(perm[n_train:])
    train, test = data.subset(train_idx), data.subset(test_idx)
    train.meta["indices"] = train_idx
    test.meta["indices"] = test_idx
    if data.meta.get("standardize"):
        x_mean, x_std = fit_standardizer(train.inputs)
        y_mean, y_std = fit_standardizer(train.targets[:, None])
        for part in (train, test):
            part.inputs = (part.inputs - x_mean) / x_std
            part.targets = (part.targets - y_mean[0]) / y_std[0]
            part.meta["target_mean"] = float(y_mean[0])
            part.meta["target_scale"] = float(y_std[0])
    return train, test
