"""Parameter checks shared by the estimator wrappers."""

import numbers

import numpy as np


def check_positive(name, value, integer=False):
    kind = numbers.Integral if integer else numbers.Real
    if isinstance(value, bool) or not isinstance(value, kind) or not value > 0:
        what = "a positive integer" if integer else "positive"
        raise ValueError(f"{name} must be {what}, got {value!r}")
    return value


def check_choice(name, value, choices):
    if value not in choices:
        raise ValueError(f"{name} must be one of {tuple(choices)}, got {value!r}")
    return value


def binary_targets(y):
    """Map two class labels to -1/+1. Returns ``(classes, signs)``."""
    classes, idx = np.unique(y, return_inverse=True)
    if len(classes) != 2:
        raise ValueError(f"binary classification only; got {len(classes)} classes")
    return classes, np.where(idx == 1, 1.0, -1.0)


def split_streams(X, n_nodes, seed):
    """Shuffle rows and deal them into ``n_nodes`` equal-length streams.

    The ``len(X) % n_nodes`` rows left over after the shuffle are not used.
    Returns an ``(n_nodes, T)`` array of row indices.
    """
    m = len(X)
    T = m // n_nodes
    if T < 1:
        raise ValueError(f"{m} samples cannot feed {n_nodes} nodes")
    order = np.random.default_rng(seed).permutation(m)[: n_nodes * T]
    return order.reshape(n_nodes, T)
