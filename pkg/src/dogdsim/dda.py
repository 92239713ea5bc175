"""Distributed dual averaging baseline with the squared-norm proximal function.

Nodes mix accumulated gradients, ``z_i <- sum_j p_ij z_j + g_i``, and recover
``w_i = argmin_W <z_i, w> + ||w||^2 / (2 a(t)) = proj(-a(t) z_i)`` with
``a(t) = A / sqrt(t)``. The reported estimate is each node's running average
of the points it evaluated subgradients at.
"""

from dataclasses import dataclass

import numpy as np

from .dogd import RunTrace, _net_err, check_grad_bound, make_gradient_oracle, ordered_mean


@dataclass
class DdaState:
    z: np.ndarray
    w: np.ndarray
    w_sum: np.ndarray
    t: int = 0

    @property
    def w_avg(self):
        return self.w_sum / self.t


def default_step_constant(radius, L, slem):
    """``sqrt(1 - sqrt(slem)) * R / L``."""
    return float(np.sqrt(1.0 - np.sqrt(slem)) * radius / L)


def dda_init(feasible, n):
    w = np.tile(feasible.project(np.zeros(feasible.dim)), (n, 1))
    return DdaState(np.zeros_like(w), w, np.zeros_like(w), 0)


def dda_step(state, P, grads, t, A, feasible, L=None):
    """Step ``t >= 1``: gradients ``grads`` were taken at ``state.w``."""
    if t < 1:
        raise ValueError("t counts from 1")
    p = getattr(P, "p", P)
    grads = np.asarray(grads, dtype=float)
    check_grad_bound(grads, L)
    z = p @ state.z + grads
    w = feasible.project(-(A / np.sqrt(t)) * z)
    return DdaState(z, w, state.w_sum + state.w, state.t + 1)


def dda_run(spec, streams, P, T, A=None, slem=None, noise=None, mode="online", L=None):
    p = getattr(P, "p", P)
    n = p.shape[0]
    L = spec.L if L is None else L
    if A is None:
        if L is None:
            raise ValueError("need L (or an explicit A) for the default step constant")
        slem = getattr(P, "slem", slem)
        if slem is None:
            raise ValueError("default step constant needs the consensus matrix slem")
        A = default_step_constant(spec.feasible.max_norm(), L, slem)
    if mode != "batch" and streams.T < T:
        raise ValueError(f"streams hold {streams.T} points per node, run needs {T}")
    oracle = make_gradient_oracle(spec, streams, mode, noise)
    feasible = spec.feasible
    d = streams.d

    w_pre = np.empty((T, n, d))
    w_post = np.empty((T, n, d))
    w_avg = np.empty((T, n, d))
    losses = np.empty((T, n))
    net_err = np.empty((T, n))
    net_err_post = np.empty((T, n))
    residual = np.empty(T)
    gmax = np.empty(T)

    state = dda_init(feasible, n)
    for s in range(T):
        grads, losses[s] = oracle(s, state.w)
        w_pre[s] = state.w
        err, zbar = _net_err(state.z)
        net_err[s] = err
        new = dda_step(state, p, grads, s + 1, A, feasible, L)
        err_post, zbar_new = _net_err(new.z)
        net_err_post[s] = err_post
        residual[s] = np.linalg.norm(zbar_new - (zbar + ordered_mean(grads)))
        gmax[s] = np.max(np.linalg.norm(grads, axis=1))
        w_post[s] = new.w
        w_avg[s] = new.w_avg
        state = new

    steps = np.arange(1, T + 1)
    return RunTrace("dda", w_pre, w_post, losses, net_err, net_err_post, residual, gmax,
                    np.zeros(T, dtype=int), steps, [], w_avg,
                    meta={"mode": mode, "A": A, "L": L})
