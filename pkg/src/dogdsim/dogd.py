"""Distributed online gradient descent with round-wise step halving.

Every node keeps an accumulated-gradient variable ``z_i`` and a feasible
iterate ``w_i = proj(z_i)``. A step mixes the neighbours' accumulators through
the consensus matrix and subtracts the local subgradient. Rounds run ``T_k``
steps at step size ``a_k``; at the end of a round each node reports the
average of the round's iterates and restarts its accumulator from its last
iterate. With the default factors ``T_{k+1} = 2 T_k`` and ``a_{k+1} = a_k / 2``.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .objectives import noisy_oracle

MODES = ("online", "batch", "stochastic")
Z_RESETS = ("project", "carry")


class AssumptionViolation(ValueError):
    """A subgradient exceeded the declared bound ``L``."""


@dataclass(frozen=True)
class RoundSchedule:
    """Round lengths and step sizes fitting in a budget of ``T`` steps per node.

    ``rounds`` lists ``(T_k, a_k)``. In strict mode only complete rounds are
    kept; with ``partial_final_round`` the leftover steps form one truncated
    extra round at the next step size.
    """

    T1: int
    a1: float
    b: float
    c: int
    T: int
    rounds: tuple
    partial_final_round: bool = False

    @property
    def k_total(self):
        return len(self.rounds)

    @property
    def used(self):
        return sum(T_k for T_k, _ in self.rounds)

    @property
    def round_ends(self):
        return np.cumsum([T_k for T_k, _ in self.rounds]).tolist()


def make_schedule(sigma, T, b=2, c=2, a1=1.0, T1=None, partial_final_round=False):
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    T1 = math.ceil(2.0 / sigma) if T1 is None else int(T1)
    c = int(c)
    if c < b:
        raise ValueError(f"round growth c={c} must be >= step shrink b={b}")
    if not sigma * a1 * T1 > 1:
        raise ValueError(f"need sigma * a1 * T1 > 1, got {sigma * a1 * T1}")
    if T < T1:
        raise ValueError(f"budget T={T} is smaller than the first round T1={T1}: zero rounds")
    rounds = []
    T_k, a_k, used = T1, float(a1), 0
    while used + T_k <= T:
        rounds.append((T_k, a_k))
        used += T_k
        T_k, a_k = c * T_k, a_k / b
    if partial_final_round and used < T:
        rounds.append((T - used, a_k))
    return RoundSchedule(T1, float(a1), b, c, int(T), tuple(rounds), partial_final_round)


@dataclass
class NetworkState:
    """Stacked per-node state; row ``i`` belongs to node ``i``."""

    z: np.ndarray
    w: np.ndarray
    w_hat_accum: np.ndarray
    steps_in_round: int = 0

    @property
    def n(self):
        return self.z.shape[0]


def init_state(feasible, n):
    """``z = w = 0``, or ``proj(0)`` when the origin is not feasible."""
    w = np.tile(feasible.project(np.zeros(feasible.dim)), (n, 1))
    return NetworkState(w.copy(), w, np.zeros_like(w))


def ordered_mean(Z):
    """Mean over nodes, summed in node-index order."""
    acc = Z[0].copy()
    for row in Z[1:]:
        acc += row
    return acc / Z.shape[0]


def check_grad_bound(grads, L, tol=1e-9):
    if L is None:
        return
    norms = np.linalg.norm(grads, axis=1)
    i = int(np.argmax(norms))
    if norms[i] > L + tol:
        raise AssumptionViolation(f"node {i}: subgradient norm {norms[i]:.6g} exceeds L={L:.6g}")


def dogd_step(state, P, grads, a_k, feasible, L=None):
    """One synchronous step: ``z_i <- sum_j p_ij z_j - a_k g_i``, ``w_i <- proj(z_i)``.

    ``grads[i]`` must have been evaluated at ``state.w[i]``. The new iterate
    is added to the round accumulator.
    """
    p = getattr(P, "p", P)
    grads = np.asarray(grads, dtype=float)
    check_grad_bound(grads, L)
    z = p @ state.z - a_k * grads
    w = feasible.project(z)
    return NetworkState(z, w, state.w_hat_accum + w, state.steps_in_round + 1)


def round_boundary(state, T_k, z_reset="project"):
    """Close a round. Returns the restarted state and the round averages."""
    if state.steps_in_round != T_k:
        raise ValueError(f"round has {state.steps_in_round} steps, expected {T_k}")
    if z_reset not in Z_RESETS:
        raise ValueError(f"z_reset must be one of {Z_RESETS}")
    w_hat = state.w_hat_accum / T_k
    w = state.w.copy()
    z = w.copy() if z_reset == "project" else state.z.copy()
    return NetworkState(z, w, np.zeros_like(w), 0), w_hat


@dataclass
class RoundRecord:
    k: int
    T_k: int
    a_k: float
    start: int
    end: int
    w_hat: np.ndarray
    z_restart_norm: float


@dataclass
class RunTrace:
    """Step-level record of a distributed run.

    For global step ``s`` (0-based): ``w_pre[s]`` is the iterate each node
    evaluates its subgradient at, ``w_post[s]`` the projected result,
    ``losses[s, i]`` the node's cost at ``w_pre``, ``net_err[s, i]`` the
    network error ``||z_i - zbar||`` before the step and ``net_err_post[s, i]``
    after it,
    ``consensus_residual[s]`` the deviation of the average accumulator from
    its closed-form recursion.
    """

    algorithm: str
    w_pre: np.ndarray
    w_post: np.ndarray
    losses: np.ndarray
    net_err: np.ndarray
    net_err_post: np.ndarray
    consensus_residual: np.ndarray
    grad_norm_max: np.ndarray
    round_of_step: np.ndarray
    in_round_t: np.ndarray
    rounds: list = field(default_factory=list)
    w_avg: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_steps(self):
        return len(self.w_pre)

    @property
    def n(self):
        return self.w_pre.shape[1]

    def checkpoints(self, steps=None):
        """``(steps, estimates)`` pairs used for gap series.

        DOGD reports its round averages at round ends; algorithms with a
        running average report it at the requested ``steps``.
        """
        if self.rounds and steps is None:
            return [(r.end, r.w_hat) for r in self.rounds]
        if self.w_avg is None:
            raise ValueError("trace has no running average")
        steps = [self.n_steps] if steps is None else steps
        return [(s, self.w_avg[s - 1]) for s in steps if 1 <= s <= self.n_steps]


def make_gradient_oracle(spec, streams, mode="online", noise=None):
    """Return ``oracle(step, W) -> (grads, losses)`` for all nodes at once."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    X, y = streams.X, streams.y
    n = streams.n

    if mode == "batch":
        def oracle(step, W):
            grads = np.stack([spec.batch_grad(W[i], X[i], None if y is None else y[i])
                              for i in range(n)])
            losses = np.array([spec.batch_value(W[i], X[i], None if y is None else y[i])[0]
                               for i in range(n)])
            return grads, losses
        return oracle

    def oracle(step, W):
        if step >= streams.T:
            raise ValueError(f"stream exhausted at step {step} (T={streams.T})")
        Xt = X[:, step]
        yt = None if y is None else y[:, step]
        grads = spec.grads(W, Xt, yt)
        if mode == "stochastic" and noise is not None and noise.kind != "none":
            grads = np.stack([noisy_oracle(grads[i], noise, i, step) for i in range(n)])
        return grads, spec.losses(W, Xt, yt)

    return oracle


def _net_err(Z):
    zbar = ordered_mean(Z)
    return np.linalg.norm(Z - zbar, axis=1), zbar


def dogd_run(spec, streams, P, schedule, noise=None, mode="online", L=None, z_reset="project"):
    """Run every round of ``schedule`` on all nodes. Deterministic in its inputs."""
    p = getattr(P, "p", P)
    n = p.shape[0]
    if streams.n != n:
        raise ValueError(f"{streams.n} streams for {n} nodes")
    if mode != "batch" and streams.T < schedule.used:
        raise ValueError(f"streams hold {streams.T} points per node, schedule needs {schedule.used}")
    if mode == "stochastic" and noise is None:
        raise ValueError("stochastic mode needs a noise model")
    L = spec.L if L is None else L
    oracle = make_gradient_oracle(spec, streams, mode, noise)
    feasible = spec.feasible
    S, d = schedule.used, streams.d

    w_pre = np.empty((S, n, d))
    w_post = np.empty((S, n, d))
    losses = np.empty((S, n))
    net_err = np.empty((S, n))
    net_err_post = np.empty((S, n))
    residual = np.empty(S)
    gmax = np.empty(S)
    round_of_step = np.empty(S, dtype=int)
    in_round_t = np.empty(S, dtype=int)
    rounds = []

    state = init_state(feasible, n)
    s = 0
    for k, (T_k, a_k) in enumerate(schedule.rounds, start=1):
        start = s
        for t in range(1, T_k + 1):
            grads, losses[s] = oracle(s, state.w)
            w_pre[s] = state.w
            err, zbar = _net_err(state.z)
            net_err[s] = err
            new = dogd_step(state, p, grads, a_k, feasible, L)
            err_post, zbar_new = _net_err(new.z)
            net_err_post[s] = err_post
            residual[s] = np.linalg.norm(zbar_new - (zbar - a_k * ordered_mean(grads)))
            gmax[s] = np.max(np.linalg.norm(grads, axis=1))
            w_post[s] = new.w
            round_of_step[s], in_round_t[s] = k, t
            state = new
            s += 1
        state, w_hat = round_boundary(state, T_k, z_reset)
        rounds.append(RoundRecord(k, T_k, a_k, start, s, w_hat,
                                  float(np.max(np.linalg.norm(state.z, axis=1)))))

    return RunTrace("dogd", w_pre, w_post, losses, net_err, net_err_post, residual, gmax,
                    round_of_step, in_round_t, rounds,
                    meta={"mode": mode, "z_reset": z_reset, "L": L})
