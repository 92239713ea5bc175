"""Optimality gaps, regret, network error and empirical rates for run traces."""

import math
from dataclasses import dataclass, field

import numpy as np

from ._io import write_csv
from .dogd import ordered_mean
from .serial_opt import cached_reference_optimum

HORIZONS = ("full", "prefix")


class ReferenceInvalidError(RuntimeError):
    """An estimate beat the reference optimum by more than its tolerance."""


@dataclass
class GapSeries:
    """Gaps ``F(w_hat) - F*`` at increasing step counts.

    ``per_node[j, i]`` is node ``i``'s gap at ``steps[j]``.
    """

    steps: np.ndarray
    per_node: np.ndarray
    refs: list = field(default_factory=list)

    def __post_init__(self):
        self.steps = np.asarray(self.steps, dtype=int)
        self.per_node = np.atleast_2d(np.asarray(self.per_node, dtype=float))
        if np.any(np.diff(self.steps) <= 0):
            raise ValueError("gap series steps must be strictly increasing")

    @property
    def worst(self):
        return self.per_node.max(axis=1)

    @property
    def mean(self):
        return self.per_node.mean(axis=1)


def gap_at(w_hat, spec, X, y, ref, tol=None):
    """``F(w) - f_star`` for each row of ``w_hat`` on the batch ``(X, y)``.

    Raises ``ReferenceInvalidError`` when a gap is below ``-tol``: the
    reference is then not a minimiser to the accuracy it claims.
    """
    tol = ref.tol if tol is None else tol
    W = np.atleast_2d(np.asarray(w_hat, dtype=float))
    gaps = spec.batch_value(W, X, y) - ref.f_star
    worst = float(gaps.min())
    if worst < -tol:
        raise ReferenceInvalidError(
            f"estimate is {-worst:.3e} below the reference optimum (tol {tol:.1e}, "
            f"method {ref.method or 'unknown'})")
    return gaps if np.ndim(w_hat) == 2 else float(gaps[0])


def reference_for(spec, streams, steps=None, mode="online", tol=None, cache_dir=None):
    """Reference optimum of the pooled batch of the first ``steps`` points.

    In batch mode every subgradient sees the full local batches, so the
    reference is always taken over the whole stream.
    """
    part = streams if steps is None or mode == "batch" else streams.prefix(steps)
    X, y = part.pooled()
    return cached_reference_optimum(spec, X, y, tol=tol, cache_dir=cache_dir)


def gap_series(trace, spec, streams, horizon="full", steps=None, ref=None, tol=None,
               cache_dir=None):
    """Gaps of a trace's reported estimates.

    ``horizon="full"`` measures every checkpoint against the objective of the
    whole stream. ``"prefix"`` measures the estimate after ``s`` steps
    against the objective of the first ``s`` points per node, which is the
    quantity the convergence rate speaks about.
    """
    if horizon not in HORIZONS:
        raise ValueError(f"horizon must be one of {HORIZONS}")
    mode = trace.meta.get("mode", "online")
    pts = trace.checkpoints(steps)
    if not pts:
        raise ValueError("trace has no checkpoints")
    gaps, refs = [], []
    for s, W in pts:
        if horizon == "full" or mode == "batch":
            part = streams
            r = ref if ref is not None else reference_for(spec, streams, None, mode, tol, cache_dir)
            ref = r
        else:
            part = streams.prefix(s)
            r = reference_for(spec, streams, s, mode, tol, cache_dir)
        X, y = part.pooled()
        gaps.append(gap_at(W, spec, X, y, r))
        refs.append(r)
    return GapSeries([s for s, _ in pts], np.array(gaps), refs)


@dataclass
class RegretResult:
    regret: float
    regret_avg: float
    T: int
    ref: object
    slack: float = 0.0

    @property
    def nonnegative(self):
        """``R(T) >= -n T tol``. Iterates that track a drifting stream can
        legitimately beat the best fixed point, so this is reported, not raised."""
        return self.regret >= -self.slack


def distributed_regret(trace, spec, streams, steps=None, ref=None, tol=None, cache_dir=None):
    """``R(T) = sum_t sum_i f(w_i(t), x_i(t)) - min_w sum_t sum_i f(w, x_i(t))``.

    ``T`` defaults to the trace length. The minimiser comes from the
    reference solver on the pooled batch of the first ``T`` points per node.
    """
    T = trace.n_steps if steps is None else int(steps)
    if not 1 <= T <= trace.n_steps:
        raise ValueError(f"steps must be in [1, {trace.n_steps}]")
    if T > streams.T:
        raise ValueError("trace is longer than the streams")
    if ref is None:
        ref = reference_for(spec, streams, T, trace.meta.get("mode", "online"), tol, cache_dir)
    if ref is None:
        raise ValueError("no reference optimum available")
    n = trace.n
    online = float(trace.losses[:T].sum())
    best = ref.f_star * n * T
    R = online - best
    tol = ref.tol if tol is None else tol
    return RegretResult(R, R / T, T, ref, n * T * tol)


def regret_increments(trace, spec, streams, w_star):
    """``f(w_i(t), x_i(t)) - f(w*, x_i(t))`` per step and node."""
    S = trace.n_steps
    X, y = streams.X[:, :S], None if streams.y is None else streams.y[:, :S]
    W = np.broadcast_to(w_star, (streams.n, streams.d))
    star = np.stack([spec.losses(W, X[:, s], None if y is None else y[:, s]) for s in range(S)])
    return trace.losses - star


def network_error(Z):
    """``max_i ||z_i - zbar||`` with ``zbar`` summed in node order."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    return float(np.max(np.linalg.norm(Z - ordered_mean(Z), axis=1)))


def network_error_bound(a_k, T_k, n, L, slem, prior_aT=0.0):
    """Right-hand side of the per-round network error bound.

    ``2 a_k L log(T_k sqrt(n)) / (1 - sqrt(slem)) + 3 a_k L + L prior_aT / T_k``
    where ``prior_aT = sum_{s<k} a_s T_s``.
    """
    if not 0 <= slem < 1:
        raise ValueError(f"bound needs slem in [0, 1), got {slem}")
    log_term = math.log(T_k * math.sqrt(n)) if T_k * math.sqrt(n) > 1 else 0.0
    return (2 * a_k * L * log_term / (1 - math.sqrt(slem)) + 3 * a_k * L
            + L * prior_aT / T_k)


@dataclass
class NetworkBoundCheck:
    bounds: np.ndarray
    max_error: np.ndarray
    tol: float

    @property
    def excess(self):
        return self.max_error - self.bounds

    @property
    def passed(self):
        return bool(np.all(self.excess <= self.tol))

    @property
    def worst_step(self):
        return int(np.argmax(self.excess))


def check_network_bound(trace, L, slem, tol=1e-6):
    """Compare every recorded ``||z_i - zbar||`` of a DOGD trace to its bound."""
    if not trace.rounds:
        raise ValueError("the network error bound applies to round-based traces")
    n = trace.n
    bounds = np.empty(trace.n_steps)
    prior = 0.0
    for r in trace.rounds:
        bounds[r.start:r.end] = network_error_bound(r.a_k, r.T_k, n, L, slem, prior)
        prior += r.a_k * r.T_k
    err = np.maximum(trace.net_err.max(axis=1), trace.net_err_post.max(axis=1))
    return NetworkBoundCheck(bounds, err, tol)


@dataclass
class SlopeResult:
    slope: float
    intercept: float
    steps: np.ndarray
    gaps: np.ndarray
    dropped: list


def rate_slope(series, window=None, worst=True):
    """Least-squares slope of ``log gap`` against ``log T`` over the last points.

    Non-positive gaps (converged to the reference tolerance) are dropped and
    listed in ``dropped``. Fewer than three usable points is an error.
    """
    if isinstance(series, GapSeries):
        steps, gaps = series.steps, series.worst if worst else series.mean
    else:
        steps, gaps = series
    steps = np.asarray(steps, dtype=float)
    gaps = np.asarray(gaps, dtype=float)
    if window is not None:
        steps, gaps = steps[-window:], gaps[-window:]
    keep = gaps > 0
    dropped = [(int(s), float(g)) for s, g in zip(steps[~keep], gaps[~keep])]
    steps, gaps = steps[keep], gaps[keep]
    if len(steps) < 3:
        raise ValueError(f"need at least 3 positive gaps for a slope, have {len(steps)}")
    slope, intercept = np.polyfit(np.log(steps), np.log(gaps), 1)
    return SlopeResult(float(slope), float(intercept), steps, gaps, dropped)


METRICS_HEADER = ["T", "worst_gap", "mean_gap", "regret_avg", "net_err_max", "slope_so_far"]


def metrics_rows(trace, series, regrets):
    """One metrics row per checkpoint of ``series``.

    ``regrets`` maps a step count to its :class:`RegretResult`.
    ``slope_so_far`` is blank until three positive gaps are available.
    """
    rows = []
    for j, s in enumerate(series.steps):
        try:
            slope = rate_slope((series.steps[:j + 1], series.worst[:j + 1])).slope
        except ValueError:
            slope = ""
        net = float(max(trace.net_err[:s].max(), trace.net_err_post[:s].max()))
        reg = regrets.get(int(s))
        rows.append([int(s), series.worst[j], series.mean[j],
                     "" if reg is None else reg.regret_avg, net, slope])
    return rows


def write_metrics_csv(path, rows):
    write_csv(path, METRICS_HEADER, rows)


TRACE_HEADER = ["k", "t", "step", "node", "gap", "net_err", "regret_inc"]


def trace_rows(trace, spec, streams, ref, regret_ref=None, subsample=1):
    """Per-step, per-node rows for the trace CSV.

    ``step`` counts gradient steps taken. ``gap`` is measured at the
    algorithm's current estimate after the step: the iterate for DOGD, the
    running average for algorithms that keep one. ``net_err`` is the node's
    ``||z_i - zbar||`` after the step. ``regret_inc`` is the node's loss at
    the point it queried minus the loss of ``regret_ref`` on the same point.
    Every ``subsample``-th step is kept, and the last step always is.
    """
    if subsample < 1:
        raise ValueError("subsample must be >= 1")
    S, n = trace.n_steps, trace.n
    keep = sorted(set(range(subsample - 1, S, subsample)) | {S - 1})
    est = trace.w_post if trace.w_avg is None else trace.w_avg
    mode = trace.meta.get("mode", "online")
    X, y = streams.pooled()
    W = est[keep].reshape(-1, streams.d)
    gaps = spec.batch_value(W, X, y).reshape(len(keep), n) - ref.f_star
    w_reg = (regret_ref or ref).w_star
    inc = regret_increments(trace, spec, streams, w_reg) if mode != "batch" else None
    rows = []
    for j, s in enumerate(keep):
        for i in range(n):
            rows.append([int(trace.round_of_step[s]), int(trace.in_round_t[s]), s + 1, i,
                         gaps[j, i], trace.net_err_post[s, i],
                         "" if inc is None else inc[s, i]])
    return rows


def write_trace_csv(path, rows):
    write_csv(path, TRACE_HEADER, rows)
