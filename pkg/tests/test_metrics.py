import numpy as np
import pytest

from dogdsim.dogd import dogd_run, make_schedule
from dogdsim.feasible_set import L2Ball
from dogdsim.metrics import (GapSeries, ReferenceInvalidError, check_network_bound,
                             distributed_regret, gap_at, gap_series, metrics_rows, network_error,
                             network_error_bound, rate_slope, regret_increments, trace_rows)
from dogdsim.objectives import (ObjectiveSpec, StreamSet, gen_quadratic_streams, gen_svm_streams,
                                lipschitz_bound)
from dogdsim.serial_opt import ReferenceSolution, reference_optimum
from dogdsim.topology import build_graph, metropolis_weights


def _quad(n=4, T=62, d=3, sigma=1.0, seed=0):
    st = gen_quadratic_streams(n, T, d, seed, mean_scale=2.0, node_spread=0.5)
    spec = ObjectiveSpec("quadratic", sigma, L2Ball(2.0, dim=d))
    return st, spec.with_L(lipschitz_bound(spec, st))


def test_gap_at_optimum_is_zero():
    st, spec = _quad()
    X, _ = st.pooled()
    ref = reference_optimum(spec, X)
    assert gap_at(ref.w_star, spec, X, None, ref) == pytest.approx(0.0, abs=1e-15)


def test_gap_quadratic_closed_form():
    st, spec = _quad()
    X, _ = st.pooled()
    ref = reference_optimum(spec, X)
    xbar = X.mean(axis=0)
    assert np.linalg.norm(xbar) < 2.0  # interior optimum
    w = np.array([0.3, -0.2, 0.1])
    assert gap_at(w, spec, X, None, ref) == pytest.approx(0.5 * np.sum((w - xbar) ** 2), abs=1e-12)


def test_gap_within_set_bound():
    st, spec = _quad()
    X, _ = st.pooled()
    ref = reference_optimum(spec, X)
    W = spec.feasible.sample_uniform(np.random.default_rng(0), 500)
    assert np.all(gap_at(W, spec, X, None, ref) <= 2 * spec.L**2 / spec.sigma + 1e-9)


def test_gap_rejects_invalid_reference():
    st, spec = _quad()
    X, _ = st.pooled()
    ref = reference_optimum(spec, X)
    bad = ReferenceSolution(ref.w_star, ref.f_star + 1.0, 1e-8)
    with pytest.raises(ReferenceInvalidError):
        gap_at(ref.w_star, spec, X, None, bad)


def test_gap_permutation_invariant():
    st, spec = _quad()
    X, _ = st.pooled()
    ref = reference_optimum(spec, X)
    W = spec.feasible.sample_uniform(np.random.default_rng(1), 6)
    perm = np.random.default_rng(2).permutation(6)
    assert np.array_equal(gap_at(W, spec, X, None, ref)[perm], gap_at(W[perm], spec, X, None, ref))


def test_network_error_examples():
    assert network_error(np.ones((3, 2))) == 0.0
    assert network_error(np.array([[0.0], [2.0]])) == 1.0


def test_rate_slope_power_laws():
    T = np.array([2, 6, 14, 30, 62, 126, 254], dtype=float)
    assert rate_slope((T, 3.0 / T)).slope == pytest.approx(-1.0, abs=1e-6)
    assert rate_slope((T, 3.0 / np.sqrt(T))).slope == pytest.approx(-0.5, abs=1e-6)
    assert rate_slope((T, 1.0 / T), window=3).steps.tolist() == [62, 126, 254]


def test_rate_slope_drops_nonpositive():
    T = np.array([10, 20, 40, 80, 160])
    res = rate_slope((T, np.array([1.0, 0.5, 0.0, 0.125, 0.0625])))
    assert res.dropped == [(40, 0.0)]
    assert res.slope == pytest.approx(-1.0, abs=1e-9)
    with pytest.raises(ValueError):
        rate_slope((T[:3], np.array([1.0, 0.0, -1.0])))


def test_gap_series_requires_increasing_steps():
    with pytest.raises(ValueError):
        GapSeries([10, 10], [[1.0], [0.5]])


def test_regret_at_optimum_is_zero():
    st, spec = _quad(n=3, T=14)
    cm = metropolis_weights(build_graph("complete", 3))
    tr = dogd_run(spec, st, cm, make_schedule(1.0, 14))
    X, _ = st.pooled()
    ref = reference_optimum(spec, X)
    tr.losses = np.stack([spec.losses(np.tile(ref.w_star, (3, 1)), st.X[:, s]) for s in range(14)])
    assert distributed_regret(tr, spec, st, ref=ref).regret == pytest.approx(0.0, abs=1e-12)


def test_regret_single_node_zero_gradient_stream():
    # every center at the origin, which is also the start: the iterate never moves
    st = StreamSet(np.zeros((1, 14, 2)))
    spec = ObjectiveSpec("quadratic", 1.0, L2Ball(1.0, dim=2)).with_L(1.0)
    tr = dogd_run(spec, st, np.eye(1), make_schedule(1.0, 14))
    assert distributed_regret(tr, spec, st).regret == 0.0


def test_regret_nonnegative_and_increment_sum():
    st, spec = _quad(n=4, T=62)
    cm = metropolis_weights(build_graph("cycle", 4))
    tr = dogd_run(spec, st, cm, make_schedule(1.0, 62))
    res = distributed_regret(tr, spec, st)
    assert res.regret >= -4 * 62 * res.ref.tol
    inc = regret_increments(tr, spec, st, res.ref.w_star)
    assert inc.sum() == pytest.approx(res.regret, rel=1e-10)


def test_fig1_regret_average_decreases():
    st = gen_svm_streams(10, 600, 100, 0)
    spec = ObjectiveSpec("hinge_l2", 0.1, L2Ball(5.0, dim=100))
    spec = spec.with_L(lipschitz_bound(spec, st))
    cm = metropolis_weights(build_graph("random_geometric", 10, seed=0))
    tr = dogd_run(spec, st, cm, make_schedule(0.1, 600))
    avgs = [distributed_regret(tr, spec, st, steps=r.end).regret_avg for r in tr.rounds]
    assert all(b < a for a, b in zip(avgs, avgs[1:]))
    nb = check_network_bound(tr, spec.L, cm.slem)
    assert nb.passed


def test_network_bound_formula():
    # 2 a L log(T sqrt n) / (1 - sqrt slem) + 3 a L + L prior / T
    v = network_error_bound(0.5, 40, 4, 2.0, 0.25, prior_aT=20.0)
    assert v == pytest.approx(2 * 0.5 * 2 * np.log(80) / 0.5 + 3 + 2 * 20 / 40)
    with pytest.raises(ValueError):
        network_error_bound(1, 1, 2, 1, 1.0)


def test_prefix_horizon_series_and_rows():
    st, spec = _quad(n=4, T=62)
    cm = metropolis_weights(build_graph("complete", 4))
    tr = dogd_run(spec, st, cm, make_schedule(1.0, 62))
    s = gap_series(tr, spec, st, horizon="prefix")
    assert s.steps.tolist() == [2, 6, 14, 30, 62]
    X, _ = st.prefix(14).pooled()
    ref14 = reference_optimum(spec, X)
    assert np.allclose(s.per_node[2], spec.batch_value(tr.rounds[2].w_hat, X) - ref14.f_star)
    full = gap_series(tr, spec, st)
    assert np.array_equal(full.per_node[-1], s.per_node[-1])
    rows = metrics_rows(tr, s, {})
    assert rows[0][5] == "" and rows[2][5] != ""
    tr_rows = trace_rows(tr, spec, st, full.refs[-1], subsample=5)
    steps = sorted({r[2] for r in tr_rows})
    assert steps[-1] == 62 and steps[0] == 5
