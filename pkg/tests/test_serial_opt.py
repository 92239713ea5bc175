import json

import numpy as np
import pytest

from dogdsim.dogd import make_schedule
from dogdsim.feasible_set import Box, L2Ball, Unconstrained
from dogdsim.objectives import ObjectiveSpec, gen_quadratic_streams, gen_svm_streams, lipschitz_bound
from dogdsim.serial_opt import (ReferenceSolution, cached_reference_optimum, lazy_projection_regret,
                                lazy_projection_run, lemma1_check, reference_optimum,
                                restarted_lazy_projection, zinkevich_check)


def test_zero_gradient_stays_put():
    fs = L2Ball(1.0, dim=2)
    w1 = np.array([0.3, 0.1])
    tr = lazy_projection_run(lambda t, w: np.zeros(2), fs, 0.5, w1, 5)
    assert np.all(tr.w == w1)
    chk = zinkevich_check(tr, np.zeros(2))
    assert chk.lhs == 0 and chk.passed


def test_hand_iteration_1d():
    tr = lazy_projection_run(lambda t, w: w.copy(), Box([-1], [1]), 0.1, np.array([1.0]), 3)
    assert np.allclose(tr.z[:3, 0], [1.0, 0.9, 0.81], atol=1e-15)
    assert np.array_equal(tr.w, tr.z)
    assert zinkevich_check(tr, np.zeros(1)).passed


def test_start_must_be_feasible():
    with pytest.raises(ValueError):
        lazy_projection_run(lambda t, w: w, L2Ball(1.0, dim=1), 0.1, np.array([2.0]), 2)
    with pytest.raises(ValueError):
        lazy_projection_run(lambda t, w: w, L2Ball(1.0, dim=1), 0.0, np.array([0.0]), 2)


def test_unconstrained_contraction():
    sigma, a = 2.0, 0.3  # a < 2 / sigma
    c = np.array([1.0, -2.0])
    tr = lazy_projection_run(lambda t, w: sigma * (w - c), Unconstrained(2), a, np.zeros(2), 30)
    dist = np.linalg.norm(tr.w - c, axis=1)
    assert np.all(np.diff(dist) < 0)
    assert np.allclose(dist[1:15] / dist[:14], abs(1 - a * sigma), rtol=1e-9)


def test_adversarial_sign_flips():
    L = 2.0
    fs = Box([-1], [1])
    for a in (0.01, 0.1, 0.5, 1.0):
        for pattern in ("alternate", "follow"):
            def oracle(t, w):
                if pattern == "alternate":
                    return np.array([L if t % 2 else -L])
                return np.array([L if w[0] >= 0 else -L])
            tr = lazy_projection_run(oracle, fs, a, np.array([0.5]), 200)
            for ws in (-1.0, 0.0, 1.0):
                assert zinkevich_check(tr, np.array([ws]), L=L).passed


def test_regret_corollary_quadratic():
    rng = np.random.default_rng(0)
    C = rng.standard_normal((300, 3)) + 2
    fs = L2Ball(1.0, dim=3)
    spec = ObjectiveSpec("quadratic", 1.0, fs)
    tr = lazy_projection_run(lambda t, w: spec.grads(w[None], C[t:t + 1])[0], fs, 0.05,
                             np.zeros(3), 300)
    w_star = reference_optimum(spec, C).w_star
    loss = lambda t, w: float(spec.losses(np.atleast_2d(w), C[t:t + 1])[0])  # noqa: E731
    assert zinkevich_check(tr, w_star).passed
    assert lazy_projection_regret(tr, loss, w_star).passed


def test_restarted_runs_follow_schedule():
    sched = make_schedule(1.0, 14)
    c = np.array([0.5])
    traces, avgs = restarted_lazy_projection(lambda t, w: w - c, Box([-1], [1]), sched,
                                             np.array([1.0]))
    assert [t.T for t in traces] == [2, 4, 8]
    assert [t.a for t in traces] == [1.0, 0.5, 0.25]
    for prev, nxt in zip(traces, traces[1:]):
        assert np.array_equal(nxt.w[0], prev.w[-1]) and np.array_equal(nxt.z[0], prev.w[-1])
    assert np.allclose(avgs[0], traces[0].w[1:].mean(axis=0))


def test_reference_quadratic_closed_forms():
    spec = ObjectiveSpec("quadratic", 2.0, L2Ball(5.0, dim=2))
    ref = reference_optimum(spec, np.array([[1.0, 0.0], [-1.0, 0.0]]))
    assert np.array_equal(ref.w_star, [0.0, 0.0])
    assert ref.f_star == pytest.approx(2.0 / 2 * 1.0)
    ref = reference_optimum(ObjectiveSpec("quadratic", 1.0, L2Ball(1.0, dim=2)),
                            np.array([[3.0, 0.0]]))
    assert np.allclose(ref.w_star, [1.0, 0.0])
    assert ref.tol == 1e-8


def _brute_min(spec, X, y, rng, iters=20000):
    # projected subgradient with 1/(sigma t) steps and suffix averaging
    w = np.zeros(X.shape[1])
    acc, cnt = np.zeros_like(w), 0
    for t in range(1, iters + 1):
        w = spec.feasible.project(w - spec.batch_grad(w, X, y) / (spec.sigma * t))
        if t > iters // 2:
            acc += w
            cnt += 1
    return acc / cnt


def test_hinge_reference_matches_independent_solver():
    st = gen_svm_streams(2, 40, 3, seed=2)
    X, y = st.pooled()
    spec = ObjectiveSpec("hinge_l2", 0.5, L2Ball(10.0, dim=3))
    ref = reference_optimum(spec, X, y, tol=1e-9)
    w_b = _brute_min(spec, X, y, None)
    assert spec.batch_value(w_b, X, y)[0] >= ref.f_star - 1e-9
    assert spec.batch_value(w_b, X, y)[0] - ref.f_star < 1e-4
    assert np.linalg.norm(ref.w_star - w_b) < 1e-2


def test_hinge_reference_active_ball():
    st = gen_svm_streams(2, 40, 3, seed=2)
    X, y = st.pooled()
    spec = ObjectiveSpec("hinge_l2", 0.01, L2Ball(0.3, dim=3))
    ref = reference_optimum(spec, X, y, tol=1e-7)
    assert ref.method == "dual_cd_ball"
    assert np.linalg.norm(ref.w_star) == pytest.approx(0.3, abs=1e-9)
    # no sampled feasible point may beat the certified optimum
    rng = np.random.default_rng(0)
    W = spec.feasible.sample_uniform(rng, 5000)
    assert np.min(spec.batch_value(W, X, y)) >= ref.f_star - 1e-7
    w_b = _brute_min(spec, X, y, rng, iters=40000)
    assert spec.batch_value(w_b, X, y)[0] >= ref.f_star - 1e-7


def test_hinge_reference_box_epoch_doubling():
    st = gen_svm_streams(1, 30, 2, seed=4)
    X, y = st.pooled()
    spec = ObjectiveSpec("hinge_l2", 1.0, Box([-0.2, -0.2], [0.2, 0.2]))
    a = reference_optimum(spec, X, y, tol=1e-6, seed=0)
    b = reference_optimum(spec, X, y, tol=1e-6, seed=1)
    assert a.method == "epoch_doubling"
    assert np.linalg.norm(a.w_star - b.w_star) < 1e-2
    assert abs(a.f_star - b.f_star) < 1e-5


def test_fig1_reference_reproducible():
    st = gen_svm_streams(10, 600, 100, seed=0)
    X, y = st.pooled()
    spec = ObjectiveSpec("hinge_l2", 0.1, L2Ball(5.0, dim=100))
    tol = 1e-6
    a = reference_optimum(spec, X, y, tol=tol, seed=0)
    b = reference_optimum(spec, X, y, tol=tol, seed=1)
    assert a.tol <= tol and b.tol <= tol
    assert abs(a.f_star - b.f_star) < 1e-4
    # a certified gap tol puts each point within sqrt(2 tol / sigma) of the minimiser
    assert np.linalg.norm(a.w_star - b.w_star) <= 2 * np.sqrt(2 * tol / spec.sigma)


def test_reference_budget_doubling_stable():
    st = gen_svm_streams(3, 100, 5, seed=1)
    X, y = st.pooled()
    spec = ObjectiveSpec("hinge_l2", 0.2, L2Ball(5.0, dim=5))
    a = reference_optimum(spec, X, y, tol=1e-6, max_epochs=2000)
    b = reference_optimum(spec, X, y, tol=1e-6, max_epochs=4000)
    assert abs(a.f_star - b.f_star) < 1e-6


def test_lemma_bound_examples():
    spec = ObjectiveSpec("quadratic", 1.0, L2Ball(1.0, dim=2), L=1.0)
    X = np.zeros((1, 2))
    ref = reference_optimum(spec, X)
    res = lemma1_check(spec, lambda W: spec.batch_value(W, X), ref, samples=2000, seed=0)
    assert res.passed and res.bound == 2.0
    assert res.max_gap <= 0.5 + 1e-12
    assert res.max_gap > 0.45


def test_lemma_bound_hinge_fig1():
    st = gen_svm_streams(10, 600, 100, seed=0)
    spec = ObjectiveSpec("hinge_l2", 0.1, L2Ball(5.0, dim=100))
    spec = spec.with_L(lipschitz_bound(spec, st))
    X, y = st.pooled()
    ref = reference_optimum(spec, X, y)
    assert lemma1_check(spec, lambda W: spec.batch_value(W, X, y), ref, 1000, 0).passed


def test_reference_cache(tmp_path):
    spec = ObjectiveSpec("quadratic", 1.0, L2Ball(1.0, dim=2))
    X = np.array([[0.2, 0.1], [0.4, -0.3]])
    a = cached_reference_optimum(spec, X, cache_dir=tmp_path)
    files = list(tmp_path.glob("ref-*.json"))
    assert len(files) == 1
    data = json.loads(files[0].read_text())
    assert ReferenceSolution.from_dict(data).f_star == a.f_star
    assert cached_reference_optimum(spec, X, cache_dir=tmp_path) is a
