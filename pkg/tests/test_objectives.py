import numpy as np
import pytest

from dogdsim.feasible_set import Box, L2Ball, Unconstrained
from dogdsim.objectives import (DataPoint, NoiseModel, ObjectiveSpec, StreamSet,
                                gen_quadratic_streams, gen_svm_streams, hinge_l2_subgrad,
                                hinge_l2_value, label_points, lipschitz_bound, noisy_oracle,
                                quadratic_grad, quadratic_value)


def test_svm_streams_shape_and_balance():
    s = gen_svm_streams(10, 600, 100, seed=1)
    assert s.X.shape == (10, 600, 100) and s.y.shape == (10, 600)
    assert 0.4 <= np.mean(s.y > 0) <= 0.6
    assert set(np.unique(s.y)) == {-1.0, 1.0}


def test_svm_streams_deterministic():
    a, b = gen_svm_streams(1, 1, 2, seed=9), gen_svm_streams(1, 1, 2, seed=9)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)


def test_labels_flip_with_hyperplane():
    s = gen_svm_streams(2, 50, 4, seed=3)
    h = s.meta["hyperplane"]
    assert np.array_equal(label_points(s.X, h), s.y)
    flipped = label_points(s.X, -h)
    assert np.array_equal(flipped, -s.y)


def test_label_tie_positive():
    assert label_points(np.array([[0.0, 0.0]]), np.array([1.0, 0.0]))[0] == 1.0


def test_hinge_value_examples():
    pt = DataPoint(np.array([0.0, 1.0]), 1.0)
    assert hinge_l2_value(np.zeros(2), pt, 0.1) == 1.0
    assert hinge_l2_value(np.array([1.0, 0.0]), pt, 0.1) == pytest.approx(1.05, abs=1e-15)
    w = np.array([0.5, 1.0])  # margin exactly 1
    assert hinge_l2_value(w, pt, 0.1) == pytest.approx(0.05 * 1.25, abs=1e-15)


def test_hinge_subgrad_branches():
    sigma = 0.3
    pt = DataPoint(np.array([1.0, 2.0]), -1.0)
    w = np.array([-2.0, -1.0])  # margin 4
    assert np.array_equal(hinge_l2_subgrad(w, pt, sigma), sigma * w)
    assert np.array_equal(hinge_l2_subgrad(np.zeros(2), pt, sigma), -pt.y * pt.x)
    at_kink = np.array([-1.0, 0.0])  # margin exactly 1
    assert np.array_equal(hinge_l2_subgrad(at_kink, pt, sigma), sigma * at_kink)


def test_hinge_subgrad_finite_difference():
    rng = np.random.default_rng(0)
    sigma, h = 0.1, 1e-6
    for _ in range(200):
        x, w, u = rng.standard_normal((3, 5))
        pt = DataPoint(x, float(rng.choice([-1.0, 1.0])))
        if abs(pt.y * w @ x - 1) < 1e-3:
            continue
        u /= np.linalg.norm(u)
        g = hinge_l2_subgrad(w, pt, sigma)
        dd = (hinge_l2_value(w + h * u, pt, sigma) - hinge_l2_value(w, pt, sigma)) / h
        assert dd >= g @ u - 1e-6


def test_quadratic_examples():
    c = np.array([1.0, -1.0])
    assert quadratic_value(c, c, 3.0) == 0 and np.array_equal(quadratic_grad(c, c, 3.0), [0, 0])
    w = c + np.array([1.0, 0.0])
    assert quadratic_value(w, c, 2.0) == 1.0
    assert np.array_equal(quadratic_grad(w, c, 2.0), [2.0, 0.0])


def test_quadratic_network_minimiser_is_mean_center():
    rng = np.random.default_rng(1)
    C = rng.standard_normal((7, 3))
    spec = ObjectiveSpec("quadratic", 1.5, Unconstrained(3))
    cbar = C.mean(axis=0)
    assert np.allclose(spec.batch_grad(cbar, C), 0, atol=1e-15)


def test_vectorised_losses_match_scalar_forms():
    rng = np.random.default_rng(2)
    W, X = rng.standard_normal((2, 6, 4))
    y = rng.choice([-1.0, 1.0], 6)
    spec = ObjectiveSpec("hinge_l2", 0.4, L2Ball(3.0, dim=4))
    for i in range(6):
        pt = DataPoint(X[i], y[i])
        assert spec.losses(W, X, y)[i] == pytest.approx(hinge_l2_value(W[i], pt, 0.4), abs=1e-14)
        assert np.allclose(spec.grads(W, X, y)[i], hinge_l2_subgrad(W[i], pt, 0.4), atol=1e-14)
    q = ObjectiveSpec("quadratic", 0.4, L2Ball(3.0, dim=4))
    assert np.allclose(q.losses(W, X), [quadratic_value(W[i], X[i], 0.4) for i in range(6)])


def test_batch_value_matches_mean_of_losses():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((40, 3))
    w = rng.standard_normal(3)
    q = ObjectiveSpec("quadratic", 0.7, L2Ball(5.0, dim=3))
    direct = np.mean([quadratic_value(w, x, 0.7) for x in X])
    assert q.batch_value(w, X)[0] == pytest.approx(direct, rel=1e-13)


@pytest.mark.parametrize("family", ["hinge_l2", "quadratic"])
def test_strong_convexity_and_subgradient_inequalities(family):
    rng = np.random.default_rng(4)
    sigma = 0.5
    fs = L2Ball(2.0, dim=4)
    spec = ObjectiveSpec(family, sigma, fs)
    X = rng.standard_normal((30, 4))
    y = rng.choice([-1.0, 1.0], 30)
    F = lambda w: spec.batch_value(w, X, y if family == "hinge_l2" else None)[0]  # noqa: E731
    G = lambda w: spec.batch_grad(w, X, y if family == "hinge_l2" else None)  # noqa: E731
    for _ in range(300):
        u, w = fs.sample_uniform(rng, 2)
        th = rng.random()
        lhs = F(th * u + (1 - th) * w)
        rhs = th * F(u) + (1 - th) * F(w) - 0.5 * sigma * th * (1 - th) * np.sum((u - w) ** 2)
        assert lhs <= rhs + 1e-9
        assert F(u) >= F(w) + G(w) @ (u - w) - 1e-9


def test_lipschitz_examples():
    s = StreamSet(np.zeros((1, 1, 2)))
    spec = ObjectiveSpec("quadratic", 1.0, L2Ball(1.0, dim=2))
    assert lipschitz_bound(spec, s) == 1.0
    X = np.array([[[6.0, 8.0], [1.0, 0.0]]])  # max norm 10
    h = ObjectiveSpec("hinge_l2", 0.1, L2Ball(5.0, dim=2))
    assert lipschitz_bound(h, StreamSet(X, np.ones((1, 2)))) == pytest.approx(10.5)
    with pytest.raises(ValueError):
        lipschitz_bound(spec, np.empty((0, 2)))
    with pytest.raises(ValueError):
        lipschitz_bound(ObjectiveSpec("quadratic", 1.0, Unconstrained(2)), s)


@pytest.mark.parametrize("family,fs", [("hinge_l2", L2Ball(5.0, dim=6)),
                                       ("quadratic", L2Ball(2.0, center=np.ones(6))),
                                       ("quadratic", Box(-np.ones(6), np.ones(6)))])
def test_subgradients_within_L(family, fs):
    rng = np.random.default_rng(5)
    st = gen_svm_streams(3, 40, 6, 0) if family == "hinge_l2" else gen_quadratic_streams(3, 40, 6, 0)
    spec = ObjectiveSpec(family, 0.5, fs)
    L = lipschitz_bound(spec, st)
    X, y = st.pooled()
    for _ in range(50):
        W = fs.sample_uniform(rng, len(X))
        G = spec.grads(W, X, y)
        assert np.max(np.linalg.norm(G, axis=1)) <= L + 1e-12


def test_noise_none_is_identity():
    g = np.array([1.0, 2.0])
    assert np.array_equal(noisy_oracle(g, NoiseModel("none"), 0, 0), g)


def test_noise_deterministic_and_independent():
    m = NoiseModel("bounded_uniform", seed=3, half_width=0.5)
    a, b = m.sample(2, 7, 4), m.sample(2, 7, 4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, m.sample(3, 7, 4))
    assert not np.array_equal(a, m.sample(2, 8, 4))


@pytest.mark.parametrize("model", [NoiseModel("bounded_uniform", seed=1, half_width=0.7),
                                   NoiseModel("gaussian_clipped", seed=2, std=1.0, clip=1.5)])
def test_noise_zero_mean_and_bounded(model):
    d, m = 3, 100_000
    Z = np.stack([model.sample(k % 10, k // 10, d) for k in range(m)])
    std = Z.std(axis=0)
    assert np.all(np.abs(Z.mean(axis=0)) <= 3 * std / np.sqrt(m))
    assert np.max(np.linalg.norm(Z, axis=1)) <= model.max_norm(d) + 1e-12


def test_noisy_L():
    m = NoiseModel("bounded_uniform", half_width=0.5)
    assert m.noisy_L(2.0, 16) == pytest.approx(4.0)


def test_stream_csv_roundtrip(tmp_path):
    s = gen_svm_streams(3, 5, 2, seed=0)
    s.to_csv(tmp_path / "s.csv")
    r = StreamSet.from_csv(tmp_path / "s.csv")
    assert np.array_equal(r.X, s.X) and np.array_equal(r.y, s.y)
    assert r.content_hash() == s.content_hash()


def test_stream_validation():
    with pytest.raises(ValueError):
        StreamSet(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        StreamSet(np.full((1, 1, 1), np.nan))
    with pytest.raises(ValueError):
        ObjectiveSpec("logistic", 1.0, L2Ball(1.0, dim=1))
    with pytest.raises(ValueError):
        ObjectiveSpec("quadratic", 0.0, L2Ball(1.0, dim=1))
