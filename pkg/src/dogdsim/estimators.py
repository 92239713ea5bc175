"""Scikit-learn style classifiers trained by the distributed solvers.

The training set is shuffled and split into equal per-node streams on a
simulated network; the model is the hinge-loss linear classifier with an
``l2`` penalty ``sigma / 2 ||w||^2`` constrained to a ball. No intercept is
fitted, so centre or augment features beforehand if one is needed.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted, validate_data

from ._validation import binary_targets, check_choice, check_positive, split_streams
from .dda import dda_run
from .dogd import MODES, dogd_run, make_schedule
from .feasible_set import L2Ball
from .objectives import ObjectiveSpec, StreamSet, lipschitz_bound
from .topology import GRAPH_KINDS, build_graph, metropolis_weights


class _DistributedLinearClassifier(ClassifierMixin, BaseEstimator):
    def _setup(self, X, y):
        check_positive("n_nodes", self.n_nodes, integer=True)
        check_positive("sigma", self.sigma)
        check_positive("radius", self.radius)
        check_choice("topology", self.topology, GRAPH_KINDS)
        check_choice("mode", self.mode, MODES[:2])
        X, y = validate_data(self, X, y, reset=True, dtype=np.float64)
        self.classes_, signs = binary_targets(y)
        idx = split_streams(X, self.n_nodes, self.random_state)
        streams = StreamSet(X[idx], signs[idx], self.random_state)
        graph = build_graph(self.topology, self.n_nodes, seed=self.random_state)
        cm = metropolis_weights(graph)
        spec = ObjectiveSpec("hinge_l2", float(self.sigma), L2Ball(self.radius, dim=X.shape[1]))
        spec = spec.with_L(lipschitz_bound(spec, streams))
        return streams, cm, spec

    def _budget(self, streams):
        if self.max_steps is None:
            return streams.T
        check_positive("max_steps", self.max_steps, integer=True)
        # online runs cannot outlast their streams
        return min(streams.T, self.max_steps) if self.mode == "online" else self.max_steps

    def _finish(self, W, trace):
        self.node_coefs_ = np.asarray(W)
        self.coef_ = self.node_coefs_.mean(axis=0)[None, :]
        self.intercept_ = np.zeros(1)
        self.trace_ = trace
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = validate_data(self, X, reset=False, dtype=np.float64)
        return X @ self.coef_[0]

    def predict(self, X):
        scores = self.decision_function(X)
        return self.classes_[(scores >= 0).astype(int)]


class DOGDClassifier(_DistributedLinearClassifier):
    """Linear SVM trained by distributed online gradient descent.

    Parameters
    ----------
    n_nodes : int
        Simulated processors; each receives ``len(X) // n_nodes`` samples.
    sigma : float
        Strong-convexity weight of the ``l2`` penalty.
    radius : float
        Radius of the feasible ball.
    topology : str
        Graph kind passed to :func:`build_graph`.
    mode : {"online", "batch"}
        ``online`` visits each local sample once; ``batch`` takes full local
        batch subgradients for ``max_steps`` steps.
    max_steps : int, optional
        Per-node step budget. Defaults to the local stream length.
    random_state : int
        Seeds the shuffle, the split and random topologies.

    Attributes
    ----------
    coef_ : ndarray of shape (1, n_features)
        Network average of the final round averages.
    node_coefs_ : ndarray of shape (n_nodes, n_features)
        Each node's final round average.
    """

    def __init__(self, n_nodes=10, sigma=0.1, radius=5.0, topology="complete", mode="online",
                 max_steps=None, random_state=0):
        self.n_nodes = n_nodes
        self.sigma = sigma
        self.radius = radius
        self.topology = topology
        self.mode = mode
        self.max_steps = max_steps
        self.random_state = random_state

    def fit(self, X, y):
        streams, cm, spec = self._setup(X, y)
        T = self._budget(streams)
        schedule = make_schedule(self.sigma, T)
        trace = dogd_run(spec, streams, cm, schedule, mode=self.mode)
        return self._finish(trace.rounds[-1].w_hat, trace)


class DDAClassifier(_DistributedLinearClassifier):
    """Linear SVM trained by distributed dual averaging.

    Parameters are those of :class:`DOGDClassifier` plus ``A``, the step
    constant in ``a(t) = A / sqrt(t)`` (default from the spectral gap).
    The model is each node's running average of its queried points.
    """

    def __init__(self, n_nodes=10, sigma=0.1, radius=5.0, topology="complete", mode="online",
                 max_steps=None, A=None, random_state=0):
        self.n_nodes = n_nodes
        self.sigma = sigma
        self.radius = radius
        self.topology = topology
        self.mode = mode
        self.max_steps = max_steps
        self.A = A
        self.random_state = random_state

    def fit(self, X, y):
        streams, cm, spec = self._setup(X, y)
        T = self._budget(streams)
        trace = dda_run(spec, streams, cm, T, A=self.A, mode=self.mode)
        return self._finish(trace.w_avg[-1], trace)
