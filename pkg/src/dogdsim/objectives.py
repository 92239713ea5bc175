"""Strongly convex loss families, synthetic data streams and gradient noise.

Two families are supported:

``hinge_l2``
    ``(sigma/2) ||w||^2 + max(0, 1 - y <w, x>)`` for labelled points.
``quadratic``
    ``(sigma/2) ||w - x||^2`` where the stream point ``x`` is the center.

Both are ``sigma``-strongly convex. The data layout throughout the package is
``X[i, t]`` for node ``i`` at step ``t`` (shape ``(n, T, d)``) and labels
``y[i, t]`` (shape ``(n, T)``, ``None`` for the quadratic family).
"""

import hashlib
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ._io import read_csv, write_csv
from .feasible_set import FeasibleSet

FAMILIES = ("hinge_l2", "quadratic")
NOISE_KINDS = ("none", "bounded_uniform", "gaussian_clipped")


@dataclass(frozen=True)
class DataPoint:
    x: np.ndarray
    y: float = 1.0


@dataclass
class StreamSet:
    """Per-node data streams of equal length."""

    X: np.ndarray
    y: np.ndarray | None = None
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim != 3:
            raise ValueError(f"X must have shape (n, T, d), got {self.X.shape}")
        if self.y is not None:
            self.y = np.asarray(self.y, dtype=float)
            if self.y.shape != self.X.shape[:2]:
                raise ValueError("y must have shape (n, T)")
        if not np.all(np.isfinite(self.X)):
            raise ValueError("stream contains non-finite features")

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def T(self):
        return self.X.shape[1]

    @property
    def d(self):
        return self.X.shape[2]

    def point(self, i, t):
        return DataPoint(self.X[i, t], 1.0 if self.y is None else float(self.y[i, t]))

    def prefix(self, steps):
        """Streams truncated to the first ``steps`` points of every node."""
        y = None if self.y is None else self.y[:, :steps]
        return StreamSet(self.X[:, :steps], y, self.seed, dict(self.meta))

    def pooled(self):
        X = self.X.reshape(-1, self.d)
        y = None if self.y is None else self.y.reshape(-1)
        return X, y

    def content_hash(self):
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.X).tobytes())
        if self.y is not None:
            h.update(np.ascontiguousarray(self.y).tobytes())
        return h.hexdigest()

    def to_csv(self, path):
        rows = []
        for i in range(self.n):
            for t in range(self.T):
                y = 0.0 if self.y is None else self.y[i, t]
                rows.append([i, t, y, *self.X[i, t]])
        header = ["node", "t", "y"] + [f"x{k + 1}" for k in range(self.d)]
        write_csv(Path(path), header, rows)

    @classmethod
    def from_csv(cls, path, labelled=True):
        header, rows = read_csv(path)
        if header[:3] != ["node", "t", "y"]:
            raise ValueError(f"{path}: unexpected header {header[:3]}")
        arr = np.array(rows, dtype=float)
        nodes = arr[:, 0].astype(int)
        steps = arr[:, 1].astype(int)
        n, T, d = nodes.max() + 1, steps.max() + 1, arr.shape[1] - 3
        if len(arr) != n * T:
            raise ValueError(f"{path}: streams are not all of length {T}")
        X = np.empty((n, T, d))
        y = np.empty((n, T))
        X[nodes, steps] = arr[:, 3:]
        y[nodes, steps] = arr[:, 2]
        return cls(X, y if labelled else None)


def label_points(X, h):
    """``sign(<h, x>)`` with ties sent to +1."""
    return np.where(np.asarray(X) @ h >= 0.0, 1.0, -1.0)


def gen_svm_streams(n, T, d, seed):
    """Standard normal features labelled by a random unit hyperplane."""
    if min(n, T, d) < 1:
        raise ValueError("n, T and d must be >= 1")
    rng = np.random.default_rng(seed)
    h = rng.standard_normal(d)
    h /= np.linalg.norm(h)
    X = rng.standard_normal((n, T, d))
    return StreamSet(X, label_points(X, h), seed, {"hyperplane": h})


def gen_quadratic_streams(n, T, d, seed, mean_scale=1.0, node_spread=0.0, noise=1.0):
    """Centers ``m + s_i + noise * N(0, I)``.

    ``m`` is a shared mean with ``E||m||^2 = mean_scale^2`` and ``s_i`` a fixed
    per-node offset with ``E||s_i||^2 = node_spread^2``.
    """
    if min(n, T, d) < 1:
        raise ValueError("n, T and d must be >= 1")
    rng = np.random.default_rng(seed)
    mean = rng.standard_normal(d) * mean_scale / np.sqrt(d)
    offsets = rng.standard_normal((n, d)) * node_spread / np.sqrt(d)
    X = mean + offsets[:, None, :] + noise * rng.standard_normal((n, T, d))
    return StreamSet(X, None, seed, {"mean": mean, "offsets": offsets})


def hinge_l2_value(w, pt, sigma):
    w = np.asarray(w, dtype=float)
    margin = pt.y * float(w @ pt.x)
    return 0.5 * sigma * float(w @ w) + max(0.0, 1.0 - margin)


def hinge_l2_subgrad(w, pt, sigma):
    """``sigma w - y x`` inside the margin, ``sigma w`` on or beyond it."""
    w = np.asarray(w, dtype=float)
    if pt.y * float(w @ pt.x) < 1.0:
        return sigma * w - pt.y * np.asarray(pt.x)
    return sigma * w


def quadratic_value(w, center, sigma):
    diff = np.asarray(w, dtype=float) - center
    return 0.5 * sigma * float(diff @ diff)


def quadratic_grad(w, center, sigma):
    return sigma * (np.asarray(w, dtype=float) - center)


@dataclass(frozen=True)
class ObjectiveSpec:
    """Loss family with its strong-convexity modulus, gradient bound and set."""

    family: str
    sigma: float
    feasible: FeasibleSet
    L: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.L is not None and not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L}")

    def with_L(self, L):
        return replace(self, L=float(L))

    # Vectorised over nodes: W is (n, d), X is (n, d), y is (n,) or None.
    def losses(self, W, X, y=None):
        W = np.asarray(W, dtype=float)
        if self.family == "hinge_l2":
            margins = y * np.einsum("ij,ij->i", W, X)
            return 0.5 * self.sigma * np.einsum("ij,ij->i", W, W) + np.maximum(0.0, 1.0 - margins)
        diff = W - X
        return 0.5 * self.sigma * np.einsum("ij,ij->i", diff, diff)

    def grads(self, W, X, y=None):
        W = np.asarray(W, dtype=float)
        if self.family == "hinge_l2":
            margins = y * np.einsum("ij,ij->i", W, X)
            active = np.where(margins < 1.0, y, 0.0)
            return self.sigma * W - active[:, None] * X
        return self.sigma * (W - X)

    # Batch objective: rows of W against the whole set (X: (m, d)).
    def batch_value(self, W, X, y=None):
        """Average loss ``F(w)`` over the batch for each row of ``W``."""
        W = np.atleast_2d(np.asarray(W, dtype=float))
        if self.family == "hinge_l2":
            margins = (W @ X.T) * y
            hinge = np.maximum(0.0, 1.0 - margins).mean(axis=1)
            return 0.5 * self.sigma * np.einsum("ij,ij->i", W, W) + hinge
        # mean ||w - x||^2 = ||w - xbar||^2 + mean ||x - xbar||^2
        xbar = X.mean(axis=0)
        spread = np.mean(np.sum((X - xbar) ** 2, axis=1))
        diff = W - xbar
        return 0.5 * self.sigma * (np.einsum("ij,ij->i", diff, diff) + spread)

    def batch_grad(self, w, X, y=None):
        """Subgradient of the batch average at a single point ``w``."""
        w = np.asarray(w, dtype=float)
        if self.family == "hinge_l2":
            margins = y * (X @ w)
            active = np.where(margins < 1.0, y, 0.0)
            return self.sigma * w - active @ X / len(X)
        return self.sigma * (w - X.mean(axis=0))

    def to_dict(self):
        return {"family": self.family, "sigma": self.sigma, "L": self.L,
                "set": self.feasible.to_dict()}


def lipschitz_bound(spec, streams):
    """Subgradient bound over the feasible set for every point in ``streams``.

    hinge_l2: ``sigma max_W ||w|| + max ||x||``.
    quadratic: ``sigma max_{w, x} ||w - x||`` (exact for balls and boxes).
    """
    if not spec.feasible.bounded:
        raise ValueError("Lipschitz bound undefined on an unbounded feasible set")
    X = streams.X.reshape(-1, streams.d) if isinstance(streams, StreamSet) else np.asarray(streams)
    if X.size == 0:
        raise ValueError("cannot bound gradients over an empty stream")
    if spec.family == "hinge_l2":
        return float(spec.sigma * spec.feasible.max_norm() + np.max(np.linalg.norm(X, axis=1)))
    return float(spec.sigma * np.max(spec.feasible.max_distance_to(X)))


@dataclass(frozen=True)
class NoiseModel:
    """Zero-mean additive gradient noise keyed by ``(seed, node, step)``.

    ``bounded_uniform`` draws each coordinate from ``U[-half_width, half_width]``;
    ``gaussian_clipped`` draws ``N(0, std^2 I)`` and radially clips to ``clip``.
    Both are symmetric, so clipping keeps the mean at zero.
    """

    kind: str = "none"
    seed: int = 0
    half_width: float = 0.0
    std: float = 0.0
    clip: float = np.inf

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}; expected one of {NOISE_KINDS}")

    def max_norm(self, d):
        if self.kind == "bounded_uniform":
            return self.half_width * np.sqrt(d)
        if self.kind == "gaussian_clipped":
            return float(self.clip)
        return 0.0

    def noisy_L(self, L, d):
        """Gradient bound after adding noise: ``L + max ||noise||``."""
        return float(L + self.max_norm(d))

    def sample(self, node, step, d):
        if self.kind == "none":
            return np.zeros(d)
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(int(node), int(step)))
        rng = np.random.default_rng(ss)
        if self.kind == "bounded_uniform":
            return rng.uniform(-self.half_width, self.half_width, size=d)
        zeta = rng.normal(0.0, self.std, size=d)
        nrm = np.linalg.norm(zeta)
        if nrm > self.clip:
            zeta *= self.clip / nrm
        return zeta


def noisy_oracle(g, model, node, step):
    """``g + zeta`` with ``zeta`` drawn deterministically from ``(seed, node, step)``."""
    g = np.asarray(g, dtype=float)
    if model is None or model.kind == "none":
        return g
    return g + model.sample(node, step, g.shape[-1])
