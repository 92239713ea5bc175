"""Convex feasible sets with exact Euclidean projections.

All projections accept a single point of shape ``(d,)`` or a stack of points
of shape ``(k, d)`` and project row-wise.
"""

import numpy as np


def _as_points(z, dim):
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != dim or z.ndim not in (1, 2):
        raise ValueError(f"expected points of dimension {dim}, got shape {z.shape}")
    return z


class FeasibleSet:
    kind = "abstract"
    bounded = True

    def __init__(self, dim):
        self.dim = int(dim)

    def project(self, z):
        raise NotImplementedError

    def contains(self, w, tol=1e-12):
        raise NotImplementedError

    def max_norm(self):
        """``max_{w in W} ||w||``."""
        raise NotImplementedError

    def max_distance_to(self, c):
        """``max_{w in W} ||w - c||`` for each row of ``c``."""
        raise NotImplementedError

    def sample_uniform(self, rng, size):
        raise NotImplementedError

    def to_dict(self):
        raise NotImplementedError

    def __eq__(self, other):
        return type(self) is type(other) and self.to_dict() == other.to_dict()

    def __repr__(self):
        return f"{type(self).__name__}({self.to_dict()})"


class L2Ball(FeasibleSet):
    kind = "l2_ball"

    def __init__(self, radius, center=None, dim=None):
        if center is None:
            if dim is None:
                raise ValueError("give either center or dim")
            center = np.zeros(int(dim))
        self.center = np.asarray(center, dtype=float).reshape(-1)
        super().__init__(self.center.size)
        self.radius = float(radius)
        if not self.radius > 0:
            raise ValueError(f"radius must be positive, got {radius}")

    def project(self, z):
        z = _as_points(z, self.dim)
        pts = np.atleast_2d(z)
        diff = pts - self.center
        nrm = np.linalg.norm(diff, axis=1)
        outside = np.flatnonzero(nrm > self.radius)
        out = pts.copy()
        if outside.size:
            scale = self.radius / nrm[outside]
            out[outside] = self.center + diff[outside] * scale[:, None]
            # rounding can leave a point a hair outside; shrink it so that
            # projecting twice is exactly the identity
            for k, s in zip(outside, scale):
                while np.linalg.norm(out[k] - self.center) > self.radius:
                    s = np.nextafter(s, 0.0)
                    out[k] = self.center + diff[k] * s
        return out if z.ndim == 2 else out[0]

    def contains(self, w, tol=1e-12):
        w = _as_points(w, self.dim)
        return np.linalg.norm(w - self.center, axis=-1) <= self.radius + tol

    def max_norm(self):
        return float(np.linalg.norm(self.center) + self.radius)

    def max_distance_to(self, c):
        c = np.asarray(c, dtype=float)
        return np.linalg.norm(c - self.center, axis=-1) + self.radius

    def sample_uniform(self, rng, size):
        g = rng.standard_normal((size, self.dim))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        r = self.radius * rng.random(size) ** (1.0 / self.dim)
        return self.center + g * r[:, None]

    def to_dict(self):
        return {"kind": self.kind, "radius": self.radius, "center": self.center.tolist()}


class Box(FeasibleSet):
    kind = "box"

    def __init__(self, lower, upper):
        self.lower = np.asarray(lower, dtype=float).reshape(-1)
        self.upper = np.asarray(upper, dtype=float).reshape(-1)
        if self.lower.shape != self.upper.shape:
            raise ValueError("lower and upper must have the same shape")
        if np.any(self.lower > self.upper):
            raise ValueError("need lower <= upper componentwise")
        super().__init__(self.lower.size)

    def project(self, z):
        z = _as_points(z, self.dim)
        return np.clip(z, self.lower, self.upper)

    def contains(self, w, tol=1e-12):
        w = _as_points(w, self.dim)
        return np.all((w >= self.lower - tol) & (w <= self.upper + tol), axis=-1)

    def max_norm(self):
        return float(np.linalg.norm(np.maximum(np.abs(self.lower), np.abs(self.upper))))

    def max_distance_to(self, c):
        c = np.asarray(c, dtype=float)
        far = np.maximum(np.abs(c - self.lower), np.abs(c - self.upper))
        return np.linalg.norm(far, axis=-1)

    def sample_uniform(self, rng, size):
        return self.lower + (self.upper - self.lower) * rng.random((size, self.dim))

    def to_dict(self):
        return {"kind": self.kind, "lower": self.lower.tolist(), "upper": self.upper.tolist()}


class Unconstrained(FeasibleSet):
    """All of R^d. Only meant for diagnostic runs: no Lipschitz bound exists."""

    kind = "unconstrained"
    bounded = False

    def project(self, z):
        return _as_points(z, self.dim).copy()

    def contains(self, w, tol=1e-12):
        w = _as_points(w, self.dim)
        return np.ones(w.shape[:-1], dtype=bool) if w.ndim == 2 else np.True_

    def max_norm(self):
        return float("inf")

    def max_distance_to(self, c):
        return np.full(np.asarray(c).shape[:-1], np.inf)

    def sample_uniform(self, rng, size):
        raise ValueError("cannot sample uniformly from an unbounded set")

    def to_dict(self):
        return {"kind": self.kind, "dim": self.dim}


def project(feasible, z):
    return feasible.project(z)


def contains(feasible, w, tol=1e-12):
    return feasible.contains(w, tol)


def from_dict(spec, dim=None):
    """Rebuild a set from :meth:`FeasibleSet.to_dict` output or config values.

    Scalar ``lower``/``upper`` values and a missing ball ``center`` are
    broadcast to ``dim``.
    """
    kind = spec["kind"]
    if kind == "l2_ball":
        center = spec.get("center")
        if center is None or np.ndim(center) == 0:
            if dim is None:
                raise ValueError("dim required for a ball without an explicit center")
            center = np.full(dim, 0.0 if center is None else float(center))
        return L2Ball(spec["radius"], center=center)
    if kind == "box":
        lower, upper = spec["lower"], spec["upper"]
        if np.ndim(lower) == 0:
            lower = np.full(dim, float(lower))
        if np.ndim(upper) == 0:
            upper = np.full(dim, float(upper))
        return Box(lower, upper)
    if kind == "unconstrained":
        return Unconstrained(spec.get("dim", dim))
    raise ValueError(f"unknown feasible set kind {kind!r}")
