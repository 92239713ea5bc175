"""Communication graphs, doubly stochastic consensus matrices and mixing checks."""

from dataclasses import dataclass, field
from pathlib import Path

import networkx as nx
import numpy as np
from scipy.sparse.csgraph import connected_components

from ._io import atomic_write_text

GRAPH_KINDS = ("complete", "cycle", "random_geometric", "k_regular_expander")

# dense eigendecomposition up to this size, power iteration above
EIGH_MAX_N = 512


class GraphConstructionError(ValueError):
    """Raised when a graph with the requested parameters cannot be built."""


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph on nodes ``0..n-1``.

    Edges are stored once as ``(i, j)`` with ``i < j``; :meth:`has_edge` is
    symmetric. Self-loops are never stored.
    """

    n: int
    edges: frozenset
    kind: str
    positions: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        for i, j in self.edges:
            if not (0 <= i < j < self.n):
                raise ValueError(f"edge {(i, j)} is not a canonical pair for n={self.n}")

    def has_edge(self, i, j):
        return (min(i, j), max(i, j)) in self.edges

    def adjacency(self):
        a = np.zeros((self.n, self.n), dtype=bool)
        for i, j in self.edges:
            a[i, j] = a[j, i] = True
        return a

    def degrees(self):
        return self.adjacency().sum(axis=1)

    def is_connected(self):
        if self.n == 1:
            return True
        n_comp, _ = connected_components(self.adjacency(), directed=False)
        return n_comp == 1

    def sorted_edges(self):
        return sorted(self.edges)


def _edges_from_adjacency(a):
    i, j = np.nonzero(np.triu(a, k=1))
    return frozenset(zip(i.tolist(), j.tolist()))


def default_radius(n):
    """Connectivity-threshold radius ``sqrt(2 log n / n)`` for the unit square."""
    return float(np.sqrt(2.0 * np.log(n) / n))


def build_graph(kind, n, params=None, seed=None, max_retries=100):
    """Build a connected graph.

    Parameters
    ----------
    kind : {"complete", "cycle", "random_geometric", "k_regular_expander"}
    n : int
        Number of nodes. ``complete`` accepts ``n = 1`` (a single isolated
        node) so that single-processor runs share the same code path.
    params : dict, optional
        ``radius`` for random geometric graphs (points in the unit square),
        ``degree`` for random regular expanders.
    seed : int, optional
        Random kinds are deterministic functions of the seed.
    max_retries : int
        Number of resampling attempts before giving up on connectivity.
    """
    params = dict(params or {})
    if kind not in GRAPH_KINDS:
        raise ValueError(f"unknown graph kind {kind!r}; expected one of {GRAPH_KINDS}")
    n = int(n)
    if kind == "complete" and n == 1:
        return Graph(1, frozenset(), kind)
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")

    if kind == "complete":
        a = ~np.eye(n, dtype=bool)
        return Graph(n, _edges_from_adjacency(a), kind)

    if kind == "cycle":
        if n == 2:
            return Graph(2, frozenset({(0, 1)}), kind)
        edges = frozenset((min(i, (i + 1) % n), max(i, (i + 1) % n)) for i in range(n))
        return Graph(n, edges, kind)

    rng = np.random.default_rng(seed)

    if kind == "random_geometric":
        radius = params.get("radius")
        radius = default_radius(n) if radius is None else float(radius)
        if not 0.0 < radius <= np.sqrt(2.0):
            raise ValueError(f"radius must lie in (0, sqrt(2)], got {radius}")
        for _ in range(max_retries):
            pos = rng.random((n, 2))
            dist = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=2)
            a = (dist <= radius) & ~np.eye(n, dtype=bool)
            g = Graph(n, _edges_from_adjacency(a), kind, positions=pos)
            if g.is_connected():
                return g
        raise GraphConstructionError(
            f"radius={radius} produced no connected random geometric graph on n={n} "
            f"nodes after {max_retries} retries"
        )

    degree = int(params.get("degree", 4))
    if degree % 2 != 0 or not 0 < degree < n:
        raise ValueError(f"degree must be even and in (0, n), got degree={degree}, n={n}")
    for _ in range(max_retries):
        nxg = nx.random_regular_graph(degree, n, seed=int(rng.integers(2**31 - 1)))
        edges = frozenset((min(u, v), max(u, v)) for u, v in nxg.edges())
        g = Graph(n, edges, kind)
        if g.is_connected():
            return g
    raise GraphConstructionError(
        f"degree={degree} produced no connected regular graph on n={n} nodes "
        f"after {max_retries} retries"
    )


@dataclass(frozen=True)
class ConsensusMatrix:
    """Symmetric doubly stochastic matrix with its spectral summary.

    ``lambda2`` is the second-largest eigenvalue and ``slem`` the largest
    magnitude among the non-principal eigenvalues. Mixing bounds use ``slem``.
    """

    p: np.ndarray
    lambda2: float
    slem: float

    @property
    def n(self):
        return self.p.shape[0]

    def check(self, graph=None, tol=1e-12):
        p = self.p
        if np.any(p < 0):
            raise ValueError("consensus matrix has negative entries")
        if np.max(np.abs(p.sum(axis=1) - 1.0)) > tol:
            raise ValueError("row sums differ from 1")
        if np.max(np.abs(p.sum(axis=0) - 1.0)) > tol:
            raise ValueError("column sums differ from 1")
        if not np.array_equal(p, p.T):
            raise ValueError("consensus matrix is not symmetric")
        if graph is not None:
            off = ~graph.adjacency() & ~np.eye(graph.n, dtype=bool)
            if np.any(p[off] != 0):
                raise ValueError("consensus matrix has weight on a non-edge")
        return True


def metropolis_weights(g):
    """Metropolis-Hastings weights ``1 / (1 + max(deg_i, deg_j))`` on edges."""
    if not g.is_connected():
        raise ValueError("graph must be connected")
    deg = g.degrees()
    p = np.zeros((g.n, g.n))
    for i, j in g.sorted_edges():
        p[i, j] = p[j, i] = 1.0 / (1.0 + max(deg[i], deg[j]))
    for i in range(g.n):
        # ordered sum over the row keeps the diagonal deterministic
        p[i, i] = 1.0 - sum(p[i, j] for j in range(g.n) if j != i)
    lambda2, slem = spectral_lambda2(p)
    cm = ConsensusMatrix(p, lambda2, slem)
    cm.check(g)
    return cm


def _power_iteration(apply, n, rng, iters=10000, tol=1e-13):
    v = rng.standard_normal(n)
    v -= v.mean()
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        u = apply(v)
        u -= u.mean()
        nu = np.linalg.norm(u)
        if nu == 0.0:
            return 0.0
        new_lam = float(v @ u)
        u /= nu
        if abs(new_lam - lam) < tol * max(1.0, abs(new_lam)):
            return new_lam
        v, lam = u, new_lam
    return lam


def spectral_lambda2(p, method=None):
    """Return ``(lambda2, slem)`` of a symmetric doubly stochastic matrix.

    ``method`` is ``"eigh"`` or ``"power"``; by default dense ``eigh`` is used
    for ``n <= 512`` and power iteration on the complement of the all-ones
    vector otherwise.
    """
    p = np.asarray(p.p if isinstance(p, ConsensusMatrix) else p, dtype=float)
    n = p.shape[0]
    if p.shape != (n, n):
        raise ValueError("consensus matrix must be square")
    if not np.allclose(p, p.T, rtol=0.0, atol=1e-12):
        raise ValueError("spectral_lambda2 requires a symmetric matrix")
    if n == 1:
        return 0.0, 0.0
    method = method or ("eigh" if n <= EIGH_MAX_N else "power")
    if method == "eigh":
        ev = np.linalg.eigvalsh(p)[::-1]
        rest = ev[1:]
        return float(rest[0]), float(np.max(np.abs(rest)))
    if method != "power":
        raise ValueError(f"unknown method {method!r}")
    rng = np.random.default_rng(0)
    # iterates are kept orthogonal to the all-ones vector, so P acts as P - J/n
    slem = abs(_power_iteration(lambda v: p @ (p @ v), n, rng)) ** 0.5
    lambda2 = _power_iteration(lambda v: p @ v + v, n, rng) - 1.0
    return float(lambda2), float(slem)


@dataclass
class MixingReport:
    """Row-wise l1 distances of ``P^t`` to the uniform distribution.

    ``l1_deviation[t-1, i]`` holds ``||1/n - [P^t]_{i,:}||_1``. ``bound`` is
    ``sqrt(n) * slem^t`` and ``sqrt_bound`` the looser ``sqrt(n) * sqrt(slem)^t``.
    ``cumulative[t-1, i]`` sums the deviations of powers ``2..t`` and is
    compared against ``1 + log(t_max sqrt(n)) / (1 - sqrt(slem))``.
    """

    l1_deviation: np.ndarray
    bound: np.ndarray
    sqrt_bound: np.ndarray
    cumulative: np.ndarray
    cumulative_bound: float
    slem: float
    lambda2: float
    tol: float = 1e-10

    @property
    def pass_matrix(self):
        return self.l1_deviation <= self.bound[:, None] + self.tol

    @property
    def passed(self):
        return bool(
            np.all(self.pass_matrix)
            and np.all(self.l1_deviation <= self.sqrt_bound[:, None] + self.tol)
            and np.all(self.cumulative <= self.cumulative_bound + self.tol)
        )

    @property
    def worst_violation(self):
        return float(np.max(self.l1_deviation - self.bound[:, None]))


def mixing_report(p, t_max, tol=1e-10):
    if t_max < 1:
        raise ValueError("t_max must be >= 1")
    if not isinstance(p, ConsensusMatrix):
        lambda2, slem = spectral_lambda2(p)
        p = ConsensusMatrix(np.asarray(p, dtype=float), lambda2, slem)
    if p.slem >= 1.0:
        raise ValueError(f"slem={p.slem} >= 1: chain is periodic or disconnected")
    n = p.n
    dev = np.empty((t_max, n))
    pt = np.eye(n)
    for t in range(t_max):
        pt = pt @ p.p
        dev[t] = np.abs(pt - 1.0 / n).sum(axis=1)
    ts = np.arange(1, t_max + 1)
    bound = np.sqrt(n) * p.slem**ts
    sqrt_bound = np.sqrt(n) * np.sqrt(p.slem) ** ts
    cumulative = np.cumsum(dev, axis=0) - dev[0]
    cumulative_bound = 1.0 + np.log(t_max * np.sqrt(n)) / (1.0 - np.sqrt(p.slem))
    return MixingReport(dev, bound, sqrt_bound, cumulative, float(cumulative_bound),
                        p.slem, p.lambda2, tol)


def matrix_power_sums(p, t_max):
    """Max deviation of row and column sums of ``P^t`` from 1, for t = 1..t_max."""
    p = p.p if isinstance(p, ConsensusMatrix) else np.asarray(p)
    out = np.empty(t_max)
    pt = np.eye(p.shape[0])
    for t in range(t_max):
        pt = pt @ p
        out[t] = max(np.max(np.abs(pt.sum(axis=0) - 1)), np.max(np.abs(pt.sum(axis=1) - 1)))
    return out


def write_edges_csv(g, path):
    lines = ["i,j"] + [f"{i},{j}" for i, j in g.sorted_edges()]
    atomic_write_text(Path(path), "\n".join(lines) + "\n")


def write_matrix_csv(cm, path):
    p = cm.p if isinstance(cm, ConsensusMatrix) else np.asarray(cm)
    lines = [",".join(repr(float(v)) for v in row) for row in p]
    atomic_write_text(Path(path), "\n".join(lines) + "\n")


def read_matrix_csv(path):
    return np.loadtxt(path, delimiter=",", ndmin=2)
