"""Synthetic training data: contextual SBM graphs, Delaunay planar graphs,
and an Erdos-Renyi baseline.  All generators are pure functions of their
spec plus seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation
from .graph_io import write_dataset
from .graphs import Graph

# Community mean vectors are drawn from this fixed entropy pool so every
# graph in a dataset (each with its own seed) sees the same means.
_COMMUNITY_MEAN_ENTROPY = 0xC5B3


@dataclass(frozen=True)
class CsbmSpec:
    """Contextual stochastic block model parameters."""

    n: int
    communities: int
    p_in: float
    p_out: float
    feature_dim: int
    mu: float
    seed: int | tuple[int, ...]

    def __post_init__(self):
        if not 0.0 <= self.p_out <= self.p_in <= 1.0:
            raise ContractViolation(
                f"need 0 <= p_out <= p_in <= 1, got p_in={self.p_in}, p_out={self.p_out}")
        if self.communities < 1 or self.n < self.communities:
            raise ContractViolation(
                f"need 1 <= communities <= n, got {self.communities} for n={self.n}")
        if self.feature_dim < 0 or self.mu < 0:
            raise ContractViolation("feature_dim and mu must be nonnegative")


def community_means(communities: int, feature_dim: int) -> np.ndarray:
    """Fixed seeded unit mean vector per community (shared across a dataset)."""
    means = np.zeros((communities, feature_dim))
    for c in range(communities):
        rng = np.random.default_rng([_COMMUNITY_MEAN_ENTROPY, feature_dim, c])
        v = rng.standard_normal(feature_dim)
        norm = np.linalg.norm(v)
        means[c] = v / norm if norm > 0 else v
    return means


def csbm_assignment(n: int, communities: int) -> np.ndarray:
    """Even contiguous community split (sizes differ by at most one)."""
    sizes = np.full(communities, n // communities, dtype=np.int64)
    sizes[: n % communities] += 1
    return np.repeat(np.arange(communities), sizes)


def gen_csbm(spec: CsbmSpec) -> Graph:
    """Planted-community graph with community-mean plus Gaussian features."""
    rng = np.random.default_rng(spec.seed)
    n = spec.n
    comm = csbm_assignment(n, spec.communities)
    same = comm[:, None] == comm[None, :]
    prob = np.where(same, spec.p_in, spec.p_out)
    upper = rng.random((n, n)) < prob
    adj = np.triu(upper, 1)
    adj = (adj | adj.T).astype(np.int8)

    f = spec.feature_dim
    if f == 0:
        feats = np.zeros((n, 0))
    else:
        means = community_means(spec.communities, f)
        noise = rng.standard_normal((n, f)) / np.sqrt(f)
        feats = np.sqrt(spec.mu / n) * means[comm] + noise
    return Graph(adj, feats)


def _circumcircle_contains(pts: np.ndarray, tri: tuple[int, int, int], p: int) -> bool:
    """Incircle predicate for a counterclockwise triangle."""
    a, b, c = (pts[i] for i in tri)
    d = pts[p]
    m = np.array([
        [a[0] - d[0], a[1] - d[1], (a[0] - d[0]) ** 2 + (a[1] - d[1]) ** 2],
        [b[0] - d[0], b[1] - d[1], (b[0] - d[0]) ** 2 + (b[1] - d[1]) ** 2],
        [c[0] - d[0], c[1] - d[1], (c[0] - d[0]) ** 2 + (c[1] - d[1]) ** 2],
    ])
    return float(np.linalg.det(m)) > 0.0


def _orient(pts: np.ndarray, i: int, j: int, k: int) -> float:
    return float(np.cross(pts[j] - pts[i], pts[k] - pts[i]))


class _DegeneratePoints(Exception):
    pass


def _delaunay_edges(points: np.ndarray) -> set[tuple[int, int]]:
    """Incremental Bowyer-Watson triangulation; raises on degenerate inputs."""
    n = points.shape[0]
    pts = np.vstack([points, [[-10.0, -10.0], [12.0, -10.0], [0.5, 12.0]]])
    s0, s1, s2 = n, n + 1, n + 2
    tris: list[tuple[int, int, int]] = [(s0, s1, s2)]
    for p in range(n):
        bad = [t for t in tris if _circumcircle_contains(pts, t, p)]
        if not bad:
            raise _DegeneratePoints
        edge_count: dict[tuple[int, int], int] = {}
        for t in bad:
            for e in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
                key = (min(e), max(e))
                edge_count[key] = edge_count.get(key, 0) + 1
        boundary = [e for e, cnt in edge_count.items() if cnt == 1]
        tris = [t for t in tris if t not in bad]
        for u, v in boundary:
            orient = _orient(pts, u, v, p)
            if abs(orient) < 1e-12:
                raise _DegeneratePoints
            tris.append((u, v, p) if orient > 0 else (v, u, p))
    edges = set()
    for t in tris:
        if s0 in t or s1 in t or s2 in t:
            continue
        for e in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
            edges.add((min(e), max(e)))
    return edges


def gen_planar(n: int, seed: int, max_retries: int = 20) -> Graph:
    """Delaunay triangulation of n uniform points in the unit square.

    Degenerate (collinear/cocircular) point sets are resampled; exhausting
    the retry budget raises.
    """
    if n < 3:
        raise ContractViolation(f"planar generator needs n >= 3, got {n}")
    rng = np.random.default_rng(seed)
    for _ in range(max_retries):
        points = rng.random((n, 2))
        try:
            edges = _delaunay_edges(points)
        except _DegeneratePoints:
            continue
        adj = np.zeros((n, n), dtype=np.int8)
        for u, v in edges:
            adj[u, v] = adj[v, u] = 1
        if adj.sum() == 0 or not _connected(adj):
            continue
        return Graph(adj)
    raise ContractViolation(
        f"could not triangulate a non-degenerate point set in {max_retries} tries")


def _connected(adj: np.ndarray) -> bool:
    n = adj.shape[0]
    seen = np.zeros(n, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        u = stack.pop()
        for v in np.flatnonzero(adj[u]):
            if not seen[v]:
                seen[v] = True
                stack.append(int(v))
    return bool(seen.all())


def gen_er(n: int, p: float, seed: int) -> Graph:
    """Erdos-Renyi G(n, p) without features."""
    if not 0.0 <= p <= 1.0:
        raise ContractViolation(f"edge probability must be in [0, 1], got {p}")
    rng = np.random.default_rng(seed)
    upper = np.triu(rng.random((n, n)) < p, 1)
    adj = (upper | upper.T).astype(np.int8)
    return Graph(adj)


def generate_dataset(kind: str, count: int, out_dir: str, seed: int,
                     test_fraction: float = 0.2, **params) -> list[Graph]:
    """Materialize `count` graphs of one generator kind to a dataset directory."""
    if count < 1:
        raise ContractViolation("count must be >= 1")
    graphs = []
    for i in range(count):
        gseed = (seed, i)
        if kind == "csbm":
            spec = CsbmSpec(n=params["n"], communities=params["communities"],
                            p_in=params["p_in"], p_out=params["p_out"],
                            feature_dim=params["feature_dim"], mu=params["mu"],
                            seed=gseed)
            graphs.append(gen_csbm(spec))
        elif kind == "planar":
            graphs.append(gen_planar(params["n"], gseed))
        elif kind == "er":
            graphs.append(gen_er(params["n"], params["p"], gseed))
        else:
            raise ContractViolation(f"unknown generator kind {kind!r}")
    n_test = int(round(count * test_fraction))
    splits = ["train"] * (count - n_test) + ["test"] * n_test
    generator = {"kind": kind, **{k: v for k, v in params.items()}}
    write_dataset(graphs, out_dir, generator=generator, seed=seed, splits=splits)
    return graphs
