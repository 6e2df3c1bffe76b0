"""Graph value types and the block decomposition with exact reassembly.

A graph is an undirected simple graph held as a dense symmetric 0/1
adjacency matrix plus an optional real node-feature matrix (zero-width
when the dataset is structure-only).  All three types here are immutable
after construction and safe to share across threads.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ContractViolation


class Graph:
    """Symmetric binary adjacency plus an n-by-F float feature matrix."""

    __slots__ = ("adjacency", "features")

    def __init__(self, adjacency, features=None):
        adj = np.asarray(adjacency)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise ContractViolation(f"adjacency must be square, got shape {adj.shape}")
        if not np.isin(adj, (0, 1)).all():
            raise ContractViolation("adjacency entries must be 0 or 1")
        adj = adj.astype(np.int8)
        if np.any(np.diag(adj) != 0):
            raise ContractViolation("adjacency must have a zero diagonal (no self-loops)")
        if not np.array_equal(adj, adj.T):
            raise ContractViolation("adjacency must be symmetric")
        n = adj.shape[0]
        if features is None:
            feats = np.zeros((n, 0))
        else:
            feats = np.asarray(features, dtype=np.float64)
            if feats.ndim != 2 or feats.shape[0] != n:
                raise ContractViolation(
                    f"features must have {n} rows, got shape {feats.shape}")
            if not np.all(np.isfinite(feats)):
                raise ContractViolation("features must be finite")
        adj.setflags(write=False)
        feats.setflags(write=False)
        self.adjacency = adj
        self.features = feats

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def edge_count(self) -> int:
        return int(self.adjacency.sum()) // 2

    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1).astype(np.int64)

    def edges(self) -> list[tuple[int, int]]:
        iu, ju = np.nonzero(np.triu(self.adjacency, 1))
        return list(zip(iu.tolist(), ju.tolist()))

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (np.array_equal(self.adjacency, other.adjacency)
                and self.features.shape == other.features.shape
                and np.array_equal(self.features, other.features))

    def __hash__(self):
        return hash((self.n, self.edge_count, self.feature_dim))

    def __repr__(self):
        return f"Graph(n={self.n}, edges={self.edge_count}, F={self.feature_dim})"


def max_block_size(n: int, k: int, balance_eps: float) -> int:
    return math.ceil((1.0 + balance_eps) * n / k)


class Partition:
    """A balanced assignment of n nodes to k nonempty blocks."""

    __slots__ = ("assignment", "k", "balance_eps")

    def __init__(self, assignment, k: int, balance_eps: float = 0.1):
        assignment = np.asarray(assignment, dtype=np.int64)
        if assignment.ndim != 1:
            raise ContractViolation("assignment must be a flat vector of block ids")
        if k < 1:
            raise ContractViolation(f"k must be >= 1, got {k}")
        n = assignment.shape[0]
        counts = np.bincount(assignment, minlength=k) if n else np.zeros(k, dtype=np.int64)
        if assignment.size and (assignment.min() < 0 or assignment.max() >= k):
            raise ContractViolation("block ids must lie in [0, k)")
        if np.any(counts == 0):
            empty = int(np.flatnonzero(counts == 0)[0])
            raise ContractViolation(f"block {empty} is empty")
        cap = max_block_size(n, k, balance_eps)
        if counts.max(initial=0) > cap:
            raise ContractViolation(
                f"block size {int(counts.max())} exceeds balance cap {cap} "
                f"(n={n}, k={k}, eps={balance_eps})")
        assignment.setflags(write=False)
        self.assignment = assignment
        self.k = int(k)
        self.balance_eps = float(balance_eps)

    @property
    def n(self) -> int:
        return self.assignment.shape[0]

    def block_sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.k)

    def __repr__(self):
        return f"Partition(n={self.n}, k={self.k})"


class BlockDecomposition:
    """k induced block graphs plus the inter-block bipartite matrices.

    `inter[(i, j)]` with i < j holds the |V_i| x |V_j| 0/1 matrix of edges
    between blocks i and j; together these are the off-diagonal part of the
    adjacency, and `reassemble` restores the source graph exactly.
    """

    __slots__ = ("blocks", "node_maps", "inter")

    def __init__(self, blocks, node_maps, inter):
        self.blocks = list(blocks)
        self.node_maps = [np.asarray(m, dtype=np.int64) for m in node_maps]
        self.inter = dict(inter)
        total = np.concatenate(self.node_maps) if self.node_maps else np.zeros(0, np.int64)
        n = sum(b.n for b in self.blocks)
        if len(np.unique(total)) != n or (total.size and (total.min() != 0 or total.max() != n - 1)):
            raise ContractViolation("node_maps must partition [0, n) without overlap")

    @property
    def k(self) -> int:
        return len(self.blocks)

    @property
    def n(self) -> int:
        return sum(b.n for b in self.blocks)

    def cut_size(self) -> int:
        return int(sum(m.sum() for m in self.inter.values()))


def decompose(g: Graph, p: Partition) -> BlockDecomposition:
    """Split a graph into induced block graphs and inter-block matrices."""
    if p.n != g.n:
        raise ContractViolation(
            f"partition covers {p.n} nodes but the graph has {g.n}")
    node_maps = [np.flatnonzero(p.assignment == i) for i in range(p.k)]
    for i, m in enumerate(node_maps):
        if m.size == 0:
            raise ContractViolation(f"block {i} is empty")
    blocks = []
    for m in node_maps:
        sub_adj = g.adjacency[np.ix_(m, m)]
        blocks.append(Graph(sub_adj, g.features[m]))
    inter = {}
    for i in range(p.k):
        for j in range(i + 1, p.k):
            inter[(i, j)] = g.adjacency[np.ix_(node_maps[i], node_maps[j])].copy()
    return BlockDecomposition(blocks, node_maps, inter)


def reassemble(d: BlockDecomposition) -> Graph:
    """Invert `decompose`, restoring original node order via the node maps."""
    n = d.n
    adj = np.zeros((n, n), dtype=np.int8)
    fdim = d.blocks[0].feature_dim if d.blocks else 0
    feats = np.zeros((n, fdim))
    for b, m in zip(d.blocks, d.node_maps):
        adj[np.ix_(m, m)] = b.adjacency
        feats[m] = b.features
    for (i, j), a_ij in d.inter.items():
        mi, mj = d.node_maps[i], d.node_maps[j]
        adj[np.ix_(mi, mj)] = a_ij
        adj[np.ix_(mj, mi)] = a_ij.T
    return Graph(adj, feats)


def cut_size(g: Graph, assignment) -> int:
    """Number of edges whose endpoints live in different blocks."""
    assignment = np.asarray(assignment)
    same = assignment[:, None] == assignment[None, :]
    return int((g.adjacency * ~same).sum()) // 2
