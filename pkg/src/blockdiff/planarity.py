"""Planarity testing by exhaustive Kuratowski-subdivision search.

A graph is planar iff it contains no subdivision of K5 or K3,3.  The search
enumerates candidate branch vertices and tries to realize the required
pairwise connections as internally vertex-disjoint paths with backtracking.
Exponential by nature, so inputs are capped at 24 nodes; an edge-count
prefilter (e <= 3n - 6) rejects dense graphs immediately.
"""

from __future__ import annotations

from itertools import combinations

import numpy as np

from .errors import ContractViolation
from .graphs import Graph

MAX_PLANARITY_NODES = 24


def _simple_paths(adj_sets, a: int, b: int, blocked: set[int]):
    """Yield internal-node tuples of simple a-b paths avoiding `blocked`."""
    stack = [(a, (a,))]
    while stack:
        node, path = stack.pop()
        for nxt in adj_sets[node]:
            if nxt == b:
                yield path[1:]
                continue
            if nxt in blocked or nxt in path:
                continue
            stack.append((nxt, path + (nxt,)))


def _connect_pairs(adj_sets, pairs, branch: set[int], used: set[int]) -> bool:
    """Try to realize all pairs as internally disjoint paths (backtracking)."""
    if not pairs:
        return True
    a, b = pairs[0]
    blocked = (branch - {a, b}) | used
    for internals in _simple_paths(adj_sets, a, b, blocked):
        inset = set(internals)
        if inset & used:
            continue
        if _connect_pairs(adj_sets, pairs[1:], branch, used | inset):
            return True
    return False


def _has_subdivision(adj_sets, degrees, branch_count: int, min_degree: int,
                     pair_builder) -> bool:
    n = len(adj_sets)
    candidates = [v for v in range(n) if degrees[v] >= min_degree]
    if len(candidates) < branch_count:
        return False
    for combo in combinations(candidates, branch_count):
        for pairs in pair_builder(combo):
            if _connect_pairs(adj_sets, pairs, set(combo), set()):
                return True
    return False


def _k5_pairs(combo):
    yield [tuple(p) for p in combinations(combo, 2)]


def _k33_pairs(combo):
    seen = set()
    for left in combinations(combo, 3):
        right = tuple(v for v in combo if v not in left)
        key = min(left, right)
        if key in seen:
            continue
        seen.add(key)
        yield [(u, v) for u in left for v in right]


def find_kuratowski(g: Graph) -> str | None:
    """Return 'K5' or 'K3,3' if the graph contains such a subdivision."""
    n = g.n
    degrees = g.degrees()
    adj_sets = [set(np.flatnonzero(g.adjacency[u]).tolist()) for u in range(n)]
    if _has_subdivision(adj_sets, degrees, 5, 4, _k5_pairs):
        return "K5"
    if _has_subdivision(adj_sets, degrees, 6, 3, _k33_pairs):
        return "K3,3"
    return None


def is_planar(g: Graph) -> bool:
    """Exact planarity for graphs with up to MAX_PLANARITY_NODES nodes."""
    n = g.n
    if n > MAX_PLANARITY_NODES:
        raise ContractViolation(
            f"planarity testing is limited to n <= {MAX_PLANARITY_NODES}, got n={n}")
    if n <= 4:
        return True
    e = g.edge_count
    if e > 3 * n - 6:
        return False
    if e <= 8:
        return True
    return find_kuratowski(g) is None
