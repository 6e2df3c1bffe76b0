"""Balanced k-way graph partitioning minimizing edge cut.

Multilevel pipeline: heavy-edge matching coarsens the graph until it is
small, greedy region growing from spread seeds builds an initial partition
at the coarsest level, and boundary Kernighan-Lin style move/swap passes
refine the assignment while uncoarsening.  A Fiedler-vector bisection and an
exhaustive small-instance optimizer serve as alternative and oracle.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractViolation, NumericFault
from .graphs import Graph, Partition, cut_size, max_block_size


def choose_block_count(n: int, target_block_size: int) -> int:
    """Block count giving blocks of roughly the target size."""
    if target_block_size < 1:
        raise ContractViolation("target block size must be positive")
    return min(max(1, round(n / target_block_size)), n)


def _weighted_cut(w: np.ndarray, assign: np.ndarray) -> float:
    diff = assign[:, None] != assign[None, :]
    return float((w * diff).sum()) / 2.0


def _heavy_edge_matching(w: np.ndarray, nw: np.ndarray, wmax: int, rng) -> np.ndarray | None:
    """Match each node with its heaviest unmatched neighbor; None if no pair matched."""
    n = w.shape[0]
    match = np.full(n, -1, dtype=np.int64)
    order = rng.permutation(n)
    matched_any = False
    for u in order:
        if match[u] != -1:
            continue
        nbrs = np.flatnonzero(w[u] > 0)
        nbrs = nbrs[(match[nbrs] == -1) & (nbrs != u)]
        nbrs = nbrs[nw[nbrs] + nw[u] <= wmax]
        if nbrs.size == 0:
            match[u] = u
            continue
        weights = w[u, nbrs]
        best = nbrs[weights == weights.max()]
        v = int(best[rng.integers(best.size)])
        match[u] = v
        match[v] = u
        matched_any = True
    if not matched_any:
        return None
    cid = np.full(n, -1, dtype=np.int64)
    nxt = 0
    for u in range(n):
        if cid[u] != -1:
            continue
        cid[u] = nxt
        if match[u] != u:
            cid[match[u]] = nxt
        nxt += 1
    return cid


def _contract(w: np.ndarray, nw: np.ndarray, cid: np.ndarray):
    nc = int(cid.max()) + 1
    wc = np.zeros((nc, nc))
    iu, ju = np.nonzero(np.triu(w, 1))
    np.add.at(wc, (cid[iu], cid[ju]), w[iu, ju])
    wc = wc + wc.T
    np.fill_diagonal(wc, 0.0)
    nwc = np.zeros(nc, dtype=np.int64)
    np.add.at(nwc, cid, nw)
    return wc, nwc


def _region_grow(w: np.ndarray, nw: np.ndarray, k: int, cap: int, rng) -> np.ndarray:
    """Grow k regions from spread seeds, greedily absorbing the best-connected node."""
    n = w.shape[0]
    assign = np.full(n, -1, dtype=np.int64)
    sizes = np.zeros(k, dtype=np.int64)

    seeds = [int(rng.integers(n))]
    hop = _bfs_hops(w, seeds[0])
    for _ in range(1, k):
        far = np.where(assign == -1, hop, -1)
        far[seeds] = -1
        candidates = np.flatnonzero(far == far.max()) if far.max() >= 0 else np.array([], np.int64)
        candidates = np.setdiff1d(candidates, np.array(seeds))
        if candidates.size == 0:
            candidates = np.setdiff1d(np.arange(n), np.array(seeds))
        s = int(candidates[rng.integers(candidates.size)])
        seeds.append(s)
        hop = np.minimum(hop, _bfs_hops(w, s))
    for b, s in enumerate(seeds):
        assign[s] = b
        sizes[b] = nw[s]

    conn = np.zeros((n, k))
    for b, s in enumerate(seeds):
        conn[:, b] = w[:, s]

    while True:
        unassigned = np.flatnonzero(assign == -1)
        if unassigned.size == 0:
            break
        fits = sizes[None, :] + nw[unassigned, None] <= cap
        gains = np.where(fits, conn[unassigned], -np.inf)
        u_idx, b_best = np.unravel_index(np.argmax(gains), gains.shape)
        if not np.isfinite(gains[u_idx, b_best]) or gains[u_idx, b_best] <= 0:
            # No connected feasible candidate: place the heaviest node where
            # there is most room (cap repaired later if ever exceeded).
            u = int(unassigned[np.argmax(nw[unassigned])])
            feasible = np.flatnonzero(sizes + nw[u] <= cap)
            b = int(feasible[np.argmin(sizes[feasible])]) if feasible.size else int(np.argmin(sizes))
        else:
            u = int(unassigned[u_idx])
            b = int(b_best)
        assign[u] = b
        sizes[b] += nw[u]
        conn[:, b] += w[:, u]
    return assign


def _bfs_hops(w: np.ndarray, source: int) -> np.ndarray:
    n = w.shape[0]
    hops = np.full(n, n + 1, dtype=np.int64)
    hops[source] = 0
    frontier = [source]
    d = 0
    while frontier:
        d += 1
        nxt = []
        for u in frontier:
            for v in np.flatnonzero(w[u] > 0):
                if hops[v] > d:
                    hops[v] = d
                    nxt.append(int(v))
        frontier = nxt
    return hops


def _repair_balance(w: np.ndarray, nw: np.ndarray, assign: np.ndarray, k: int, cap: int) -> None:
    sizes = np.zeros(k, dtype=np.int64)
    np.add.at(sizes, assign, nw)
    counts = np.bincount(assign, minlength=k)
    while sizes.max() > cap:
        b = int(np.argmax(sizes))
        members = np.flatnonzero(assign == b)
        best = None
        for u in members:
            if counts[b] <= 1:
                break
            for t in range(k):
                if t == b or sizes[t] + nw[u] > cap:
                    continue
                loss = float(w[u, assign == b].sum() - w[u, assign == t].sum())
                if best is None or loss < best[0]:
                    best = (loss, int(u), t)
        if best is None:
            raise ContractViolation(
                f"cannot satisfy balance cap {cap} with k={k} blocks")
        _, u, t = best
        assign[u] = t
        sizes[b] -= nw[u]
        sizes[t] += nw[u]
        counts[b] -= 1
        counts[t] += 1


def kl_refine(w: np.ndarray, nw: np.ndarray, assign: np.ndarray, k: int, cap: int):
    """Boundary move/swap refinement; returns (assignment, cut after each pass).

    Each pass applies best positive-gain single-node moves until exhausted,
    then best positive-gain swaps; passes stop when one yields no improvement,
    so the recorded cut sequence never increases.
    """
    n = w.shape[0]
    assign = assign.copy()
    sizes = np.zeros(k, dtype=np.int64)
    np.add.at(sizes, assign, nw)
    counts = np.bincount(assign, minlength=k).astype(np.int64)
    conn = np.zeros((n, k))
    for b in range(k):
        conn[:, b] = w[:, assign == b].sum(axis=1)

    def apply_move(u: int, b: int) -> None:
        old = assign[u]
        assign[u] = b
        sizes[old] -= nw[u]
        sizes[b] += nw[u]
        counts[old] -= 1
        counts[b] += 1
        conn[:, old] -= w[:, u]
        conn[:, b] += w[:, u]

    history = [_weighted_cut(w, assign)]
    while True:
        improved = False
        # Single-node moves.
        while True:
            own = conn[np.arange(n), assign]
            gains = conn - own[:, None]
            feasible = sizes[None, :] + nw[:, None] <= cap
            feasible[np.arange(n), assign] = False
            feasible &= (counts[assign] > 1)[:, None]
            gains = np.where(feasible, gains, -np.inf)
            u, b = np.unravel_index(np.argmax(gains), gains.shape)
            if not np.isfinite(gains[u, b]) or gains[u, b] <= 1e-12:
                break
            apply_move(int(u), int(b))
            improved = True
        # Pairwise swaps (help when balance locks single moves).
        while True:
            best = None
            own = conn[np.arange(n), assign]
            for u in range(n):
                bu = assign[u]
                du = conn[u] - own[u]
                for v in range(u + 1, n):
                    bv = assign[v]
                    if bv == bu:
                        continue
                    if sizes[bu] - nw[u] + nw[v] > cap or sizes[bv] - nw[v] + nw[u] > cap:
                        continue
                    gain = du[bv] + conn[v, bu] - own[v] - 2.0 * w[u, v]
                    if gain > 1e-12 and (best is None or gain > best[0]):
                        best = (gain, u, v)
            if best is None:
                break
            _, u, v = best
            bu, bv = int(assign[u]), int(assign[v])
            apply_move(u, bv)
            apply_move(v, bu)
            improved = True
        history.append(_weighted_cut(w, assign))
        if not improved:
            break
    return assign, history


def partition_graph(g: Graph, k: int, balance_eps: float = 0.1, seed: int = 0) -> Partition:
    """Balanced k-way partition via coarsen / initial-partition / refine."""
    n = g.n
    if k < 1:
        raise ContractViolation(f"k must be >= 1, got {k}")
    if k > n:
        raise ContractViolation(f"k={k} exceeds node count {n}")
    if k == 1:
        return Partition(np.zeros(n, dtype=np.int64), 1, balance_eps)

    rng = np.random.default_rng(seed)
    cap = max_block_size(n, k, balance_eps)
    w = g.adjacency.astype(np.float64)
    nw = np.ones(n, dtype=np.int64)

    levels = [(w, nw)]
    maps: list[np.ndarray] = []
    threshold = max(4 * k, 32)
    wmax = max(2, int(np.ceil(n / (2 * k))))
    while levels[-1][0].shape[0] > threshold:
        cw, cnw = levels[-1]
        cid = _heavy_edge_matching(cw, cnw, wmax, rng)
        if cid is None:
            break
        wc, nwc = _contract(cw, cnw, cid)
        if wc.shape[0] == cw.shape[0]:
            break
        maps.append(cid)
        levels.append((wc, nwc))

    cw, cnw = levels[-1]
    best_assign = None
    best_cut = np.inf
    for _ in range(8):
        cand = _region_grow(cw, cnw, k, cap, rng)
        _repair_balance(cw, cnw, cand, k, cap)
        cand, hist = kl_refine(cw, cnw, cand, k, cap)
        if hist[-1] < best_cut:
            best_cut = hist[-1]
            best_assign = cand
    assign = best_assign

    for level in range(len(maps) - 1, -1, -1):
        cid = maps[level]
        fw, fnw = levels[level]
        assign = assign[cid]
        assign, _ = kl_refine(fw, fnw, assign, k, cap)

    return Partition(assign, k, balance_eps)


def _components(adj: np.ndarray) -> list[np.ndarray]:
    n = adj.shape[0]
    seen = np.zeros(n, dtype=bool)
    comps = []
    for s in range(n):
        if seen[s]:
            continue
        stack = [s]
        seen[s] = True
        comp = []
        while stack:
            u = stack.pop()
            comp.append(u)
            for v in np.flatnonzero(adj[u]):
                if not seen[v]:
                    seen[v] = True
                    stack.append(int(v))
        comps.append(np.array(sorted(comp), dtype=np.int64))
    return comps


def spectral_bisect(g: Graph, seed: int = 0, balance_eps: float = 0.1,
                    residual_tol: float = 1e-8, max_iters: int = 5000) -> Partition:
    """Split a connected graph in two by the sign of its Fiedler vector.

    The second-smallest Laplacian eigenvector is computed by deflated inverse
    power iteration (projection against the constant vector) down to the
    requested eigenpair residual.  If the sign split violates the balance
    cap, nodes are split at the median Fiedler value instead.
    """
    n = g.n
    if n < 2:
        raise ContractViolation("spectral bisection needs at least 2 nodes")
    adj = g.adjacency.astype(np.float64)
    if len(_components(g.adjacency)) != 1:
        raise ContractViolation(
            "graph is disconnected; bisect each connected component separately")

    lap = np.diag(adj.sum(axis=1)) - adj
    lam_max = 2.0 * float(adj.sum(axis=1).max())
    sigma = max(1e-3 * lam_max, 1e-8)
    minv = np.linalg.inv(lap + sigma * np.eye(n))

    rng = np.random.default_rng(seed)
    ones = np.ones(n) / np.sqrt(n)
    v = rng.standard_normal(n)
    v -= ones * (ones @ v)
    v /= np.linalg.norm(v)
    lam = float(v @ lap @ v)
    for _ in range(max_iters):
        v = minv @ v
        v -= ones * (ones @ v)
        norm = np.linalg.norm(v)
        if norm == 0:
            v = rng.standard_normal(n)
            v -= ones * (ones @ v)
            norm = np.linalg.norm(v)
        v /= norm
        lam = float(v @ lap @ v)
        residual = float(np.linalg.norm(lap @ v - lam * v))
        if residual <= residual_tol:
            break
    else:
        raise NumericFault(
            f"Fiedler iteration did not reach residual {residual_tol:g} "
            f"in {max_iters} iterations (residual {residual:.3e})")

    if v[np.argmax(np.abs(v))] < 0:
        v = -v
    assign = (v > 0).astype(np.int64)
    counts = np.bincount(assign, minlength=2)
    cap = max_block_size(n, 2, balance_eps)
    if counts.min() == 0 or counts.max() > cap:
        order = np.argsort(v, kind="stable")
        assign = np.zeros(n, dtype=np.int64)
        assign[order[n // 2:]] = 1
    return Partition(assign, 2, balance_eps)


def brute_force_min_cut(g: Graph, k: int, balance_eps: float = 0.1) -> int:
    """Exact minimum balanced cut by exhaustive assignment enumeration (n <= 14)."""
    n = g.n
    if n > 14:
        raise ContractViolation(f"brute force is limited to n <= 14, got n={n}")
    if k < 1 or k > n:
        raise ContractViolation(f"k={k} is infeasible for n={n}")
    cap = max_block_size(n, k, balance_eps)
    adj = g.adjacency
    best = [np.inf]
    assign = np.full(n, -1, dtype=np.int64)
    sizes = np.zeros(k, dtype=np.int64)

    def recurse(i: int, used: int, cut: int) -> None:
        if cut >= best[0]:
            return
        if i == n:
            if used == k:
                best[0] = cut
            return
        if k - used > n - i:
            return
        limit = min(used + 1, k)
        for b in range(limit):
            if sizes[b] + 1 > cap:
                continue
            added = int(sum(adj[i, j] for j in range(i) if assign[j] != b))
            assign[i] = b
            sizes[b] += 1
            recurse(i + 1, used + (1 if b == used else 0), cut + added)
            sizes[b] -= 1
            assign[i] = -1

    recurse(0, 0, 0)
    if not np.isfinite(best[0]):
        raise ContractViolation("no balanced partition exists under the cap")
    return int(best[0])


def partition_cut(g: Graph, p: Partition) -> int:
    """Edge cut of a partition on its graph."""
    return cut_size(g, p.assignment)
