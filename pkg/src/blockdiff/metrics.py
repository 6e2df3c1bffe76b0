"""Evaluation suite: MMD over structural descriptors, random-encoder FID,
valid/unique/novel fractions, Weisfeiler-Leman hashing, and the
memory-consumption ratio against a full-graph baseline run.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, NumericFault
from .graphs import Graph
from .linalg import jacobi_eigh, sqrtm_psd
from .planarity import is_planar

MAX_ORBIT_NODES = 200
SPECTRUM_BINS = 200
CLUSTERING_BINS = 100

# Orbit indices 0..10 cover the node roles of the six connected 4-node
# graphlets: path end/middle, star leaf/center, cycle, paw pendant /
# triangle / attachment, diamond degree-2 / degree-3, and clique.
ORBIT_NAMES = ("path_end", "path_mid", "star_leaf", "star_center", "cycle",
               "paw_pendant", "paw_triangle", "paw_attach", "diamond_side",
               "diamond_hub", "clique")

_EDGE_SLOTS = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))


def _build_orbit_table() -> np.ndarray:
    """Orbit index per position for each 6-bit labeled 4-node graph (-1 if none)."""
    table = np.full((64, 4), -1, dtype=np.int8)
    for code in range(64):
        deg = [0, 0, 0, 0]
        for bit, (u, v) in enumerate(_EDGE_SLOTS):
            if code >> bit & 1:
                deg[u] += 1
                deg[v] += 1
        e = sum(deg) // 2
        key = tuple(sorted(deg))
        orbit_by_degree = None
        if e == 3 and key == (1, 1, 2, 2):
            orbit_by_degree = {1: 0, 2: 1}
        elif e == 3 and key == (1, 1, 1, 3):
            orbit_by_degree = {1: 2, 3: 3}
        elif e == 4 and key == (2, 2, 2, 2):
            orbit_by_degree = {2: 4}
        elif e == 4 and key == (1, 2, 2, 3):
            orbit_by_degree = {1: 5, 2: 6, 3: 7}
        elif e == 5:
            orbit_by_degree = {2: 8, 3: 9}
        elif e == 6:
            orbit_by_degree = {3: 10}
        if orbit_by_degree is not None:
            for pos in range(4):
                table[code, pos] = orbit_by_degree[deg[pos]]
    return table


_ORBIT_TABLE = _build_orbit_table()


def node_orbit_counts(g: Graph) -> np.ndarray:
    """Per-node counts over the 11 connected 4-node graphlet orbits.

    Enumerates every 4-node subset (vectorized over index blocks) and
    classifies its induced subgraph through a precomputed 64-entry table.
    Refuses graphs beyond MAX_ORBIT_NODES nodes.
    """
    n = g.n
    if n > MAX_ORBIT_NODES:
        raise ContractViolation(
            f"orbit counting is limited to n <= {MAX_ORBIT_NODES}, got n={n}")
    counts = np.zeros((n, 11), dtype=np.int64)
    if n < 4:
        return counts
    adj = g.adjacency
    for j in range(1, n - 2):
        rest = np.arange(j + 1, n)
        ku, lu = np.triu_indices(rest.size, 1)
        k_idx = rest[ku]
        l_idx = rest[lu]
        m2 = k_idx.size
        if m2 == 0:
            continue
        i_idx = np.repeat(np.arange(j), m2)
        k_all = np.tile(k_idx, j)
        l_all = np.tile(l_idx, j)
        j_all = np.full(i_idx.size, j)
        code = (adj[i_idx, j_all].astype(np.int32)
                | adj[i_idx, k_all].astype(np.int32) << 1
                | adj[i_idx, l_all].astype(np.int32) << 2
                | adj[j_all, k_all].astype(np.int32) << 3
                | adj[j_all, l_all].astype(np.int32) << 4
                | adj[k_all, l_all].astype(np.int32) << 5)
        orbits = _ORBIT_TABLE[code]
        for pos, nodes in enumerate((i_idx, j_all, k_all, l_all)):
            o = orbits[:, pos]
            mask = o >= 0
            np.add.at(counts, (nodes[mask], o[mask].astype(np.int64)), 1)
    return counts


def clustering_coefficients(g: Graph) -> np.ndarray:
    adj = g.adjacency.astype(np.float64)
    deg = adj.sum(axis=1)
    tri2 = ((adj @ adj) * adj).sum(axis=1)
    denom = deg * (deg - 1.0)
    return np.where(denom > 0, tri2 / np.maximum(denom, 1.0), 0.0)


def normalized_laplacian_spectrum(g: Graph) -> np.ndarray:
    adj = g.adjacency.astype(np.float64)
    deg = adj.sum(axis=1)
    inv = np.where(deg > 0, 1.0 / np.sqrt(np.maximum(deg, 1e-300)), 0.0)
    lap = np.eye(g.n) - (inv[:, None] * adj) * inv[None, :]
    lap = (lap + lap.T) / 2.0
    vals, _ = jacobi_eigh(lap)
    return np.clip(vals, 0.0, 2.0)


@dataclass
class DescriptorSet:
    """Per-graph descriptors feeding the MMD metrics."""

    n: int
    degree_hist: np.ndarray
    clustering_hist: np.ndarray
    orbit: np.ndarray
    spectrum_hist: np.ndarray


def descriptors(g: Graph) -> DescriptorSet:
    """Degree/clustering/orbit/spectrum descriptors of one graph."""
    deg = g.degrees()
    degree_hist = np.bincount(deg, minlength=1).astype(np.float64)
    degree_hist /= degree_hist.sum()
    clust = clustering_coefficients(g)
    clustering_hist, _ = np.histogram(clust, bins=CLUSTERING_BINS, range=(0.0, 1.0))
    clustering_hist = clustering_hist.astype(np.float64) / g.n
    orbit = node_orbit_counts(g).sum(axis=0).astype(np.float64)
    spec = normalized_laplacian_spectrum(g)
    spectrum_hist, _ = np.histogram(spec, bins=SPECTRUM_BINS, range=(0.0, 2.0))
    spectrum_hist = spectrum_hist.astype(np.float64) / g.n
    return DescriptorSet(g.n, degree_hist, clustering_hist, orbit, spectrum_hist)


def descriptor_sets(graphs: list[Graph], threads: int = 1) -> list[DescriptorSet]:
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(descriptors, graphs))
    return [descriptors(g) for g in graphs]


def _tv_distance_matrix(xs: list[np.ndarray], ys: list[np.ndarray]) -> np.ndarray:
    width = max(max(len(x) for x in xs), max(len(y) for y in ys))
    xm = np.zeros((len(xs), width))
    ym = np.zeros((len(ys), width))
    for i, x in enumerate(xs):
        xm[i, :len(x)] = x
    for i, y in enumerate(ys):
        ym[i, :len(y)] = y
    return 0.5 * np.abs(xm[:, None, :] - ym[None, :, :]).sum(axis=2)


def mmd(reference: list[DescriptorSet], generated: list[DescriptorSet],
        descriptor: str, sigma: float = 1.0) -> float:
    """Kernel two-sample distance between descriptor distributions.

    Histogram descriptors use a Gaussian kernel over total-variation ground
    distance; the orbit descriptor uses a Gaussian RBF on per-node-normalized
    count vectors.  Biased V-statistic, clamped at zero, square-rooted.
    """
    if not reference or not generated:
        raise ContractViolation("mmd needs nonempty descriptor sets on both sides")

    if descriptor == "orbit":
        ref = np.stack([d.orbit / d.n for d in reference])
        gen = np.stack([d.orbit / d.n for d in generated])

        def dist(a, b):
            return np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2))

        dxx, dyy, dxy = dist(ref, ref), dist(gen, gen), dist(ref, gen)
    else:
        attr = {"degree": "degree_hist", "clustering": "clustering_hist",
                "spectrum": "spectrum_hist"}.get(descriptor)
        if attr is None:
            raise ContractViolation(f"unknown descriptor {descriptor!r}")
        xs = [getattr(d, attr) for d in reference]
        ys = [getattr(d, attr) for d in generated]
        dxx = _tv_distance_matrix(xs, xs)
        dyy = _tv_distance_matrix(ys, ys)
        dxy = _tv_distance_matrix(xs, ys)

    def kernel(d):
        return np.exp(-d ** 2 / (2.0 * sigma ** 2))

    mmd2 = kernel(dxx).mean() + kernel(dyy).mean() - 2.0 * kernel(dxy).mean()
    return float(np.sqrt(max(mmd2, 0.0)))


def _encoder_weights(seed: int, width: int = 32, rounds: int = 3):
    rng = np.random.default_rng(seed)
    weights = {"w_in": rng.standard_normal((3, width)) / np.sqrt(3),
               "b_in": rng.standard_normal(width) * 0.1}
    for r in range(rounds):
        weights[f"w_self_{r}"] = rng.standard_normal((width, width)) / np.sqrt(width)
        weights[f"w_nbr_{r}"] = rng.standard_normal((width, width)) / np.sqrt(width)
        weights[f"b_{r}"] = rng.standard_normal(width) * 0.1
    weights["rounds"] = rounds
    return weights


def embed_graph(g: Graph, weights) -> np.ndarray:
    """Sum-pooled embedding from a fixed random message-passing encoder."""
    adj = g.adjacency.astype(np.float64)
    feats = np.column_stack([g.degrees().astype(np.float64),
                             clustering_coefficients(g),
                             np.ones(g.n)])
    h = np.tanh(feats @ weights["w_in"] + weights["b_in"])
    for r in range(weights["rounds"]):
        h = np.tanh(h @ weights[f"w_self_{r}"] + (adj @ h) @ weights[f"w_nbr_{r}"]
                    + weights[f"b_{r}"])
    return h.sum(axis=0)


def frechet_distance(mu1: np.ndarray, cov1: np.ndarray, mu2: np.ndarray,
                     cov2: np.ndarray) -> float:
    """Frechet distance between two Gaussians via PSD matrix square roots."""
    diff = float(((mu1 - mu2) ** 2).sum())
    s1 = sqrtm_psd(cov1)
    inner = s1 @ cov2 @ s1
    inner = (inner + inner.T) / 2.0
    covmean = sqrtm_psd(inner)
    return diff + float(np.trace(cov1 + cov2) - 2.0 * np.trace(covmean))


def fid(reference: list[Graph], generated: list[Graph], encoder_seed: int = 0) -> float:
    """Frechet distance between Gaussian fits of fixed-random-encoder embeddings."""
    if len(reference) < 2 or len(generated) < 2:
        raise ContractViolation("fid needs at least 2 graphs on each side")
    weights = _encoder_weights(encoder_seed)
    ref = np.stack([embed_graph(g, weights) for g in reference])
    gen = np.stack([embed_graph(g, weights) for g in generated])
    mu1, mu2 = ref.mean(axis=0), gen.mean(axis=0)
    cov1 = np.cov(ref, rowvar=False)
    cov2 = np.cov(gen, rowvar=False)
    try:
        return frechet_distance(mu1, cov1, mu2, cov2)
    except NumericFault as exc:
        raise NumericFault(f"fid covariance square root failed: {exc}") from exc


def wl_hash(g: Graph, iterations: int = 3) -> str:
    """Weisfeiler-Leman color-refinement fingerprint (degree-initialized)."""
    labels = [str(int(d)) for d in g.degrees()]
    neighbors = [np.flatnonzero(g.adjacency[u]) for u in range(g.n)]
    for _ in range(iterations):
        new = []
        for u in range(g.n):
            token = labels[u] + "|" + ",".join(sorted(labels[v] for v in neighbors[u]))
            new.append(hashlib.blake2b(token.encode(), digest_size=8).hexdigest())
        labels = new
    summary = f"{g.n};{g.edge_count};" + ",".join(sorted(labels))
    return hashlib.blake2b(summary.encode(), digest_size=16).hexdigest()


def _is_connected(g: Graph) -> bool:
    if g.n == 0:
        return False
    seen = np.zeros(g.n, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        u = stack.pop()
        for v in np.flatnonzero(g.adjacency[u]):
            if not seen[v]:
                seen[v] = True
                stack.append(int(v))
    return bool(seen.all())


def vun(generated: list[Graph], train_set: list[Graph],
        validity: str = "connectivity") -> float:
    """Fraction of generated graphs that are valid, unique, and novel.

    Validity is a pluggable check; uniqueness deduplicates by WL hash within
    the generated set (first occurrence wins); novelty requires the hash to
    be absent from the training set.
    """
    if not generated or not train_set:
        raise ContractViolation("vun needs nonempty generated and train sets")
    if validity == "planarity":
        check = is_planar
    elif validity == "connectivity":
        check = _is_connected
    elif validity == "none":
        def check(_g):
            return True
    else:
        raise ContractViolation(f"unknown validity checker {validity!r}")
    train_hashes = {wl_hash(g) for g in train_set}
    seen: set[str] = set()
    good = 0
    for g in generated:
        h = wl_hash(g)
        unique = h not in seen
        seen.add(h)
        if unique and h not in train_hashes and check(g):
            good += 1
    return good / len(generated)


def memory_ratio(baseline_peak: float, sbgd_peak: float) -> float:
    """Baseline peak element count divided by block-diffusion peak."""
    if baseline_peak <= 0 or sbgd_peak <= 0:
        raise ContractViolation("memory_ratio needs positive measured peaks")
    return float(baseline_peak) / float(sbgd_peak)


def model_memory_ratio(n: int, block_size: int, feature_dim: int) -> float:
    """Element-count model: full graph (N^2 + N F) over a block pair ((2C)^2 + 2C F)."""
    pair = 2 * block_size
    return (n ** 2 + n * feature_dim) / (pair ** 2 + pair * feature_dim)


@dataclass
class MetricsReport:
    """One generated-vs-reference comparison."""

    mmd_degree: float
    mmd_clustering: float
    mmd_orbit: float
    mmd_spectrum: float
    avg_mmd: float
    fid: float
    n_reference: int
    n_generated: int
    vun_fraction: float | None = None
    memory_ratio: float | None = None
    config: dict = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {k: v for k, v in self.__dict__.items()}
        return json.dumps(payload, indent=2, default=float)

    CSV_HEADER = ("mmd_degree,mmd_clustering,mmd_orbit,mmd_spectrum,avg_mmd,"
                  "fid,vun,memory_ratio,n_reference,n_generated")

    def to_csv_row(self) -> str:
        vun_s = "" if self.vun_fraction is None else repr(self.vun_fraction)
        mr_s = "" if self.memory_ratio is None else repr(self.memory_ratio)
        return ",".join([repr(self.mmd_degree), repr(self.mmd_clustering),
                         repr(self.mmd_orbit), repr(self.mmd_spectrum),
                         repr(self.avg_mmd), repr(self.fid), vun_s, mr_s,
                         str(self.n_reference), str(self.n_generated)])


def evaluate(reference: list[Graph], generated: list[Graph], sigma: float = 1.0,
             encoder_seed: int = 0, validity: str | None = None,
             train_set: list[Graph] | None = None, threads: int = 1,
             config: dict | None = None) -> MetricsReport:
    """Full metric suite for one comparison; the Avg column averages the four
    implemented MMD descriptors."""
    ref_d = descriptor_sets(reference, threads)
    gen_d = descriptor_sets(generated, threads)
    scores = {name: mmd(ref_d, gen_d, name, sigma)
              for name in ("degree", "clustering", "orbit", "spectrum")}
    avg = float(np.mean(list(scores.values())))
    fid_value = fid(reference, generated, encoder_seed)
    vun_fraction = None
    if validity is not None:
        vun_fraction = vun(generated, train_set if train_set is not None else reference,
                           validity)
    return MetricsReport(mmd_degree=scores["degree"], mmd_clustering=scores["clustering"],
                         mmd_orbit=scores["orbit"], mmd_spectrum=scores["spectrum"],
                         avg_mmd=avg, fid=fid_value, n_reference=len(reference),
                         n_generated=len(generated), vun_fraction=vun_fraction,
                         config=config or {})
