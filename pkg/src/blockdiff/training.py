"""Training: pairwise block sampling, corruption, the five-term loss, and
checkpointing with bit-exact resume.

Each graph is decomposed once up front (static partition) and cached; a
training step draws unordered block pairs, corrupts both blocks at a shared
step t, denoises each, predicts their interaction from the predictions, and
applies one gradient-averaged Adam update.  The block-size histogram of the
decomposition cache is stored for the sampler.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from . import tensor as T
from .diffusion import (AnalogGraphState, NoiseSchedule, encode_analog,
                        forward_corrupt, make_schedule, sample_state_noise)
from .errors import ContractViolation, NumericFault
from .graphs import BlockDecomposition, Graph, decompose
from .memory import METER
from .model import (DenoiserConfig, DenoiserParams, denoise_block,
                    extract_features, init_params, predict_interblock)
from .optim import OptimizerState, adam_step
from .partition import choose_block_count, partition_graph
from .tensor import Tensor, backward

CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    """Hyperparameters of one training run."""

    learning_rate: float = 0.001
    diffusion_steps: int = 50
    schedule: str = "linear"
    total_steps: int = 2000
    pairs_per_batch: int = 8
    hidden: int = 64
    layers: int = 4
    heads: int = 4
    target_block_size: int = 16
    fixed_k: int | None = None
    balance_eps: float = 0.1
    seed: int = 0
    log_interval: int = 50
    checkpoint_interval: int = 500

    def __post_init__(self):
        positive = (self.diffusion_steps, self.total_steps,
                    self.pairs_per_batch, self.hidden, self.layers, self.heads,
                    self.target_block_size, self.log_interval, self.checkpoint_interval)
        if any(v <= 0 for v in positive):
            raise ContractViolation("all TrainConfig magnitudes must be positive")
        if self.learning_rate < 0:
            raise ContractViolation("learning_rate must be nonnegative")
        if self.fixed_k is not None and self.fixed_k < 1:
            raise ContractViolation("fixed_k must be >= 1 when given")

    def denoiser_config(self, feature_dim: int) -> DenoiserConfig:
        return DenoiserConfig(feature_dim=feature_dim, hidden=self.hidden,
                              heads=self.heads, layers=self.layers,
                              diffusion_steps=self.diffusion_steps)


class BlockSizeDistribution:
    """Empirical histogram of block node counts seen during decomposition."""

    def __init__(self, sizes: np.ndarray, probs: np.ndarray):
        sizes = np.asarray(sizes, dtype=np.int64)
        probs = np.asarray(probs, dtype=np.float64)
        if sizes.size == 0 or sizes.min() < 1:
            raise ContractViolation("block size support must be within [1, inf)")
        if abs(probs.sum() - 1.0) > 1e-9 or np.any(probs < 0):
            raise ContractViolation("block size probabilities must be a distribution")
        self.sizes = sizes
        self.probs = probs

    @classmethod
    def from_blocks(cls, counts) -> "BlockSizeDistribution":
        counts = np.asarray(list(counts), dtype=np.int64)
        sizes, freq = np.unique(counts, return_counts=True)
        return cls(sizes, freq / freq.sum())

    def sample(self, rng: np.random.Generator) -> int:
        return int(rng.choice(self.sizes, p=self.probs))

    def mean(self) -> float:
        return float((self.sizes * self.probs).sum())


class TrainingPair(NamedTuple):
    """Two block graphs and their true inter-block matrix (None for k = 1)."""

    block_i: Graph
    block_j: Graph
    inter: np.ndarray | None
    graph_index: int
    i: int
    j: int


class DecomposedDataset:
    """Graphs decomposed once with a fixed partition, plus the size histogram."""

    def __init__(self, graphs: list[Graph], decompositions: list[BlockDecomposition]):
        if not graphs:
            raise ContractViolation("dataset is empty")
        self.graphs = graphs
        self.decompositions = decompositions
        self.feature_dim = graphs[0].feature_dim
        all_sizes = [b.n for d in decompositions for b in d.blocks]
        self.size_distribution = BlockSizeDistribution.from_blocks(all_sizes)

    @classmethod
    def build(cls, graphs: list[Graph], config: TrainConfig) -> "DecomposedDataset":
        decomps = []
        for idx, g in enumerate(graphs):
            k = config.fixed_k if config.fixed_k is not None else choose_block_count(
                g.n, config.target_block_size)
            k = min(k, g.n)
            part = partition_graph(g, k, config.balance_eps, seed=config.seed + idx)
            decomps.append(decompose(g, part))
        return cls(graphs, decomps)


def draw_pair(dataset: DecomposedDataset, rng: np.random.Generator) -> TrainingPair:
    """Uniform graph, then a uniform unordered block pair of it."""
    gi = int(rng.integers(len(dataset.decompositions)))
    d = dataset.decompositions[gi]
    if d.k == 1:
        return TrainingPair(d.blocks[0], d.blocks[0], None, gi, 0, 0)
    i = int(rng.integers(d.k))
    j = int(rng.integers(d.k - 1))
    if j >= i:
        j += 1
    i, j = min(i, j), max(i, j)
    return TrainingPair(d.blocks[i], d.blocks[j], d.inter[(i, j)], gi, i, j)


def build_training_pairs(dataset: DecomposedDataset, seed: int):
    """Deterministic infinite stream of training pairs."""
    rng = np.random.default_rng(seed)
    while True:
        yield draw_pair(dataset, rng)


def _pair_loss(pair: TrainingPair, params: DenoiserParams, schedule: NoiseSchedule,
               rng: np.random.Generator):
    """Forward pass of one pair; returns (loss tensor, component floats)."""
    t = int(rng.integers(1, schedule.T + 1))
    self_pair = pair.inter is None

    def corrupt(block: Graph) -> AnalogGraphState:
        state0 = encode_analog(block)
        noise = sample_state_noise(rng, block.n, block.feature_dim)
        return forward_corrupt(state0, t, noise, schedule)

    state_i = corrupt(pair.block_i)
    z_i = extract_features(state_i, t, params.config.spectral_m)
    pred_i = denoise_block(state_i, z_i, t, params)
    target_a_i = Tensor(encode_analog(pair.block_i).a)
    loss_ai = T.mse_loss(pred_i[0], target_a_i)
    has_features = pair.block_i.feature_dim > 0
    loss_xi = T.mse_loss(pred_i[1], Tensor(pair.block_i.features)) if has_features else None

    if self_pair:
        loss_aj = loss_xj = loss_inter = None
    else:
        state_j = corrupt(pair.block_j)
        z_j = extract_features(state_j, t, params.config.spectral_m)
        pred_j = denoise_block(state_j, z_j, t, params)
        loss_aj = T.mse_loss(pred_j[0], Tensor(encode_analog(pair.block_j).a))
        loss_xj = (T.mse_loss(pred_j[1], Tensor(pair.block_j.features))
                   if has_features else None)
        logits = predict_interblock(pred_i, pred_j, params)
        inter_target = Tensor(2.0 * pair.inter.astype(np.float64) - 1.0)
        loss_inter = T.mse_loss(logits, inter_target)

    total = loss_ai
    for term in (loss_aj, loss_xi, loss_xj, loss_inter):
        if term is not None:
            total = T.add(total, term)
    parts = {
        "L_Ai": loss_ai.item(),
        "L_Aj": loss_aj.item() if loss_aj is not None else 0.0,
        "L_Xi": loss_xi.item() if loss_xi is not None else 0.0,
        "L_Xj": loss_xj.item() if loss_xj is not None else 0.0,
        "L_I": loss_inter.item() if loss_inter is not None else 0.0,
    }
    return total, parts


def train_step(pairs, params: DenoiserParams, opt_state: OptimizerState,
               schedule: NoiseSchedule, config: TrainConfig,
               rng: np.random.Generator) -> dict[str, float]:
    """One optimizer update from a batch of pairs with gradient averaging.

    Returns the averaged loss breakdown; `total` is exactly the sum of the
    five component entries.  Raises NumericFault with step diagnostics if a
    loss goes non-finite.
    """
    pairs = list(pairs)
    if not pairs:
        raise ContractViolation("train_step needs at least one pair")
    name_of = {id(t): name for name, t in params.items()}
    grad_sum: dict[str, np.ndarray] = {name: np.zeros_like(t.data)
                                       for name, t in params.items()}
    sums = {k: 0.0 for k in ("L_Ai", "L_Aj", "L_Xi", "L_Xj", "L_I")}
    for pair in pairs:
        try:
            total, parts = _pair_loss(pair, params, schedule, rng)
            grads = backward(total, params=[t for _, t in params.items()])
        except NumericFault as exc:
            raise NumericFault(
                f"step {opt_state.step + 1}, graph {pair.graph_index} "
                f"pair ({pair.i},{pair.j}): {exc}") from exc
        for tensor, g in grads.items():
            grad_sum[name_of[id(tensor)]] += g
        for k, v in parts.items():
            sums[k] += v
    scale = 1.0 / len(pairs)
    for name in grad_sum:
        grad_sum[name] *= scale
    adam_step({n: t for n, t in params.items()}, grad_sum, opt_state)
    out = {k: v * scale for k, v in sums.items()}
    out["total"] = out["L_Ai"] + out["L_Aj"] + out["L_Xi"] + out["L_Xj"] + out["L_I"]
    return out


@dataclass
class Checkpoint:
    """Everything needed to restart training or to sample."""

    version: int
    config: TrainConfig
    feature_dim: int
    params: dict[str, np.ndarray]
    adam_m: dict[str, np.ndarray]
    adam_v: dict[str, np.ndarray]
    opt_step: int
    step: int
    size_distribution: BlockSizeDistribution
    rng_state: dict

    def to_params(self) -> DenoiserParams:
        cfg = self.config.denoiser_config(self.feature_dim)
        tensors = {name: Tensor(arr.copy(), requires_grad=True)
                   for name, arr in self.params.items()}
        return DenoiserParams(cfg, tensors)

    def to_optimizer(self) -> OptimizerState:
        state = OptimizerState(lr=self.config.learning_rate)
        state.step = self.opt_step
        state.m = {k: v.copy() for k, v in self.adam_m.items()}
        state.v = {k: v.copy() for k, v in self.adam_v.items()}
        return state


def save_checkpoint(ckpt: Checkpoint, path: str) -> None:
    """Atomic (write-temp-then-rename) npz serialization of named arrays."""
    arrays = {}
    for name, arr in ckpt.params.items():
        arrays[f"param/{name}"] = arr
    for name, arr in ckpt.adam_m.items():
        arrays[f"adam_m/{name}"] = arr
    for name, arr in ckpt.adam_v.items():
        arrays[f"adam_v/{name}"] = arr
    arrays["dist/sizes"] = ckpt.size_distribution.sizes
    arrays["dist/probs"] = ckpt.size_distribution.probs
    meta = {
        "version": ckpt.version,
        "config": asdict(ckpt.config),
        "feature_dim": ckpt.feature_dim,
        "opt_step": ckpt.opt_step,
        "step": ckpt.step,
        "rng_state": ckpt.rng_state,
    }
    arrays["meta"] = np.array(json.dumps(meta))
    d = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".npz.tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            np.savez(fh, **arrays)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path: str) -> Checkpoint:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta["version"] != CHECKPOINT_VERSION:
            raise ContractViolation(
                f"checkpoint version {meta['version']} unsupported "
                f"(expected {CHECKPOINT_VERSION})")
        params, adam_m, adam_v = {}, {}, {}
        for key in data.files:
            if key.startswith("param/"):
                params[key[6:]] = data[key]
            elif key.startswith("adam_m/"):
                adam_m[key[7:]] = data[key]
            elif key.startswith("adam_v/"):
                adam_v[key[7:]] = data[key]
        dist = BlockSizeDistribution(data["dist/sizes"], data["dist/probs"])
    return Checkpoint(version=meta["version"], config=TrainConfig(**meta["config"]),
                      feature_dim=meta["feature_dim"], params=params, adam_m=adam_m,
                      adam_v=adam_v, opt_step=meta["opt_step"], step=meta["step"],
                      size_distribution=dist, rng_state=meta["rng_state"])


def _snapshot(config: TrainConfig, feature_dim: int, params: DenoiserParams,
              opt: OptimizerState, dist: BlockSizeDistribution, step: int,
              rng: np.random.Generator) -> Checkpoint:
    return Checkpoint(
        version=CHECKPOINT_VERSION, config=config, feature_dim=feature_dim,
        params={n: t.data.copy() for n, t in params.items()},
        adam_m={k: v.copy() for k, v in opt.m.items()},
        adam_v={k: v.copy() for k, v in opt.v.items()},
        opt_step=opt.step, step=step, size_distribution=dist,
        rng_state=rng.bit_generator.state)


def fit(graphs: list[Graph], config: TrainConfig, out_dir: str | None = None,
        resume: Checkpoint | None = None,
        loss_log: list | None = None) -> Checkpoint:
    """Run the configured number of training steps over a dataset.

    Writes `losses.csv` and periodic `checkpoint.npz` under `out_dir` when
    given.  Restores parameters, optimizer moments, step counter and RNG
    state bit-exactly from `resume`, so a resumed run reproduces the exact
    losses of an uninterrupted one.
    """
    dataset = DecomposedDataset.build(graphs, config)
    schedule = make_schedule(config.schedule, config.diffusion_steps)
    if resume is not None:
        params = resume.to_params()
        opt = resume.to_optimizer()
        rng = np.random.default_rng()
        rng.bit_generator.state = resume.rng_state
        start_step = resume.step
        dist = resume.size_distribution
    else:
        rng = np.random.default_rng(config.seed)
        params = init_params(config.denoiser_config(dataset.feature_dim), rng)
        opt = OptimizerState(lr=config.learning_rate)
        start_step = 0
        dist = dataset.size_distribution

    rows = []
    ckpt = None
    with METER.paused():
        for step in range(start_step + 1, config.total_steps + 1):
            pairs = [draw_pair(dataset, rng) for _ in range(config.pairs_per_batch)]
            losses = train_step(pairs, params, opt, schedule, config, rng)
            if loss_log is not None:
                loss_log.append(losses)
            if step % config.log_interval == 0:
                rows.append((step, losses))
            if out_dir is not None and (step % config.checkpoint_interval == 0
                                        or step == config.total_steps):
                ckpt = _snapshot(config, dataset.feature_dim, params, opt, dist,
                                 step, rng)
                save_checkpoint(ckpt, os.path.join(out_dir, "checkpoint.npz"))
    if ckpt is None or ckpt.step != config.total_steps:
        ckpt = _snapshot(config, dataset.feature_dim, params, opt, dist,
                         config.total_steps, rng)
        if out_dir is not None:
            save_checkpoint(ckpt, os.path.join(out_dir, "checkpoint.npz"))
    if out_dir is not None:
        _write_loss_csv(os.path.join(out_dir, "losses.csv"), rows, out_dir)
    return ckpt


def _write_loss_csv(path: str, rows, out_dir: str) -> None:
    lines = [f"# config: {os.path.join(out_dir, 'config.json')}",
             "step,L_Ai,L_Aj,L_Xi,L_Xj,L_I,total"]
    for step, losses in rows:
        lines.append(",".join([str(step)] + [repr(losses[k]) for k in
                                             ("L_Ai", "L_Aj", "L_Xi", "L_Xj", "L_I", "total")]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def instrumented_step_peak(graphs: list[Graph], config: TrainConfig,
                           warmup_steps: int = 2) -> dict:
    """Peak element count of one full training step (forward + backward).

    Warmup steps run uncounted so parameters and optimizer moments exist
    before measurement; the reported peak is the step-transient high-water
    (states, activations, gradients) above that baseline.  Single-worker by
    construction for determinism.
    """
    dataset = DecomposedDataset.build(graphs, config)
    schedule = make_schedule(config.schedule, config.diffusion_steps)
    rng = np.random.default_rng(config.seed)
    params = init_params(config.denoiser_config(dataset.feature_dim), rng)
    opt = OptimizerState(lr=config.learning_rate)
    with METER.paused():
        for _ in range(warmup_steps):
            pairs = [draw_pair(dataset, rng) for _ in range(config.pairs_per_batch)]
            train_step(pairs, params, opt, schedule, config, rng)
    pairs = [draw_pair(dataset, rng) for _ in range(config.pairs_per_batch)]
    with METER.scope("train_step") as scope:
        losses = train_step(pairs, params, opt, schedule, config, rng)
    return {"peak_elements": scope.peak, "losses": losses,
            "k": dataset.decompositions[0].k,
            "block_sizes": [b.n for b in dataset.decompositions[0].blocks]}
