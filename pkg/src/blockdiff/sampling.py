"""Reverse-diffusion sampling of blocks and whole-graph assembly.

Block sizes come from the training-set histogram (or are fixed), each block
runs its own reverse chain, and every unordered block pair gets its
inter-block connections from the predictor applied to the final clean-state
predictions.  The full-graph baseline is this same code path at k = 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffusion import (AnalogGraphState, decode_analog, ddim_step, ddpm_step,
                        make_schedule, sample_state_noise)
from .errors import ContractViolation
from .graph_io import write_dataset
from .graphs import Graph
from .model import denoise_block, extract_features, predict_interblock
from .tensor import Tensor, no_grad
from .training import Checkpoint


@dataclass
class SampleConfig:
    """Knobs for one sampling run."""

    k: int = 2
    mode: str = "ddpm"
    stride: int = 1
    steps: int | None = None
    threshold: float = 0.5
    seed: int = 0
    size_source: str = "empirical"
    fixed_n: int | None = None

    def __post_init__(self):
        if self.k < 1:
            raise ContractViolation(f"k must be >= 1, got {self.k}")
        if self.mode not in ("ddpm", "ddim"):
            raise ContractViolation(f"mode must be ddpm or ddim, got {self.mode!r}")
        if not 0.0 < self.threshold < 1.0:
            raise ContractViolation(f"threshold must lie in (0, 1), got {self.threshold}")
        if self.size_source not in ("empirical", "fixed"):
            raise ContractViolation("size_source must be 'empirical' or 'fixed'")
        if self.size_source == "fixed" and (self.fixed_n is None or self.fixed_n < 1):
            raise ContractViolation("fixed size source needs fixed_n >= 1")
        if self.stride < 1:
            raise ContractViolation("stride must be >= 1")


def _ddim_times(T: int, config: SampleConfig) -> list[int]:
    stride = config.stride
    if config.steps is not None:
        if not 1 <= config.steps <= T:
            raise ContractViolation(f"steps must lie in [1, {T}], got {config.steps}")
        stride = max(1, int(round(T / config.steps)))
    ts = list(range(T, 0, -stride))
    return ts


def _reverse_chain(state: AnalogGraphState, params, schedule, config: SampleConfig,
                   rng: np.random.Generator):
    """Run one block's reverse diffusion; returns (final state, last prediction)."""
    m = params.config.spectral_m
    pred = None
    if config.mode == "ddpm":
        for t in range(schedule.T, 0, -1):
            z = extract_features(state, t, m)
            a0, x0 = denoise_block(state, z, t, params)
            pred = (a0.numpy(), x0.numpy())
            noise = sample_state_noise(rng, state.n, state.feature_dim) if t > 1 else None
            state = ddpm_step(state, pred[0], pred[1], t, schedule, noise)
    else:
        ts = _ddim_times(schedule.T, config)
        nexts = ts[1:] + [0]
        for t, t_next in zip(ts, nexts):
            z = extract_features(state, t, m)
            a0, x0 = denoise_block(state, z, t, params)
            pred = (a0.numpy(), x0.numpy())
            state = ddim_step(state, pred[0], pred[1], t, t_next, schedule)
    return state, pred


def sample_blocks(checkpoint: Checkpoint, config: SampleConfig):
    """Generate k blocks by reverse diffusion.

    Returns (graphs, predictions): the decoded block graphs plus the final
    continuous clean-state predictions retained for interaction prediction.
    """
    params = checkpoint.to_params()
    schedule = make_schedule(checkpoint.config.schedule,
                             checkpoint.config.diffusion_steps)
    rng = np.random.default_rng(config.seed)
    feature_dim = checkpoint.feature_dim
    graphs = []
    preds = []
    with no_grad():
        for b in range(config.k):
            if config.size_source == "fixed":
                n = int(config.fixed_n)
            else:
                n = checkpoint.size_distribution.sample(rng)
            init = sample_state_noise(rng, n, feature_dim)
            state = AnalogGraphState(init.a, init.x, schedule.T)
            try:
                state, pred = _reverse_chain(state, params, schedule, config, rng)
            except Exception as exc:
                raise type(exc)(f"block {b}: {exc}") from exc
            graphs.append(decode_analog(state))
            preds.append(pred)
    return graphs, preds


def assemble_graph(blocks: list[Graph], preds: list, checkpoint: Checkpoint,
                   config: SampleConfig) -> Graph:
    """Join sampled blocks into one graph with predicted inter-block edges.

    For every unordered pair the two directional logit maps are averaged
    (one transposed), mapped through the logistic function, and thresholded
    at tau; the result is the block-diagonal union plus those edges.
    """
    if not blocks:
        raise ContractViolation("assemble_graph needs at least one block")
    if len(blocks) == 1:
        return blocks[0]
    params = checkpoint.to_params()
    sizes = [g.n for g in blocks]
    offsets = np.cumsum([0] + sizes)
    n = int(offsets[-1])
    adj = np.zeros((n, n), dtype=np.int8)
    feats = np.zeros((n, blocks[0].feature_dim))
    for g, off in zip(blocks, offsets):
        adj[off:off + g.n, off:off + g.n] = g.adjacency
        feats[off:off + g.n] = g.features
    logit_cut = np.log(config.threshold / (1.0 - config.threshold))
    with no_grad():
        tens = [(Tensor(a0), Tensor(x0)) for a0, x0 in preds]
        for i in range(len(blocks)):
            for j in range(i + 1, len(blocks)):
                forward = predict_interblock(tens[i], tens[j], params).numpy()
                backward = predict_interblock(tens[j], tens[i], params).numpy()
                logits = (forward + backward.T) / 2.0
                edges = logits > logit_cut
                oi, oj = offsets[i], offsets[j]
                adj[oi:oi + sizes[i], oj:oj + sizes[j]] = edges
                adj[oj:oj + sizes[j], oi:oi + sizes[i]] = edges.T
    return Graph(adj, feats)


def sample_graph(checkpoint: Checkpoint, config: SampleConfig) -> Graph:
    """One assembled graph: sample k blocks, then join them."""
    blocks, preds = sample_blocks(checkpoint, config)
    return assemble_graph(blocks, preds, checkpoint, config)


def sample_dataset(checkpoint: Checkpoint, count: int, config: SampleConfig,
                   out_dir: str) -> list[Graph]:
    """Write `count` assembled graphs as a dataset directory with a manifest."""
    if count < 1:
        raise ContractViolation("count must be >= 1")
    graphs = []
    for idx in range(count):
        cfg = SampleConfig(**{**config.__dict__, "seed": _per_sample_seed(config.seed, idx)})
        graphs.append(sample_graph(checkpoint, cfg))
    meta = {"kind": "sampled", "mode": config.mode, "k": config.k,
            "threshold": config.threshold, "size_source": config.size_source,
            "fixed_n": config.fixed_n, "stride": config.stride, "steps": config.steps}
    write_dataset(graphs, out_dir, generator=meta, seed=config.seed,
                  splits=["generated"] * count)
    return graphs


def _per_sample_seed(seed: int, idx: int) -> int:
    return int(np.random.SeedSequence([seed, idx]).generate_state(1)[0])
