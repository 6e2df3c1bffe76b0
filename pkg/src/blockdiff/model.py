"""The learned networks: a graph-transformer trunk with a structure head and
a feature head predicting clean blocks from noisy ones, the structural and
spectral feature extractor feeding it, and the inter-block edge predictor
that scores bipartite connections between two predicted blocks.

All pieces are permutation equivariant and size-agnostic: the same
parameters evaluate blocks of any node count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .diffusion import AnalogGraphState
from .errors import ContractViolation, NumericFault
from .linalg import jacobi_eigh
from .tensor import Tensor


@dataclass(frozen=True)
class DenoiserConfig:
    """Capacity and input layout of the denoiser."""

    feature_dim: int
    hidden: int = 64
    heads: int = 4
    layers: int = 4
    diffusion_steps: int = 100
    time_freqs: int = 16
    spectral_m: int = 4
    edge_channels: int = 4
    pair_hidden: int = 16
    encoder_dim: int = 32

    def __post_init__(self):
        if self.hidden % self.heads != 0:
            raise ContractViolation(
                f"hidden width {self.hidden} must be divisible by head count {self.heads}")
        if min(self.feature_dim, self.hidden, self.heads, self.layers,
               self.diffusion_steps) < 0 or self.layers < 1:
            raise ContractViolation("invalid denoiser configuration")

    @property
    def node_input_dim(self) -> int:
        return self.feature_dim + 2 + self.spectral_m

    @property
    def time_dim(self) -> int:
        return 2 * self.time_freqs


class DenoiserParams:
    """Named parameter tensors for the trunk, heads, and inter-block predictor."""

    def __init__(self, config: DenoiserConfig, tensors: dict[str, Tensor]):
        self.config = config
        self.tensors = tensors

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def parameter_count(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def items(self):
        return self.tensors.items()


def init_params(config: DenoiserConfig, rng: np.random.Generator) -> DenoiserParams:
    d = config.hidden
    h = config.heads
    ec = config.edge_channels
    f = config.feature_dim
    tensors: dict[str, Tensor] = {}

    def w(name: str, shape: tuple, fan_in: int) -> None:
        tensors[name] = Tensor(rng.standard_normal(shape) / np.sqrt(max(1, fan_in)),
                               requires_grad=True)

    def b(name: str, shape: tuple) -> None:
        tensors[name] = Tensor(np.zeros(shape), requires_grad=True)

    w("in_node_w", (config.node_input_dim, d), config.node_input_dim)
    b("in_node_b", (d,))
    w("time_w", (config.time_dim, d), config.time_dim)
    b("time_b", (d,))
    w("edge_init_w", (1, ec), 1)
    b("edge_init_b", (ec,))
    for i in range(config.layers):
        tensors[f"ln1_gain_{i}"] = Tensor(np.ones(d), requires_grad=True)
        b(f"ln1_bias_{i}", (d,))
        for mat in ("wq", "wk", "wv", "wo"):
            w(f"{mat}_{i}", (d, d), d)
        w(f"edge_bias_w_{i}", (ec, h), ec)
        b(f"edge_bias_b_{i}", (h,))
        w(f"edge_update_w_{i}", (h, ec), h)
        b(f"edge_update_b_{i}", (ec,))
        tensors[f"ln2_gain_{i}"] = Tensor(np.ones(d), requires_grad=True)
        b(f"ln2_bias_{i}", (d,))
        w(f"ffn_w1_{i}", (d, 4 * d), d)
        b(f"ffn_b1_{i}", (4 * d,))
        w(f"ffn_w2_{i}", (4 * d, d), 4 * d)
        b(f"ffn_b2_{i}", (d,))
    tensors["out_ln_gain"] = Tensor(np.ones(d), requires_grad=True)
    b("out_ln_bias", (d,))
    w("node_head_w", (d, f), d)
    b("node_head_b", (f,))
    w("edge_head_w", (ec, 1), ec)
    b("edge_head_b", ())

    ed = config.encoder_dim
    w("enc_in_w", (f + 1, ed), f + 1)
    b("enc_in_b", (ed,))
    for r in range(2):
        w(f"enc_self_w_{r}", (ed, ed), ed)
        w(f"enc_nbr_w_{r}", (ed, ed), ed)
        b(f"enc_b_{r}", (ed,))
    w("bilinear_v", (ed, ed), ed)
    w("pair_g", (ed, config.pair_hidden), ed)
    b("pair_b1", (config.pair_hidden,))
    w("pair_w2", (config.pair_hidden,), config.pair_hidden)
    b("pair_b2", ())
    return DenoiserParams(config, tensors)


def time_embedding(t: int, total_steps: int, freqs: int = 16) -> np.ndarray:
    """Sinusoidal embedding of the normalized step t / T."""
    tau = t / max(1, total_steps)
    omega = np.pi * np.logspace(0.0, 3.0, freqs)
    ang = tau * omega
    return np.concatenate([np.sin(ang), np.cos(ang)])


def extract_features(state: AnalogGraphState, t: int, spectral_m: int = 4) -> np.ndarray:
    """Per-node structural/spectral descriptors of a (possibly noisy) state.

    Columns: normalized weighted degree, local clustering coefficient of the
    zero-thresholded structure, and the entries of the spectral_m smallest
    nontrivial eigenvectors of the weighted symmetric normalized Laplacian
    (zero-padded for tiny blocks).  Eigenvectors come from the cyclic Jacobi
    solver and have their sign fixed so the largest-magnitude entry is
    positive.
    """
    n = state.n
    w = np.clip((state.a + 1.0) / 2.0, 0.0, 1.0)
    np.fill_diagonal(w, 0.0)
    deg = w.sum(axis=1)
    deg_norm = deg / (n - 1) if n > 1 else np.zeros(n)

    hard = (state.a > 0.0).astype(np.float64)
    np.fill_diagonal(hard, 0.0)
    hdeg = hard.sum(axis=1)
    tri2 = ((hard @ hard) * hard).sum(axis=1)
    denom = hdeg * (hdeg - 1.0)
    clust = np.where(denom > 0, tri2 / np.maximum(denom, 1.0), 0.0)

    inv_sqrt = np.where(deg > 0, 1.0 / np.sqrt(np.maximum(deg, 1e-300)), 0.0)
    lap = np.eye(n) - (inv_sqrt[:, None] * w) * inv_sqrt[None, :]
    lap = (lap + lap.T) / 2.0
    _, vecs = jacobi_eigh(lap, max_sweeps=100)
    avail = min(spectral_m, max(0, n - 1))
    spec = np.zeros((n, spectral_m))
    for idx in range(avail):
        v = vecs[:, 1 + idx]
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        spec[:, idx] = v
    return np.column_stack([deg_norm, clust, spec])


def _affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return T.add(T.matmul(x, w), b)


def _sym(m: Tensor) -> Tensor:
    return T.scale(T.add(m, T.transpose(m)), 0.5)


def _heads_split(x: Tensor, heads: int, dh: int, transposed: bool = False) -> Tensor:
    n = x.shape[0]
    parts = T.reshape(x, (n, heads, dh))
    return T.permute(parts, (1, 2, 0) if transposed else (1, 0, 2))


def denoise_block(state: AnalogGraphState, z: np.ndarray, t: int,
                  params: DenoiserParams) -> tuple[Tensor, Tensor]:
    """One trunk pass predicting the clean structure and features of a block.

    Node tokens mix features, structural descriptors, and the time embedding;
    each layer biases its attention logits from the edge channel and folds
    symmetrized attention activations back into it.  Returns (a0_pred,
    x0_pred): a symmetric zero-diagonal n-by-n tensor and an n-by-F tensor,
    recorded on the tape whenever gradients are enabled.
    """
    cfg = params.config
    n = state.n
    if z.shape != (n, 2 + cfg.spectral_m):
        raise ContractViolation(
            f"feature block has shape {z.shape}, expected {(n, 2 + cfg.spectral_m)}")
    if state.feature_dim != cfg.feature_dim:
        raise ContractViolation(
            f"state feature dim {state.feature_dim} != config {cfg.feature_dim}")

    h = cfg.heads
    dh = cfg.hidden // h
    ec = cfg.edge_channels
    x_in = Tensor(np.concatenate([state.x, z], axis=1))
    temb = Tensor(time_embedding(t, cfg.diffusion_steps, cfg.time_freqs)[None, :])
    hidden = T.add(_affine(x_in, params["in_node_w"], params["in_node_b"]),
                   _affine(temb, params["time_w"], params["time_b"]))

    # Edge channel, kept flat as (n*n, ec); reshaped only around attention.
    a_flat = Tensor(state.a.reshape(n * n, 1))
    edge = _affine(a_flat, params["edge_init_w"], params["edge_init_b"])

    for layer in range(cfg.layers):
        try:
            normed = T.add(T.mul(T.layer_norm(hidden), params[f"ln1_gain_{layer}"]),
                           params[f"ln1_bias_{layer}"])
            qh = _heads_split(T.matmul(normed, params[f"wq_{layer}"]), h, dh)
            kt = _heads_split(T.matmul(normed, params[f"wk_{layer}"]), h, dh, transposed=True)
            vh = _heads_split(T.matmul(normed, params[f"wv_{layer}"]), h, dh)
            bias = T.permute(T.reshape(_affine(edge, params[f"edge_bias_w_{layer}"],
                                               params[f"edge_bias_b_{layer}"]),
                                       (n, n, h)), (2, 0, 1))
            logits = T.add(T.scale(T.bmm(qh, kt), 1.0 / np.sqrt(dh)), bias)
            probs = T.softmax_rows(logits)
            merged = T.reshape(T.permute(T.bmm(probs, vh), (1, 0, 2)), (n, cfg.hidden))
            hidden = T.add(hidden, T.matmul(merged, params[f"wo_{layer}"]))
            normed2 = T.add(T.mul(T.layer_norm(hidden), params[f"ln2_gain_{layer}"]),
                            params[f"ln2_bias_{layer}"])
            ffn = _affine(T.gelu(_affine(normed2, params[f"ffn_w1_{layer}"],
                                         params[f"ffn_b1_{layer}"])),
                          params[f"ffn_w2_{layer}"], params[f"ffn_b2_{layer}"])
            hidden = T.add(hidden, ffn)
            sym_probs = T.scale(T.add(probs, T.permute(probs, (0, 2, 1))), 0.5)
            update = _affine(T.reshape(T.permute(sym_probs, (1, 2, 0)), (n * n, h)),
                             params[f"edge_update_w_{layer}"],
                             params[f"edge_update_b_{layer}"])
            edge = T.add(edge, update)
        except NumericFault as exc:
            raise NumericFault(f"layer {layer}: {exc}") from exc

    out_norm = T.add(T.mul(T.layer_norm(hidden), params["out_ln_gain"]),
                     params["out_ln_bias"])
    x0_pred = _affine(out_norm, params["node_head_w"], params["node_head_b"])
    edge_mix = T.add(T.reshape(T.matmul(edge, params["edge_head_w"]), (n, n)),
                     params["edge_head_b"])
    mask = Tensor(1.0 - np.eye(n))
    a0_pred = T.mul(_sym(edge_mix), mask)
    return a0_pred, x0_pred


def encode_block(pred_a0: Tensor, pred_x0: Tensor, params: DenoiserParams) -> Tensor:
    """Node embeddings from two message-passing rounds over a predicted block."""
    n = pred_a0.shape[0]
    weights = T.scale(T.shift(pred_a0, 1.0), 0.5)
    deg = T.mean_(weights, axis=1, keepdims=True)
    h = T.gelu(_affine(T.concat([pred_x0, deg], axis=1),
                       params["enc_in_w"], params["enc_in_b"]))
    inv_n = 1.0 / max(1, n)
    for r in range(2):
        agg = T.scale(T.matmul(weights, h), inv_n)
        h = T.gelu(T.add(T.add(T.matmul(h, params[f"enc_self_w_{r}"]),
                               T.matmul(agg, params[f"enc_nbr_w_{r}"])),
                         params[f"enc_b_{r}"]))
    return h


def predict_interblock(pred_i: tuple[Tensor, Tensor], pred_j: tuple[Tensor, Tensor],
                       params: DenoiserParams) -> Tensor:
    """Logits for the bipartite connections between two predicted blocks.

    logit(u, v) combines a symmetric bilinear form of the node embeddings
    with an exchange-symmetric pairwise feed-forward term, so swapping the
    two blocks transposes the output.
    """
    h_i = encode_block(pred_i[0], pred_i[1], params)
    h_j = encode_block(pred_j[0], pred_j[1], params)
    n_i, n_j = h_i.shape[0], h_j.shape[0]
    ph = params.config.pair_hidden

    w_sym = _sym(params["bilinear_v"])
    bil = T.matmul(T.matmul(h_i, w_sym), T.transpose(h_j))

    g_i = T.matmul(h_i, params["pair_g"])
    g_j = T.matmul(h_j, params["pair_g"])
    pre = T.add(T.add(T.reshape(g_i, (n_i, 1, ph)), T.reshape(g_j, (1, n_j, ph))),
                params["pair_b1"])
    pair = T.sum_(T.mul(T.gelu(pre), params["pair_w2"]), axis=-1)
    return T.add(T.add(bil, pair), params["pair_b2"])
