"""Encoder assembly: input projectors, masked multi-head attention layers,
feed-forward blocks, readout, and task heads.

The layer is a vanilla Transformer encoder layer whose only structural
ingredient is the per-head reachability mask handed to the sparse attention
kernel.  Normalization defaults to post-norm (after each residual add); a
config switch selects pre-norm.  Projectors are bias-free so edge tokens of a
graph without edge features enter as exact zero rows.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from . import autograd as ops
from .autograd import Tensor, ShapeError
from .graphs import AugmentedGraph, Graph
from .masks import HopMask

CHECKPOINT_MAGIC = "HOPFORMER1"

TASKS = ("node_classification", "graph_classification", "graph_regression")
READOUTS = ("mean", "sum")
NORMS = ("post", "pre")


@dataclass(frozen=True)
class ModelConfig:
    hidden_dim: int
    head_hops: tuple[int, ...]
    num_layers: int
    ffn_dim: int
    num_heads: int = 4
    dropout: float = 0.0
    attention_dropout: float = 0.0
    task: str = "node_classification"
    readout: str = "mean"
    num_classes: int | None = None
    output_dim: int = 1
    norm: str = "post"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "head_hops", tuple(int(h) for h in self.head_hops))
        if self.num_heads < 1 or self.hidden_dim % self.num_heads != 0:
            raise ValueError(
                f"num_heads ({self.num_heads}) must divide hidden_dim ({self.hidden_dim})")
        if len(self.head_hops) != self.num_heads:
            raise ValueError(
                f"head_hops has {len(self.head_hops)} entries for {self.num_heads} heads")
        if any(h < 0 for h in self.head_hops):
            raise ValueError(f"hop budgets must be non-negative, got {self.head_hops}")
        if self.num_layers < 0:
            raise ValueError(f"num_layers must be non-negative, got {self.num_layers}")
        for name in ("dropout", "attention_dropout"):
            r = getattr(self, name)
            if not 0.0 <= r < 1.0:
                raise ValueError(f"{name} must be in [0, 1), got {r}")
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.readout not in READOUTS:
            raise ValueError(f"readout must be one of {READOUTS}, got {self.readout!r}")
        if self.norm not in NORMS:
            raise ValueError(f"norm must be one of {NORMS}, got {self.norm!r}")
        if self.task.endswith("classification") and not self.num_classes:
            raise ValueError(f"num_classes required for task {self.task!r}")

    @property
    def head_dim(self) -> int:
        return self.hidden_dim // self.num_heads


@dataclass
class LayerParams:
    wq: list[Tensor]
    wk: list[Tensor]
    wv: list[Tensor]
    wo: Tensor
    ln1_gamma: Tensor
    ln1_beta: Tensor
    ln2_gamma: Tensor
    ln2_beta: Tensor
    ffn_w1: Tensor
    ffn_b1: Tensor
    ffn_w2: Tensor
    ffn_b2: Tensor


@dataclass
class Model:
    cfg: ModelConfig
    d_v: int
    d_e: int
    proj_node: Tensor
    proj_edge: Tensor | None
    layers: list[LayerParams]
    head_w: Tensor
    head_b: Tensor


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_model(cfg: ModelConfig, d_v: int, d_e: int = 0) -> Model:
    """Glorot-uniform weights, zero biases, unit layer-norm gains; seeded."""
    if d_v < 1:
        raise ValueError(f"d_v must be at least 1, got {d_v}")
    if d_e < 0:
        raise ValueError(f"d_e must be non-negative, got {d_e}")
    rng = np.random.default_rng(cfg.seed)
    d, d_h, f = cfg.hidden_dim, cfg.head_dim, cfg.ffn_dim

    def param(fan_in, fan_out):
        return Tensor(_glorot(rng, fan_in, fan_out), requires_grad=True)

    def const(values):
        return Tensor(values, requires_grad=True)

    proj_node = param(d_v, d)
    proj_edge = param(d_e, d) if d_e > 0 else None
    layers = []
    for _ in range(cfg.num_layers):
        layers.append(LayerParams(
            wq=[param(d, d_h) for _ in range(cfg.num_heads)],
            wk=[param(d, d_h) for _ in range(cfg.num_heads)],
            wv=[param(d, d_h) for _ in range(cfg.num_heads)],
            wo=param(d, d),
            ln1_gamma=const(np.ones((1, d))),
            ln1_beta=const(np.zeros((1, d))),
            ln2_gamma=const(np.ones((1, d))),
            ln2_beta=const(np.zeros((1, d))),
            ffn_w1=param(d, f),
            ffn_b1=const(np.zeros((1, f))),
            ffn_w2=param(f, d),
            ffn_b2=const(np.zeros((1, d))),
        ))
    out_dim = cfg.num_classes if cfg.task.endswith("classification") else cfg.output_dim
    head_w = param(d, out_dim)
    head_b = const(np.zeros((1, out_dim)))
    return Model(cfg=cfg, d_v=d_v, d_e=d_e, proj_node=proj_node, proj_edge=proj_edge,
                 layers=layers, head_w=head_w, head_b=head_b)


def named_parameters(m: Model) -> dict[str, Tensor]:
    """Flat parameter dict in a fixed order (optimizer and checkpoint order)."""
    out: dict[str, Tensor] = {"proj_node": m.proj_node}
    if m.proj_edge is not None:
        out["proj_edge"] = m.proj_edge
    for l, lp in enumerate(m.layers):
        for h in range(m.cfg.num_heads):
            out[f"layer{l}.head{h}.wq"] = lp.wq[h]
            out[f"layer{l}.head{h}.wk"] = lp.wk[h]
            out[f"layer{l}.head{h}.wv"] = lp.wv[h]
        out[f"layer{l}.wo"] = lp.wo
        out[f"layer{l}.ln1_gamma"] = lp.ln1_gamma
        out[f"layer{l}.ln1_beta"] = lp.ln1_beta
        out[f"layer{l}.ln2_gamma"] = lp.ln2_gamma
        out[f"layer{l}.ln2_beta"] = lp.ln2_beta
        out[f"layer{l}.ffn_w1"] = lp.ffn_w1
        out[f"layer{l}.ffn_b1"] = lp.ffn_b1
        out[f"layer{l}.ffn_w2"] = lp.ffn_w2
        out[f"layer{l}.ffn_b2"] = lp.ffn_b2
    out["head.weight"] = m.head_w
    out["head.bias"] = m.head_b
    return out


def embed_tokens(m: Model, g: Graph, ag: AugmentedGraph) -> Tensor:
    """Project node features (rows 0..N-1) and edge features (rows N..T-1)
    into the shared token space; featureless edge tokens come out as zeros."""
    if g.node_feature_dim != m.d_v:
        raise ShapeError(
            f"graph node features have dim {g.node_feature_dim}, model expects {m.d_v}")
    node_part = ops.matmul(Tensor(g.node_features), m.proj_node)
    if ag.num_edge_tokens == 0:
        return node_part
    if m.proj_edge is not None:
        if g.edge_features is None:
            raise ShapeError(f"model expects edge features of dim {m.d_e}, graph has none")
        if g.edge_feature_dim != m.d_e:
            raise ShapeError(
                f"graph edge features have dim {g.edge_feature_dim}, model expects {m.d_e}")
        edge_part = ops.matmul(Tensor(g.edge_features), m.proj_edge)
    else:
        edge_part = Tensor(np.zeros((ag.num_edge_tokens, m.cfg.hidden_dim)))
    return ops.concat_rows([node_part, edge_part])


def _mhsa_concat(z: Tensor, masks: list[HopMask], lp: LayerParams, cfg: ModelConfig,
                 training: bool, seed: list) -> Tensor:
    heads = []
    for h in range(cfg.num_heads):
        qh = ops.matmul(z, lp.wq[h])
        kh = ops.matmul(z, lp.wk[h])
        vh = ops.matmul(z, lp.wv[h])
        heads.append(ops.sparse_masked_attention(
            qh, kh, vh, masks[h],
            dropout_rate=cfg.attention_dropout,
            dropout_seed=seed + [h],
            training=training))
    return ops.concat_cols(heads)


def _ffn(z: Tensor, lp: LayerParams) -> Tensor:
    hidden = ops.relu(ops.add(ops.matmul(z, lp.ffn_w1), lp.ffn_b1))
    return ops.add(ops.matmul(hidden, lp.ffn_w2), lp.ffn_b2)


def encoder_layer(z: Tensor, masks: list[HopMask], lp: LayerParams, cfg: ModelConfig, *,
                  training: bool = False, seed=None,
                  return_heads: bool = False):
    """One encoder layer: masked MHSA with residual, then FFN with residual.

    With ``return_heads`` the per-head attention outputs (concatenated, before
    the output projection) are returned alongside the layer output.
    """
    if len(masks) != cfg.num_heads:
        raise ShapeError(f"got {len(masks)} masks for {cfg.num_heads} heads")
    seed = [0] if seed is None else list(seed)   # keep dropout deterministic
    attn_in = ops.layer_norm(z, lp.ln1_gamma, lp.ln1_beta) if cfg.norm == "pre" else z
    concat = _mhsa_concat(attn_in, masks, lp, cfg, training, seed)
    attn = ops.matmul(concat, lp.wo)
    attn = ops.dropout(attn, cfg.dropout, seed + [101], training)
    res1 = ops.add(z, attn)
    t1 = ops.layer_norm(res1, lp.ln1_gamma, lp.ln1_beta) if cfg.norm == "post" else res1
    ffn_in = ops.layer_norm(t1, lp.ln2_gamma, lp.ln2_beta) if cfg.norm == "pre" else t1
    ffn = ops.dropout(_ffn(ffn_in, lp), cfg.dropout, seed + [102], training)
    res2 = ops.add(t1, ffn)
    out = ops.layer_norm(res2, lp.ln2_gamma, lp.ln2_beta) if cfg.norm == "post" else res2
    return (out, concat) if return_heads else out


def _check_masks(m: Model, masks: list[HopMask], total_tokens: int) -> None:
    if len(masks) != m.cfg.num_heads:
        raise ShapeError(f"got {len(masks)} masks for {m.cfg.num_heads} heads")
    for h, (mask, budget) in enumerate(zip(masks, m.cfg.head_hops)):
        if mask.size != total_tokens:
            raise ShapeError(f"mask {h} covers {mask.size} tokens, expected {total_tokens}")
        if mask.hop_budget != budget:
            raise ShapeError(
                f"mask {h} has hop budget {mask.hop_budget}, config says {budget}")


def encode(m: Model, z: Tensor, masks: list[HopMask], *, training: bool = False,
           rng_seed=None) -> Tensor:
    """Run the layer stack on given token embeddings."""
    _check_masks(m, masks, z.values.shape[0])
    for l, lp in enumerate(m.layers):
        seed = [0 if rng_seed is None else int(rng_seed), l]
        z = encoder_layer(z, masks, lp, m.cfg, training=training, seed=seed)
    return z


def forward(m: Model, g: Graph, ag: AugmentedGraph, masks: list[HopMask], *,
            training: bool = False, rng_seed=None) -> Tensor:
    """Embed and encode; returns the T x d token representations."""
    return encode(m, embed_tokens(m, g, ag), masks, training=training, rng_seed=rng_seed)


def readout(h: Tensor, mode: str) -> Tensor:
    """Permutation-invariant pooling over ALL token rows (node and edge)."""
    if mode == "mean":
        return ops.mean_rows(h)
    if mode == "sum":
        return ops.sum_rows(h)
    raise ValueError(f"readout must be one of {READOUTS}, got {mode!r}")


def predict_node(m: Model, h: Tensor, num_nodes: int) -> Tensor:
    """Apply the shared node head to node-token rows only; logits N x C."""
    if m.cfg.task != "node_classification":
        raise ValueError(f"predict_node needs a node_classification model, got {m.cfg.task!r}")
    nodes = ops.row_slice(h, 0, num_nodes)
    return ops.add(ops.matmul(nodes, m.head_w), m.head_b)


def predict_graph(m: Model, h_graph: Tensor) -> Tensor:
    """Apply the graph head to a pooled 1 x d representation."""
    if m.cfg.task == "node_classification":
        raise ValueError("predict_graph needs a graph-level model")
    return ops.add(ops.matmul(h_graph, m.head_w), m.head_b)


# ---------------------------------------------------------------------------
# Checkpoints


def save_model(m: Model, path: str) -> None:
    obj = {
        "magic": CHECKPOINT_MAGIC,
        "config": asdict(m.cfg),
        "d_v": m.d_v,
        "d_e": m.d_e,
        "params": {name: t.values.tolist() for name, t in named_parameters(m).items()},
    }
    obj["config"]["head_hops"] = list(m.cfg.head_hops)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path: str) -> Model:
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    if obj.get("magic") != CHECKPOINT_MAGIC:
        raise ValueError(f"not a model checkpoint (magic {obj.get('magic')!r})")
    cfg_obj = dict(obj["config"])
    cfg_obj["head_hops"] = tuple(cfg_obj["head_hops"])
    cfg = ModelConfig(**cfg_obj)
    m = init_model(cfg, obj["d_v"], obj["d_e"])
    params = named_parameters(m)
    stored = obj["params"]
    if set(stored) != set(params):
        raise ValueError("checkpoint parameter names do not match the config")
    for name, t in params.items():
        arr = np.asarray(stored[name], dtype=np.float64)
        if arr.shape != t.values.shape:
            raise ValueError(
                f"checkpoint param {name} has shape {arr.shape}, expected {t.values.shape}")
        t.values = arr
    return m


def copy_parameter_values(m: Model) -> dict[str, np.ndarray]:
    return {name: np.array(t.values, copy=True) for name, t in named_parameters(m).items()}


def set_parameter_values(m: Model, values: dict[str, np.ndarray]) -> None:
    for name, t in named_parameters(m).items():
        t.values = np.array(values[name], copy=True)
