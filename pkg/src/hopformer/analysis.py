"""Small-world metrics, receptive-field probing, and FLOP accounting.

Clustering and average shortest-path length are computed on the ORIGINAL
graph (the augmented token graph is an implementation device, not the object
being characterized).  The FLOP model is analytic and uses fixed conventions:
one multiply-add = 2 FLOPs; exp, divide, subtract, and add count 1 each;
layer norm costs 5 per element and relu 1 per element.  The attention term is
the sparse kernel's own counter definition, so instrumented runs must agree
with it exactly.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, replace

import numpy as np

from .autograd import (Tensor, attention_flops, count_attention_flops,
                       scratch_tape)
from .graphs import AugmentedGraph, Graph, augment
from .masks import HopMask, build_head_masks
from .model import Model, ModelConfig, encode, encoder_layer, forward, init_model

FLOP_CONVENTIONS = ("multiply-add=2; exp/div/sub/add=1; layer_norm=5 per element; "
                    "relu=1 per element; attention=nnz*(4*d_h+5) per head per layer")


# ---------------------------------------------------------------------------
# Small-world measures (on the original graph)


@dataclass(frozen=True)
class SmallWorldReport:
    clustering: float
    avg_path_length: float
    num_components: int
    diameter_of_largest_component: int


def _neighbor_sets(g: Graph) -> list[set[int]]:
    nbrs: list[set[int]] = [set() for _ in range(g.num_nodes)]
    for u, v in g.edges:
        nbrs[int(u)].add(int(v))
        nbrs[int(v)].add(int(u))
    return nbrs


def clustering_coefficient(g: Graph) -> float:
    """Mean over nodes of 2 * (edges among neighbours) / (deg * (deg - 1)).

    Nodes of degree < 2 contribute 0 (the ratio is undefined there).
    """
    if g.num_nodes == 0:
        return 0.0
    nbrs = _neighbor_sets(g)
    total = 0.0
    for v in range(g.num_nodes):
        deg = len(nbrs[v])
        if deg < 2:
            continue
        neighborhood = sorted(nbrs[v])
        links = sum(1 for i, a in enumerate(neighborhood)
                    for b in neighborhood[i + 1:] if b in nbrs[a])
        total += 2.0 * links / (deg * (deg - 1))
    return total / g.num_nodes


def _bfs_distances(nbrs: list[set[int]], src: int) -> np.ndarray:
    dist = np.full(len(nbrs), -1, dtype=np.int64)
    dist[src] = 0
    queue = deque([src])
    while queue:
        u = queue.popleft()
        for w in nbrs[u]:
            if dist[w] < 0:
                dist[w] = dist[u] + 1
                queue.append(w)
    return dist


def avg_shortest_path(g: Graph) -> float:
    """BFS all-pairs average over reachable ordered pairs u != v.

    Disconnected graphs average over within-component pairs only; an edgeless
    graph has no such pairs and yields 0.
    """
    if g.num_nodes < 2:
        raise ValueError(f"average path length needs at least 2 nodes, got {g.num_nodes}")
    nbrs = _neighbor_sets(g)
    total = 0
    pairs = 0
    for src in range(g.num_nodes):
        dist = _bfs_distances(nbrs, src)
        reached = dist > 0
        total += int(dist[reached].sum())
        pairs += int(reached.sum())
    return total / pairs if pairs else 0.0


def small_world_report(g: Graph) -> SmallWorldReport:
    nbrs = _neighbor_sets(g)
    seen = np.zeros(g.num_nodes, dtype=bool)
    components: list[np.ndarray] = []
    for src in range(g.num_nodes):
        if seen[src]:
            continue
        dist = _bfs_distances(nbrs, src)
        members = np.flatnonzero(dist >= 0)
        seen[members] = True
        components.append(members)
    largest = max(components, key=len) if components else np.zeros(0, dtype=np.int64)
    diameter = 0
    for src in largest:
        dist = _bfs_distances(nbrs, int(src))
        diameter = max(diameter, int(dist.max()))
    return SmallWorldReport(
        clustering=clustering_coefficient(g),
        avg_path_length=avg_shortest_path(g),
        num_components=len(components),
        diameter_of_largest_component=diameter,
    )


def dataset_small_world(graphs: list[Graph]) -> tuple[float, float]:
    """Unweighted means of per-graph clustering and path length."""
    if not graphs:
        raise ValueError("dataset_small_world needs a non-empty list")
    cs = [clustering_coefficient(g) for g in graphs]
    ls = [avg_shortest_path(g) for g in graphs]
    return float(np.mean(cs)), float(np.mean(ls))


# ---------------------------------------------------------------------------
# Receptive-field probing


def _probe_output(model: Model, z_values: np.ndarray, masks: list[HopMask],
                  head: int | None) -> np.ndarray:
    with scratch_tape():
        if head is None:
            return np.array(encode(model, Tensor(z_values), masks).values, copy=True)
        if not model.layers:
            raise ValueError("head-slice probing needs at least one layer")
        _, concat = encoder_layer(Tensor(z_values), masks, model.layers[0], model.cfg,
                                  return_heads=True)
        d_h = model.cfg.head_dim
        return np.array(concat.values[:, head * d_h:(head + 1) * d_h], copy=True)


def influence_matrix(model: Model, ag: AugmentedGraph, masks: list[HopMask], *,
                     head: int | None = None, z0: np.ndarray | None = None,
                     seed: int = 0) -> np.ndarray:
    """Boolean T x T matrix: entry (i, j) is True iff perturbing the input
    embedding of token j changes output row i (bitwise comparison).

    With ``head`` set, rows are compared on that head's slice of the first
    layer's concatenated attention output (before the output projection).
    """
    t = ag.total_tokens
    rng = np.random.default_rng([seed, 211])
    if z0 is None:
        z0 = rng.standard_normal((t, model.cfg.hidden_dim))
    delta = rng.standard_normal(model.cfg.hidden_dim)
    base = _probe_output(model, z0, masks, head)
    out = np.zeros((t, t), dtype=bool)
    for j in range(t):
        zp = np.array(z0, copy=True)
        zp[j] += delta
        pert = _probe_output(model, zp, masks, head)
        out[:, j] = np.any(pert != base, axis=1)
    return out


def receptive_field_probe(model: Model, ag: AugmentedGraph, masks: list[HopMask],
                          token: int, head: int | None = None, *,
                          z0: np.ndarray | None = None, seed: int = 0) -> set[int]:
    """Tokens whose input perturbation changes output row ``token``."""
    infl = influence_matrix(model, ag, masks, head=head, z0=z0, seed=seed)
    return set(np.flatnonzero(infl[token]).tolist())


# ---------------------------------------------------------------------------
# FLOP accounting


def attention_flop_count(cfg: ModelConfig, masks: list[HopMask]) -> int:
    """Attention-only forward FLOPs across all heads and layers."""
    per_layer = sum(attention_flops(m.nnz, cfg.head_dim) for m in masks)
    return cfg.num_layers * per_layer


def flop_count(cfg: ModelConfig, masks: list[HopMask], t: int, d_v: int, d_e: int,
               num_nodes: int | None = None) -> int:
    """Analytic forward-pass FLOPs of the full model on a T-token graph.

    ``num_nodes`` splits the projector term between node and edge tokens;
    when omitted every token is costed as a node token.
    """
    n = t if num_nodes is None else num_nodes
    m_edges = t - n
    d, f = cfg.hidden_dim, cfg.ffn_dim
    total = 2 * n * d_v * d
    if d_e > 0:
        total += 2 * m_edges * d_e * d
    dense_layer = (
        6 * t * d * d        # per-head Q/K/V projections, summed over heads
        + 2 * t * d * d      # output projection
        + 2 * t * d          # two residual adds
        + 10 * t * d         # two layer norms at 5 per element
        + 2 * t * d * f + t * f   # FFN in-projection + bias
        + t * f                   # relu
        + 2 * t * f * d + t * d   # FFN out-projection + bias
    )
    total += cfg.num_layers * dense_layer
    total += attention_flop_count(cfg, masks)
    if cfg.task == "node_classification":
        c = cfg.num_classes or 1
        total += 2 * n * d * c + n * c
    else:
        out_dim = cfg.num_classes if cfg.task == "graph_classification" else cfg.output_dim
        total += t * d + (d if cfg.readout == "mean" else 0)   # pooling
        total += 2 * d * out_dim + out_dim
    return total


@dataclass(frozen=True)
class FlopRow:
    graph_index: int
    head_hops: tuple[int, ...]
    total_mask_nnz: int
    total_flops: int
    attention_flops: int


@dataclass(frozen=True)
class FlopReport:
    rows: list[FlopRow]
    slope: float
    intercept: float
    r_squared: float

    def to_csv(self, fh) -> None:
        fh.write("# schema: graph_index,head_hops,total_mask_nnz,total_flops,attention_flops\n")
        fh.write(f"# conventions: {FLOP_CONVENTIONS}\n")
        fh.write(f"# fit: slope={self.slope!r} intercept={self.intercept!r} "
                 f"r_squared={self.r_squared!r}\n")
        for r in self.rows:
            hops = "-".join(str(h) for h in r.head_hops)
            fh.write(f"{r.graph_index},{hops},{r.total_mask_nnz},{r.total_flops},"
                     f"{r.attention_flops}\n")


def _linear_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_res = float((resid * resid).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0.0 and ss_res == 0.0 else 1.0 - ss_res / ss_tot
    return float(slope), float(intercept), r2


def flops_vs_nnz_report(graphs: list[Graph], hop_configs: list[list[int]],
                        cfg: ModelConfig) -> FlopReport:
    """Counted FLOPs against total mask nnz across hop configurations.

    Each row's attention term is cross-checked against an instrumented
    forward pass of the sparse kernel; any disagreement is a hard error.
    """
    if len(hop_configs) < 3:
        raise ValueError(f"need at least 3 hop configurations, got {len(hop_configs)}")
    rows: list[FlopRow] = []
    for gi, g in enumerate(graphs):
        ag = augment(g)
        t = ag.total_tokens
        for config in hop_configs:
            run_cfg = replace(cfg, head_hops=tuple(config))
            masks = build_head_masks(ag, list(config))
            nnz_total = sum(m.nnz for m in masks)
            total = flop_count(run_cfg, masks, t, g.node_feature_dim,
                               g.edge_feature_dim, num_nodes=g.num_nodes)
            attn = attention_flop_count(run_cfg, masks)
            model = init_model(run_cfg, g.node_feature_dim, g.edge_feature_dim)
            with count_attention_flops() as meter:
                with scratch_tape():
                    forward(model, g, ag, masks)
            if meter.attention_flops != attn:
                raise RuntimeError(
                    f"instrumented attention FLOPs {meter.attention_flops} != "
                    f"analytic {attn} (graph {gi}, hops {config})")
            rows.append(FlopRow(gi, tuple(config), nnz_total, total, attn))
    x = np.asarray([r.total_mask_nnz for r in rows], dtype=np.float64)
    y = np.asarray([r.total_flops for r in rows], dtype=np.float64)
    if np.all(x == x[0]):
        raise ValueError("degenerate fit: every configuration has the same total nnz")
    slope, intercept, r2 = _linear_fit(x, y)
    return FlopReport(rows=rows, slope=slope, intercept=intercept, r_squared=r2)
