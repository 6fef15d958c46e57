"""Input graphs, JSON loading, random generators, and edge-to-node augmentation.

A :class:`Graph` is an undirected edge list plus dense per-node (and optional
per-edge) feature matrices.  :func:`augment` rewrites it into the token graph
the attention masks are built on: every original edge becomes an extra token
wired to its two endpoints, so node and edge attributes can be attended over
uniformly while the structure stays sparse.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

NODE_TOKEN = 0
EDGE_TOKEN = 1


class GraphError(ValueError):
    """Structurally invalid graph or malformed graph file."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Graph:
    """Undirected graph with node features and optional edge features/labels.

    Edges are unordered pairs; self-loops and parallel edges are rejected at
    construction with a message naming the offending edge.
    """

    num_nodes: int
    edges: np.ndarray                      # (M, 2) int64
    node_features: np.ndarray              # (N, d_v) float64
    edge_features: np.ndarray | None = None   # (M, d_e) float64
    node_labels: np.ndarray | None = None      # (N,) int64
    graph_label: float | int | None = None

    def __post_init__(self):
        n = self.num_nodes
        if not isinstance(n, (int, np.integer)) or n < 0:
            raise GraphError(f"num_nodes must be a non-negative integer, got {n!r}")
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        for i, (u, v) in enumerate(edges):
            if u < 0 or u >= n or v < 0 or v >= n:
                raise GraphError(f"edge {i} = ({u}, {v}) has an endpoint outside [0, {n})")
            if u == v:
                raise GraphError(f"edge {i} = ({u}, {v}) is a self-loop")
        seen: dict[tuple[int, int], int] = {}
        for i, (u, v) in enumerate(edges):
            key = (min(u, v), max(u, v))
            if key in seen:
                raise GraphError(f"duplicate edge ({u}, {v}) at positions {seen[key]} and {i}")
            seen[key] = i
        feats = np.asarray(self.node_features, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] != n:
            raise GraphError(
                f"node_features must be 2-D with {n} rows, got shape {feats.shape}")
        object.__setattr__(self, "edges", _frozen(edges))
        object.__setattr__(self, "node_features", _frozen(feats))
        if self.edge_features is not None:
            ef = np.asarray(self.edge_features, dtype=np.float64)
            if ef.ndim != 2 or ef.shape[0] != len(edges):
                raise GraphError(
                    f"edge_features must be 2-D with {len(edges)} rows, got shape {ef.shape}")
            object.__setattr__(self, "edge_features", _frozen(ef))
        if self.node_labels is not None:
            lab = np.asarray(self.node_labels, dtype=np.int64).reshape(-1)
            if lab.shape[0] != n:
                raise GraphError(f"node_labels must have length {n}, got {lab.shape[0]}")
            object.__setattr__(self, "node_labels", _frozen(lab))

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    @property
    def node_feature_dim(self) -> int:
        return int(self.node_features.shape[1])

    @property
    def edge_feature_dim(self) -> int:
        return 0 if self.edge_features is None else int(self.edge_features.shape[1])


@dataclass(frozen=True)
class AugmentedGraph:
    """Token graph: node tokens 0..N-1 followed by one token per original edge.

    ``indptr``/``indices`` hold the symmetric adjacency in CSR form with
    ascending column order per row; every edge token has exactly its two
    endpoints as neighbours, so there are 4*M stored (directed) entries.
    """

    num_node_tokens: int
    num_edge_tokens: int
    indptr: np.ndarray            # (T+1,) int64
    indices: np.ndarray           # (4M,) int64
    token_kind: np.ndarray        # (T,) int8, NODE_TOKEN / EDGE_TOKEN
    edge_token_origin: np.ndarray  # (M, 2) int64

    @property
    def total_tokens(self) -> int:
        return self.num_node_tokens + self.num_edge_tokens

    @property
    def num_directed_links(self) -> int:
        return int(self.indices.shape[0])

    def neighbors(self, token: int) -> np.ndarray:
        return self.indices[self.indptr[token]:self.indptr[token + 1]]


def augment(g: Graph) -> AugmentedGraph:
    """Expand each edge into a token linked to its endpoints.

    Token i < N is node i; token N + j is edge j.  The adjacency carries the
    four directed links (u,e), (e,u), (v,e), (e,v) per edge and nothing else,
    so node tokens only neighbour edge tokens and vice versa.
    """
    n, m = g.num_nodes, g.num_edges
    t = n + m
    node_nbrs: list[list[int]] = [[] for _ in range(n)]
    for j in range(m):
        u, v = int(g.edges[j, 0]), int(g.edges[j, 1])
        node_nbrs[u].append(n + j)
        node_nbrs[v].append(n + j)
    indptr = np.zeros(t + 1, dtype=np.int64)
    chunks: list[np.ndarray] = []
    for u in range(n):
        indptr[u + 1] = indptr[u] + len(node_nbrs[u])
        chunks.append(np.asarray(node_nbrs[u], dtype=np.int64))
    for j in range(m):
        u, v = int(g.edges[j, 0]), int(g.edges[j, 1])
        indptr[n + j + 1] = indptr[n + j] + 2
        chunks.append(np.asarray(sorted((u, v)), dtype=np.int64))
    indices = np.concatenate(chunks) if chunks else np.zeros(0, dtype=np.int64)
    kind = np.concatenate([
        np.full(n, NODE_TOKEN, dtype=np.int8),
        np.full(m, EDGE_TOKEN, dtype=np.int8),
    ])
    return AugmentedGraph(
        num_node_tokens=n,
        num_edge_tokens=m,
        indptr=_frozen(indptr),
        indices=_frozen(indices),
        token_kind=_frozen(kind),
        edge_token_origin=_frozen(np.asarray(g.edges, dtype=np.int64).reshape(-1, 2).copy()),
    )


# ---------------------------------------------------------------------------
# JSON graph files


def _decode_json(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise GraphError(f"invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}") from e


def _read_text(source) -> str:
    if isinstance(source, bytes):
        return source.decode("utf-8")
    if isinstance(source, str) and "\n" not in source and source.lstrip()[:1] not in "[{":
        with open(source, "r", encoding="utf-8") as fh:
            return fh.read()
    if hasattr(source, "read"):
        data = source.read()
        return data.decode("utf-8") if isinstance(data, bytes) else data
    return source


def _graph_from_obj(obj) -> Graph:
    if not isinstance(obj, dict):
        raise GraphError(f"graph object must be a JSON object, got {type(obj).__name__}")
    for key in ("num_nodes", "edges", "node_features"):
        if key not in obj:
            raise GraphError(f"missing required field '{key}'")
    if not isinstance(obj["num_nodes"], int):
        raise GraphError(f"field 'num_nodes' must be an integer, got {obj['num_nodes']!r}")
    raw_edges = obj["edges"]
    if not isinstance(raw_edges, list) or any(
            not isinstance(e, list) or len(e) != 2 for e in raw_edges):
        raise GraphError("field 'edges' must be an array of [u, v] pairs")
    edges = _symmetrize(raw_edges)
    return Graph(
        num_nodes=obj["num_nodes"],
        edges=np.asarray(edges, dtype=np.int64).reshape(-1, 2),
        node_features=np.asarray(obj["node_features"], dtype=np.float64).reshape(
            len(obj["node_features"]), -1),
        edge_features=None if obj.get("edge_features") is None else np.asarray(
            obj["edge_features"], dtype=np.float64),
        node_labels=None if obj.get("node_labels") is None else np.asarray(
            obj["node_labels"], dtype=np.int64),
        graph_label=obj.get("graph_label"),
    )


def _symmetrize(raw_edges: list) -> list[list[int]]:
    # (u,v) together with (v,u) is treated as a directed input and merged with
    # a warning; a repeated orientation is a parallel edge and is rejected.
    kept: list[list[int]] = []
    orientations: dict[tuple[int, int], set[tuple[int, int]]] = {}
    merged = 0
    for i, (u, v) in enumerate(raw_edges):
        key = (min(u, v), max(u, v))
        if key in orientations:
            if (u, v) in orientations[key]:
                raise GraphError(f"duplicate edge ({u}, {v}) at position {i}")
            orientations[key].add((u, v))
            merged += 1
            continue
        orientations[key] = {(u, v)}
        kept.append([u, v])
    if merged:
        warnings.warn(
            f"symmetrized directed input: merged {merged} reversed edge pair(s)",
            stacklevel=3)
    return kept


def load_graph(source, fmt: str = "json") -> Graph:
    """Load a single graph from a JSON file path, byte/str stream, or text."""
    if fmt != "json":
        raise GraphError(f"unsupported format {fmt!r}")
    obj = _decode_json(_read_text(source))
    if isinstance(obj, list):
        raise GraphError("expected a single graph object, got an array (use load_dataset)")
    return _graph_from_obj(obj)


def load_dataset(source, fmt: str = "json") -> list[Graph]:
    """Load one graph or an array of graphs; always returns a list."""
    if fmt != "json":
        raise GraphError(f"unsupported format {fmt!r}")
    obj = _decode_json(_read_text(source))
    if isinstance(obj, dict):
        return [_graph_from_obj(obj)]
    if not isinstance(obj, list):
        raise GraphError("top-level JSON must be a graph object or an array of them")
    out = []
    for i, item in enumerate(obj):
        try:
            out.append(_graph_from_obj(item))
        except GraphError as e:
            raise GraphError(f"graph {i}: {e}") from e
    return out


def graph_to_obj(g: Graph) -> dict:
    obj = {
        "num_nodes": g.num_nodes,
        "edges": g.edges.tolist(),
        "node_features": g.node_features.tolist(),
    }
    if g.edge_features is not None:
        obj["edge_features"] = g.edge_features.tolist()
    if g.node_labels is not None:
        obj["node_labels"] = g.node_labels.tolist()
    if g.graph_label is not None:
        obj["graph_label"] = g.graph_label
    return obj


def save_graph(g: Graph, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(graph_to_obj(g), fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Random generators.  All are deterministic under ``seed`` and attach constant
# scalar node features so generated graphs are trainable as-is.


def generate_watts_strogatz(n: int, k: int, beta: float, seed: int = 0) -> Graph:
    """Ring lattice over n nodes, k nearest neighbours, rewired with prob beta.

    Rewiring replaces one endpoint of each lattice edge independently, never
    creating self-loops or parallel edges, so the edge count stays n*k/2.
    """
    if k <= 0 or k % 2 != 0:
        raise GraphError(f"k must be a positive even integer, got {k}")
    if n <= k:
        raise GraphError(f"n must exceed k, got n={n}, k={k}")
    if not 0.0 <= beta <= 1.0:
        raise GraphError(f"beta must be in [0, 1], got {beta}")
    rng = np.random.default_rng(seed)
    adj: list[set[int]] = [set() for _ in range(n)]
    edge_list: list[tuple[int, int]] = []
    for j in range(1, k // 2 + 1):
        for i in range(n):
            u, v = i, (i + j) % n
            adj[u].add(v)
            adj[v].add(u)
            edge_list.append((u, v))
    if beta > 0:
        for idx, (u, v) in enumerate(edge_list):
            if rng.random() >= beta:
                continue
            # up to n attempts; skip the rewire if u is saturated
            for _ in range(n):
                w = int(rng.integers(n))
                if w != u and w not in adj[u]:
                    adj[u].discard(v)
                    adj[v].discard(u)
                    adj[u].add(w)
                    adj[w].add(u)
                    edge_list[idx] = (u, w)
                    break
    edges = sorted((min(u, v), max(u, v)) for u, v in edge_list)
    return Graph(
        num_nodes=n,
        edges=np.asarray(edges, dtype=np.int64).reshape(-1, 2),
        node_features=np.ones((n, 1)),
    )


def generate_erdos_renyi(n: int, p: float, seed: int = 0) -> Graph:
    """G(n, p): each unordered pair kept independently with probability p."""
    if n < 1:
        raise GraphError(f"n must be at least 1, got {n}")
    if not 0.0 <= p <= 1.0:
        raise GraphError(f"p must be in [0, 1], got {p}")
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.shape[0]) < p
    edges = np.column_stack([iu[keep], ju[keep]]).astype(np.int64)
    return Graph(num_nodes=n, edges=edges, node_features=np.ones((n, 1)))


def generate_sbm(sizes: tuple[int, ...], p_in: float, p_out: float, seed: int = 0,
                 feature_mode: str = "signal", feature_dim: int = 8,
                 signal: float = 0.2) -> Graph:
    """Stochastic block model with block labels; the training sanity fixture.

    feature_mode 'signal' shifts each node's Gaussian features by +/- signal
    according to its block: individually too noisy to classify well, but
    denoised by aggregation over the (homophilous) neighbourhood, so solving
    the task requires using the structure.  'onehot' gives indicator features
    (a free per-node embedding through the projector); 'constant' gives the
    scalar 1.0 used by the other generators.
    """
    if not 0.0 <= p_in <= 1.0 or not 0.0 <= p_out <= 1.0:
        raise GraphError("p_in and p_out must be in [0, 1]")
    n = int(sum(sizes))
    blocks = np.repeat(np.arange(len(sizes)), sizes)
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    probs = np.where(blocks[iu] == blocks[ju], p_in, p_out)
    keep = rng.random(iu.shape[0]) < probs
    edges = np.column_stack([iu[keep], ju[keep]]).astype(np.int64)
    if feature_mode == "signal":
        signs = np.where(blocks % 2 == 0, 1.0, -1.0)
        feats = signal * signs[:, None] + np.random.default_rng(
            [seed, 5]).standard_normal((n, feature_dim))
    elif feature_mode == "onehot":
        feats = np.eye(n)
    elif feature_mode == "constant":
        feats = np.ones((n, 1))
    else:
        raise GraphError(f"unknown feature_mode {feature_mode!r}")
    return Graph(num_nodes=n, edges=edges, node_features=feats, node_labels=blocks)


def relabel_nodes(g: Graph, perm: np.ndarray) -> Graph:
    """Rename node i to perm[i]; edge list order is preserved."""
    perm = np.asarray(perm, dtype=np.int64)
    if sorted(perm.tolist()) != list(range(g.num_nodes)):
        raise GraphError("perm must be a permutation of 0..N-1")
    feats = np.empty_like(g.node_features)
    feats[perm] = g.node_features
    labels = None
    if g.node_labels is not None:
        labels = np.empty_like(g.node_labels)
        labels[perm] = g.node_labels
    return Graph(
        num_nodes=g.num_nodes,
        edges=perm[g.edges],
        node_features=feats,
        edge_features=None if g.edge_features is None else g.edge_features.copy(),
        node_labels=labels,
        graph_label=g.graph_label,
    )
