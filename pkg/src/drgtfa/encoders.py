"""Graph encoders over Levi graphs.

Each layer aggregates direction-typed messages ``W_dir h_j`` over a
neighborhood, normalised by its size. Two neighborhood providers exist: the
immediate neighbors of a node, and the deep traversal set (everything
reachable from the node along plain edges, plus everything that reaches it).
Layers work on flat node arrays so a batch of graphs is just their disjoint
union.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import nncore as nn
from .drg import Dir, LeviGraph
from .nncore import GRUParams, Parameter, Tensor

__all__ = [
    "ConfigInvalid",
    "Neighborhood",
    "NbArrays",
    "EncoderConfig",
    "EncoderParams",
    "local_neighborhood",
    "deep_neighborhood",
    "neighborhood",
    "batch_arrays",
    "ggnn_layer",
    "gcn_layer",
    "gat_layer",
    "encode",
    "encode_batch",
]

KINDS = ("ggnn", "gcn", "gat")
NEIGHBORHOODS = ("local", "deep")


class ConfigInvalid(ValueError):
    pass


@dataclass(frozen=True)
class Neighborhood:
    entries: tuple[tuple[tuple[int, Dir], ...], ...]

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, i: int) -> tuple[tuple[int, Dir], ...]:
        return self.entries[i]

    def arrays(self) -> "NbArrays":
        return batch_arrays([self])


class NbArrays(NamedTuple):
    """Flat neighborhood entries grouped by direction class."""

    dst: np.ndarray
    src: np.ndarray
    weight: np.ndarray  # 1 / |nb(dst)|
    bounds: tuple[int, int, int, int]  # start of DEFAULT, REVERSE, SELF groups and end
    n: int


def batch_arrays(nbs, offsets=None) -> NbArrays:
    if offsets is None:
        offsets = np.cumsum([0] + [len(nb) for nb in nbs[:-1]]).tolist()
    groups = {d: ([], []) for d in Dir}
    weights = {d: [] for d in Dir}
    for nb, off in zip(nbs, offsets):
        for i, entries in enumerate(nb.entries):
            w = 1.0 / len(entries)
            for j, d in entries:
                groups[d][0].append(i + off)
                groups[d][1].append(j + off)
                weights[d].append(w)
    dst = np.array([x for d in Dir for x in groups[d][0]], dtype=np.intp)
    src = np.array([x for d in Dir for x in groups[d][1]], dtype=np.intp)
    weight = np.array([x for d in Dir for x in weights[d]], dtype=np.float64)
    sizes = [len(groups[d][0]) for d in Dir]
    bounds = (0, sizes[0], sizes[0] + sizes[1], sum(sizes))
    n = sum(len(nb) for nb in nbs)
    return NbArrays(dst, src, weight, bounds, n)


def _adjacency(g: LeviGraph):
    out = [[] for _ in g.nodes]
    inc = [[] for _ in g.nodes]
    for a, b in g.default_edges():
        out[a].append(b)
        inc[b].append(a)
    return out, inc


def _unique(seq):
    seen = set()
    return [x for x in seq if not (x in seen or seen.add(x))]


def local_neighborhood(g: LeviGraph) -> Neighborhood:
    out, inc = _adjacency(g)
    entries = []
    for i in range(len(g)):
        fwd = [(j, Dir.DEFAULT) for j in _unique(out[i]) if j != i]
        back = [(j, Dir.REVERSE) for j in _unique(inc[i]) if j != i]
        entries.append(tuple(fwd + back + [(i, Dir.SELF)]))
    return Neighborhood(tuple(entries))


def _dfs(start: int, adj) -> list[int]:
    visited = {start}
    order = []
    stack = list(reversed(adj[start]))
    while stack:
        v = stack.pop()
        if v in visited:
            continue
        visited.add(v)
        order.append(v)
        stack.extend(reversed(adj[v]))
    return order


def deep_neighborhood(g: LeviGraph) -> Neighborhood:
    """Depth-first reach of every node.

    Forward reach along plain edges is tagged DEFAULT, backward reach
    REVERSE; the node itself appears only once, as SELF, even on a cycle.
    """
    out, inc = _adjacency(g)
    entries = []
    for i in range(len(g)):
        fwd = [(j, Dir.DEFAULT) for j in _dfs(i, out)]
        back = [(j, Dir.REVERSE) for j in _dfs(i, inc)]
        entries.append(tuple(fwd + back + [(i, Dir.SELF)]))
    return Neighborhood(tuple(entries))


def neighborhood(g: LeviGraph, kind: str) -> Neighborhood:
    if kind == "local":
        return local_neighborhood(g)
    if kind == "deep":
        return deep_neighborhood(g)
    raise ConfigInvalid(f"unknown neighborhood {kind!r}")


@dataclass(frozen=True)
class EncoderConfig:
    kind: str = "ggnn"
    neighborhood: str = "deep"
    layers: int | None = None  # default: 1 for deep traversal, 2 for local
    hidden: int = 256
    highway: bool | None = None  # default: on for local, off for deep traversal
    heads: int = 1
    activation: str = "relu"

    def resolved(self) -> "EncoderConfig":
        if self.kind not in KINDS:
            raise ConfigInvalid(f"encoder kind must be one of {KINDS}, got {self.kind!r}")
        if self.neighborhood not in NEIGHBORHOODS:
            raise ConfigInvalid(f"neighborhood must be one of {NEIGHBORHOODS}, got {self.neighborhood!r}")
        if self.activation != "relu":
            raise ConfigInvalid("only relu activation is supported")
        local = self.neighborhood == "local"
        layers = self.layers if self.layers is not None else (2 if local else 1)
        highway = self.highway if self.highway is not None else local
        if layers < 1 or self.hidden < 1 or self.heads < 1:
            raise ConfigInvalid("layers, hidden and heads must be positive")
        return EncoderConfig(self.kind, self.neighborhood, layers, self.hidden, highway, self.heads)


class LayerParams:
    """Weights of one layer; ``W`` holds the DEFAULT, REVERSE and SELF transforms."""

    def __init__(self, name: str, cfg: EncoderConfig, rng: np.random.Generator, gru: GRUParams | None):
        d = cfg.hidden
        heads = cfg.heads if cfg.kind == "gat" else 1
        self.W = [
            [Parameter(f"{name}.h{h}.W_{d_.name.lower()}", nn.glorot(rng, (d, d))) for d_ in Dir] for h in range(heads)
        ]
        self.b = Parameter(f"{name}.b", nn.zeros(d)) if cfg.kind != "ggnn" else None
        self.gru = gru
        if cfg.kind == "gat":
            self.a_dst = [Parameter(f"{name}.h{h}.a_dst", nn.glorot(rng, (d, 1))) for h in range(heads)]
            self.a_src = [Parameter(f"{name}.h{h}.a_src", nn.glorot(rng, (d, 1))) for h in range(heads)]
        else:
            self.a_dst = self.a_src = []
        if cfg.highway:
            self.W_gate = Parameter(f"{name}.highway.W", nn.glorot(rng, (d, d)))
            self.b_gate = Parameter(f"{name}.highway.b", nn.zeros(d))
        else:
            self.W_gate = self.b_gate = None

    def parameters(self) -> list[Parameter]:
        ps = [w for head in self.W for w in head] + self.a_dst + self.a_src
        ps += [p for p in (self.b, self.W_gate, self.b_gate) if p is not None]
        return ps


class EncoderParams:
    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator, name: str = "encoder"):
        cfg = cfg.resolved()
        self.cfg = cfg
        gru = GRUParams.init(f"{name}.gru", cfg.hidden, cfg.hidden, rng) if cfg.kind == "ggnn" else None
        self.gru = gru
        self.layers = [LayerParams(f"{name}.layer{k}", cfg, rng, gru) for k in range(cfg.layers)]

    def parameters(self) -> list[Parameter]:
        ps = [p for layer in self.layers for p in layer.parameters()]
        if self.gru is not None:
            ps += self.gru.parameters()
        return ps


def _as_arrays(nb) -> NbArrays:
    return nb.arrays() if isinstance(nb, Neighborhood) else nb


def _messages(h: Tensor, nb: NbArrays, W) -> Tensor:
    """Per-entry transformed neighbor states ``W_dir h_j``, aligned with ``nb.dst``."""
    parts = []
    for d in Dir:
        lo, hi = nb.bounds[d], nb.bounds[d + 1]
        if hi > lo:
            parts.append(nn.take_rows(h @ W[d], nb.src[lo:hi]))
    return nn.concat(parts, axis=0)


def _check(h: Tensor, nb: NbArrays, d: int) -> None:
    if h.shape != (nb.n, d):
        raise nn.ShapeMismatch(f"node states {h.shape} for {nb.n} nodes of width {d}")


def _aggregate(h: Tensor, nb: NbArrays, W) -> Tensor:
    msgs = _messages(h, nb, W) * nb.weight[:, None]
    return nn.segment_sum(msgs, nb.dst, nb.n)


def ggnn_layer(h, nb, params: LayerParams) -> Tensor:
    """h_i' = GRU(h_i, Σ_{(j,dir) ∈ nb(i)} W_dir h_j / |nb(i)|)."""
    h, nb = nn.tensor(h), _as_arrays(nb)
    _check(h, nb, params.W[0][0].shape[0])
    m = _aggregate(h, nb, params.W[0])
    return nn.gru_step(m, h, params.gru)


def gcn_layer(h, nb, params: LayerParams) -> Tensor:
    h, nb = nn.tensor(h), _as_arrays(nb)
    _check(h, nb, params.W[0][0].shape[0])
    return nn.relu(_aggregate(h, nb, params.W[0]) + params.b)


def gat_attention(h, nb, params: LayerParams, head: int = 0) -> tuple[Tensor, Tensor]:
    """Attention weights per neighborhood entry and the transformed messages."""
    h, nb = nn.tensor(h), _as_arrays(nb)
    W = params.W[head]
    msgs = _messages(h, nb, W)
    query = (h @ W[Dir.SELF]) @ params.a_dst[head]
    logits = nn.leaky_relu(nn.take_rows(query, nb.dst) + msgs @ params.a_src[head])
    peak = np.full((nb.n, 1), -np.inf)
    np.maximum.at(peak, nb.dst, logits.data)
    e = nn.exp(logits - peak[nb.dst])
    alpha = e / nn.take_rows(nn.segment_sum(e, nb.dst, nb.n), nb.dst)
    return alpha, msgs


def gat_layer(h, nb, params: LayerParams) -> Tensor:
    h, nb = nn.tensor(h), _as_arrays(nb)
    _check(h, nb, params.W[0][0].shape[0])
    heads = []
    for k in range(len(params.W)):
        alpha, msgs = gat_attention(h, nb, params, k)
        heads.append(nn.segment_sum(msgs * alpha, nb.dst, nb.n))
    agg = heads[0]
    for extra in heads[1:]:
        agg = agg + extra
    if len(heads) > 1:
        agg = agg * (1.0 / len(heads))
    return nn.relu(agg + params.b)


_LAYERS = {"ggnn": ggnn_layer, "gcn": gcn_layer, "gat": gat_layer}


def _highway(h_new: Tensor, h_old: Tensor, params: LayerParams) -> Tensor:
    gate = nn.sigmoid(h_old @ params.W_gate + params.b_gate)
    return gate * h_new + (1.0 - gate) * h_old


def encode_batch(h0, nb: NbArrays, graph_ids, n_graphs: int, params: EncoderParams) -> tuple[Tensor, Tensor]:
    """Run the stacked layers over a disjoint union of graphs.

    Returns flat node states (same row order as ``h0``) and the per-graph
    mean of node states.
    """
    cfg = params.cfg
    layer_fn = _LAYERS[cfg.kind]
    h = nn.tensor(h0)
    for layer in params.layers:
        h_new = layer_fn(h, nb, layer)
        h = _highway(h_new, h, layer) if cfg.highway else h_new
    graph_ids = np.asarray(graph_ids, dtype=np.intp)
    counts = np.bincount(graph_ids, minlength=n_graphs).astype(np.float64)
    pooled = nn.segment_sum(h, graph_ids, n_graphs) * (1.0 / counts)[:, None]
    return h, pooled


def encode(g: LeviGraph, cfg: EncoderConfig, params: EncoderParams, h0) -> tuple[Tensor, Tensor]:
    """Encode one graph whose initial node states are ``h0`` (rows in node order)."""
    cfg = cfg.resolved()
    if cfg != params.cfg:
        raise ConfigInvalid("parameters were built for a different encoder configuration")
    nb = neighborhood(g, cfg.neighborhood).arrays()
    states, pooled = encode_batch(h0, nb, np.zeros(len(g), dtype=np.intp), 1, params)
    return states, nn.reshape(pooled, (cfg.hidden,))
