"""Line-graph transformation and the edge-centric message-passing network.

Each directed edge (i, j) of the primitive graph becomes a line node; two line
nodes are adjacent iff they share the same SOURCE object: (i, j) ~ (i, k) for
k not in {i, j}. For a complete graph on K objects this yields K(K-1) nodes
and K(K-1)(K-2) directed adjacency entries. The broader "shared-any" variant
(adjacency whenever the edges share any endpoint) is available behind a
config flag for experimentation.

The LineGNN runs L layers of attention-weighted neighbor aggregation
(softmax over each neighborhood, layer norm on the aggregate) followed by a
GRU state update. Soft link weights scale the initial edge features once,
before the first layer. Neighbor lists are sorted so summation order is
deterministic.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .nn import MLP, GRUCell, LayerNorm, Linear, Module
from .rng import SplitMix64
from .scenes import PrimitiveGraph

ADJACENCY_RULES = ("same-source", "shared-any")


class LineGraph:
    """Derived graph whose nodes are the directed edges of a primitive graph.

    `dst_node[a], src_node[a]` list directed adjacency entries: line node
    dst_node[a] aggregates from neighbor src_node[a]. Entries are sorted by
    (dst, src).
    """

    def __init__(self, graph: PrimitiveGraph, rule: str = "same-source"):
        if rule not in ADJACENCY_RULES:
            raise ValueError(f"unknown adjacency rule {rule!r}")
        self.rule = rule
        self.num_nodes = graph.num_edges
        self.node_pairs = graph.edges.copy()
        pairs: list[tuple[int, int]] = []
        if rule == "same-source":
            by_source: dict[int, list[int]] = {}
            for idx, (i, _) in enumerate(graph.edges):
                by_source.setdefault(int(i), []).append(idx)
            for _, members in sorted(by_source.items()):
                for a in members:
                    for b in members:
                        if a != b:
                            pairs.append((a, b))
        else:
            endpoints = [set(map(int, e)) for e in graph.edges]
            for a in range(self.num_nodes):
                for b in range(self.num_nodes):
                    if a != b and endpoints[a] & endpoints[b]:
                        pairs.append((a, b))
        pairs.sort()
        arr = np.asarray(pairs, dtype=np.int64).reshape(len(pairs), 2)
        self.dst_node = arr[:, 0]
        self.src_node = arr[:, 1]

    @property
    def num_adjacent(self) -> int:
        return self.dst_node.shape[0]

    def neighbors(self, node: int) -> list[int]:
        return [int(s) for d, s in zip(self.dst_node, self.src_node) if d == node]


def build_line_graph(graph: PrimitiveGraph, rule: str = "same-source") -> LineGraph:
    return LineGraph(graph, rule)


def weight_edges(edge_features: Tensor, link_weights: Tensor) -> Tensor:
    """Scale each edge feature row by its soft link weight in [0, 1]."""
    if link_weights.shape[0] != edge_features.shape[0]:
        raise ValueError("one weight per edge required")
    return edge_features * ad.reshape(link_weights, (link_weights.shape[0], 1))


class LineGNNLayer(Module):
    def __init__(self, dim: int, rng: SplitMix64):
        self.transform = MLP([dim, dim], rng, final_activation=True)
        self.attention = Linear(2 * dim, 1, rng)
        self.norm = LayerNorm(dim)
        self.gru = GRUCell(dim, rng)

    def message(self, states: Tensor, line: LineGraph) -> Tensor:
        """Attention-weighted neighbor aggregate per line node, layer-normed.

        Nodes with no neighbors receive LN(0).
        """
        if line.num_adjacent == 0:
            zero = Tensor(np.zeros_like(states.data))
            return self.norm(zero)
        transformed = self.transform(states)
        h_dst = ad.gather(states, line.dst_node)
        h_src = ad.gather(states, line.src_node)
        logits = self.attention(ad.concat([h_dst, h_src], axis=1))
        attn = _segment_softmax(logits, line.dst_node, line.num_nodes)
        weighted = ad.gather(transformed, line.src_node) * attn
        agg = ad.scatter_add(weighted, line.dst_node, line.num_nodes)
        return self.norm(agg)

    def __call__(self, states: Tensor, line: LineGraph) -> Tensor:
        return self.gru(states, self.message(states, line))


def _segment_softmax(logits: Tensor, segments: np.ndarray, num_segments: int) -> Tensor:
    """Softmax of (A, 1) logits grouped by segment id.

    The per-segment max is subtracted as a constant, which leaves both the
    value and the gradient of the softmax unchanged.
    """
    seg_max = np.full((num_segments, 1), -np.inf, dtype=logits.dtype)
    np.maximum.at(seg_max, segments, logits.data)
    shifted = logits - Tensor(seg_max[segments])
    e = ad.exp(shifted)
    denom = ad.scatter_add(e, segments, num_segments)
    return e / ad.gather(denom, segments)


class LineGNN(Module):
    def __init__(self, dim: int, num_layers: int, rng: SplitMix64):
        if num_layers < 0:
            raise ValueError("layer count must be >= 0")
        self.layers = [LineGNNLayer(dim, rng) for _ in range(num_layers)]

    def __call__(self, weighted_edge_features: Tensor, line: LineGraph) -> Tensor:
        states = weighted_edge_features
        for layer in self.layers:
            states = layer(states, line)
        return states
