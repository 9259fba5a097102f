"""Object-centric reasoning stage and the assembled prediction pipeline.

The pipeline runs: encode object features -> predict soft link weights ->
scale initial edge features -> edge-centric refinement on the line graph ->
object-centric message passing on the primitive graph -> classification
heads. Where the line-graph stage sits is configurable:

  * pre   - line-graph stage first, its output seeds the object stage (default)
  * post  - object stage first, line-graph stage refines its edge states and
            feeds the predicate head
  * none  - no line-graph stage (object-centric baseline)
  * none+lp - alias for strategy=none with link_mode=lp

In the object stage each node aggregates messages from its incident edges
(both directions by default) and each edge receives the transformed states of
its two endpoints; both updates use a GRU on a layer-normed message, computed
simultaneously from the previous layer's states.

A "none" predicate class is appended to the vocabulary internally; pairs
without a ground-truth predicate are supervised toward it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoders import EdgeInit, EncoderConfig, LabelEncoder, PointSetEncoder, raw_point_descriptor
from .linegraph import LineGNN, LineGraph, build_line_graph, weight_edges
from .links import LinkPredictor, link_targets
from .nn import GRUCell, LayerNorm, Linear, MLP, Module
from .rng import named_stream
from .scenes import PrimitiveGraph, Scene, build_primitive_graph

STRATEGIES = ("pre", "post", "none", "none+lp")
LINK_MODES = ("fc", "lp", "gt")
TASKS = ("predcls", "sgcls")


@dataclass(frozen=True)
class ModelConfig:
    task: str = "predcls"
    num_object_classes: int = 6
    num_predicates: int = 11          # vocabulary size; "none" is appended internally
    feature_dim: int = 64
    geo_dim: int = 32
    link_dim: int = 64
    histogram_bins: int = 8
    linegnn_layers: int = 5
    objgnn_layers: int = 2
    strategy: str = "pre"
    link_mode: str = "lp"
    adjacency: str = "same-source"
    incident: str = "both"            # or "outgoing"
    focal_gamma: float = 2.0

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.link_mode not in LINK_MODES:
            raise ValueError(f"unknown link mode {self.link_mode!r}")
        if self.incident not in ("both", "outgoing"):
            raise ValueError(f"unknown incident mode {self.incident!r}")

    @property
    def effective_strategy(self) -> str:
        return "none" if self.strategy == "none+lp" else self.strategy

    @property
    def effective_link_mode(self) -> str:
        return "lp" if self.strategy == "none+lp" else self.link_mode

    @property
    def num_predicate_outputs(self) -> int:
        return self.num_predicates + 1

    @property
    def none_class(self) -> int:
        return self.num_predicates

    def encoder_config(self) -> EncoderConfig:
        mode = "label-embedding" if self.task == "predcls" else "geometric"
        return EncoderConfig(feature_dim=self.feature_dim,
                             histogram_bins=self.histogram_bins, mode=mode)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in self.__dataclass_fields__.values()}  # type: ignore[attr-defined]

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        return cls(**data)


@dataclass
class SceneBatch:
    """Precomputed per-scene arrays the model consumes."""

    scene: Scene
    class_ids: np.ndarray                 # (K,) int64, slot order
    geometry: np.ndarray                  # (K, 31) float32
    descriptors: Optional[np.ndarray]     # (K, 10 + 3*bins) float32 or None
    graph: PrimitiveGraph
    line: LineGraph
    link_targets: np.ndarray              # (E,) float32
    pred_target_edge: np.ndarray          # (M,) int64 edge indices
    pred_target_class: np.ndarray         # (M,) int64 target classes (incl. none)
    gt_triplets: list[tuple[int, int, int]]  # slot-based (subj, obj, predicate)
    slot_ids: np.ndarray                  # (K,) original object ids

    @property
    def num_objects(self) -> int:
        return len(self.scene.objects)


def make_batch(scene: Scene, cfg: ModelConfig) -> SceneBatch:
    graph = build_primitive_graph(scene)
    line = build_line_graph(graph, cfg.adjacency)
    class_ids = np.asarray([o.class_id for o in scene.objects], dtype=np.int64)
    geometry = np.stack([o.bbox.geometry_vector() for o in scene.objects]).astype(np.float32)
    descriptors = None
    if cfg.task == "sgcls":
        missing = [o.id for o in scene.objects if o.points is None]
        if missing:
            raise ValueError(f"SGCls needs point sets; objects {missing} have none")
        descriptors = np.stack([
            raw_point_descriptor(o.points, cfg.histogram_bins) for o in scene.objects
        ]).astype(np.float32)

    id_to_slot = {o.id: slot for slot, o in enumerate(scene.objects)}
    targets = link_targets(scene, graph)
    gt_by_edge: dict[int, list[int]] = {}
    gt_triplets = []
    for rel in scene.relationships:
        s, o = id_to_slot[rel.subject_id], id_to_slot[rel.object_id]
        if rel.predicate_id >= cfg.num_predicates:
            raise ValueError(f"predicate id {rel.predicate_id} out of range")
        gt_by_edge.setdefault(graph.edge_index(s, o), []).append(rel.predicate_id)
        gt_triplets.append((s, o, rel.predicate_id))
    edge_idx: list[int] = []
    cls_idx: list[int] = []
    for e in range(graph.num_edges):
        classes = sorted(set(gt_by_edge.get(e, []))) or [cfg.none_class]
        for c in classes:
            edge_idx.append(e)
            cls_idx.append(c)
    return SceneBatch(
        scene=scene,
        class_ids=class_ids,
        geometry=geometry,
        descriptors=descriptors,
        graph=graph,
        line=line,
        link_targets=targets,
        pred_target_edge=np.asarray(edge_idx, dtype=np.int64),
        pred_target_class=np.asarray(cls_idx, dtype=np.int64),
        gt_triplets=sorted(set(gt_triplets)),
        slot_ids=np.asarray([o.id for o in scene.objects], dtype=np.int64),
    )


@dataclass
class PipelineOutputs:
    obj_probs: Optional[Tensor]   # (K, C_obj) or None in PredCls
    pred_probs: Tensor            # (E, C_pred + 1)
    link_probs: Tensor            # (E, 2)
    link_weights: Tensor          # (E,)


class ObjectGNNLayer(Module):
    """One simultaneous node+edge update.

    `node_path=False` drops the node-update parameters entirely: the last
    layer's node states feed nothing when the model has no object head, and
    parameters that can never receive gradients should not exist.
    """

    def __init__(self, dim: int, rng, node_path: bool = True):
        self.node_path = node_path
        if node_path:
            self.edge_to_node = MLP([dim, dim], rng, final_activation=True)
            self.node_norm = LayerNorm(dim)
            self.node_gru = GRUCell(dim, rng)
        self.node_to_edge = MLP([dim, dim], rng, final_activation=True)
        self.edge_norm = LayerNorm(dim)
        self.edge_gru = GRUCell(dim, rng)

    def __call__(self, h_nodes: Tensor, h_edges: Tensor, edges: np.ndarray,
                 num_nodes: int, incident: str) -> tuple[Tensor, Tensor]:
        n2e = self.node_to_edge(h_nodes)
        m_edges = self.edge_norm(ad.gather(n2e, edges[:, 0]) + ad.gather(n2e, edges[:, 1]))
        new_edges = self.edge_gru(h_edges, m_edges)
        if not self.node_path:
            return h_nodes, new_edges
        msg = self.edge_to_node(h_edges)
        agg = ad.scatter_add(msg, edges[:, 0], num_nodes)
        if incident == "both":
            agg = agg + ad.scatter_add(msg, edges[:, 1], num_nodes)
        m_nodes = self.node_norm(agg)
        return self.node_gru(h_nodes, m_nodes), new_edges


class ObjectGNN(Module):
    def __init__(self, dim: int, num_layers: int, rng, final_node_update: bool = True):
        if num_layers < 1:
            raise ValueError("object stage needs at least one layer")
        self.layers = [
            ObjectGNNLayer(dim, rng,
                           node_path=final_node_update or i < num_layers - 1)
            for i in range(num_layers)]

    def __call__(self, h_nodes: Tensor, h_edges: Tensor, edges: np.ndarray,
                 num_nodes: int, incident: str) -> tuple[Tensor, Tensor]:
        for layer in self.layers:
            h_nodes, h_edges = layer(h_nodes, h_edges, edges, num_nodes, incident)
        return h_nodes, h_edges


class SceneGraphModel(Module):
    """Full pipeline with named parameters, built from a config and a seed."""

    def __init__(self, cfg: ModelConfig, seed: int):
        rng = named_stream(seed, "init")
        self.cfg = cfg
        enc_cfg = cfg.encoder_config()
        if enc_cfg.mode == "label-embedding":
            self.encoder = LabelEncoder(cfg.num_object_classes, enc_cfg, rng)
        else:
            self.encoder = PointSetEncoder(enc_cfg, rng)
        self.edge_init = EdgeInit(cfg.feature_dim, rng)
        self.link = LinkPredictor(cfg.feature_dim, cfg.geo_dim, cfg.link_dim, rng)
        self.linegnn = LineGNN(cfg.feature_dim, cfg.linegnn_layers, rng)
        self.objgnn = ObjectGNN(cfg.feature_dim, cfg.objgnn_layers, rng,
                                final_node_update=cfg.task == "sgcls")
        self.pred_head = Linear(cfg.feature_dim, cfg.num_predicate_outputs, rng)
        self.obj_head = Linear(cfg.feature_dim, cfg.num_object_classes, rng) if cfg.task == "sgcls" else None
        names = [n for n, _ in self.named_params()]
        if len(names) != len(set(names)):
            raise RuntimeError("duplicate parameter names")

    def object_features(self, batch: SceneBatch) -> Tensor:
        if isinstance(self.encoder, LabelEncoder):
            return self.encoder(batch.class_ids)
        return self.encoder(Tensor(batch.descriptors))

    def link_forward(self, batch: SceneBatch) -> Tensor:
        """(E, 2) link probabilities; the stage-1 training surface."""
        f = self.object_features(batch)
        return self.link(f, Tensor(batch.geometry), batch.graph.edges)

    def forward(self, batch: SceneBatch) -> PipelineOutputs:
        cfg = self.cfg
        edges = batch.graph.edges
        f = self.object_features(batch)
        link_probs = self.link(f, Tensor(batch.geometry), edges)
        lp_weights = ad.pick(link_probs, np.ones(edges.shape[0], dtype=np.int64))
        mode = cfg.effective_link_mode
        if mode == "lp":
            weights = lp_weights
        elif mode == "fc":
            weights = Tensor(np.ones(edges.shape[0], dtype=np.float32))
        else:  # gt
            weights = Tensor(batch.link_targets)

        f_edge = self.edge_init(f, edges)
        f_weighted = weight_edges(f_edge, weights)

        strategy = cfg.effective_strategy
        if strategy == "pre":
            h_edges0 = self.linegnn(f_weighted, batch.line)
            h_obj, h_edges = self.objgnn(f, h_edges0, edges, batch.num_objects, cfg.incident)
        elif strategy == "none":
            h_obj, h_edges = self.objgnn(f, f_weighted, edges, batch.num_objects, cfg.incident)
        else:  # post
            h_obj, h_edges_mid = self.objgnn(f, f_weighted, edges, batch.num_objects, cfg.incident)
            h_edges = self.linegnn(h_edges_mid, batch.line)

        pred_probs = ad.softmax(self.pred_head(h_edges), axis=-1)
        obj_probs = ad.softmax(self.obj_head(h_obj), axis=-1) if self.obj_head is not None else None
        return PipelineOutputs(obj_probs=obj_probs, pred_probs=pred_probs,
                               link_probs=link_probs, link_weights=weights)


def run_pipeline(model: SceneGraphModel, scene: Scene) -> PipelineOutputs:
    """Convenience wrapper: build the batch and run one forward pass."""
    return model.forward(make_batch(scene, model.cfg))
