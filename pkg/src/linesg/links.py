"""Soft link weights for every directed object pair.

A geometric embedding of each box (corners, centroid, dims, volume -> 31 raw
dims) is combined with the object features: the pair feature is an MLP of
[(f_i - f_j) || (g_i - g_j)], classified into link / non-link by a linear map
and a 2-way softmax. The positive-class probability is the soft link weight.

Supervision is directed: pair (i, j) is positive iff at least one ground-truth
predicate exists on exactly that ordered pair.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .nn import MLP, Linear, Module, focal_terms
from .rng import SplitMix64
from .scenes import PrimitiveGraph, Scene

GEOMETRY_DIM = 31

# focal-loss weighting for the rare positive class
LINK_GAMMA = 2.0
LINK_ALPHA_POS = 0.25
LINK_ALPHA_NEG = 0.75


class LinkPredictor(Module):
    def __init__(self, feature_dim: int, geo_dim: int, link_dim: int, rng: SplitMix64):
        self.geo = Linear(GEOMETRY_DIM, geo_dim, rng)
        self.pair = MLP([feature_dim + geo_dim, link_dim, link_dim], rng)
        self.classify = Linear(link_dim, 2, rng)

    def geometric_embed(self, geometry: Tensor) -> Tensor:
        """geometry: (K, 31) raw box vectors -> (K, geo_dim)."""
        return ad.relu(self.geo(geometry))

    def logits(self, features: Tensor, geometry: Tensor, edges: np.ndarray) -> Tensor:
        g = self.geometric_embed(geometry)
        f_diff = ad.gather(features, edges[:, 0]) - ad.gather(features, edges[:, 1])
        g_diff = ad.gather(g, edges[:, 0]) - ad.gather(g, edges[:, 1])
        pair = self.pair(ad.concat([f_diff, g_diff], axis=1))
        return self.classify(pair)

    def __call__(self, features: Tensor, geometry: Tensor, edges: np.ndarray) -> Tensor:
        """(E, 2) link probabilities; column 1 is the soft link weight."""
        return ad.softmax(self.logits(features, geometry, edges), axis=-1)


def link_targets(scene: Scene, graph: PrimitiveGraph) -> np.ndarray:
    """Binary target per directed edge of the primitive graph."""
    positive = {(r.subject_id, r.object_id) for r in scene.relationships}
    id_to_slot = {obj.id: slot for slot, obj in enumerate(scene.objects)}
    slot_pairs = {(id_to_slot[s], id_to_slot[o]) for s, o in positive}
    targets = np.zeros(graph.num_edges, dtype=np.float32)
    for k in range(graph.num_edges):
        if graph.pair(k) in slot_pairs:
            targets[k] = 1.0
    return targets


def link_loss(probs: Tensor, targets: np.ndarray,
              gamma: float = LINK_GAMMA,
              alpha_pos: float = LINK_ALPHA_POS,
              alpha_neg: float = LINK_ALPHA_NEG) -> Tensor:
    """Mean focal loss over directed edges."""
    tgt = np.asarray(targets, dtype=np.int64)
    if probs.shape[0] != tgt.shape[0]:
        raise ValueError("scores and targets are misaligned")
    if tgt.shape[0] == 0:  # single-object scene
        return Tensor(np.zeros((), dtype=np.float32))
    p_t = ad.pick(probs, tgt)
    alpha = np.where(tgt == 1, alpha_pos, alpha_neg).astype(probs.dtype)
    return ad.reduce_mean(focal_terms(p_t, gamma, alpha))
