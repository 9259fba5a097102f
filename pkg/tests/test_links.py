"""Link predictor: geometry embedding, scores, targets, loss, separability."""

import numpy as np
import pytest

from linesg import autodiff as ad
from linesg.autodiff import Tensor, backward, record
from linesg.links import LinkPredictor, link_loss, link_targets
from linesg.metrics import link_auc
from linesg.nn import focal_terms
from linesg.oracles import finite_difference_check
from linesg.rng import named_stream
from linesg.scenes import (ObjectInstance, PrimitiveGraph, Relationship, Scene,
                           build_primitive_graph, make_bbox)
from linesg.training import Adam


def scene_with(objects, rels):
    return Scene(scan_id="t", objects=objects, relationships=rels)


def boxes(n, spacing=1.0):
    return [ObjectInstance(id=i, class_id=0,
                           bbox=make_bbox([i * spacing, 0, 0], [i * spacing + 0.4, 0.4, 0.4]))
            for i in range(n)]


class TestGeometricEmbedding:
    def test_raw_geometry_is_31_dims(self):
        assert boxes(1)[0].bbox.geometry_vector().shape == (31,)

    def test_identical_boxes_identical_embeddings(self):
        link = LinkPredictor(8, 6, 8, named_stream(0, "init"))
        geo = np.stack([make_bbox([0, 0, 0], [1, 1, 1]).geometry_vector()] * 2).astype(np.float32)
        out = link.geometric_embed(Tensor(geo)).data
        np.testing.assert_array_equal(out[0], out[1])

    def test_gradient_through_phi_b(self):
        link = LinkPredictor(6, 4, 6, named_stream(1, "init"))
        leaves = [link.geo.w.tensor, link.geo.b.tensor]
        for leaf in leaves:
            leaf.data = leaf.data.astype(np.float64)
        geo = Tensor(np.random.default_rng(0).normal(size=(3, 31)), dtype=np.float64)
        w = Tensor(np.random.default_rng(1).normal(size=(3, 4)), dtype=np.float64)
        err = finite_difference_check(
            lambda: ad.reduce_sum(link.geometric_embed(geo) * w), leaves, h=1e-5)
        assert err <= 1e-4


class TestLinkScores:
    def test_zero_everything_gives_half(self):
        link = LinkPredictor(4, 4, 4, named_stream(2, "init"))
        for _, p in link.named_params():
            p.data = np.zeros_like(p.data)
        f = Tensor(np.zeros((2, 4), dtype=np.float32))
        geo = Tensor(np.zeros((2, 31), dtype=np.float32))
        probs = link(f, geo, np.array([[0, 1], [1, 0]]))
        np.testing.assert_allclose(probs.data, 0.5, atol=1e-7)

    def test_probabilities_sum_to_one_strictly_inside(self):
        link = LinkPredictor(8, 6, 8, named_stream(3, "init"))
        rng = np.random.default_rng(2)
        f = Tensor(rng.normal(size=(4, 8)).astype(np.float32))
        geo = Tensor(rng.normal(size=(4, 31)).astype(np.float32))
        graph = PrimitiveGraph.complete(4)
        probs = link(f, geo, graph.edges).data
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-6)
        assert np.all(probs > 0) and np.all(probs < 1)

    def test_saturated_logits(self):
        logits = Tensor(np.asarray([[50.0, -50.0]], dtype=np.float32))
        s = ad.softmax(logits, axis=-1).data[0, 1]
        assert s == pytest.approx(0.0, abs=1e-7)


class TestLinkTargets:
    def test_directed_rule(self):
        scene = scene_with(boxes(2), [Relationship(0, 1, 0)])
        graph = build_primitive_graph(scene)
        targets = link_targets(scene, graph)
        assert targets[graph.edge_index(0, 1)] == 1.0
        assert targets[graph.edge_index(1, 0)] == 0.0

    def test_no_relationships_all_negative(self):
        scene = scene_with(boxes(3), [])
        assert link_targets(scene, build_primitive_graph(scene)).sum() == 0

    def test_positive_count_equals_distinct_ordered_pairs(self):
        rels = [Relationship(0, 1, 0), Relationship(0, 1, 1), Relationship(2, 0, 1),
                Relationship(1, 2, 0), Relationship(2, 0, 0)]
        scene = scene_with(boxes(3), rels)
        targets = link_targets(scene, build_primitive_graph(scene))
        distinct = {(r.subject_id, r.object_id) for r in rels}
        assert targets.sum() == len(distinct)


class TestLinkLoss:
    def test_perfect_scores_near_zero(self):
        probs = Tensor(np.asarray([[0.0, 1.0], [1.0, 0.0]], dtype=np.float64))
        loss = link_loss(probs, np.array([1.0, 0.0]))
        assert loss.item() == pytest.approx(0.0, abs=1e-9)

    def test_gamma_zero_half_alpha_is_half_cross_entropy(self):
        rng = np.random.default_rng(3)
        raw = rng.uniform(0.05, 0.95, size=6)
        probs = Tensor(np.stack([1 - raw, raw], axis=1))
        targets = (rng.random(6) < 0.5).astype(np.float64)
        loss = link_loss(probs, targets, gamma=0.0, alpha_pos=0.5, alpha_neg=0.5)
        p_t = np.where(targets == 1, raw, 1 - raw)
        assert loss.item() == pytest.approx(0.5 * np.mean(-np.log(p_t)), abs=1e-6)

    def test_matches_float64_reference(self):
        rng = np.random.default_rng(4)
        raw = rng.uniform(0.02, 0.98, size=20)
        targets = (rng.random(20) < 0.3).astype(np.float64)
        probs32 = Tensor(np.stack([1 - raw, raw], axis=1).astype(np.float32))
        got = link_loss(probs32, targets).item()
        p_t = np.where(targets == 1, raw, 1 - raw)
        alpha = np.where(targets == 1, 0.25, 0.75)
        want = np.mean(alpha * (1 - p_t) ** 2 * -np.log(np.maximum(p_t, 1e-7)))
        assert got == pytest.approx(want, abs=1e-5)

    def test_misaligned_lengths(self):
        with pytest.raises(ValueError):
            link_loss(Tensor(np.zeros((3, 2))), np.zeros(4))


class TestSeparabilityExperiment:
    def test_trained_classifier_reaches_auc(self):
        # positives: centroid distance < 0.5; negatives: > 1.5
        rng = named_stream(123, "data")
        feature_dim = 8
        link = LinkPredictor(feature_dim, 8, 16, named_stream(0, "init"))
        geos, labels = [], []
        for _ in range(300):
            positive = rng.uniform() < 0.5
            d = rng.uniform(0.05, 0.45) if positive else rng.uniform(1.55, 3.0)
            size = rng.uniform(0.2, 0.5)
            a = make_bbox([0, 0, 0], [size, size, size])
            b = make_bbox([d, 0, 0], [d + size, size, size])
            geos.append(np.stack([a.geometry_vector(), b.geometry_vector()]))
            labels.append(1.0 if positive else 0.0)
        labels = np.asarray(labels)
        feats = Tensor(np.zeros((2, feature_dim), dtype=np.float32))
        edges = np.array([[0, 1]])
        opt = Adam(link.named_params(), weight_decay=0.0)
        order = list(range(300))
        for epoch in range(3):
            named_stream(epoch, "shuffle").shuffle(order)
            for idx in order:
                link.zero_grad()
                with record():
                    probs = link(feats, Tensor(geos[idx].astype(np.float32)), edges)
                    loss = ad.reduce_mean(focal_terms(ad.pick(probs, np.array([int(labels[idx])])), 2.0, 1.0))
                    backward(loss)
                opt.step(3e-3)
        scores = np.array([
            link(feats, Tensor(g.astype(np.float32)), edges).data[0, 1] for g in geos])
        assert link_auc(scores, labels) >= 0.95
