"""Built-in verification suite behind `linesg selfcheck`.

Covers: per-op gradient checks against central finite differences (float64),
an end-to-end pipeline gradient check on a tiny scene, the line-graph
structure oracle, scatter-add vs an explicit loop, and the recall metrics
against exhaustive ranking.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .linegraph import build_line_graph
from .metrics import link_auc
from .model import ModelConfig, SceneGraphModel, make_batch
from .nn import GRUCell
from .oracles import (brute_force_line_adjacency, exhaustive_recall,
                      finite_difference_check, pairwise_auc)
from .rng import SplitMix64
from .scenes import PrimitiveGraph
from .synth import SynthConfig, generate_scenes

Result = tuple[str, bool, str]


def op_gradient_suite(trials: int) -> Result:
    rng = np.random.default_rng(12345)
    worst = 0.0

    def check(build, leaves):
        nonlocal worst
        worst = max(worst, finite_difference_check(build, leaves, h=1e-3))

    for _ in range(trials):
        a = Tensor(rng.normal(size=(4, 3)), dtype=np.float64, requires_grad=True)
        b = Tensor(rng.normal(size=(3, 5)), dtype=np.float64, requires_grad=True)
        w = Tensor(rng.normal(size=(4, 5)), dtype=np.float64)
        check(lambda: ad.reduce_sum(ad.matmul(a, b) * w), [a, b])

        x = Tensor(rng.normal(size=(3, 6)) * 2.0, dtype=np.float64, requires_grad=True)
        wx = Tensor(rng.normal(size=(3, 6)), dtype=np.float64)
        # keep relu inputs away from the kink so the difference quotient is exact
        x.data[np.abs(x.data) < 0.05] += 0.1
        check(lambda: ad.reduce_sum(ad.relu(x) * wx), [x])
        check(lambda: ad.reduce_sum(ad.sigmoid(x) * wx), [x])
        check(lambda: ad.reduce_sum(ad.tanh(x) * wx), [x])
        check(lambda: ad.reduce_sum(ad.softmax(x, axis=-1) * wx), [x])

        g = Tensor(rng.normal(size=6), dtype=np.float64, requires_grad=True)
        c = Tensor(rng.normal(size=6), dtype=np.float64, requires_grad=True)
        check(lambda: ad.reduce_sum(ad.layer_norm(x, g, c) * wx), [x, g, c])

        idx = rng.integers(0, 3, size=8)
        seg = rng.integers(0, 4, size=8)
        y = Tensor(rng.normal(size=(3, 4)), dtype=np.float64, requires_grad=True)
        check(lambda: ad.reduce_sum(ad.power(ad.scatter_add(ad.gather(y, idx), seg, 4), 2.0)), [y])

        gru = GRUCell(4, SplitMix64(int(rng.integers(1 << 30))))
        leaves = []
        for _, p in gru.named_params():
            p.tensor.data = p.tensor.data.astype(np.float64)
            if p.tensor.data.ndim == 1:
                p.tensor.data = rng.normal(size=p.tensor.data.shape) * 0.3
            leaves.append(p.tensor)
        h = Tensor(rng.normal(size=(2, 4)), dtype=np.float64, requires_grad=True)
        m = Tensor(rng.normal(size=(2, 4)), dtype=np.float64, requires_grad=True)
        wh = Tensor(rng.normal(size=(2, 4)), dtype=np.float64)
        check(lambda: ad.reduce_sum(gru(h, m) * wh), leaves + [h, m])

    ok = worst <= 1e-4
    return ("op-gradients", ok, f"max rel err {worst:.2e} (tol 1e-4)")


def pipeline_gradient() -> Result:
    from .training import total_loss

    scenes, vocab = generate_scenes(SynthConfig(num_scenes=1, objects_min=3,
                                                objects_max=3, points_per_object=64),
                                    seed=11)
    cfg = ModelConfig(task="sgcls", num_object_classes=vocab.num_object_classes,
                      num_predicates=vocab.num_predicates, feature_dim=16,
                      geo_dim=8, link_dim=16, histogram_bins=4)
    model = SceneGraphModel(cfg, seed=5)
    batch = make_batch(scenes[0], cfg)
    leaves = []
    for _, p in model.named_params():
        p.tensor.data = p.tensor.data.astype(np.float64)
        leaves.append(p.tensor)
    batch.geometry = batch.geometry.astype(np.float64)
    batch.descriptors = batch.descriptors.astype(np.float64)

    def build():
        outputs = model.forward(batch)
        loss, _ = total_loss(outputs, batch, cfg)
        return loss

    # h=1e-6: small enough that relu-kink crossings stop polluting the
    # quotient, with float64 roundoff still orders below the tolerance
    err = finite_difference_check(build, leaves, h=1e-6, max_components=4,
                                  rng=np.random.default_rng(3))
    ok = err <= 1e-3
    return ("pipeline-gradient", ok, f"max rel err {err:.2e} (tol 1e-3)")


def line_graph_oracle() -> Result:
    for k in range(2, 13):
        graph = PrimitiveGraph.complete(k)
        line = build_line_graph(graph)
        if line.num_nodes != k * (k - 1) or line.num_adjacent != k * (k - 1) * (k - 2):
            return ("line-graph", False, f"count mismatch at K={k}")
    rng = np.random.default_rng(7)
    for _ in range(50):
        k = int(rng.integers(2, 9))
        all_pairs = [(i, j) for i in range(k) for j in range(k) if i != j]
        keep = [p for p in all_pairs if rng.random() < 0.6]
        if not keep:
            keep = [all_pairs[0]]
        graph = PrimitiveGraph(k, keep)
        line = build_line_graph(graph)
        got = sorted(zip(line.dst_node.tolist(), line.src_node.tolist()))
        want = brute_force_line_adjacency([graph.pair(e) for e in range(graph.num_edges)])
        if got != want:
            return ("line-graph", False, f"adjacency mismatch on K={k} subset graph")
    return ("line-graph", True, "complete K=2..12 and 50 random subsets")


def scatter_loop() -> Result:
    rng = np.random.default_rng(21)
    for _ in range(20):
        n, rows = int(rng.integers(1, 30)), int(rng.integers(1, 8))
        data = rng.normal(size=(n, 5))
        idx = rng.integers(0, rows, size=n)
        got = ad.scatter_add(Tensor(data, dtype=np.float64), idx, rows).data
        want = np.zeros((rows, 5))
        for i in range(n):
            want[idx[i]] += data[i]
        if not np.allclose(got, want, atol=1e-12):
            return ("scatter-add", False, "loop mismatch")
    return ("scatter-add", True, "20 random index sets vs explicit loop")


def metric_oracle() -> Result:
    from .metrics import scene_recall_hits
    from .scenes import Scene, ObjectInstance, make_bbox, Relationship

    rng = np.random.default_rng(99)
    for trial in range(20):
        k_obj = int(rng.integers(3, 6))
        n_pred = int(rng.integers(2, 5))
        objects = [ObjectInstance(id=i, class_id=0,
                                  bbox=make_bbox([i, 0, 0], [i + 0.5, 0.5, 0.5]))
                   for i in range(k_obj)]
        rels = []
        for _ in range(int(rng.integers(1, 6))):
            s = int(rng.integers(0, k_obj))
            o = int(rng.integers(0, k_obj))
            if s == o:
                continue
            rels.append(Relationship(s, o, int(rng.integers(0, n_pred))))
        if not rels:
            continue
        scene = Scene(scan_id=f"fix{trial}", objects=objects, relationships=rels)
        cfg = ModelConfig(num_object_classes=1, num_predicates=n_pred)
        batch = make_batch(scene, cfg)
        scores = rng.random(size=(batch.graph.num_edges, n_pred))
        for k in (1, 3, 5, 10):
            for constrained in (True, False):
                hits = scene_recall_hits(scores, batch, [k], constrained)
                got = len(hits[k]) / len(batch.gt_triplets)
                want = exhaustive_recall(scores, batch.graph.edges,
                                         batch.gt_triplets, k, constrained)
                if abs(got - want) > 0:
                    return ("metrics", False,
                            f"recall mismatch k={k} constrained={constrained}")
    scores = np.random.default_rng(5).random(40)
    targets = (np.random.default_rng(6).random(40) < 0.4).astype(float)
    if abs(link_auc(scores, targets) - pairwise_auc(scores, targets)) > 1e-9:
        return ("metrics", False, "AUC mismatch")
    return ("metrics", True, "20 fixtures vs exhaustive ranking; AUC vs pairwise")


def run_selfcheck(quick: bool = False) -> list[Result]:
    return [
        op_gradient_suite(trials=2 if quick else 5),
        pipeline_gradient(),
        line_graph_oracle(),
        scatter_loop(),
        metric_oracle(),
    ]
