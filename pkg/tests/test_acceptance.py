"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v`. The training-based criteria
(4-7) dominate the runtime; the whole suite targets a laptop CPU.
"""

import json
import subprocess
import sys
import time
from dataclasses import replace

import numpy as np
import pytest

from linesg import autodiff as ad
from linesg.linegraph import build_line_graph
from linesg.metrics import evaluate_outputs, link_auc, scene_recall_hits
from linesg.model import ModelConfig, SceneGraphModel, make_batch
from linesg.oracles import brute_force_line_adjacency, exhaustive_recall
from linesg.scenes import ObjectInstance, PrimitiveGraph, Relationship, Scene, make_bbox
from linesg.selfcheck import op_gradient_suite, pipeline_gradient
from linesg.synth import SynthConfig, generate_scenes
from linesg.training import TrainConfig, Trainer


def report(capsys, criterion: str, ok: bool, detail: str):
    with capsys.disabled():
        print(f"\n[{criterion}] {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, f"{criterion}: {detail}"


def aligned_class_recall(model, batches):
    """Fraction of GT pairs of the (single-rule) dataset argmax-classified right."""
    hit = tot = 0
    for b in batches:
        probs = model.forward(b).pred_probs.data
        for s, o, p in b.gt_triplets:
            hit += int(probs[b.graph.edge_index(s, o)].argmax() == p)
            tot += 1
    return hit / tot


class TestCriterion1Structure:
    def test_line_graph_structural_oracle(self, capsys):
        start = time.time()
        ok = True
        detail = []
        for k in range(2, 13):
            line = build_line_graph(PrimitiveGraph.complete(k))
            if line.num_nodes != k * (k - 1) or line.num_adjacent != k * (k - 1) * (k - 2):
                ok, detail = False, [f"complete K={k} count mismatch"]
                break
        if ok:
            rng = np.random.default_rng(1)
            for trial in range(50):
                n = int(rng.integers(2, 9))
                pairs = [(i, j) for i in range(n) for j in range(n)
                         if i != j and rng.random() < 0.6] or [(0, 1)]
                graph = PrimitiveGraph(n, pairs)
                line = build_line_graph(graph)
                got = sorted(zip(line.dst_node.tolist(), line.src_node.tolist()))
                want = brute_force_line_adjacency(
                    [graph.pair(e) for e in range(graph.num_edges)])
                if got != want:
                    ok, detail = False, [f"subset trial {trial} mismatch"]
                    break
        elapsed = time.time() - start
        ok = ok and elapsed < 5.0
        report(capsys, "criterion-1 structural oracle", ok,
               detail[0] if detail else f"K=2..12 exact, 50 subsets exact, {elapsed:.1f}s (< 5s)")


class TestCriterion2Gradients:
    def test_gradient_suite(self, capsys):
        start = time.time()
        name, op_ok, op_detail = op_gradient_suite(trials=4)
        name2, pipe_ok, pipe_detail = pipeline_gradient()
        elapsed = time.time() - start
        ok = op_ok and pipe_ok and elapsed < 60.0
        report(capsys, "criterion-2 gradient suite", ok,
               f"ops: {op_detail}; end-to-end: {pipe_detail}; {elapsed:.1f}s (< 60s)")


class TestCriterion3MetricOracle:
    def test_fifty_fixtures(self, capsys):
        start = time.time()
        rng = np.random.default_rng(17)
        checked = 0
        ok, detail = True, ""
        for trial in range(50):
            k_obj = int(rng.integers(2, 6))
            n_pred = int(rng.integers(1, 5))
            rels = set()
            for _ in range(int(rng.integers(1, 7))):
                s, o = rng.choice(k_obj, size=2, replace=False)
                rels.add((int(s), int(o), int(rng.integers(0, n_pred))))
            objects = [ObjectInstance(id=i, class_id=0,
                                      bbox=make_bbox([i, 0, 0], [i + .5, .5, .5]))
                       for i in range(k_obj)]
            scene = Scene(scan_id=f"fx{trial}", objects=objects,
                          relationships=[Relationship(*r) for r in rels])
            cfg = ModelConfig(num_object_classes=1, num_predicates=n_pred)
            batch = make_batch(scene, cfg)
            scores = rng.uniform(size=(batch.graph.num_edges, n_pred))
            ks = [1, 3, 5, 10]
            con = scene_recall_hits(scores, batch, ks, True)
            ngc = scene_recall_hits(scores, batch, ks, False)
            gt_n = len(batch.gt_triplets)
            prev_c = prev_n = -1
            for k in ks:
                for constrained, hits in ((True, con), (False, ngc)):
                    got = len(hits[k]) / gt_n
                    want = exhaustive_recall(scores, batch.graph.edges,
                                             batch.gt_triplets, k, constrained)
                    if got != want:
                        ok, detail = False, f"oracle mismatch trial {trial} k={k}"
                if len(ngc[k]) < len(con[k]):
                    ok, detail = False, f"dominance violated trial {trial} k={k}"
                if len(con[k]) < prev_c or len(ngc[k]) < prev_n:
                    ok, detail = False, f"monotonicity violated trial {trial} k={k}"
                prev_c, prev_n = len(con[k]), len(ngc[k])
            checked += 1
        elapsed = time.time() - start
        ok = ok and checked == 50 and elapsed < 10.0
        report(capsys, "criterion-3 metric oracle", ok,
               detail or f"50 fixtures exact, dominance and monotonicity hold, {elapsed:.1f}s (< 10s)")


class TestCriterion4Overfit:
    def test_predcls_overfit_r5(self, capsys):
        start = time.time()
        data_cfg = SynthConfig(num_scenes=20, stack_prob=0.5, attach_prob=0.0,
                               predicates=("standing on",))
        scenes, vocab = generate_scenes(data_cfg, 3)
        cfg = ModelConfig(task="predcls", num_object_classes=vocab.num_object_classes,
                          num_predicates=vocab.num_predicates)
        model = SceneGraphModel(cfg, seed=0)
        batches = [make_batch(s, cfg) for s in scenes]
        trainer = Trainer(model, TrainConfig(stage1_epochs=40, stage2_epochs=150,
                                             lr=1e-3, task="predcls", seed=0))
        trainer.train_stage1(batches)
        trainer.train_stage2(batches)
        report_obj = evaluate_outputs([(b, model.forward(b)) for b in batches],
                                      "predcls", ks=[5])
        r5 = report_obj.get("r", 5)
        # smoothed training-loss curve is non-increasing (5-epoch windows)
        losses = [row["loss_total"] for row in trainer.log.rows if row["stage"] == 2]
        smweighted = [float(np.mean(losses[i:i + 5])) for i in range(0, len(losses) - 4, 5)]
        smooth_ok = all(b <= a + 1e-6 for a, b in zip(smweighted, smweighted[1:]))
        elapsed = time.time() - start
        ok = r5 >= 0.95 and smooth_ok and elapsed < 600.0
        report(capsys, "criterion-4 overfit", ok,
               f"train R@5={r5:.3f} (>= 0.95), smoothed loss non-increasing={smooth_ok}, "
               f"{elapsed:.0f}s (< 600s)")


class TestCriterion6EdgeContextGain:
    def test_pre_beats_none_on_alignment(self, capsys):
        # third-object alignment is undecidable from pair geometry alone;
        # both arms share identical parameters after stage 1 and differ only
        # in whether the line-graph stage runs
        start = time.time()
        data_cfg = SynthConfig(num_scenes=190, objects_min=6, objects_max=8,
                               area=(2.0, 1.4), stack_prob=0.0, attach_prob=0.0,
                               align_prob=0.35, points_per_object=64,
                               predicates=("aligned with",))
        scenes, vocab = generate_scenes(data_cfg, 17)
        n_train, n_val = 140, 25
        gaps = []
        per_seed = []
        for seed in (0, 1, 2):
            scores = {}
            for strategy in ("pre", "none"):
                cfg = ModelConfig(task="sgcls",
                                  num_object_classes=vocab.num_object_classes,
                                  num_predicates=vocab.num_predicates,
                                  strategy=strategy, link_mode="fc", feature_dim=32)
                batches = [make_batch(s, cfg) for s in scenes]
                train = batches[:n_train]
                val = batches[n_train:n_train + n_val]
                test = batches[n_train + n_val:]
                model = SceneGraphModel(cfg, seed=seed)
                trainer = Trainer(model, TrainConfig(stage1_epochs=20,
                                                     stage2_epochs=140, lr=3e-4,
                                                     decay_every=50, task="sgcls",
                                                     seed=seed))
                trainer.train_stage1(train)
                trainer.cfg.lr = 2.5e-3
                best_val, test_at_best = -1.0, 0.0
                for upto in range(20, 141, 20):
                    trainer.train_stage2(train, epochs=upto)
                    v = aligned_class_recall(model, val)
                    if v > best_val:
                        best_val = v
                        test_at_best = aligned_class_recall(model, test)
                scores[strategy] = test_at_best
            gaps.append(scores["pre"] - scores["none"])
            per_seed.append(f"seed{seed}: pre={scores['pre']:.3f} "
                            f"none={scores['none']:.3f}")
        mean_gap = float(np.mean(gaps))
        elapsed = time.time() - start
        ok = mean_gap >= 0.10 and elapsed < 1200.0
        report(capsys, "criterion-6 edge-context gain", ok,
               f"mean gap={mean_gap * 100:.1f}pp (>= 10pp) over 3 seeds "
               f"[{'; '.join(per_seed)}], {elapsed:.0f}s (< 1200s)")


class TestCriterion7LinkModeOrdering:
    def test_gt_ge_lp_ge_fc(self, capsys):
        start = time.time()
        data_cfg = SynthConfig(num_scenes=90, objects_min=4, objects_max=7,
                               area=(2.2, 1.8), stack_prob=0.35, attach_prob=0.0,
                               align_prob=0.15, points_per_object=64,
                               predicates=("standing on", "close by", "same as",
                                           "aligned with"))
        scenes, vocab = generate_scenes(data_cfg, 23)
        n_train = 70
        means = {mode: [] for mode in ("fc", "lp", "gt")}
        for seed in (0, 1, 2):
            base = ModelConfig(task="predcls",
                               num_object_classes=vocab.num_object_classes,
                               num_predicates=vocab.num_predicates, feature_dim=32)
            batches = [make_batch(s, base) for s in scenes]
            # stage 1 once per seed; parameter sets are identical across modes
            stage1_model = SceneGraphModel(base, seed=seed)
            stage1 = Trainer(stage1_model, TrainConfig(stage1_epochs=25,
                                                       stage2_epochs=60, lr=3e-4,
                                                       task="predcls", seed=seed))
            stage1.train_stage1(batches[:n_train])
            weights = {n: p.data.copy() for n, p in stage1_model.named_params()}
            for mode in ("fc", "lp", "gt"):
                cfg = replace(base, link_mode=mode)
                model = SceneGraphModel(cfg, seed=seed)
                for name, p in model.named_params():
                    p.data = weights[name].copy()
                trainer = Trainer(model, TrainConfig(stage1_epochs=25,
                                                     stage2_epochs=60, lr=1.5e-3,
                                                     decay_every=20, task="predcls",
                                                     seed=seed))
                trainer.begin_stage2()
                mode_batches = [make_batch(s, cfg) for s in scenes]
                trainer.train_stage2(mode_batches[:n_train])
                rep = evaluate_outputs([(b, model.forward(b))
                                        for b in mode_batches[n_train:]],
                                       "predcls", ks=[10])
                means[mode].append(rep.get("m_r", 10))
        gt, lp, fc = (float(np.mean(means[m])) for m in ("gt", "lp", "fc"))
        elapsed = time.time() - start
        ok = gt >= lp >= fc - 0.02
        report(capsys, "criterion-7 link-mode ordering", ok,
               f"held-out mR@10 means over 3 seeds: gt={gt:.3f} >= lp={lp:.3f} >= "
               f"fc-0.02={fc - 0.02:.3f}, {elapsed:.0f}s")


class TestCriterion8Determinism:
    def _cli(self, *args):
        return subprocess.run([sys.executable, "-m", "linesg.cli", *args],
                              capture_output=True, text=True)

    def test_bitwise_across_processes_and_resume(self, capsys, tmp_path):
        start = time.time()
        data = tmp_path / "data"
        gen_args = ["gen-data", "--out", str(data), "--scenes", "10", "--seed", "11",
                    "--objects-min", "4", "--objects-max", "5",
                    "--predicates", "standing on,close by", "--stack-prob", "0.5",
                    "--points", "48"]
        assert self._cli(*gen_args).returncode == 0
        data2 = tmp_path / "data2"
        assert self._cli(*[a if a != str(data) else str(data2)
                           for a in gen_args]).returncode == 0
        tree_ok = True
        for rel in sorted(p.relative_to(data).as_posix()
                          for p in data.rglob("*") if p.is_file()):
            if (data / rel).read_bytes() != (data2 / rel).read_bytes():
                tree_ok = False

        cfg = {"data_dir": str(data), "out_dir": "", "seed": 2, "task": "predcls",
               "model": {"feature_dim": 16, "geo_dim": 8, "link_dim": 16,
                         "histogram_bins": 4, "linegnn_layers": 2},
               "train": {"stage1_epochs": 2, "stage2_epochs": 3, "lr": 1e-3},
               "eval": {"ks": [1, 3, 5]}}
        outs = []
        for name in ("runA", "runB"):
            out = tmp_path / name
            cfg["out_dir"] = str(out)
            cfg_path = tmp_path / f"{name}.json"
            cfg_path.write_text(json.dumps(cfg))
            proc = self._cli("train", "--config", str(cfg_path))
            assert proc.returncode == 0, proc.stderr
            proc = self._cli("eval", "--config", str(cfg_path),
                             "--ckpt", str(out / "final.ckpt"), "--split", "test")
            assert proc.returncode == 0, proc.stderr
            outs.append(out)
        ckpt_ok = (outs[0] / "final.ckpt").read_bytes() == (outs[1] / "final.ckpt").read_bytes()
        csv_ok = (outs[0] / "metrics.csv").read_bytes() == (outs[1] / "metrics.csv").read_bytes()

        # resume: stage 1 alone, then stage 2 from its checkpoint, must equal
        # the uninterrupted run bit for bit
        resumed = tmp_path / "resumed"
        cfg["out_dir"] = str(resumed)
        cfg_path = tmp_path / "resumed.json"
        cfg_path.write_text(json.dumps(cfg))
        assert self._cli("train", "--config", str(cfg_path), "--stage", "1").returncode == 0
        assert self._cli("train", "--config", str(cfg_path), "--stage", "2",
                         "--resume", str(resumed / "stage1.ckpt")).returncode == 0
        resume_ok = (resumed / "final.ckpt").read_bytes() == (outs[0] / "final.ckpt").read_bytes()

        elapsed = time.time() - start
        ok = tree_ok and ckpt_ok and csv_ok and resume_ok
        report(capsys, "criterion-8 determinism", ok,
               f"dataset tree identical={tree_ok}, checkpoints identical={ckpt_ok}, "
               f"metric CSVs identical={csv_ok}, resume-equivalence={resume_ok}, {elapsed:.0f}s")


class TestCriterion5LinkSeparability:
    def test_stage1_heldout_auc(self, capsys):
        start = time.time()
        data_cfg = SynthConfig(num_scenes=100, area=(2.5, 2.0), stack_prob=0.3,
                               attach_prob=0.1,
                               predicates=("standing on", "close by", "same as"))
        scenes, vocab = generate_scenes(data_cfg, 42)
        cfg = ModelConfig(task="predcls", num_object_classes=vocab.num_object_classes,
                          num_predicates=vocab.num_predicates)
        batches = [make_batch(s, cfg) for s in scenes]
        train, held = batches[:80], batches[80:]
        model = SceneGraphModel(cfg, seed=0)
        trainer = Trainer(model, TrainConfig(stage1_epochs=40, lr=3e-4,
                                             task="predcls", seed=0))
        trainer.train_stage1(train)
        scores = np.concatenate([model.link_forward(b).data[:, 1] for b in held])
        targets = np.concatenate([b.link_targets for b in held])
        auc = link_auc(scores, targets)
        elapsed = time.time() - start
        ok = auc >= 0.90 and elapsed < 300.0
        report(capsys, "criterion-5 link separability", ok,
               f"held-out AUC={auc:.3f} (>= 0.90) after 40 epochs, {elapsed:.0f}s (< 300s)")
