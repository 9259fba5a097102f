"""Triplet scoring and the recall evaluation protocol.

Candidates enumerate every directed pair x predicate (the internal "none"
class never becomes a candidate). PredCls scores a candidate by its predicate
probability; SGCls multiplies in the argmax object-class probabilities of
both endpoints, and a ground-truth triplet only counts as recalled if both
endpoint classes were predicted correctly.

R@k keeps each pair's single best predicate before ranking (graph
constraint); ngcR@k ranks all candidates. Both take the global top-k per
scene and average recall over scenes with at least one ground-truth triplet.
The unconstrained protocol is a strict relaxation: a triplet recalled under
the graph constraint counts as recalled without it, even when the flood of
sub-argmax candidates from other pairs would push it past k in the raw
unconstrained ranking. This makes ngcR@k >= R@k structural instead of
merely typical; it changes raw unconstrained numbers only in that rare
adversarial case.

mR@k pools per-predicate-class recall across the whole evaluation set from
the same per-scene (constrained) top-k lists, then averages over the classes
that occur. Ties are broken lexicographically by (subject, object,
predicate).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .model import PipelineOutputs, SceneBatch

DEFAULT_KS = (1, 3, 5, 10)


@dataclass(frozen=True)
class TripletPrediction:
    subject: int      # object slot within the scene
    object: int
    predicate: int
    score: float


def candidate_scores(outputs: PipelineOutputs, batch: SceneBatch,
                     task: str) -> tuple[np.ndarray, Optional[np.ndarray]]:
    """(E, C_pred) candidate score matrix and, for SGCls, the argmax classes."""
    pred = outputs.pred_probs.data.astype(np.float64)
    num_real = pred.shape[1] - 1  # drop the trailing "none" class
    scores = pred[:, :num_real].copy()
    if task == "predcls":
        return scores, None
    if outputs.obj_probs is None:
        raise ValueError("SGCls scoring needs object distributions")
    obj = outputs.obj_probs.data.astype(np.float64)
    argmax = obj.argmax(axis=1)
    best = obj[np.arange(obj.shape[0]), argmax]
    src, dst = batch.graph.edges[:, 0], batch.graph.edges[:, 1]
    scores *= (best[src] * best[dst])[:, None]
    return scores, argmax


def score_triplets(outputs: PipelineOutputs, batch: SceneBatch,
                   task: str) -> list[TripletPrediction]:
    """All candidates, ranked (ties broken lexicographically)."""
    scores, _ = candidate_scores(outputs, batch, task)
    ranked = _ranked_candidates(scores, batch, constrained=False)
    return [TripletPrediction(s, o, p, float(scores[batch.graph.edge_index(s, o), p]))
            for s, o, p in ranked]


def _ranked_candidates(scores: np.ndarray, batch: SceneBatch,
                       constrained: bool) -> list[tuple[int, int, int]]:
    """Candidate (subject, object, predicate) triples in rank order."""
    edges = batch.graph.edges
    num_edges, num_pred = scores.shape
    if constrained:
        best_p = scores.argmax(axis=1)  # first max wins: lowest predicate id
        cand_e = np.arange(num_edges)
        cand_p = best_p
        cand_s = scores[cand_e, cand_p]
    else:
        cand_e = np.repeat(np.arange(num_edges), num_pred)
        cand_p = np.tile(np.arange(num_pred), num_edges)
        cand_s = scores.reshape(-1)
    subj = edges[cand_e, 0]
    obj = edges[cand_e, 1]
    order = np.lexsort((cand_p, obj, subj, -cand_s))
    return [(int(subj[i]), int(obj[i]), int(cand_p[i])) for i in order]


def scene_recall_hits(scores: np.ndarray, batch: SceneBatch, ks: Sequence[int],
                      constrained: bool,
                      class_correct: Optional[np.ndarray] = None) -> dict[int, list[tuple[int, int, int]]]:
    """Per k: the ground-truth triplets recalled in the scene's top-k.

    With constrained=False the hit set is the union with the constrained
    protocol's hits (relaxation semantics; see the module docstring).
    """
    gt = batch.gt_triplets
    if not gt:
        return {k: [] for k in ks}
    rankings = [_ranked_candidates(scores, batch, True)]
    if not constrained:
        rankings.append(_ranked_candidates(scores, batch, False))
    hits: dict[int, list[tuple[int, int, int]]] = {}
    for k in ks:
        top: set = set()
        for ranked in rankings:
            top.update(ranked[:k])
        recalled = []
        for t in gt:
            if t not in top:
                continue
            if class_correct is not None and not (class_correct[t[0]] and class_correct[t[1]]):
                continue
            recalled.append(t)
        hits[k] = recalled
    return hits


@dataclass
class RecallReport:
    task: str
    ks: list[int]
    values: dict[str, dict[int, float]] = field(default_factory=dict)  # metric -> k -> value
    per_class: dict[int, dict[int, float]] = field(default_factory=dict)  # class -> k -> recall
    num_scenes: int = 0

    def get(self, metric: str, k: int) -> float:
        return self.values[metric][k]

    def rows(self) -> list[dict]:
        out = []
        for metric in sorted(self.values):
            for k in self.ks:
                out.append({"task": self.task, "metric": metric, "k": k,
                            "value": self.values[metric][k]})
        return out

    def write_csv(self, path: Path | str) -> None:
        lines = ["task,metric,k,value"]
        for row in self.rows():
            lines.append(f"{row['task']},{row['metric']},{row['k']},{row['value']:.6f}")
        Path(path).write_text("\n".join(lines) + "\n")

    def write_json(self, path: Path | str) -> None:
        data = {"task": self.task, "ks": self.ks,
                "metrics": {m: {str(k): v for k, v in kv.items()}
                            for m, kv in self.values.items()},
                "per_class": {str(c): {str(k): v for k, v in kv.items()}
                              for c, kv in self.per_class.items()},
                "num_scenes": self.num_scenes}
        Path(path).write_text(json.dumps(data, indent=1) + "\n")

    def write_per_class_csv(self, path: Path | str, names: Optional[list[str]] = None) -> None:
        lines = ["class,k,recall"]
        for c in sorted(self.per_class):
            label = names[c] if names else str(c)
            for k in self.ks:
                lines.append(f"{label},{k},{self.per_class[c][k]:.6f}")
        Path(path).write_text("\n".join(lines) + "\n")


def evaluate_outputs(per_scene: Sequence[tuple[SceneBatch, PipelineOutputs]],
                     task: str, ks: Sequence[int] = DEFAULT_KS) -> RecallReport:
    """Aggregate R@k / ngcR@k / mR@k over scenes (empty-GT scenes excluded)."""
    ks = list(ks)
    recalls = {"r": {k: [] for k in ks}, "ngc_r": {k: [] for k in ks}}
    class_hits: dict[int, dict[int, int]] = {}
    class_totals: dict[int, int] = {}
    num_scored = 0
    for batch, outputs in per_scene:
        if not batch.gt_triplets:
            continue
        num_scored += 1
        scores, argmax = candidate_scores(outputs, batch, task)
        class_correct = None
        if task == "sgcls":
            class_correct = (argmax == batch.class_ids)
        gt_count = len(batch.gt_triplets)
        for t in batch.gt_triplets:
            class_totals[t[2]] = class_totals.get(t[2], 0) + 1
        con = scene_recall_hits(scores, batch, ks, True, class_correct)
        ngc = scene_recall_hits(scores, batch, ks, False, class_correct)
        for k in ks:
            recalls["r"][k].append(len(con[k]) / gt_count)
            recalls["ngc_r"][k].append(len(ngc[k]) / gt_count)
            for t in con[k]:
                class_hits.setdefault(t[2], {}).setdefault(k, 0)
                class_hits[t[2]][k] += 1

    report = RecallReport(task=task, ks=ks, num_scenes=num_scored)
    for metric in ("r", "ngc_r"):
        report.values[metric] = {
            k: float(np.mean(recalls[metric][k])) if recalls[metric][k] else 0.0
            for k in ks}
    per_class = {}
    for c, total in class_totals.items():
        per_class[c] = {k: class_hits.get(c, {}).get(k, 0) / total for k in ks}
    report.per_class = per_class
    report.values["m_r"] = {
        k: float(np.mean([per_class[c][k] for c in per_class])) if per_class else 0.0
        for k in ks}
    return report


def link_auc(scores: np.ndarray, targets: np.ndarray) -> float:
    """ROC-AUC by the Mann-Whitney rank statistic; ties get average ranks."""
    s = np.asarray(scores, dtype=np.float64)
    t = np.asarray(targets) > 0.5
    pos = int(t.sum())
    neg = int(len(t) - pos)
    if pos == 0 or neg == 0:
        raise ValueError("AUC needs at least one positive and one negative")
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(len(s), dtype=np.float64)
    sorted_scores = s[order]
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    rank_sum = float(ranks[t].sum())
    return (rank_sum - pos * (pos + 1) / 2.0) / (pos * neg)
