"""DOT (graphviz) export of scene graphs and line graphs."""

from __future__ import annotations

from typing import Optional, Sequence

from .linegraph import LineGraph
from .metrics import TripletPrediction
from .scenes import Scene, Vocabulary


def _quote(text: str) -> str:
    return '"' + text.replace('"', r"\"") + '"'


def scene_graph_dot(scene: Scene, vocab: Vocabulary,
                    predictions: Optional[Sequence[TripletPrediction]] = None,
                    predicted_classes: Optional[Sequence[int]] = None,
                    name: str = "scene") -> str:
    """Ground-truth graph, or predicted graph colored against the GT.

    Predicted edges present in the ground truth are green, others red;
    ground-truth edges missing from the prediction are dashed gray. When
    `predicted_classes` (argmax class per object slot) is given, nodes carry
    the predicted label and turn red when it differs from the ground truth.
    """
    slot_ids = [o.id for o in scene.objects]
    lines = [f"digraph {name} {{", "  rankdir=LR;"]
    for slot, obj in enumerate(scene.objects):
        if predicted_classes is not None:
            cls = int(predicted_classes[slot])
            attrs = "" if cls == obj.class_id else ", color=red"
            lines.append(f"  n{obj.id} [label={_quote(f'{obj.id}: {vocab.objects[cls]}')}{attrs}];")
            continue
        label = f"{obj.id}: {vocab.objects[obj.class_id]}"
        lines.append(f"  n{obj.id} [label={_quote(label)}];")
    gt = {(r.subject_id, r.object_id, r.predicate_id) for r in scene.relationships}
    if predictions is None:
        for rel in scene.relationships:
            label = vocab.predicates[rel.predicate_id]
            lines.append(f"  n{rel.subject_id} -> n{rel.object_id} [label={_quote(label)}];")
    else:
        predicted = set()
        for t in predictions:
            s_id, o_id = slot_ids[t.subject], slot_ids[t.object]
            predicted.add((s_id, o_id, t.predicate))
            color = "green" if (s_id, o_id, t.predicate) in gt else "red"
            label = vocab.predicates[t.predicate]
            lines.append(f"  n{s_id} -> n{o_id} [label={_quote(label)}, color={color}];")
        for s_id, o_id, p in sorted(gt - predicted):
            label = vocab.predicates[p]
            lines.append(f"  n{s_id} -> n{o_id} [label={_quote(label)}, color=gray, style=dashed];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def line_graph_dot(line: LineGraph, name: str = "linegraph") -> str:
    """Line-graph structure: one node per directed edge, adjacency arrows."""
    lines = [f"digraph {name} {{"]
    for idx, (i, j) in enumerate(line.node_pairs):
        lines.append(f"  e{idx} [label={_quote(f'{i}->{j}')}];")
    for dst, src in zip(line.dst_node, line.src_node):
        lines.append(f"  e{src} -> e{dst};")
    lines.append("}")
    return "\n".join(lines) + "\n"
