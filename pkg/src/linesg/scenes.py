"""Scene data model: object instances, relationships, JSON I/O, primitive graph.

Scene JSON (one scene per file, or an array of scenes):

    {"scan_id": str,
     "objects": [{"id": int, "class_id": int,
                  "points": [[x, y, z], ...]?,          # meters
                  "bbox": {"min": [3], "max": [3]}?}],
     "relationships": [[subject_id, object_id, predicate_id], ...]}

Vocabularies live in a sidecar file: {"objects": [...], "predicates": [...]}.
Boxes are axis-aligned; when absent they are derived from the points.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

MIN_EXTENT = 1e-4  # meters; degenerate box axes are padded to this

# corner enumeration order: x varies fastest, then y, then z
_CORNER_BITS = [(x, y, z) for z in (0, 1) for y in (0, 1) for x in (0, 1)]


class SceneError(ValueError):
    """Malformed scene data."""


@dataclass(frozen=True)
class BBox:
    min_corner: np.ndarray  # (3,) float64
    max_corner: np.ndarray  # (3,) float64

    @property
    def centroid(self) -> np.ndarray:
        return (self.min_corner + self.max_corner) / 2.0

    @property
    def extents(self) -> np.ndarray:
        return self.max_corner - self.min_corner

    @property
    def volume(self) -> float:
        return float(np.prod(self.extents))

    @property
    def corners(self) -> np.ndarray:
        """(8, 3) corners in the fixed x-fastest order."""
        lo, hi = self.min_corner, self.max_corner
        return np.array([[hi[0] if bx else lo[0], hi[1] if by else lo[1], hi[2] if bz else lo[2]]
                         for bx, by, bz in _CORNER_BITS])

    def geometry_vector(self) -> np.ndarray:
        """31-dim raw geometry: corners(24), centroid(3), l, w, h, volume."""
        ext = self.extents
        return np.concatenate([self.corners.reshape(-1), self.centroid, ext, [self.volume]])


def make_bbox(min_corner, max_corner) -> BBox:
    lo = np.asarray(min_corner, dtype=np.float64)
    hi = np.asarray(max_corner, dtype=np.float64)
    if lo.shape != (3,) or hi.shape != (3,):
        raise SceneError("bbox corners must be 3-vectors")
    if np.any(hi < lo):
        raise SceneError("bbox max must be >= min on every axis")
    # pad degenerate axes so the volume stays positive
    for axis in range(3):
        if hi[axis] - lo[axis] < MIN_EXTENT:
            center = (hi[axis] + lo[axis]) / 2.0
            lo[axis] = center - MIN_EXTENT / 2.0
            hi[axis] = center + MIN_EXTENT / 2.0
    return BBox(lo, hi)


def derive_bbox(points: np.ndarray) -> BBox:
    """Axis-aligned box of a point set; degenerate extents padded."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
        raise SceneError("derive_bbox needs a non-empty (N, 3) point set")
    return make_bbox(pts.min(axis=0), pts.max(axis=0))


@dataclass(frozen=True)
class ObjectInstance:
    id: int
    class_id: int
    bbox: BBox
    points: Optional[np.ndarray] = None  # (N, 3) float64

    def __post_init__(self):
        if self.class_id < 0:
            raise SceneError(f"object {self.id}: negative class id")
        if self.bbox.volume <= 0:
            raise SceneError(f"object {self.id}: non-positive box volume")
        if self.points is not None:
            pts = self.points
            lo = self.bbox.min_corner - 1e-6
            hi = self.bbox.max_corner + 1e-6
            if np.any(pts < lo) or np.any(pts > hi):
                raise SceneError(f"object {self.id}: points outside bbox")


@dataclass(frozen=True)
class Relationship:
    subject_id: int
    object_id: int
    predicate_id: int

    def __post_init__(self):
        if self.subject_id == self.object_id:
            raise SceneError("relationship endpoints must differ")
        if self.predicate_id < 0:
            raise SceneError("negative predicate id")

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.subject_id, self.object_id, self.predicate_id)


@dataclass
class Scene:
    scan_id: str
    objects: list[ObjectInstance]
    relationships: list[Relationship] = field(default_factory=list)

    def __post_init__(self):
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise SceneError(f"scene {self.scan_id}: duplicate object id")
        known = set(ids)
        for rel in self.relationships:
            if rel.subject_id not in known or rel.object_id not in known:
                raise SceneError(f"scene {self.scan_id}: relationship references unknown object")

    @property
    def num_objects(self) -> int:
        return len(self.objects)

    def object_by_id(self, oid: int) -> ObjectInstance:
        for obj in self.objects:
            if obj.id == oid:
                return obj
        raise KeyError(oid)

    def gt_triplets(self) -> list[tuple[int, int, int]]:
        return [r.as_tuple() for r in self.relationships]


@dataclass(frozen=True)
class Vocabulary:
    objects: list[str]
    predicates: list[str]

    @property
    def num_object_classes(self) -> int:
        return len(self.objects)

    @property
    def num_predicates(self) -> int:
        return len(self.predicates)


# ---------------------------------------------------------------------------
# JSON serialization


def scene_to_dict(scene: Scene) -> dict:
    objs = []
    for o in scene.objects:
        entry: dict = {"id": o.id, "class_id": o.class_id}
        if o.points is not None:
            entry["points"] = [[float(v) for v in p] for p in o.points]
        entry["bbox"] = {"min": [float(v) for v in o.bbox.min_corner],
                         "max": [float(v) for v in o.bbox.max_corner]}
        objs.append(entry)
    return {"scan_id": scene.scan_id,
            "objects": objs,
            "relationships": [list(r.as_tuple()) for r in scene.relationships]}


def scene_from_dict(data: dict, vocab: Optional[Vocabulary] = None) -> Scene:
    if not isinstance(data, dict) or "objects" not in data:
        raise SceneError("scene must be an object with an 'objects' list")
    objects = []
    for entry in data["objects"]:
        points = None
        if entry.get("points") is not None:
            points = np.asarray(entry["points"], dtype=np.float64)
            if points.ndim != 2 or points.shape[1] != 3:
                raise SceneError(f"object {entry.get('id')}: points must be Nx3")
        if entry.get("bbox") is not None:
            bbox = make_bbox(entry["bbox"]["min"], entry["bbox"]["max"])
        elif points is not None:
            bbox = derive_bbox(points)
        else:
            raise SceneError(f"object {entry.get('id')}: needs points or bbox")
        class_id = int(entry["class_id"])
        if vocab is not None and class_id >= vocab.num_object_classes:
            raise SceneError(f"object {entry.get('id')}: class id {class_id} out of range")
        objects.append(ObjectInstance(id=int(entry["id"]), class_id=class_id,
                                      bbox=bbox, points=points))
    relationships = []
    for item in data.get("relationships", []):
        s, o, p = (int(v) for v in item)
        if vocab is not None and p >= vocab.num_predicates:
            raise SceneError(f"predicate id {p} out of range")
        relationships.append(Relationship(s, o, p))
    return Scene(scan_id=str(data.get("scan_id", "")), objects=objects,
                 relationships=relationships)


def dump_json(obj, path: Path | str) -> None:
    Path(path).write_text(json.dumps(obj, indent=1) + "\n")


def load_scene_json(path: Path | str, vocab: Optional[Vocabulary] = None) -> Scene | list[Scene]:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SceneError(f"{path}: malformed JSON: {exc}") from exc
    if isinstance(data, list):
        return [scene_from_dict(d, vocab) for d in data]
    return scene_from_dict(data, vocab)


def save_scene_json(scene: Scene, path: Path | str) -> None:
    dump_json(scene_to_dict(scene), path)


def load_vocabulary(path: Path | str) -> Vocabulary:
    data = json.loads(Path(path).read_text())
    return Vocabulary(objects=list(data["objects"]), predicates=list(data["predicates"]))


def save_vocabulary(vocab: Vocabulary, path: Path | str) -> None:
    dump_json({"objects": vocab.objects, "predicates": vocab.predicates}, path)


# ---------------------------------------------------------------------------
# primitive graph


class PrimitiveGraph:
    """Directed graph over object slots with an indexed edge list.

    The pipeline always uses the complete graph (every ordered pair, no
    loops); arbitrary edge subsets are supported for structural tests.
    Edge order is lexicographic in (source, target) slot indices.
    """

    def __init__(self, num_objects: int, edges: Optional[list[tuple[int, int]]] = None):
        if num_objects < 1:
            raise SceneError("graph needs at least one object")
        self.num_objects = num_objects
        if edges is None:
            edges = [(i, j) for i in range(num_objects) for j in range(num_objects) if i != j]
        else:
            edges = sorted(edges)
            if len(set(edges)) != len(edges):
                raise SceneError("duplicate edge")
            for i, j in edges:
                if i == j or not (0 <= i < num_objects) or not (0 <= j < num_objects):
                    raise SceneError(f"bad edge ({i}, {j})")
        self.edges = np.asarray(edges, dtype=np.int64).reshape(len(edges), 2)
        self._index = {tuple(e): k for k, e in enumerate(edges)}

    @classmethod
    def complete(cls, num_objects: int) -> "PrimitiveGraph":
        return cls(num_objects)

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    def edge_index(self, i: int, j: int) -> int:
        return self._index[(i, j)]

    def pair(self, edge_idx: int) -> tuple[int, int]:
        i, j = self.edges[edge_idx]
        return int(i), int(j)


def build_primitive_graph(scene: Scene) -> PrimitiveGraph:
    """Complete directed graph over the scene's object slots (list order)."""
    return PrimitiveGraph.complete(scene.num_objects)
