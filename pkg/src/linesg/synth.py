"""Rule-based synthetic desk-scene generator.

Scenes are tabletop arrangements of axis-aligned boxes: grounded, stacked on
top of another box, attached side-by-side, or dropped near the line between
two earlier boxes. Object points are sampled on the true box surface with
gaussian noise, the stored bbox is re-derived from those points, and every
relationship is then computed from the stored geometry alone, so an
independent rule checker reproduces the ground truth exactly.

Class labels encode shape family (slab / block / stick) and size tier, so
object classification is learnable from geometry.

Conventions: +x is right, +y is back (so smaller y is "front"), +z is up.
Alignment uses the top-down (xy) projection of the centroid segment.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import SplitMix64, named_stream
from .scenes import BBox, ObjectInstance, Relationship, Scene, Vocabulary, derive_bbox

# rule thresholds (meters unless stated)
DIR_MARGIN = 0.05           # centroid margin for left/right/front/behind/above/below
STAND_CONTACT = 0.04        # |stander bottom - support top|; absorbs point noise
STAND_OVERLAP = 0.5         # fraction of the stander footprint over the support
ATTACH_GAP_MAX = 0.02       # face gap for attached-to
ATTACH_PEN_MAX = 0.05       # face interpenetration allowed (noise inflation)
CLOSE_GAP = 0.3             # box-to-box distance for close-by
SAME_VOLUME_RATIO = 0.2     # relative volume difference for same-as
ALIGN_DIST = 0.1            # xy distance of a third centroid to the segment

PREDICATE_NAMES = [
    "left", "right", "front", "behind", "above", "below",
    "standing on", "attached to", "close by", "same as", "aligned with",
]

CLASS_NAMES = [
    "small slab", "large slab",
    "small block", "large block",
    "small stick", "large stick",
]

_FAMILIES = ["slab", "block", "stick"]
_TIER_SCALE = {"small": 1.0, "large": 1.6}


class PlacementError(RuntimeError):
    """Rejection sampling could not place an object."""


@dataclass
class SynthConfig:
    num_scenes: int = 100
    objects_min: int = 4
    objects_max: int = 9
    area: tuple[float, float] = (1.6, 1.2)
    stack_prob: float = 0.35
    attach_prob: float = 0.1
    align_prob: float = 0.0
    points_per_object: int = 256
    noise_sigma: float = 0.005
    max_attempts: int = 1000
    predicates: tuple[str, ...] = tuple(PREDICATE_NAMES)

    def __post_init__(self):
        unknown = [p for p in self.predicates if p not in PREDICATE_NAMES]
        if unknown:
            raise ValueError(f"unknown predicates: {unknown}")
        if not (1 <= self.objects_min <= self.objects_max):
            raise ValueError("bad object count range")

    def vocabulary(self) -> Vocabulary:
        enabled = [p for p in PREDICATE_NAMES if p in self.predicates]
        return Vocabulary(objects=list(CLASS_NAMES), predicates=enabled)


# ---------------------------------------------------------------------------
# geometric predicates (operate on stored, point-derived boxes)


def _gap(a: BBox, b: BBox, axis: int) -> float:
    """Signed separation along one axis; negative means overlap."""
    return max(a.min_corner[axis] - b.max_corner[axis],
               b.min_corner[axis] - a.max_corner[axis])


def box_distance(a: BBox, b: BBox) -> float:
    gaps = np.array([max(_gap(a, b, axis), 0.0) for axis in range(3)])
    return float(np.linalg.norm(gaps))


def _xy_overlap_area(a: BBox, b: BBox) -> float:
    w = min(a.max_corner[0], b.max_corner[0]) - max(a.min_corner[0], b.min_corner[0])
    d = min(a.max_corner[1], b.max_corner[1]) - max(a.min_corner[1], b.min_corner[1])
    return max(w, 0.0) * max(d, 0.0)


def _segment_dist_xy(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    p2, a2, b2 = p[:2], a[:2], b[:2]
    d = b2 - a2
    denom = float(d @ d)
    t = 0.0 if denom == 0.0 else float(np.clip((p2 - a2) @ d / denom, 0.0, 1.0))
    return float(np.linalg.norm(p2 - (a2 + t * d)))


def is_standing_on(a: ObjectInstance, b: ObjectInstance) -> bool:
    ba, bb = a.bbox, b.bbox
    if ba.centroid[2] <= bb.centroid[2]:
        return False
    if abs(ba.min_corner[2] - bb.max_corner[2]) > STAND_CONTACT:
        return False
    footprint = ba.extents[0] * ba.extents[1]
    return _xy_overlap_area(ba, bb) >= STAND_OVERLAP * footprint


def is_attached_to(a: ObjectInstance, b: ObjectInstance) -> bool:
    for axis in range(3):
        gap = _gap(a.bbox, b.bbox, axis)
        if not (-ATTACH_PEN_MAX <= gap <= ATTACH_GAP_MAX):
            continue
        others = [o for o in range(3) if o != axis]
        if all(_gap(a.bbox, b.bbox, o) < 0.0 for o in others):
            return True
    return False


def is_close_by(a: ObjectInstance, b: ObjectInstance) -> bool:
    return box_distance(a.bbox, b.bbox) < CLOSE_GAP


def is_same_as(a: ObjectInstance, b: ObjectInstance) -> bool:
    if a.class_id != b.class_id:
        return False
    va, vb = a.bbox.volume, b.bbox.volume
    return abs(va - vb) <= SAME_VOLUME_RATIO * max(va, vb)


def is_aligned_with(a: ObjectInstance, b: ObjectInstance, others: list[ObjectInstance]) -> bool:
    ca, cb = a.bbox.centroid, b.bbox.centroid
    return any(_segment_dist_xy(o.bbox.centroid, ca, cb) <= ALIGN_DIST for o in others)


def _directional(a: ObjectInstance, b: ObjectInstance) -> list[str]:
    ca, cb = a.bbox.centroid, b.bbox.centroid
    out = []
    if ca[0] <= cb[0] - DIR_MARGIN:
        out.append("left")
    if ca[0] >= cb[0] + DIR_MARGIN:
        out.append("right")
    if ca[1] <= cb[1] - DIR_MARGIN:
        out.append("front")
    if ca[1] >= cb[1] + DIR_MARGIN:
        out.append("behind")
    if ca[2] >= cb[2] + DIR_MARGIN:
        out.append("above")
    if ca[2] <= cb[2] - DIR_MARGIN:
        out.append("below")
    return out


def derive_relationships(objects: list[ObjectInstance],
                         vocab: Vocabulary) -> list[Relationship]:
    """Evaluate the enabled rules on every ordered object pair."""
    pid = {name: i for i, name in enumerate(vocab.predicates)}
    rels: list[Relationship] = []

    def emit(a: ObjectInstance, b: ObjectInstance, name: str) -> None:
        if name in pid:
            rels.append(Relationship(a.id, b.id, pid[name]))

    for a in objects:
        for b in objects:
            if a.id == b.id:
                continue
            for name in _directional(a, b):
                emit(a, b, name)
            if is_standing_on(a, b):
                emit(a, b, "standing on")
            if is_attached_to(a, b):
                emit(a, b, "attached to")
            if is_close_by(a, b):
                emit(a, b, "close by")
            if is_same_as(a, b):
                emit(a, b, "same as")
            others = [o for o in objects if o.id not in (a.id, b.id)]
            if is_aligned_with(a, b, others):
                emit(a, b, "aligned with")
    return rels


# ---------------------------------------------------------------------------
# placement


@dataclass
class _TrueBox:
    lo: np.ndarray
    hi: np.ndarray
    class_id: int
    grounded: bool


def _sample_dims(rng: SplitMix64) -> tuple[np.ndarray, int]:
    family = rng.choice(_FAMILIES)
    tier = rng.choice(["small", "large"])
    s = _TIER_SCALE[tier]
    if family == "slab":
        dims = [rng.uniform(0.18, 0.42) * s, rng.uniform(0.18, 0.42) * s,
                rng.uniform(0.02, 0.05) * s]
    elif family == "block":
        dims = [rng.uniform(0.07, 0.18) * s, rng.uniform(0.07, 0.18) * s,
                rng.uniform(0.07, 0.18) * s]
    else:  # stick
        dims = [rng.uniform(0.03, 0.07) * s, rng.uniform(0.03, 0.07) * s,
                rng.uniform(0.2, 0.4) * s]
    class_id = CLASS_NAMES.index(f"{tier} {family}")
    return np.asarray(dims), class_id


def _interiors_overlap(lo_a, hi_a, lo_b, hi_b) -> bool:
    for axis in range(3):
        if max(lo_a[axis], lo_b[axis]) >= min(hi_a[axis], hi_b[axis]) - 1e-9:
            return False
    return True


def _place_object(rng: SplitMix64, cfg: SynthConfig, placed: list[_TrueBox]) -> _TrueBox:
    ax, ay = cfg.area
    for _ in range(cfg.max_attempts):
        dims, class_id = _sample_dims(rng)
        half = dims / 2.0
        mode = rng.uniform()
        grounded = True
        if mode < cfg.stack_prob and placed:
            supports = [p for p in placed
                        if p.hi[0] - p.lo[0] > dims[0] + 0.02
                        and p.hi[1] - p.lo[1] > dims[1] + 0.02]
            if not supports:
                continue
            sup = rng.choice(supports)
            cx = rng.uniform(sup.lo[0] + half[0] + 0.005, sup.hi[0] - half[0] - 0.005)
            cy = rng.uniform(sup.lo[1] + half[1] + 0.005, sup.hi[1] - half[1] - 0.005)
            z0 = sup.hi[2]
            grounded = False
        elif mode < cfg.stack_prob + cfg.attach_prob and placed:
            tgt = rng.choice(placed)
            axis = rng.randint(2)  # touch along x or y
            side = 1 if rng.uniform() < 0.5 else -1
            other = 1 - axis
            center = np.empty(2)
            center[axis] = (tgt.hi[axis] + half[axis]) if side > 0 else (tgt.lo[axis] - half[axis])
            span = (tgt.hi[other] - tgt.lo[other]) / 2.0
            mid = (tgt.hi[other] + tgt.lo[other]) / 2.0
            center[other] = mid + rng.uniform(-0.8, 0.8) * span
            cx, cy = float(center[0]), float(center[1])
            z0 = 0.0
        elif mode < cfg.stack_prob + cfg.attach_prob + cfg.align_prob and len(placed) >= 2:
            i = rng.randint(len(placed))
            j = rng.randint(len(placed))
            if i == j:
                continue
            ca = (placed[i].lo + placed[i].hi) / 2.0
            cb = (placed[j].lo + placed[j].hi) / 2.0
            t = rng.uniform(0.25, 0.75)
            base = ca[:2] + t * (cb[:2] - ca[:2])
            cx = base[0] + rng.uniform(-0.05, 0.05)
            cy = base[1] + rng.uniform(-0.05, 0.05)
            z0 = 0.0
        else:
            cx = rng.uniform(half[0], ax - half[0])
            cy = rng.uniform(half[1], ay - half[1])
            z0 = 0.0
        lo = np.array([cx - half[0], cy - half[1], z0])
        hi = np.array([cx + half[0], cy + half[1], z0 + dims[2]])
        if not (0 <= lo[0] and hi[0] <= ax and 0 <= lo[1] and hi[1] <= ay):
            continue
        if any(_interiors_overlap(lo, hi, p.lo, p.hi) for p in placed):
            continue
        return _TrueBox(lo=lo, hi=hi, class_id=class_id, grounded=grounded)
    raise PlacementError(f"could not place object after {cfg.max_attempts} attempts")


def _sample_surface_points(rng: SplitMix64, lo: np.ndarray, hi: np.ndarray,
                           count: int, sigma: float) -> np.ndarray:
    ext = hi - lo
    areas = np.array([ext[1] * ext[2], ext[1] * ext[2],   # x faces
                      ext[0] * ext[2], ext[0] * ext[2],   # y faces
                      ext[0] * ext[1], ext[0] * ext[1]])  # z faces
    cum = np.cumsum(areas / areas.sum())
    pts = np.empty((count, 3))
    for n in range(count):
        u = rng.uniform()
        face = int(np.searchsorted(cum, u))
        face = min(face, 5)
        axis = face // 2
        fixed = hi[axis] if face % 2 else lo[axis]
        p = np.empty(3)
        p[axis] = fixed
        for other in range(3):
            if other != axis:
                p[other] = rng.uniform(lo[other], hi[other])
        for k in range(3):
            p[k] += rng.normal(0.0, sigma)
        pts[n] = p
    return pts


def generate_scenes(cfg: SynthConfig, seed: int) -> tuple[list[Scene], Vocabulary]:
    """Generate cfg.num_scenes scenes; deterministic for a given seed."""
    rng = named_stream(seed, "data")
    vocab = cfg.vocabulary()
    scenes = []
    for index in range(cfg.num_scenes):
        count = cfg.objects_min + rng.randint(cfg.objects_max - cfg.objects_min + 1)
        placed: list[_TrueBox] = []
        for _ in range(count):
            placed.append(_place_object(rng, cfg, placed))
        objects = []
        for oid, box in enumerate(placed):
            pts = _sample_surface_points(rng, box.lo, box.hi,
                                         cfg.points_per_object, cfg.noise_sigma)
            objects.append(ObjectInstance(id=oid, class_id=box.class_id,
                                          bbox=derive_bbox(pts), points=pts))
        rels = derive_relationships(objects, vocab)
        scenes.append(Scene(scan_id=f"synth_{index:04d}", objects=objects,
                            relationships=rels))
    return scenes, vocab
