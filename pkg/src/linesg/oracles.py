"""Independent reference implementations used for self-verification.

These deliberately avoid the code paths they check: the line-graph oracle
compares every edge pair directly, the ranking oracle is pure-Python
enumeration, and the gradient oracle re-evaluates the forward function under
central finite differences in float64.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .autodiff import Tensor, backward, record


def finite_difference_check(build: Callable[[], Tensor],
                            leaves: Sequence[Tensor],
                            h: float = 1e-3,
                            max_components: Optional[int] = None,
                            rng: Optional[np.random.Generator] = None) -> float:
    """Max relative error between recorded gradients and central differences.

    `build` must rebuild the scalar loss from the leaf tensors on every call;
    leaves should be float64 for a meaningful comparison. When
    `max_components` is set, that many coordinates per leaf are sampled.
    """
    for leaf in leaves:
        leaf.grad = None
    with record():
        loss = build()
        backward(loss)
    grads = [leaf.grad.copy() if leaf.grad is not None else np.zeros_like(leaf.data)
             for leaf in leaves]
    worst = 0.0
    for leaf, grad in zip(leaves, grads):
        coords = list(np.ndindex(leaf.data.shape))
        if max_components is not None and len(coords) > max_components:
            if rng is None:
                rng = np.random.default_rng(0)
            chosen = rng.choice(len(coords), size=max_components, replace=False)
            coords = [coords[i] for i in chosen]
        for ix in coords:
            orig = leaf.data[ix]
            leaf.data[ix] = orig + h
            up = build().item()
            leaf.data[ix] = orig - h
            down = build().item()
            leaf.data[ix] = orig
            numeric = (up - down) / (2.0 * h)
            analytic = float(grad[ix])
            err = abs(analytic - numeric)
            if err < 1e-9:
                continue
            worst = max(worst, err / max(abs(analytic), abs(numeric), 1e-8))
    return worst


def brute_force_line_adjacency(edges: Sequence[tuple[int, int]],
                               rule: str = "same-source") -> list[tuple[int, int]]:
    """All adjacent line-node index pairs by direct comparison, sorted."""
    pairs = []
    for a, (i, j) in enumerate(edges):
        for b, (k, l) in enumerate(edges):
            if a == b:
                continue
            if rule == "same-source":
                adjacent = i == k
            else:
                adjacent = bool({i, j} & {k, l})
            if adjacent:
                pairs.append((a, b))
    return sorted(pairs)


def exhaustive_recall(scores: np.ndarray, edges: np.ndarray,
                      gt: Sequence[tuple[int, int, int]], k: int,
                      constrained: bool,
                      class_correct: Optional[Sequence[bool]] = None) -> float:
    """Recall@k by explicit enumeration and sorting, pure Python.

    Mirrors the documented protocol: the unconstrained hit set is the union
    with the constrained protocol's hits.
    """
    if not gt:
        raise ValueError("oracle needs at least one ground-truth triplet")
    candidates = []
    for e in range(scores.shape[0]):
        s, o = int(edges[e, 0]), int(edges[e, 1])
        for p in range(scores.shape[1]):
            candidates.append((s, o, p, float(scores[e, p])))

    def top_k(pool):
        ordered = sorted(pool, key=lambda c: (-c[3], c[0], c[1], c[2]))
        return {(s, o, p) for s, o, p, _ in ordered[:k]}

    best: dict[tuple[int, int], tuple[int, int, int, float]] = {}
    for s, o, p, sc in candidates:
        cur = best.get((s, o))
        if cur is None or sc > cur[3] or (sc == cur[3] and p < cur[2]):
            best[(s, o)] = (s, o, p, sc)
    top = top_k(list(best.values()))
    if not constrained:
        top = top | top_k(candidates)
    hits = 0
    for t in set(gt):
        if t in top:
            if class_correct is None or (class_correct[t[0]] and class_correct[t[1]]):
                hits += 1
    return hits / len(set(gt))


def pairwise_auc(scores: np.ndarray, targets: np.ndarray) -> float:
    """O(P*N) comparison-counting AUC with half credit for ties."""
    s = np.asarray(scores, dtype=np.float64)
    t = np.asarray(targets) > 0.5
    pos = s[t]
    neg = s[~t]
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("AUC needs both classes")
    wins = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                wins += 1.0
            elif p == n:
                wins += 0.5
    return wins / (len(pos) * len(neg))
