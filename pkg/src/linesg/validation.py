"""Input validation helpers shared by the estimator and the CLI."""

from __future__ import annotations

from typing import Sequence

from .scenes import Scene


def ensure_scenes(X) -> list[Scene]:
    """Accept a Scene or a sequence of Scenes; reject anything else."""
    if isinstance(X, Scene):
        return [X]
    if isinstance(X, Sequence) and not isinstance(X, (str, bytes)):
        scenes = list(X)
        if not scenes:
            raise ValueError("empty scene collection")
        bad = [type(s).__name__ for s in scenes if not isinstance(s, Scene)]
        if bad:
            raise TypeError(f"expected Scene objects, got {sorted(set(bad))}")
        return scenes
    raise TypeError(f"expected a Scene or a sequence of Scenes, got {type(X).__name__}")


def infer_vocab_sizes(scenes: Sequence[Scene]) -> tuple[int, int]:
    """Smallest (num_object_classes, num_predicates) covering the data."""
    max_class = max(o.class_id for s in scenes for o in s.objects)
    max_pred = -1
    for s in scenes:
        for r in s.relationships:
            max_pred = max(max_pred, r.predicate_id)
    return max_class + 1, max_pred + 1


def check_choice(name: str, value: str, choices: Sequence[str]) -> str:
    if value not in choices:
        raise ValueError(f"{name} must be one of {list(choices)}, got {value!r}")
    return value
