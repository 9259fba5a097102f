"""On-disk dataset layout and split handling.

A dataset directory contains:

    scenes/scene_XXXX.json   one scene per file
    vocab.json               {"objects": [...], "predicates": [...]}
    splits.json              {"train": [paths], "val": [paths], "test": [paths]}

Splits are 70/10/20 by a seeded shuffle at generation time.
"""

from __future__ import annotations

import json
from pathlib import Path

from .rng import named_stream
from .scenes import Scene, Vocabulary, load_scene_json, load_vocabulary, save_scene_json, save_vocabulary

SPLIT_FRACTIONS = {"train": 0.7, "val": 0.1, "test": 0.2}


def write_dataset(out_dir: Path | str, scenes: list[Scene], vocab: Vocabulary,
                  seed: int) -> None:
    out = Path(out_dir)
    scene_dir = out / "scenes"
    scene_dir.mkdir(parents=True, exist_ok=True)
    rel_paths = []
    for i, scene in enumerate(scenes):
        rel = f"scenes/scene_{i:04d}.json"
        save_scene_json(scene, out / rel)
        rel_paths.append(rel)
    save_vocabulary(vocab, out / "vocab.json")

    order = list(range(len(rel_paths)))
    named_stream(seed, "split").shuffle(order)
    n = len(order)
    n_train = int(round(SPLIT_FRACTIONS["train"] * n))
    n_val = int(round(SPLIT_FRACTIONS["val"] * n))
    splits = {
        "train": sorted(rel_paths[i] for i in order[:n_train]),
        "val": sorted(rel_paths[i] for i in order[n_train:n_train + n_val]),
        "test": sorted(rel_paths[i] for i in order[n_train + n_val:]),
    }
    (out / "splits.json").write_text(json.dumps(splits, indent=1) + "\n")


def load_dataset(data_dir: Path | str) -> tuple[dict[str, list[Scene]], Vocabulary]:
    root = Path(data_dir)
    vocab = load_vocabulary(root / "vocab.json")
    splits = json.loads((root / "splits.json").read_text())
    out: dict[str, list[Scene]] = {}
    for name in ("train", "val", "test"):
        out[name] = []
        for rel in splits.get(name, []):
            loaded = load_scene_json(root / rel, vocab)
            if isinstance(loaded, list):
                out[name].extend(loaded)
            else:
                out[name].append(loaded)
    return out, vocab
