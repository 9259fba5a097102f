"""Binary checkpoint format.

Byte layout (little-endian throughout):

    bytes 0..3    magic b"LEO1"
    bytes 4..7    uint32 header length H
    bytes 8..8+H  header, UTF-8 JSON
    rest          payload: raw float32 arrays, concatenated

The header records the format version, a model/train config echo, training
progress, the PRNG state of the shuffle stream, and for every array a name,
shape and offset (in float32 elements) into the payload. Parameter arrays
come first, then optimizer moment pairs. Saving the same state twice produces
byte-identical files.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .model import ModelConfig, SceneGraphModel
from .training import Adam, TrainConfig, Trainer

MAGIC = b"LEO1"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Unusable checkpoint file."""


@dataclass
class Checkpoint:
    model_config: ModelConfig
    train_config: Optional[TrainConfig]
    params: dict[str, np.ndarray]
    optimizer_step: Optional[int]
    moments: Optional[dict[str, tuple[np.ndarray, np.ndarray]]]
    shuffle_state: Optional[int]
    stage: Optional[int]
    epoch: Optional[int]
    seed: Optional[int]


def save_checkpoint(path: Path | str, model: SceneGraphModel,
                    train_config: Optional[TrainConfig] = None,
                    optimizer: Optional[Adam] = None,
                    shuffle_state: Optional[int] = None,
                    stage: Optional[int] = None,
                    epoch: Optional[int] = None,
                    seed: Optional[int] = None) -> None:
    arrays: list[np.ndarray] = []
    entries = []
    offset = 0

    def push(arr: np.ndarray) -> int:
        nonlocal offset
        flat = np.ascontiguousarray(arr, dtype="<f4")
        arrays.append(flat)
        start = offset
        offset += flat.size
        return start

    named = model.named_params()
    names = [n for n, _ in named]
    if len(names) != len(set(names)):
        raise CheckpointError("duplicate parameter names")
    for name, p in named:
        entries.append({"name": name, "shape": list(p.shape), "offset": push(p.data)})

    optimizer_block = None
    if optimizer is not None:
        moment_entries = []
        for name, m, v in optimizer.state_arrays():
            moment_entries.append({"name": name,
                                   "m_offset": push(m),
                                   "v_offset": push(v)})
        optimizer_block = {"step": optimizer.step_count, "entries": moment_entries}

    header = {
        "format_version": FORMAT_VERSION,
        "model_config": model.cfg.to_dict(),
        "train_config": train_config.to_dict() if train_config else None,
        "progress": {"stage": stage, "epoch": epoch} if stage is not None else None,
        "seed": seed,
        "rng": {"shuffle_state": shuffle_state} if shuffle_state is not None else None,
        "params": entries,
        "optimizer": optimizer_block,
    }
    header_bytes = json.dumps(header, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for arr in arrays:
            fh.write(arr.tobytes())


def save_trainer(path: Path | str, trainer: Trainer) -> None:
    save_checkpoint(path, trainer.model, train_config=trainer.cfg,
                    optimizer=trainer.optimizer,
                    shuffle_state=trainer.shuffle_rng.get_state(),
                    stage=trainer.stage, epoch=trainer.epoch,
                    seed=trainer.cfg.seed)


def load_checkpoint(path: Path | str) -> Checkpoint:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic bytes")
    (header_len,) = struct.unpack("<I", raw[4:8])
    try:
        header = json.loads(raw[8:8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: bad header: {exc}") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported format version {header.get('format_version')}")
    payload = np.frombuffer(raw[8 + header_len:], dtype="<f4")

    def read(offset: int, shape: list[int]) -> np.ndarray:
        size = int(np.prod(shape)) if shape else 1
        return payload[offset:offset + size].reshape(shape).copy()

    params = {}
    seen = set()
    for entry in header["params"]:
        if entry["name"] in seen:
            raise CheckpointError(f"parameter {entry['name']!r} appears twice")
        seen.add(entry["name"])
        params[entry["name"]] = read(entry["offset"], entry["shape"])

    moments = None
    opt_step = None
    if header.get("optimizer"):
        shapes = {e["name"]: e["shape"] for e in header["params"]}
        opt_step = header["optimizer"]["step"]
        moments = {}
        for entry in header["optimizer"]["entries"]:
            shape = shapes[entry["name"]]
            moments[entry["name"]] = (read(entry["m_offset"], shape),
                                      read(entry["v_offset"], shape))

    progress = header.get("progress") or {}
    rng = header.get("rng") or {}
    return Checkpoint(
        model_config=ModelConfig.from_dict(header["model_config"]),
        train_config=TrainConfig.from_dict(header["train_config"]) if header.get("train_config") else None,
        params=params,
        optimizer_step=opt_step,
        moments=moments,
        shuffle_state=rng.get("shuffle_state"),
        stage=progress.get("stage"),
        epoch=progress.get("epoch"),
        seed=header.get("seed"),
    )


def apply_to_model(ckpt: Checkpoint, model: SceneGraphModel) -> None:
    named = dict(model.named_params())
    if set(named) != set(ckpt.params):
        missing = sorted(set(named) ^ set(ckpt.params))
        raise CheckpointError(f"parameter set mismatch: {missing[:5]}")
    for name, p in named.items():
        arr = ckpt.params[name]
        if tuple(arr.shape) != p.shape:
            raise CheckpointError(f"shape mismatch for {name!r}")
        p.data = arr


def restore_trainer(ckpt: Checkpoint, trainer: Trainer) -> None:
    apply_to_model(ckpt, trainer.model)
    if ckpt.moments is not None and ckpt.optimizer_step is not None:
        trainer.optimizer.load_state(ckpt.optimizer_step, ckpt.moments)
    if ckpt.shuffle_state is not None:
        trainer.shuffle_rng.set_state(ckpt.shuffle_state)
    if ckpt.stage is not None:
        trainer.stage = ckpt.stage
    if ckpt.epoch is not None:
        trainer.epoch = ckpt.epoch
