"""Run configuration: JSON file + CLI flag overrides, echoed to the output dir.

Top-level keys: data_dir, out_dir, seed, task, model{...}, train{...},
eval{ks}. Unknown keys anywhere are rejected.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .model import ModelConfig
from .training import TrainConfig

_MODEL_KEYS = ("feature_dim", "geo_dim", "link_dim", "histogram_bins",
               "linegnn_layers", "objgnn_layers", "strategy", "link_mode",
               "adjacency", "incident", "focal_gamma")
_TRAIN_KEYS = ("stage1_epochs", "stage2_epochs", "lr", "weight_decay",
               "decay_factor", "decay_every", "lr_min")
_EVAL_KEYS = ("ks",)
_TOP_KEYS = ("data_dir", "out_dir", "seed", "task", "model", "train", "eval")


class ConfigError(ValueError):
    """Bad run configuration."""


@dataclass
class RunConfig:
    data_dir: str = "data"
    out_dir: str = "out"
    seed: int = 0
    task: str = "predcls"
    model: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    eval: dict = field(default_factory=dict)

    @classmethod
    def from_file(cls, path: Path | str) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: malformed JSON: {exc}") from exc
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        unknown = set(data) - set(_TOP_KEYS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for section, allowed in (("model", _MODEL_KEYS), ("train", _TRAIN_KEYS),
                                 ("eval", _EVAL_KEYS)):
            extra = set(data.get(section, {})) - set(allowed)
            if extra:
                raise ConfigError(f"unknown {section} keys: {sorted(extra)}")
        return cls(data_dir=data.get("data_dir", "data"),
                   out_dir=data.get("out_dir", "out"),
                   seed=int(data.get("seed", 0)),
                   task=data.get("task", "predcls"),
                   model=dict(data.get("model", {})),
                   train=dict(data.get("train", {})),
                   eval=dict(data.get("eval", {})))

    def apply_overrides(self, overrides: dict) -> None:
        """Flat overrides: top-level names, or model/train field names."""
        for key, value in overrides.items():
            if value is None:
                continue
            if key in ("data_dir", "out_dir", "task"):
                setattr(self, key, value)
            elif key == "seed":
                self.seed = int(value)
            elif key in _MODEL_KEYS:
                self.model[key] = value
            elif key in _TRAIN_KEYS:
                self.train[key] = value
            elif key == "ks":
                self.eval["ks"] = value
            else:
                raise ConfigError(f"unknown override {key!r}")

    def model_config(self, num_object_classes: int, num_predicates: int) -> ModelConfig:
        try:
            return ModelConfig(task=self.task,
                               num_object_classes=num_object_classes,
                               num_predicates=num_predicates,
                               **self.model)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def train_config(self) -> TrainConfig:
        try:
            return TrainConfig(task=self.task, seed=self.seed, **self.train)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def ks(self) -> list[int]:
        ks = self.eval.get("ks", [1, 3, 5, 10])
        if isinstance(ks, str):
            ks = [int(v) for v in ks.split(",")]
        return [int(k) for k in ks]

    def to_dict(self) -> dict:
        return {"data_dir": self.data_dir, "out_dir": self.out_dir,
                "seed": self.seed, "task": self.task,
                "model": self.model, "train": self.train, "eval": self.eval}

    def echo(self, out_dir: Optional[Path] = None) -> None:
        target = Path(out_dir if out_dir is not None else self.out_dir)
        target.mkdir(parents=True, exist_ok=True)
        (target / "effective_config.json").write_text(
            json.dumps(self.to_dict(), indent=1) + "\n")
