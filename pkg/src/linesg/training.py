"""Losses, Adam optimizer, learning-rate schedule, and the two-stage loop.

Stage 1 trains only on the link loss; stage 2 trains the full objective
L_total = L_obj + L_pred + L_link (L_obj is dropped for PredCls, where object
labels are inputs). All three components are focal losses; the predicate term
averages per-pair sums over ground-truth predicates, with pairs lacking any
predicate supervised toward the "none" class.

One scene is one optimizer step. Scene order is shuffled by a dedicated
seeded stream whose state is checkpointed, so an interrupted run resumes
bitwise-identically.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, backward, record
from .links import link_loss
from .model import ModelConfig, PipelineOutputs, SceneBatch, SceneGraphModel
from .nn import Param, focal_terms
from .rng import named_stream

TASKS = ("predcls", "sgcls")


@dataclass
class TrainConfig:
    stage1_epochs: int = 40
    stage2_epochs: int = 50
    lr: float = 1e-4
    weight_decay: float = 1e-4
    decay_factor: float = 0.7
    decay_every: int = 10
    lr_min: float = 1e-8
    seed: int = 0
    task: str = "predcls"

    def __post_init__(self):
        if self.lr <= 0 or self.lr < self.lr_min:
            raise ValueError("lr must be positive and >= lr_min")
        if self.decay_every <= 0 or not (0 < self.decay_factor <= 1):
            raise ValueError("bad decay settings")
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in self.__dataclass_fields__.values()}  # type: ignore[attr-defined]

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        return cls(**data)


def lr_schedule(epoch: int, cfg: TrainConfig) -> float:
    """lr = max(lr0 * factor^(epoch // every), lr_min)."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return max(cfg.lr * cfg.decay_factor ** (epoch // cfg.decay_every), cfg.lr_min)


def predicate_loss(outputs: PipelineOutputs, batch: SceneBatch, gamma: float) -> Tensor:
    """Mean over pairs of the per-pair sum of focal terms."""
    if batch.graph.num_edges == 0:  # single-object scene
        return Tensor(np.zeros((), dtype=np.float32))
    rows = ad.gather(outputs.pred_probs, batch.pred_target_edge)
    p_t = ad.pick(rows, batch.pred_target_class)
    terms = focal_terms(p_t, gamma, 1.0)
    return ad.reduce_sum(terms) * (1.0 / batch.graph.num_edges)


def object_loss(outputs: PipelineOutputs, batch: SceneBatch, gamma: float) -> Tensor:
    p_t = ad.pick(outputs.obj_probs, batch.class_ids)
    return ad.reduce_mean(focal_terms(p_t, gamma, 1.0))


def total_loss(outputs: PipelineOutputs, batch: SceneBatch,
               cfg: ModelConfig) -> tuple[Tensor, dict[str, float]]:
    l_pred = predicate_loss(outputs, batch, cfg.focal_gamma)
    l_link = link_loss(outputs.link_probs, batch.link_targets)
    parts = {"loss_pred": l_pred.item(), "loss_link": l_link.item()}
    total = l_pred + l_link
    if cfg.task == "sgcls":
        l_obj = object_loss(outputs, batch, cfg.focal_gamma)
        parts["loss_obj"] = l_obj.item()
        total = total + l_obj
    else:
        parts["loss_obj"] = 0.0
    parts["loss_total"] = total.item()
    return total, parts


class Adam:
    """Adam with bias correction and decoupled weight decay."""

    def __init__(self, named_params: Sequence[tuple[str, Param]],
                 weight_decay: float = 0.0,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.named_params = list(named_params)
        self.weight_decay = weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.step_count = 0
        self.moments = {name: (np.zeros_like(p.data), np.zeros_like(p.data))
                        for name, p in self.named_params}

    def step(self, lr: float) -> None:
        self.step_count += 1
        b1c = 1.0 - self.beta1 ** self.step_count
        b2c = 1.0 - self.beta2 ** self.step_count
        for name, p in self.named_params:
            g = p.grad
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient in parameter {name!r}")
            m, v = self.moments[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)
            p.data = p.data - update
            if self.weight_decay:
                p.data = p.data - lr * self.weight_decay * p.data

    def state_arrays(self) -> list[tuple[str, np.ndarray, np.ndarray]]:
        return [(name, m, v) for name, (m, v) in self.moments.items()]

    def load_state(self, step_count: int, moments: dict[str, tuple[np.ndarray, np.ndarray]]) -> None:
        if set(moments) != set(self.moments):
            raise ValueError("optimizer state does not match parameters")
        self.step_count = step_count
        for name in self.moments:
            m, v = moments[name]
            old_m, old_v = self.moments[name]
            if m.shape != old_m.shape:
                raise ValueError(f"moment shape mismatch for {name!r}")
            self.moments[name] = (m.astype(np.float32), v.astype(np.float32))


@dataclass
class EpochLog:
    rows: list[dict] = field(default_factory=list)

    def add(self, **kwargs) -> None:
        self.rows.append(kwargs)

    def write_csv(self, path: Path | str) -> None:
        if not self.rows:
            return
        fields: list[str] = []
        for row in self.rows:
            for key in row:
                if key not in fields:
                    fields.append(key)
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields)
            writer.writeheader()
            for row in self.rows:
                writer.writerow(row)


class Trainer:
    """Owns the model, optimizer, shuffle stream, and the epoch log."""

    def __init__(self, model: SceneGraphModel, cfg: TrainConfig):
        if cfg.task != model.cfg.task:
            raise ValueError("train config task differs from model task")
        self.model = model
        self.cfg = cfg
        self.optimizer = Adam(model.named_params(), weight_decay=cfg.weight_decay)
        self.shuffle_rng = named_stream(cfg.seed, "shuffle")
        self.log = EpochLog()
        self.stage = 1
        self.epoch = 0  # next epoch to run within the current stage

    def _epoch_order(self, n: int) -> list[int]:
        order = list(range(n))
        self.shuffle_rng.shuffle(order)
        return order

    def _link_eval(self, batches: Sequence[SceneBatch]) -> tuple[float, float]:
        """(accuracy, AUC) of link scores pooled over the given scenes."""
        from .metrics import link_auc

        scores, targets = [], []
        for batch in batches:
            probs = self.model.link_forward(batch)
            scores.append(probs.data[:, 1].copy())
            targets.append(batch.link_targets)
        s = np.concatenate(scores)
        t = np.concatenate(targets)
        acc = float(np.mean((s >= 0.5) == (t > 0.5)))
        auc = link_auc(s, t) if 0 < t.sum() < len(t) else float("nan")
        return acc, auc

    def begin_stage2(self) -> None:
        """Skip (or close out) stage 1, e.g. for ablations that never use it."""
        if self.stage == 1:
            self.stage = 2
            self.epoch = 0

    def train_stage1(self, train: Sequence[SceneBatch],
                     val: Sequence[SceneBatch] = ()) -> None:
        """Minimize the link loss only."""
        if not train:
            raise ValueError("empty training set")
        if self.stage != 1:
            raise RuntimeError("stage 1 already completed")
        while self.epoch < self.cfg.stage1_epochs:
            lr = lr_schedule(self.epoch, self.cfg)
            losses = []
            for idx in self._epoch_order(len(train)):
                batch = train[idx]
                self.model.zero_grad()
                with record():
                    probs = self.model.link_forward(batch)
                    loss = link_loss(probs, batch.link_targets)
                    backward(loss)
                losses.append(loss.item())
                self.optimizer.step(lr)
            acc, auc = self._link_eval(val if val else train)
            self.log.add(stage=1, epoch=self.epoch, lr=lr,
                         loss_link=float(np.mean(losses)),
                         link_acc=acc, link_auc=auc)
            self.epoch += 1
        self.stage = 2
        self.epoch = 0

    def train_stage2(self, train: Sequence[SceneBatch],
                     val: Sequence[SceneBatch] = (),
                     epochs: Optional[int] = None) -> None:
        """Minimize the full objective; logs validation loss when val given."""
        if not train:
            raise ValueError("empty training set")
        if self.stage != 2:
            raise RuntimeError("run or skip stage 1 first")
        limit = self.cfg.stage2_epochs if epochs is None else epochs
        while self.epoch < limit:
            lr = lr_schedule(self.epoch, self.cfg)
            sums: dict[str, float] = {}
            for idx in self._epoch_order(len(train)):
                batch = train[idx]
                self.model.zero_grad()
                with record():
                    outputs = self.model.forward(batch)
                    loss, parts = total_loss(outputs, batch, self.model.cfg)
                    backward(loss)
                self.optimizer.step(lr)
                for key, value in parts.items():
                    sums[key] = sums.get(key, 0.0) + value
            row = {k: v / len(train) for k, v in sums.items()}
            if val:
                val_losses = []
                for batch in val:
                    outputs = self.model.forward(batch)
                    loss, _ = total_loss(outputs, batch, self.model.cfg)
                    val_losses.append(loss.item())
                row["val_loss"] = float(np.mean(val_losses))
            self.log.add(stage=2, epoch=self.epoch, lr=lr, **row)
            self.epoch += 1
