"""Scikit-learn style estimator facade over the full pipeline.

X is a list of :class:`~linesg.scenes.Scene` objects; there is no separate y
(supervision lives in the scenes). ``fit`` runs both training stages,
``predict`` returns one predicted scene graph per scene, and ``score``
returns graph-constrained recall@k on held-in ground truth. The class follows
sklearn conventions (constructor stores hyperparameters verbatim, fitted
state uses trailing underscores, ``get_params``/``set_params``/``clone``
work), so it composes with ecosystem tooling that accepts list-like X.
"""

from __future__ import annotations

from typing import Optional

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .checkpoint import load_checkpoint, apply_to_model, save_checkpoint
from .metrics import TripletPrediction, evaluate_outputs, score_triplets
from .model import ModelConfig, SceneGraphModel, make_batch
from .training import TrainConfig, Trainer
from .validation import check_choice, ensure_scenes, infer_vocab_sizes


class SceneGraphPredictor(BaseEstimator):
    """Link-guided edge-centric scene graph prediction.

    Parameters mirror the model and training configs; vocabulary sizes are
    inferred from the training scenes unless given explicitly.
    """

    def __init__(self, task: str = "predcls", strategy: str = "pre",
                 link_mode: str = "lp", feature_dim: int = 64,
                 geo_dim: int = 32, link_dim: int = 64,
                 histogram_bins: int = 8, linegnn_layers: int = 5,
                 objgnn_layers: int = 2, adjacency: str = "same-source",
                 incident: str = "both", focal_gamma: float = 2.0,
                 stage1_epochs: int = 40, stage2_epochs: int = 50,
                 lr: float = 1e-4, weight_decay: float = 1e-4,
                 decay_factor: float = 0.7, decay_every: int = 10,
                 lr_min: float = 1e-8, seed: int = 0,
                 num_object_classes: Optional[int] = None,
                 num_predicates: Optional[int] = None,
                 eval_k: int = 5):
        self.task = task
        self.strategy = strategy
        self.link_mode = link_mode
        self.feature_dim = feature_dim
        self.geo_dim = geo_dim
        self.link_dim = link_dim
        self.histogram_bins = histogram_bins
        self.linegnn_layers = linegnn_layers
        self.objgnn_layers = objgnn_layers
        self.adjacency = adjacency
        self.incident = incident
        self.focal_gamma = focal_gamma
        self.stage1_epochs = stage1_epochs
        self.stage2_epochs = stage2_epochs
        self.lr = lr
        self.weight_decay = weight_decay
        self.decay_factor = decay_factor
        self.decay_every = decay_every
        self.lr_min = lr_min
        self.seed = seed
        self.num_object_classes = num_object_classes
        self.num_predicates = num_predicates
        self.eval_k = eval_k

    def _model_config(self, n_obj: int, n_pred: int) -> ModelConfig:
        return ModelConfig(
            task=check_choice("task", self.task, ("predcls", "sgcls")),
            num_object_classes=n_obj, num_predicates=n_pred,
            feature_dim=self.feature_dim, geo_dim=self.geo_dim,
            link_dim=self.link_dim, histogram_bins=self.histogram_bins,
            linegnn_layers=self.linegnn_layers, objgnn_layers=self.objgnn_layers,
            strategy=self.strategy, link_mode=self.link_mode,
            adjacency=self.adjacency, incident=self.incident,
            focal_gamma=self.focal_gamma)

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            stage1_epochs=self.stage1_epochs, stage2_epochs=self.stage2_epochs,
            lr=self.lr, weight_decay=self.weight_decay,
            decay_factor=self.decay_factor, decay_every=self.decay_every,
            lr_min=self.lr_min, seed=self.seed, task=self.task)

    def fit(self, X, y=None):
        scenes = ensure_scenes(X)
        n_obj, n_pred = infer_vocab_sizes(scenes)
        if self.num_object_classes is not None:
            n_obj = self.num_object_classes
        if self.num_predicates is not None:
            n_pred = self.num_predicates
        if n_pred < 1:
            raise ValueError("training scenes carry no relationships")
        cfg = self._model_config(n_obj, n_pred)
        model = SceneGraphModel(cfg, seed=self.seed)
        batches = [make_batch(s, cfg) for s in scenes]
        trainer = Trainer(model, self._train_config())
        trainer.train_stage1(batches)
        trainer.train_stage2(batches)
        self.model_ = model
        self.n_object_classes_ = n_obj
        self.n_predicates_ = n_pred
        self.history_ = trainer.log.rows
        return self

    def predict(self, X) -> list[list[tuple[int, int, int]]]:
        """Per scene: (subject_id, object_id, predicate_id) for every pair
        whose argmax predicate is not "none", in original object ids."""
        check_is_fitted(self, "model_")
        out = []
        for scene in ensure_scenes(X):
            batch = make_batch(scene, self.model_.cfg)
            probs = self.model_.forward(batch).pred_probs.data
            none_class = self.model_.cfg.none_class
            triplets = []
            for e in range(batch.graph.num_edges):
                p = int(probs[e].argmax())
                if p != none_class:
                    s, o = batch.graph.pair(e)
                    triplets.append((int(batch.slot_ids[s]), int(batch.slot_ids[o]), p))
            out.append(triplets)
        return out

    def predict_triplets(self, X, k: Optional[int] = None) -> list[list[TripletPrediction]]:
        """Ranked candidate triplets per scene (slot indices), top-k if given."""
        check_is_fitted(self, "model_")
        out = []
        for scene in ensure_scenes(X):
            batch = make_batch(scene, self.model_.cfg)
            ranked = score_triplets(self.model_.forward(batch), batch, self.task)
            out.append(ranked if k is None else ranked[:k])
        return out

    def score(self, X, y=None) -> float:
        """Graph-constrained recall@eval_k averaged over scenes with GT."""
        check_is_fitted(self, "model_")
        pairs = []
        for scene in ensure_scenes(X):
            batch = make_batch(scene, self.model_.cfg)
            pairs.append((batch, self.model_.forward(batch)))
        report = evaluate_outputs(pairs, self.task, ks=[self.eval_k])
        return report.get("r", self.eval_k)

    def save(self, path) -> None:
        check_is_fitted(self, "model_")
        save_checkpoint(path, self.model_, train_config=self._train_config(),
                        seed=self.seed)

    @classmethod
    def from_checkpoint(cls, path) -> "SceneGraphPredictor":
        ckpt = load_checkpoint(path)
        cfg = ckpt.model_config
        est = cls(task=cfg.task, strategy=cfg.strategy, link_mode=cfg.link_mode,
                  feature_dim=cfg.feature_dim, geo_dim=cfg.geo_dim,
                  link_dim=cfg.link_dim, histogram_bins=cfg.histogram_bins,
                  linegnn_layers=cfg.linegnn_layers, objgnn_layers=cfg.objgnn_layers,
                  adjacency=cfg.adjacency, incident=cfg.incident,
                  focal_gamma=cfg.focal_gamma,
                  num_object_classes=cfg.num_object_classes,
                  num_predicates=cfg.num_predicates,
                  seed=ckpt.seed if ckpt.seed is not None else 0)
        model = SceneGraphModel(cfg, seed=est.seed)
        apply_to_model(ckpt, model)
        est.model_ = model
        est.n_object_classes_ = cfg.num_object_classes
        est.n_predicates_ = cfg.num_predicates
        est.history_ = []
        return est
