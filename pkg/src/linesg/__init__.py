"""Link-guided edge-centric 3D scene graph prediction on line graphs."""

import os as _os

# Single-threaded BLAS keeps reductions bitwise reproducible; only effective
# when numpy has not been imported yet in this process.
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    _os.environ.setdefault(_var, "1")

from .autodiff import Tensor, backward, record
from .estimator import SceneGraphPredictor
from .metrics import RecallReport, TripletPrediction, evaluate_outputs, link_auc
from .model import ModelConfig, PipelineOutputs, SceneGraphModel, make_batch, run_pipeline
from .scenes import (BBox, ObjectInstance, PrimitiveGraph, Relationship, Scene,
                     SceneError, Vocabulary, build_primitive_graph, derive_bbox,
                     load_scene_json, save_scene_json)
from .synth import SynthConfig, generate_scenes
from .training import TrainConfig, Trainer, lr_schedule, total_loss

__version__ = "0.1.0"

__all__ = [
    "BBox", "ModelConfig", "ObjectInstance", "PipelineOutputs", "PrimitiveGraph",
    "RecallReport", "Relationship", "Scene", "SceneError", "SceneGraphModel",
    "SceneGraphPredictor", "SynthConfig", "Tensor", "TrainConfig", "Trainer",
    "TripletPrediction", "Vocabulary", "backward", "build_primitive_graph",
    "derive_bbox", "evaluate_outputs", "generate_scenes", "link_auc",
    "load_scene_json", "lr_schedule", "make_batch", "record", "run_pipeline",
    "save_scene_json", "total_loss",
]
