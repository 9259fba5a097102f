"""Initial object and edge features for the primitive graph.

Two object-feature modes:
  * geometric: a fixed point-set descriptor (centroid, extents, log count,
    covariance eigenvalues, per-axis histograms) projected by a learned
    linear+ReLU map. Used when object labels must be inferred (SGCls).
  * label-embedding: a learned embedding row per class. Used when labels are
    given (PredCls); point geometry never touches the object feature there.

Edge features are an MLP of the subject-minus-object feature difference.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .nn import MLP, Embedding, Linear, Module
from .rng import SplitMix64


@dataclass(frozen=True)
class EncoderConfig:
    feature_dim: int = 64
    histogram_bins: int = 8
    mode: str = "geometric"  # or "label-embedding"

    def __post_init__(self):
        if self.feature_dim < 8:
            raise ValueError("feature_dim must be >= 8")
        if self.histogram_bins < 2:
            raise ValueError("histogram_bins must be >= 2")
        if self.mode not in ("geometric", "label-embedding"):
            raise ValueError(f"unknown encoder mode {self.mode!r}")

    @property
    def descriptor_dim(self) -> int:
        return 10 + 3 * self.histogram_bins


def raw_point_descriptor(points: np.ndarray, bins: int) -> np.ndarray:
    """Fixed descriptor of a point set (float64 internally).

    Layout: centroid(3), extents(3), log count(1), covariance eigenvalues
    descending(3), per-axis histograms over the point bounding range(3*bins).
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
        raise ValueError("descriptor needs a non-empty (N, 3) point set")
    centroid = pts.mean(axis=0)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    extents = hi - lo
    centered = pts - centroid
    cov = centered.T @ centered / pts.shape[0]
    eig = np.sort(np.linalg.eigvalsh(cov))[::-1]
    hists = []
    for axis in range(3):
        span = extents[axis]
        if span <= 0:
            hist = np.zeros(bins)
            hist[0] = 1.0
        else:
            norm = (pts[:, axis] - lo[axis]) / span
            idx = np.minimum((norm * bins).astype(np.int64), bins - 1)
            hist = np.bincount(idx, minlength=bins) / pts.shape[0]
        hists.append(hist)
    return np.concatenate([centroid, extents, [np.log(pts.shape[0])], eig] + hists)


class PointSetEncoder(Module):
    """Learned projection of the raw descriptor to the feature dimension."""

    def __init__(self, cfg: EncoderConfig, rng: SplitMix64):
        self.cfg = cfg
        self.proj = Linear(cfg.descriptor_dim, cfg.feature_dim, rng)

    def __call__(self, descriptors: Tensor) -> Tensor:
        return ad.relu(self.proj(descriptors))


class LabelEncoder(Module):
    def __init__(self, num_classes: int, cfg: EncoderConfig, rng: SplitMix64):
        self.embed = Embedding(num_classes, cfg.feature_dim, rng)

    def __call__(self, class_ids: np.ndarray) -> Tensor:
        return self.embed(class_ids)


class EdgeInit(Module):
    """Edge features from the subject-minus-object feature difference."""

    def __init__(self, dim: int, rng: SplitMix64):
        self.mlp = MLP([dim, dim, dim], rng)

    def __call__(self, features: Tensor, edges: np.ndarray) -> Tensor:
        src = ad.gather(features, edges[:, 0])
        dst = ad.gather(features, edges[:, 1])
        return self.mlp(src - dst)
