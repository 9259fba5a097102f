"""Layers composed from autodiff primitives.

Weight matrices are initialized uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) from
a seeded stream, biases start at zero, and layer-norm affines start at
identity. Parameter names come from the attribute path in the module tree
(e.g. "linegnn.layers.2.gru.w_z") and must be unique per model.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .rng import SplitMix64


class Param:
    """Trainable tensor; gradient accumulates on the wrapped tensor."""

    def __init__(self, data: np.ndarray):
        self.tensor = Tensor(np.asarray(data, dtype=np.float32), requires_grad=True)

    @property
    def data(self) -> np.ndarray:
        return self.tensor.data

    @data.setter
    def data(self, value: np.ndarray) -> None:
        self.tensor.data = np.asarray(value, dtype=np.float32)

    @property
    def grad(self):
        return self.tensor.grad

    def zero_grad(self) -> None:
        self.tensor.grad = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.tensor.data.shape


class Module:
    """Base for layers; walks attributes to collect named parameters."""

    def named_params(self, prefix: str = "") -> list[tuple[str, Param]]:
        out: list[tuple[str, Param]] = []
        for attr, value in vars(self).items():
            path = f"{prefix}{attr}" if not prefix else f"{prefix}.{attr}"
            if isinstance(value, Param):
                out.append((path, value))
            elif isinstance(value, Module):
                out.extend(value.named_params(path))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        out.extend(item.named_params(f"{path}.{i}"))
        return out

    def params(self) -> list[Param]:
        return [p for _, p in self.named_params()]

    def zero_grad(self) -> None:
        for p in self.params():
            p.zero_grad()


def uniform_init(rng: SplitMix64, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    flat = [rng.uniform(-bound, bound) for _ in range(int(np.prod(shape)))]
    return np.asarray(flat, dtype=np.float32).reshape(shape)


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: SplitMix64, bias: bool = True):
        self.w = Param(uniform_init(rng, (in_dim, out_dim), in_dim))
        self.b = Param(np.zeros(out_dim, dtype=np.float32)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = ad.matmul(x, self.w.tensor)
        if self.b is not None:
            y = ad.add(y, self.b.tensor)
        return y


class MLP(Module):
    """Stack of linears with ReLU between; optionally ReLU after the last."""

    def __init__(self, dims: list[int], rng: SplitMix64, final_activation: bool = False):
        self.layers = [Linear(dims[i], dims[i + 1], rng) for i in range(len(dims) - 1)]
        self.final_activation = final_activation

    def __call__(self, x: Tensor) -> Tensor:
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < last or self.final_activation:
                x = ad.relu(x)
        return x


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.gain = Param(np.ones(dim, dtype=np.float32))
        self.bias = Param(np.zeros(dim, dtype=np.float32))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return ad.layer_norm(x, self.gain.tensor, self.bias.tensor, self.eps)


class GRUCell(Module):
    """Update: z=sig(mW_z+hU_z+b_z), r=sig(mW_r+hU_r+b_r),
    c=tanh(mW_h+(r*h)U_h+b_h), h' = (1-z)*h + z*c.

    The hidden state is the node/edge feature being refined; the input is the
    incoming message.
    """

    def __init__(self, dim: int, rng: SplitMix64):
        self.w_z = Param(uniform_init(rng, (dim, dim), dim))
        self.u_z = Param(uniform_init(rng, (dim, dim), dim))
        self.b_z = Param(np.zeros(dim, dtype=np.float32))
        self.w_r = Param(uniform_init(rng, (dim, dim), dim))
        self.u_r = Param(uniform_init(rng, (dim, dim), dim))
        self.b_r = Param(np.zeros(dim, dtype=np.float32))
        self.w_h = Param(uniform_init(rng, (dim, dim), dim))
        self.u_h = Param(uniform_init(rng, (dim, dim), dim))
        self.b_h = Param(np.zeros(dim, dtype=np.float32))

    def __call__(self, h: Tensor, m: Tensor) -> Tensor:
        if h.shape != m.shape:
            raise ValueError(f"gru shapes differ: {h.shape} vs {m.shape}")
        z = ad.sigmoid(ad.matmul(m, self.w_z.tensor) + ad.matmul(h, self.u_z.tensor) + self.b_z.tensor)
        r = ad.sigmoid(ad.matmul(m, self.w_r.tensor) + ad.matmul(h, self.u_r.tensor) + self.b_r.tensor)
        c = ad.tanh(ad.matmul(m, self.w_h.tensor) + ad.matmul(r * h, self.u_h.tensor) + self.b_h.tensor)
        return (1.0 - z) * h + z * c


class Embedding(Module):
    def __init__(self, num_entries: int, dim: int, rng: SplitMix64):
        self.table = Param(uniform_init(rng, (num_entries, dim), dim))

    def __call__(self, index: np.ndarray) -> Tensor:
        idx = np.asarray(index, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= self.table.shape[0]):
            raise IndexError("embedding index out of range")
        return ad.gather(self.table.tensor, idx)


def focal_loss(probs: Tensor, target_class: int, gamma: float = 2.0, alpha: float = 1.0) -> Tensor:
    """-alpha * (1 - p_t)^gamma * log(p_t) for a single probability vector."""
    if probs.data.ndim != 1:
        raise ValueError("focal_loss expects a 1-D probability vector")
    if not 0 <= target_class < probs.data.shape[0]:
        raise IndexError(f"target class {target_class} out of range")
    p_t = ad.gather(probs, np.asarray([target_class]))
    return ad.reduce_sum(focal_terms(ad.reshape(p_t, (1,)), gamma, alpha))


def focal_terms(p_t: Tensor, gamma: float, alpha) -> Tensor:
    """Elementwise focal terms for a batch of picked target probabilities.

    `alpha` may be a scalar or a per-element weight array. p_t is clamped at
    1e-7 before the log.
    """
    p = ad.clamp_min(p_t, 1e-7)
    weight = Tensor(np.asarray(alpha, dtype=p.dtype))
    if gamma == 0:
        return weight * -ad.log(p)
    # clamp guards p marginally above 1 from float division inside softmax
    return weight * ad.power(ad.clamp_min(1.0 - p, 0.0), gamma) * -ad.log(p)
