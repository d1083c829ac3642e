"""Single-layer 4D convolution + ReLU over the cost volume.

The volume is viewed as a (h_s, w_s, h_t, w_t) tensor and filtered with a
k^4 kernel under zero padding, so the output keeps the input shape::

    A[p] = relu(bias + sum_o W[o] * C[p + o - r]),   r = (k - 1) // 2
"""

from __future__ import annotations

import itertools
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .cost_volume import AGGREGATED, CostVolume

MAGIC = b"C4D1"


@dataclass
class Conv4dKernel:
    size: int
    weights: np.ndarray
    bias: float = 0.0
    weight_grad: np.ndarray = field(default=None, repr=False)
    bias_grad: float = field(default=0.0, repr=False)

    def __post_init__(self):
        if self.size < 1 or self.size % 2 == 0:
            raise ValueError(f"kernel size must be odd and positive, got {self.size}")
        self.weights = np.asarray(self.weights, dtype=np.float64).reshape((self.size,) * 4)
        self.bias = float(self.bias)
        if not (np.all(np.isfinite(self.weights)) and np.isfinite(self.bias)):
            raise ValueError("kernel parameters must be finite")
        if self.weight_grad is None:
            self.weight_grad = np.zeros_like(self.weights)

    @property
    def radius(self) -> int:
        return (self.size - 1) // 2

    @classmethod
    def delta(cls, size: int = 3) -> "Conv4dKernel":
        w = np.zeros((size,) * 4)
        w[(size // 2,) * 4] = 1.0
        return cls(size, w, 0.0)

    @classmethod
    def init(cls, rng: np.random.Generator, size: int = 3, noise: float = 0.01) -> "Conv4dKernel":
        """Identity (delta) kernel plus uniform noise in [-noise, noise]."""
        k = cls.delta(size)
        k.weights += rng.uniform(-noise, noise, size=k.weights.shape)
        return k

    def zero_grad(self):
        self.weight_grad[...] = 0.0
        self.bias_grad = 0.0

    def save(self, path: str | Path):
        payload = MAGIC + struct.pack("<I", self.size)
        payload += np.ascontiguousarray(self.weights.ravel(), dtype="<f8").tobytes()
        payload += struct.pack("<d", self.bias)
        Path(path).write_bytes(payload)

    @classmethod
    def load(cls, path: str | Path) -> "Conv4dKernel":
        data = Path(path).read_bytes()
        if data[:4] != MAGIC:
            raise ValueError(f"{path}: not a kernel checkpoint (bad magic)")
        (k,) = struct.unpack("<I", data[4:8])
        n = k ** 4 + 1
        if len(data) != 8 + 8 * n:
            raise ValueError(f"{path}: expected {8 + 8 * n} bytes, got {len(data)}")
        vals = np.frombuffer(data[8:], dtype="<f8").astype(np.float64)
        return cls(k, vals[:-1].reshape((k,) * 4), float(vals[-1]))


def _offsets(k: int):
    return itertools.product(range(k), repeat=4)


def _window(padded: np.ndarray, o: tuple, shape: tuple) -> np.ndarray:
    return padded[o[0]:o[0] + shape[0], o[1]:o[1] + shape[1],
                  o[2]:o[2] + shape[2], o[3]:o[3] + shape[3]]


def conv4d(x: np.ndarray, kernel: Conv4dKernel) -> np.ndarray:
    """Zero-padded 4D cross-correlation plus bias (no activation)."""
    return ndimage.correlate(x, kernel.weights, mode="constant", cval=0.0) + kernel.bias


def aggregate(c: CostVolume, kernel: Conv4dKernel) -> CostVolume:
    pre = conv4d(c.as_4d(), kernel)
    return CostVolume(c.shape_s, c.shape_t, np.maximum(pre, 0.0).reshape(c.values.shape),
                      AGGREGATED)


def aggregate_backward(c: CostVolume, kernel: Conv4dKernel, grad_a: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the raw volume; kernel gradients accumulate in place."""
    grad_a = np.asarray(grad_a, dtype=np.float64)
    if grad_a.shape != c.values.shape:
        raise ValueError(f"grad_A shape {grad_a.shape} != {c.values.shape}")
    x = c.as_4d()
    r = kernel.radius
    # ReLU gate: recompute the pre-activation; ties at exactly 0 pass no gradient.
    g = np.where(conv4d(x, kernel) > 0.0, grad_a.reshape(x.shape), 0.0)

    padded = np.pad(x, r)
    for o in _offsets(kernel.size):
        kernel.weight_grad[o] += np.sum(g * _window(padded, o, x.shape))
    kernel.bias_grad += float(g.sum())
    # Adjoint of cross-correlation is convolution with the same kernel.
    grad_c = ndimage.convolve(g, kernel.weights, mode="constant", cval=0.0)
    return grad_c.reshape(c.values.shape)
