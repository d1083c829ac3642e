"""Dense feature extraction with a learnable 1x1 linear projector."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import GridShape

NORM_TOL = 1e-6


@dataclass
class ImageGrid:
    """Multi-channel image on a cell grid; ``values`` is (h*w, channels)."""
    shape: GridShape
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[0] != self.shape.size:
            raise ValueError(f"image values must be ({self.shape.size}, channels), "
                             f"got {self.values.shape}")
        if self.values.shape[1] < 1:
            raise ValueError("image needs at least one channel")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("image values must be finite")

    @property
    def channels(self) -> int:
        return self.values.shape[1]

    def as_array(self) -> np.ndarray:
        """(h, w, channels) view."""
        return self.values.reshape(self.shape.h, self.shape.w, self.channels)

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "ImageGrid":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        h, w, c = arr.shape
        return cls(GridShape(h, w), arr.reshape(h * w, c))


@dataclass
class FeatureMap:
    shape: GridShape
    values: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[0] != self.shape.size:
            raise ValueError(f"feature values must be ({self.shape.size}, d), "
                             f"got {self.values.shape}")

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def row(self, i: int) -> np.ndarray:
        return self.values[i]


@dataclass
class LinearProjector:
    """Per-cell affine map ``x -> weight^T x + bias`` with gradient buffers."""
    weight: np.ndarray
    bias: np.ndarray
    weight_grad: np.ndarray = field(default=None, repr=False)
    bias_grad: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[1],):
            raise ValueError(f"weight {self.weight.shape} and bias {self.bias.shape} disagree")
        if self.weight_grad is None:
            self.weight_grad = np.zeros_like(self.weight)
        if self.bias_grad is None:
            self.bias_grad = np.zeros_like(self.bias)

    @property
    def in_features(self) -> int:
        return self.weight.shape[0]

    @property
    def dim(self) -> int:
        return self.weight.shape[1]

    @classmethod
    def init(cls, rng: np.random.Generator, in_features: int, dim: int,
             scale: float = 0.02) -> "LinearProjector":
        weight = rng.normal(0.0, scale, size=(in_features, dim))
        return cls(weight, np.zeros(dim))

    def zero_grad(self):
        self.weight_grad[...] = 0.0
        self.bias_grad[...] = 0.0


def extract_features(img: ImageGrid, proj: LinearProjector) -> FeatureMap:
    if img.channels != proj.in_features:
        raise ValueError(f"image has {img.channels} channels, projector expects "
                         f"{proj.in_features}")
    return FeatureMap(img.shape, img.values @ proj.weight + proj.bias, normalized=False)


def extract_features_backward(img: ImageGrid, proj: LinearProjector,
                              grad_out: np.ndarray) -> None:
    """Accumulate d(loss)/d(weight, bias) into the projector's buffers."""
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if grad_out.shape != (img.shape.size, proj.dim):
        raise ValueError(f"grad_out shape {grad_out.shape} != {(img.shape.size, proj.dim)}")
    if img.channels != proj.in_features:
        raise ValueError("image/projector channel mismatch")
    proj.weight_grad += img.values.T @ grad_out
    proj.bias_grad += grad_out.sum(axis=0)


def l2_normalize(f: FeatureMap) -> FeatureMap:
    """Unit-norm rows; all-zero rows stay zero."""
    norms = np.linalg.norm(f.values, axis=1, keepdims=True)
    safe = np.where(norms > 0, norms, 1.0)
    return replace(f, values=f.values / safe, normalized=True)


def zero_rows(f: FeatureMap) -> np.ndarray:
    return ~np.any(f.values != 0, axis=1)


def l2_normalize_backward(raw: FeatureMap, grad_out: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the unnormalised rows: ``(I - x̂x̂ᵀ) g / ‖x‖``."""
    x = raw.values
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    nz = norms[:, 0] > 0
    grad = np.zeros_like(x)
    xhat = x[nz] / norms[nz]
    g = grad_out[nz]
    grad[nz] = (g - xhat * np.sum(xhat * g, axis=1, keepdims=True)) / norms[nz]
    return grad
