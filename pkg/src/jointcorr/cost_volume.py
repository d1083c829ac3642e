"""Raw matching cost between two feature maps, stored over flattened indices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .features import FeatureMap
from .geometry import GridShape

RAW = "raw"
AGGREGATED = "aggregated"


@dataclass
class CostVolume:
    """``values[i, j]`` scores source cell ``i`` against target cell ``j``."""
    shape_s: GridShape
    shape_t: GridShape
    values: np.ndarray
    kind: str = RAW

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        expected = (self.shape_s.size, self.shape_t.size)
        if self.values.shape != expected:
            raise ValueError(f"cost volume values {self.values.shape} != {expected}")
        if self.kind not in (RAW, AGGREGATED):
            raise ValueError(f"unknown cost volume kind {self.kind!r}")

    def as_4d(self) -> np.ndarray:
        return self.values.reshape(self.shape_s.h, self.shape_s.w,
                                   self.shape_t.h, self.shape_t.w)


def correlate(ds: FeatureMap, dt: FeatureMap) -> CostVolume:
    """Cosine cost ``C[i, j] = ds[i] . dt[j]`` from L2-normalised features."""
    if ds.dim != dt.dim:
        raise ValueError(f"feature dims differ: {ds.dim} vs {dt.dim}")
    if not (ds.normalized and dt.normalized):
        raise ValueError("correlate expects L2-normalised features (cosine cost)")
    return CostVolume(ds.shape, dt.shape, ds.values @ dt.values.T, RAW)


def correlate_backward(ds: FeatureMap, dt: FeatureMap,
                       grad_c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    grad_c = np.asarray(grad_c, dtype=np.float64)
    if grad_c.shape != (ds.shape.size, dt.shape.size):
        raise ValueError(f"grad_C shape {grad_c.shape} != {(ds.shape.size, dt.shape.size)}")
    return grad_c @ dt.values, grad_c.T @ ds.values


def transpose(c: CostVolume) -> CostVolume:
    return CostVolume(c.shape_t, c.shape_s, c.values.T.copy(), c.kind)
