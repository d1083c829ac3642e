"""Dense PCK, endpoint error and flow warping on grid cells."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .consistency import ConfidenceMask, FlowField
from .features import ImageGrid
from .geometry import OUT_OF_GRID

EVAL_HEADER = "alpha,correct,total,pck,mean_epe"


@dataclass(frozen=True)
class PckResult:
    alpha: float
    correct: int
    total: int

    def __post_init__(self):
        if self.total <= 0:
            raise ValueError("PCK needs a positive number of evaluated cells")

    @property
    def pck(self) -> float:
        return self.correct / self.total


def _check(pred: FlowField, gt: FlowField, valid: ConfidenceMask):
    if pred.shape != gt.shape or valid.shape != gt.shape:
        raise ValueError(f"grid mismatch: pred {pred.shape}, gt {gt.shape}, valid {valid.shape}")
    if valid.count == 0:
        raise ValueError("no evaluable cells")


def _errors(pred: FlowField, gt: FlowField, valid: ConfidenceMask) -> np.ndarray:
    diff = (pred.vectors - gt.vectors)[valid.bits].astype(np.float64)
    return np.sqrt(np.sum(diff ** 2, axis=1))


def pck(pred: FlowField, gt: FlowField, valid: ConfidenceMask, alpha: float = 0.1) -> PckResult:
    """Fraction of valid cells with ``|pred - gt| <= alpha * max(h, w)``."""
    _check(pred, gt, valid)
    threshold = alpha * max(gt.shape.h, gt.shape.w)
    correct = int(np.count_nonzero(_errors(pred, gt, valid) <= threshold))
    return PckResult(float(alpha), correct, valid.count)


def endpoint_error(pred: FlowField, gt: FlowField, valid: ConfidenceMask) -> float:
    _check(pred, gt, valid)
    return float(_errors(pred, gt, valid).mean())


def warp(img: ImageGrid, flow: FlowField) -> ImageGrid:
    """Pull ``img`` along ``flow``: ``out[i] = img[i + flow[i]]``, zero off-grid."""
    if flow.shape != img.shape or flow.target_shape != img.shape:
        raise ValueError(f"flow grid {flow.shape} does not match image grid {img.shape}")
    src = flow.targets()
    out = np.zeros_like(img.values)
    inside = src != OUT_OF_GRID
    out[inside] = img.values[src[inside]]
    return ImageGrid(img.shape, out)


def eval_row(result: PckResult, mean_epe: float) -> str:
    return f"{result.alpha!r},{result.correct},{result.total},{result.pck!r},{mean_epe!r}"
