"""Winner-take-all pseudo flows and forward-backward confidence masks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cost_volume import CostVolume, transpose
from .geometry import OUT_OF_GRID, Displacement, GridShape, apply_displacements, grid_coords


@dataclass
class FlowField:
    """One integer (dy, dx) per cell of ``shape``, pointing into ``target_shape``."""
    shape: GridShape
    vectors: np.ndarray
    source_kind: str = "raw"
    target_shape: GridShape = None

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.int64).reshape(-1, 2)
        if self.vectors.shape[0] != self.shape.size:
            raise ValueError(f"flow needs {self.shape.size} vectors, got {self.vectors.shape[0]}")
        if self.target_shape is None:
            self.target_shape = self.shape

    def __getitem__(self, i: int) -> Displacement:
        dy, dx = self.vectors[i]
        return Displacement(int(dy), int(dx))

    def targets(self) -> np.ndarray:
        """Flat target index per cell (``OUT_OF_GRID`` where the flow leaves)."""
        return apply_displacements(self.vectors, self.shape, self.target_shape)

    @classmethod
    def zeros(cls, shape: GridShape, source_kind: str = "raw") -> "FlowField":
        return cls(shape, np.zeros((shape.size, 2), dtype=np.int64), source_kind)


@dataclass
class ConfidenceMask:
    shape: GridShape
    bits: np.ndarray

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=bool).reshape(-1)
        if self.bits.shape[0] != self.shape.size:
            raise ValueError(f"mask needs {self.shape.size} bits, got {self.bits.shape[0]}")

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.bits))

    @classmethod
    def full(cls, shape: GridShape, value: bool = True) -> "ConfidenceMask":
        return cls(shape, np.full(shape.size, value))


@dataclass(frozen=True)
class ConsistencyParams:
    alpha1: float = 0.1
    alpha2: float = 0.05

    def __post_init__(self):
        for name in ("alpha1", "alpha2"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")


def wta_flow(c: CostVolume) -> FlowField:
    """Row-wise argmax as a displacement field; ties go to the lowest index."""
    best = np.argmax(c.values, axis=1)
    vectors = grid_coords(c.shape_t)[best] - grid_coords(c.shape_s)
    return FlowField(c.shape_s, vectors, c.kind, c.shape_t)


def consistency_mask(f_fwd: FlowField, f_bwd: FlowField,
                     p: ConsistencyParams) -> ConfidenceMask:
    """Keep cell i iff the backward flow at its forward match nearly cancels it.

    Tested condition (squared norms in grid cells, strict inequality)::

        |f + b|^2 < alpha1 * (|f|^2 + |b|^2) + alpha2,   b = f_bwd(i + f)

    Cells whose forward match leaves the grid fail.
    """
    if f_bwd.shape != f_fwd.target_shape or f_bwd.target_shape != f_fwd.shape:
        raise ValueError(f"backward flow grid {f_bwd.shape}->{f_bwd.target_shape} does not "
                         f"invert forward grid {f_fwd.shape}->{f_fwd.target_shape}")
    t = f_fwd.targets()
    inside = t != OUT_OF_GRID
    fwd = f_fwd.vectors
    bwd = np.zeros_like(fwd)
    bwd[inside] = f_bwd.vectors[t[inside]]
    lhs = np.sum((fwd + bwd) ** 2, axis=1)
    rhs = p.alpha1 * (np.sum(fwd ** 2, axis=1) + np.sum(bwd ** 2, axis=1)) + p.alpha2
    return ConfidenceMask(f_fwd.shape, inside & (lhs < rhs))


def mask_and_flows(c: CostVolume, p: ConsistencyParams
                   ) -> tuple[FlowField, FlowField, ConfidenceMask]:
    fwd = wta_flow(c)
    bwd = wta_flow(transpose(c))
    return fwd, bwd, consistency_mask(fwd, bwd, p)
