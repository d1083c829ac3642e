"""Synthetic source/target pairs with known integer ground-truth flow."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .consistency import ConfidenceMask, FlowField
from .features import ImageGrid
from .geometry import OUT_OF_GRID, GridShape, apply_displacements, grid_coords


@dataclass(frozen=True)
class WarpParams:
    """Knobs of the random pair generator.

    Displacement = round(translation + linear * (p - center)) + jitter, with
    translation uniform in [-max_translation, max_translation] per axis and
    linear entries ~ N(0, affine_std). Each cell gets a +-1 jitter on one
    axis with probability ``jitter_prob``. ``noise`` is the std of additive
    target noise as a fraction of the source value range.
    """
    max_translation: int = 3
    affine_std: float = 0.1
    jitter_prob: float = 0.1
    noise: float = 0.05
    smoothness: float = 1.0


@dataclass
class SyntheticPair:
    source: ImageGrid
    target: ImageGrid
    gt_flow: FlowField
    valid: ConfidenceMask


def smooth_texture(rng: np.random.Generator, shape: GridShape, channels: int,
                   smoothness: float) -> np.ndarray:
    """(h*w, channels) low-frequency random field, each channel scaled to [0, 1]."""
    field = rng.standard_normal((shape.h, shape.w, channels))
    if smoothness > 0:
        field = gaussian_filter(field, sigma=(smoothness, smoothness, 0), mode="wrap")
    lo = field.min(axis=(0, 1), keepdims=True)
    hi = field.max(axis=(0, 1), keepdims=True)
    field = (field - lo) / np.where(hi > lo, hi - lo, 1.0)
    return field.reshape(shape.size, channels)


def random_displacements(rng: np.random.Generator, shape: GridShape,
                         params: WarpParams) -> np.ndarray:
    t = rng.integers(-params.max_translation, params.max_translation + 1, size=2)
    lin = rng.normal(0.0, params.affine_std, size=(2, 2)) if params.affine_std > 0 else np.zeros((2, 2))
    center = np.array([(shape.h - 1) / 2, (shape.w - 1) / 2])
    rel = grid_coords(shape) - center
    disp = np.rint(t + rel @ lin.T).astype(np.int64)
    if params.jitter_prob > 0:
        hit = rng.random(shape.size) < params.jitter_prob
        axis = rng.integers(0, 2, size=shape.size)
        sign = rng.choice(np.array([-1, 1]), size=shape.size)
        disp[hit, axis[hit]] += sign[hit]
    return disp


def transport(rng: np.random.Generator, source: np.ndarray, shape: GridShape,
              disp: np.ndarray, noise: float) -> tuple[np.ndarray, np.ndarray]:
    """Forward-splat ``source`` along ``disp``; returns (target, valid bits).

    A source cell is valid when its destination is in-grid and no later cell
    (in flat order) overwrote it. Unwritten target cells get fresh noise.
    """
    dest = apply_displacements(disp, shape)
    target = np.full_like(source, np.nan)
    owner = np.full(shape.size, -1)
    for i in np.flatnonzero(dest != OUT_OF_GRID):
        owner[dest[i]] = i
    written = owner >= 0
    target[written] = source[owner[written]]
    valid = np.zeros(shape.size, dtype=bool)
    valid[owner[written]] = True

    lo, hi = source.min(), source.max()
    n_holes = int(np.count_nonzero(~written))
    if n_holes:
        target[~written] = rng.uniform(lo, hi, size=(n_holes, source.shape[1]))
    if noise > 0:
        target = target + rng.normal(0.0, noise * (hi - lo), size=target.shape)
    return target, valid


def generate_pair(rng: np.random.Generator, shape: GridShape, channels: int,
                  params: WarpParams = WarpParams()) -> SyntheticPair:
    source = smooth_texture(rng, shape, channels, params.smoothness)
    disp = random_displacements(rng, shape, params)
    target, valid = transport(rng, source, shape, disp, params.noise)
    return SyntheticPair(ImageGrid(shape, source), ImageGrid(shape, target),
                         FlowField(shape, disp, "raw"), ConfidenceMask(shape, valid))
