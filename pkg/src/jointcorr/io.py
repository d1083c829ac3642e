"""Plain-text and binary file formats used by the CLI."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .consistency import ConfidenceMask, FlowField
from .cost_volume import CostVolume
from .features import ImageGrid, LinearProjector
from .geometry import GridShape

PROJECTOR_MAGIC = b"LPRJ"


def read_config(path: str | Path) -> dict[str, str]:
    """``key=value`` per line; ``#`` starts a comment; blank lines ignored."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def parse_override(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise ValueError(f"override must be key=value, got {text!r}")
    key, value = text.split("=", 1)
    return key.strip(), value.strip()


def write_image_csv(img: ImageGrid, path: str | Path):
    """Header ``h,w,channels`` then one row-major cell per line."""
    lines = [f"{img.shape.h},{img.shape.w},{img.channels}"]
    lines += [",".join(repr(float(v)) for v in row) for row in img.values]
    Path(path).write_text("\n".join(lines) + "\n")


def read_image_csv(path: str | Path) -> ImageGrid:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    h, w, c = (int(v) for v in lines[0].split(","))
    values = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    if values.shape != (h * w, c):
        raise ValueError(f"{path}: header says {h}x{w}x{c}, body has shape {values.shape}")
    return ImageGrid(GridShape(h, w), values)


def write_mask_pgm(mask: ConfidenceMask, path: str | Path):
    rows = mask.bits.reshape(mask.shape.h, mask.shape.w).astype(int)
    body = "\n".join(" ".join(str(v) for v in row) for row in rows)
    Path(path).write_text(f"P2\n{mask.shape.w} {mask.shape.h}\n1\n{body}\n")


def read_mask_pgm(path: str | Path) -> ConfidenceMask:
    tokens = [t for ln in Path(path).read_text().splitlines()
              for t in ln.split("#", 1)[0].split()]
    if tokens[0] != "P2":
        raise ValueError(f"{path}: not a plain PGM")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    bits = np.array([int(t) for t in tokens[4:]]) > 0
    if bits.size != h * w or maxval != 1:
        raise ValueError(f"{path}: malformed mask")
    return ConfidenceMask(GridShape(h, w), bits)


def write_flow_csv(flow: FlowField, path: str | Path):
    lines = [f"{i},{dy},{dx}" for i, (dy, dx) in enumerate(flow.vectors)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_flow_csv(path: str | Path, shape: GridShape) -> FlowField:
    rows = np.loadtxt(path, delimiter=",", dtype=np.int64, ndmin=2)
    order = np.argsort(rows[:, 0])
    return FlowField(shape, rows[order, 1:])


def write_volume_csv(c: CostVolume, path: str | Path):
    np.savetxt(path, c.values, delimiter=",", fmt="%.17g")


def save_projector(proj: LinearProjector, path: str | Path):
    rows, cols = proj.weight.shape
    payload = PROJECTOR_MAGIC + struct.pack("<II", rows, cols)
    payload += np.ascontiguousarray(proj.weight, dtype="<f8").tobytes()
    payload += np.ascontiguousarray(proj.bias, dtype="<f8").tobytes()
    Path(path).write_bytes(payload)


def load_projector(path: str | Path) -> LinearProjector:
    data = Path(path).read_bytes()
    if data[:4] != PROJECTOR_MAGIC:
        raise ValueError(f"{path}: not a projector checkpoint (bad magic)")
    rows, cols = struct.unpack("<II", data[4:12])
    n = rows * cols + cols
    if len(data) != 12 + 8 * n:
        raise ValueError(f"{path}: expected {12 + 8 * n} bytes, got {len(data)}")
    vals = np.frombuffer(data[12:], dtype="<f8").astype(np.float64)
    return LinearProjector(vals[:rows * cols].reshape(rows, cols), vals[rows * cols:])
