"""Writers for the descriptor pipeline's on-disk formats.

Tensor files: magic ``SCF1``, uint32 little-endian W, H, K, a reserved zero
uint32 (header exactly 20 bytes), then W*H*K little-endian float32 values,
location-major (channel fastest, then x, then y). Keypoint files: text, first
line ``W_I H_I``, then ``x y`` per line. The manifest is JSON with images and
queries, paths relative to its directory.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

TENSOR_MAGIC = b"SCF1"


def write_tensor(activations: np.ndarray, path: str | Path) -> None:
    """Write an (H, W, K) activation grid as an SCF1 file."""
    grid = np.ascontiguousarray(activations, dtype="<f4")
    if grid.ndim != 3:
        raise ValueError(f"expected an (H, W, K) array, got shape {grid.shape}")
    if not np.all(np.isfinite(grid)):
        raise ValueError("activations contain non-finite values")
    height, width, channels = grid.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sIIII", TENSOR_MAGIC, width, height, channels, 0))
        fh.write(grid.tobytes())


def write_keypoints(
    points: list[tuple[float, float]], image_w: int, image_h: int, path: str | Path
) -> None:
    lines = [f"{image_w} {image_h}"]
    lines += [f"{x:.2f} {y:.2f}" for x, y in points]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_manifest(entries: list[dict], path: str | Path) -> None:
    """Entries carry id, tensor_path, optional keypoints_path, role."""
    doc = {"images": entries, "queries": []}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
