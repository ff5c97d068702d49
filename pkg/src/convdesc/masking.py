"""Selection masks over a feature tensor and extraction of the selected features.

Grid coordinates are 1-based (x, y) with x in [1, W] and y in [1, H];
masks store them sorted row-major so every downstream consumer sees a
deterministic order.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ContractViolation
from .ingest import FeatureTensor, KeypointSet


class MaskKind(str, Enum):
    SIFT = "sift"
    SUM = "sum"
    MAX = "max"
    NONE = "none"


@dataclass(frozen=True)
class Mask:
    """Ordered set of unique grid coordinates whose features are retained."""

    coords: tuple[tuple[int, int], ...]
    kind: MaskKind

    def __post_init__(self) -> None:
        if len(set(self.coords)) != len(self.coords):
            raise ContractViolation("mask coordinates must be unique")

    def __len__(self) -> int:
        return len(self.coords)


@dataclass(frozen=True)
class FeatureSet:
    """Local feature vectors (rows of ``vectors``) and their grid coordinates."""

    vectors: np.ndarray
    source_coords: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        vectors = np.asarray(self.vectors, dtype=np.float64)
        if vectors.ndim != 2:
            raise ContractViolation(f"feature vectors must be 2-D, got ndim={vectors.ndim}")
        if len(vectors) != len(self.source_coords):
            raise ContractViolation("vectors and source_coords lengths differ")
        if not np.all(np.isfinite(vectors)):
            raise ContractViolation("feature vectors contain non-finite values")
        object.__setattr__(self, "vectors", vectors)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return len(self.source_coords)


def _sorted_rowmajor(coords: set[tuple[int, int]]) -> tuple[tuple[int, int], ...]:
    return tuple(sorted(coords, key=lambda c: (c[1], c[0])))


def full_grid_mask(width: int, height: int) -> Mask:
    coords = tuple((x, y) for y in range(1, height + 1) for x in range(1, width + 1))
    return Mask(coords=coords, kind=MaskKind.NONE)


def max_mask(tensor: FeatureTensor) -> Mask:
    """Locations holding each channel's maximum activation, deduplicated.

    Ties within a channel break to the smallest row-major index, so constant
    channels contribute location (1, 1).
    """
    flat = tensor.locations()
    idx = np.argmax(flat, axis=0)  # first occurrence == smallest row-major index
    width = tensor.width
    coords = {(int(i % width) + 1, int(i // width) + 1) for i in idx}
    return Mask(coords=_sorted_rowmajor(coords), kind=MaskKind.MAX)


def sum_mask(tensor: FeatureTensor) -> Mask:
    """Locations whose channel-sum is at least the median channel-sum."""
    sums = tensor.locations().astype(np.float64).sum(axis=1)
    threshold = np.median(sums)
    keep = np.flatnonzero(sums >= threshold)
    width = tensor.width
    coords = tuple((int(i % width) + 1, int(i // width) + 1) for i in keep)
    return Mask(coords=coords, kind=MaskKind.SUM)


def sift_mask(keypoints: KeypointSet, grid_w: int, grid_h: int) -> Mask:
    """Project detector keypoints onto the feature grid.

    Each pixel keypoint (x, y) maps to (round(x*W/W_I), round(y*H/H_I)) with
    round-half-up, clamped into the grid. An empty keypoint set falls back to
    the full grid (kind NONE), matching the no-keypoints behaviour of the
    pipeline.
    """
    if grid_w < 1 or grid_h < 1:
        raise ContractViolation("grid dimensions must be >= 1")
    if not keypoints.points:
        return full_grid_mask(grid_w, grid_h)
    coords = set()
    for x, y in keypoints.points:
        gx = int(np.floor(x * grid_w / keypoints.image_width + 0.5))
        gy = int(np.floor(y * grid_h / keypoints.image_height + 0.5))
        coords.add((min(max(gx, 1), grid_w), min(max(gy, 1), grid_h)))
    return Mask(coords=_sorted_rowmajor(coords), kind=MaskKind.SIFT)


def compute_mask(
    tensor: FeatureTensor, kind: MaskKind, keypoints: KeypointSet | None = None
) -> Mask:
    """Dispatch to the mask of the requested kind."""
    if kind is MaskKind.MAX:
        return max_mask(tensor)
    if kind is MaskKind.SUM:
        return sum_mask(tensor)
    if kind is MaskKind.SIFT:
        if keypoints is None:
            raise ContractViolation("SIFT mask requires a KeypointSet")
        return sift_mask(keypoints, tensor.width, tensor.height)
    return full_grid_mask(tensor.width, tensor.height)


def apply_mask(tensor: FeatureTensor, mask: Mask) -> FeatureSet:
    """Slice out the masked locations, one K-dim vector per coordinate, in mask order."""
    for x, y in mask.coords:
        if not (1 <= x <= tensor.width and 1 <= y <= tensor.height):
            raise ContractViolation(f"mask coordinate ({x}, {y}) outside tensor grid")
    if not mask.coords:
        vectors = np.empty((0, tensor.channels), dtype=np.float64)
        return FeatureSet(vectors=vectors, source_coords=())
    xs = np.array([c[0] - 1 for c in mask.coords])
    ys = np.array([c[1] - 1 for c in mask.coords])
    return FeatureSet(
        vectors=tensor.data[ys, xs, :].astype(np.float64), source_coords=mask.coords
    )
