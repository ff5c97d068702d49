"""Diagnostics over masked feature sets: retention rates and covariance histograms."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .ingest import KeypointSet
from .masking import FeatureSet, MaskKind, compute_mask

EXACT_PAIR_LIMIT = 5000
SAMPLED_PAIRS = 10_000_000
_SAMPLE_SEED = 0x5CF1
CENTRAL_RANGE = (-0.15, 0.15)


@dataclass(frozen=True)
class RetentionStats:
    per_image: tuple[float, ...]
    mean: float


@dataclass(frozen=True)
class CovarianceHistogram:
    bin_edges: np.ndarray
    mass: np.ndarray  # normalized to sum 1
    central_fraction: float  # fraction of pairs with dot product in [-0.15, 0.15]
    pair_count: int

    @property
    def bin_centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])


def retention_stats(
    tensors,
    mask_kind: MaskKind,
    keypoint_sets: list[KeypointSet | None] | None = None,
) -> RetentionStats:
    """Fraction of grid locations each mask keeps, per image and on average."""
    tensors = list(tensors)
    if not tensors:
        raise ParameterError("retention stats need at least one tensor")
    fractions = []
    for i, tensor in enumerate(tensors):
        keypoints = keypoint_sets[i] if keypoint_sets else None
        mask = compute_mask(tensor, mask_kind, keypoints)
        fractions.append(len(mask) / (tensor.width * tensor.height))
    return RetentionStats(per_image=tuple(fractions), mean=float(np.mean(fractions)))


def covariance_histogram(features: FeatureSet, bins: int) -> CovarianceHistogram:
    """Histogram of pairwise dot products of l2-normalized features.

    All n(n-1)/2 pairs are used up to n=5000; larger sets are summarized by
    a seeded uniform sample of 10^7 pairs. Dot products are clamped into
    [-1, 1] before binning.
    """
    if bins < 1:
        raise ParameterError("bins must be >= 1")
    n = len(features)
    if n < 2:
        raise ParameterError("covariance histogram needs at least 2 features")
    vectors = features.vectors
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    normalized = vectors / np.where(norms > 1e-12, norms, 1.0)
    if n <= EXACT_PAIR_LIMIT:
        gram = normalized @ normalized.T
        iu = np.triu_indices(n, k=1)
        dots = gram[iu]
    else:
        rng = np.random.default_rng(_SAMPLE_SEED)
        left = rng.integers(0, n, size=SAMPLED_PAIRS)
        right = rng.integers(0, n - 1, size=SAMPLED_PAIRS)
        right = np.where(right >= left, right + 1, right)  # uniform over i != j
        dots = np.einsum("ij,ij->i", normalized[left], normalized[right])
    dots = np.clip(dots, -1.0, 1.0)
    counts, edges = np.histogram(dots, bins=bins, range=(-1.0, 1.0))
    mass = counts / counts.sum()
    low, high = CENTRAL_RANGE
    central = float(np.mean((dots >= low) & (dots <= high)))
    return CovarianceHistogram(
        bin_edges=edges, mass=mass, central_fraction=central, pair_count=len(dots)
    )
