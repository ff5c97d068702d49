"""PCA compression of local features followed by l2 normalization."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
import numpy as np

from .errors import ContractViolation, DataWarning, ParameterError
from .masking import FeatureSet

_ZERO_NORM = 1e-12


def l2_normalize(v: np.ndarray) -> np.ndarray:
    """Return v / ||v||; vectors with norm <= 1e-12 are returned unchanged."""
    v = np.asarray(v, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    if norm <= _ZERO_NORM:
        return v.copy()
    return v / norm


def stack_features(features) -> np.ndarray:
    """Normalize a FeatureSet, an array, or a collection of either into one (n, d) array."""
    if isinstance(features, FeatureSet):
        return features.vectors
    if isinstance(features, np.ndarray):
        if features.ndim != 2:
            raise ContractViolation("feature array must be 2-D")
        return np.asarray(features, dtype=np.float64)
    parts = [stack_features(f) for f in features]
    if not parts:
        raise ParameterError("empty feature collection")
    return np.vstack(parts)


def fix_eigvec_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip each row so its largest-magnitude entry is positive (reproducibility)."""
    out = vectors.copy()
    for row in out:
        pivot = np.argmax(np.abs(row))
        if row[pivot] < 0:
            row *= -1.0
    return out


@dataclass(frozen=True)
class PcaModel:
    """Mean, projection rows (orthonormal, by descending eigenvalue), eigenvalues."""

    mean: np.ndarray
    matrix: np.ndarray
    eigenvalues: np.ndarray

    @property
    def input_dim(self) -> int:
        return self.matrix.shape[1]

    @property
    def output_dim(self) -> int:
        return self.matrix.shape[0]


def fit_pca(features, d: int) -> PcaModel:
    """Fit a d-component PCA on the pooled feature collection.

    Rows of the projection are the top-d eigenvectors of the sample
    covariance; if the data has fewer than d non-degenerate directions the
    remaining rows still complete an orthonormal basis and a DataWarning is
    emitted.
    """
    data = stack_features(features)
    n, k = data.shape
    if d < 1:
        raise ParameterError(f"d must be >= 1, got {d}")
    if d > k:
        raise ParameterError(f"d={d} exceeds feature dimension {k}")
    if n < d:
        raise ParameterError(f"need at least d={d} samples, got {n}")
    mean = data.mean(axis=0)
    centered = data - mean
    cov = (centered.T @ centered) / max(n - 1, 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1][:d]
    eigvals = np.maximum(eigvals[order], 0.0)
    matrix = fix_eigvec_signs(eigvecs[:, order].T)
    rank = int(np.sum(eigvals > 1e-12 * max(eigvals[0], 1.0)))
    if rank < d:
        warnings.warn(
            f"PCA requested d={d} components but data rank is ~{rank}; "
            "trailing rows are an arbitrary orthonormal completion",
            DataWarning,
            stacklevel=2,
        )
    return PcaModel(mean=mean, matrix=matrix, eigenvalues=eigvals)


def reduce_feature(model: PcaModel, x: np.ndarray) -> np.ndarray:
    """Project ``x`` onto the PCA basis and l2-normalize the result."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.input_dim,):
        raise ContractViolation(
            f"expected a vector of length {model.input_dim}, got shape {x.shape}"
        )
    return l2_normalize(model.matrix @ (x - model.mean))


def reduce_features(model: PcaModel, features: FeatureSet) -> FeatureSet:
    """Apply :func:`reduce_feature` to every vector of a FeatureSet."""
    if features.dim != model.input_dim:
        raise ContractViolation(
            f"feature dim {features.dim} does not match PCA input dim {model.input_dim}"
        )
    projected = (features.vectors - model.mean) @ model.matrix.T
    norms = np.linalg.norm(projected, axis=1, keepdims=True)
    scale = np.where(norms > _ZERO_NORM, norms, 1.0)
    return FeatureSet(vectors=projected / scale, source_coords=features.source_coords)
