"""Descriptor post-processing: power-law normalization, learned rotation/whitening,
method-specific truncation, and the final l2 normalization.

The frozen pipeline order is: aggregate -> (leading-block truncation for the
function-approximation embedding) -> power-law + l2 -> rotation/whitening ->
(head truncation) -> l2.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, DataWarning, ParameterError
from .reduce import fix_eigvec_signs, l2_normalize

WHITEN_EPSILON = 1e-6
DEFAULT_PN_ALPHA = 0.5


@dataclass(frozen=True)
class PostprocessParams:
    pn_alpha: float = DEFAULT_PN_ALPHA
    whiten: bool = True
    truncate_head: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.pn_alpha <= 1.0:
            raise ParameterError(f"power-law exponent must be in [0, 1], got {self.pn_alpha}")
        if self.truncate_head < 0:
            raise ParameterError("truncate_head must be >= 0")


def power_law(v: np.ndarray, alpha: float) -> np.ndarray:
    """Elementwise sign(x)*|x|^alpha followed by l2 normalization; 0^0 is 0."""
    if not 0.0 <= alpha <= 1.0:
        raise ParameterError(f"power-law exponent must be in [0, 1], got {alpha}")
    v = np.asarray(v, dtype=np.float64)
    magnitudes = np.abs(v)
    if alpha == 0.0:
        powered = np.sign(v)  # sign(0) = 0 covers the 0^0 case
    else:
        powered = np.sign(v) * magnitudes**alpha
    return l2_normalize(powered)


@dataclass(frozen=True)
class RotationModel:
    """Eigenbasis rotation learned from aggregated descriptors.

    ``rotation`` rows are eigenvectors of the training covariance sorted by
    descending eigenvalue; with ``whiten`` the rotated coordinates are scaled
    by 1/sqrt(eigenvalue + epsilon); the first ``truncate_head`` coordinates
    are dropped after rotation.
    """

    mean: np.ndarray
    rotation: np.ndarray
    eigenvalues: np.ndarray
    whiten: bool
    epsilon: float = WHITEN_EPSILON
    truncate_head: int = 0

    def __post_init__(self) -> None:
        if self.truncate_head >= self.rotation.shape[1]:
            raise ParameterError(
                f"truncate_head={self.truncate_head} must be below input dim "
                f"{self.rotation.shape[1]}"
            )

    @property
    def input_dim(self) -> int:
        return self.rotation.shape[1]

    @property
    def output_dim(self) -> int:
        return self.rotation.shape[0] - self.truncate_head

    def transform(self, v: np.ndarray) -> np.ndarray:
        """Center, rotate, optionally whiten, and drop the leading components."""
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.input_dim,):
            raise ContractViolation(
                f"expected vector of length {self.input_dim}, got {v.shape}"
            )
        r = self.rotation @ (v - self.mean)
        if self.whiten:
            r = r / np.sqrt(self.eigenvalues + self.epsilon)
        return r[self.truncate_head :]


def fit_rotation(
    train_vectors,
    whiten: bool,
    truncate_head: int = 0,
    epsilon: float = WHITEN_EPSILON,
) -> RotationModel:
    """Learn the rotation/whitening basis from held-out aggregated descriptors.

    With fewer samples than dimensions the eigenbasis is recovered through
    the Gram matrix of the centered data and completed to a full orthonormal
    basis (the completion spans only zero-variance directions).
    """
    data = np.asarray(train_vectors, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] < 2:
        raise ParameterError("rotation fitting needs at least 2 training vectors")
    n, dim = data.shape
    if truncate_head >= dim:
        raise ParameterError(f"truncate_head={truncate_head} must be below input dim {dim}")
    mean = data.mean(axis=0)
    centered = data - mean
    if n > dim:
        cov = (centered.T @ centered) / (n - 1)
        eigvals, eigvecs = np.linalg.eigh(cov)
        order = np.argsort(eigvals)[::-1]
        eigvals = np.maximum(eigvals[order], 0.0)
        rotation = eigvecs[:, order].T
    else:
        # Dual route: eigenvectors of the small Gram matrix give the top
        # directions; QR of their transpose completes the orthonormal basis.
        gram = (centered @ centered.T) / (n - 1)
        gvals, gvecs = np.linalg.eigh(gram)
        order = np.argsort(gvals)[::-1]
        gvals = np.maximum(gvals[order], 0.0)
        keep = gvals > 1e-12 * max(gvals[0], 1.0) if len(gvals) else np.array([], bool)
        eigvals = np.zeros(dim)
        if np.any(keep):
            top = centered.T @ gvecs[:, order[keep]]
            top /= np.sqrt(gvals[keep] * (n - 1))
            q, _ = np.linalg.qr(top, mode="complete")
            rotation = q.T
            eigvals[: int(keep.sum())] = gvals[keep]
        else:  # all training vectors identical: any basis is an eigenbasis
            rotation = np.eye(dim)
        warnings.warn(
            f"rotation fit on {n} vectors of dimension {dim} is rank-deficient; "
            "trailing basis rows span zero-variance directions",
            DataWarning,
            stacklevel=2,
        )
    rotation = fix_eigvec_signs(rotation)
    return RotationModel(
        mean=mean,
        rotation=rotation,
        eigenvalues=eigvals,
        whiten=whiten,
        epsilon=epsilon,
        truncate_head=truncate_head,
    )


def apply_rotation(model: RotationModel, v: np.ndarray) -> np.ndarray:
    """Rotate (and whiten/truncate) a descriptor, then l2-normalize."""
    return l2_normalize(model.transform(v))


def truncate_ffaemb(v: np.ndarray, d: int) -> np.ndarray:
    """Drop the leading d*(d+1) entries of an aggregated function-approximation vector."""
    v = np.asarray(v)
    drop = d * (d + 1)
    if v.shape[0] <= drop:
        raise ContractViolation(
            f"vector of length {v.shape[0]} is too short to drop {drop} leading entries"
        )
    return v[drop:].copy()
