"""Per-feature embeddings into a high-dimensional space.

Each embedding maps one local feature x to phi(x) so that any aggregation
can be applied afterwards; in particular summing the per-feature outputs
reproduces the classic one-shot Fisher Vector and VLAD constructions.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .codebook import GmmCodebook, KmeansCodebook, gmm_posteriors, nearest_centroid
from .errors import ContractViolation, DataWarning
from .masking import FeatureSet

FFAEMB_DEFAULT_M = 5
FFAEMB_DEFAULT_MU = 1e-4
_ZERO_NORM = 1e-12


class EmbeddingMethod(str, Enum):
    FV = "fv"
    VLAD = "vlad"
    TEMB = "temb"
    FFAEMB = "ffaemb"


@dataclass(frozen=True)
class EmbeddedSet:
    """Embedded local descriptors, one row per input feature."""

    vectors: np.ndarray
    method: EmbeddingMethod

    def __post_init__(self) -> None:
        vectors = np.asarray(self.vectors, dtype=np.float64)
        if vectors.ndim != 2:
            raise ContractViolation("embedded vectors must form a 2-D array")
        if not np.all(np.isfinite(vectors)):
            raise ContractViolation("embedded vectors contain non-finite values")
        object.__setattr__(self, "vectors", vectors)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return self.vectors.shape[0]


def embed_fv(gmm: GmmCodebook, x: np.ndarray) -> np.ndarray:
    """Fisher Vector contribution of one feature: first- then second-order blocks.

    Layout is all k first-order blocks u_i followed by all k second-order
    blocks v_i, each of length d, giving 2*k*d values.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (gmm.dim,):
        raise ContractViolation(f"expected vector of length {gmm.dim}, got {x.shape}")
    posteriors = gmm_posteriors(gmm, x)
    sigma = np.sqrt(gmm.variances)
    z = (x[None, :] - gmm.means) / sigma
    u = (posteriors / np.sqrt(gmm.weights))[:, None] * z
    v = (posteriors / np.sqrt(2.0 * gmm.weights))[:, None] * (z * z - 1.0)
    return np.concatenate([u.ravel(), v.ravel()])


def embed_vlad(codebook: KmeansCodebook, x: np.ndarray) -> np.ndarray:
    """VLAD contribution: the residual to the nearest centroid, zeros elsewhere."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (codebook.dim,):
        raise ContractViolation(f"expected vector of length {codebook.dim}, got {x.shape}")
    out = np.zeros(codebook.k * codebook.dim, dtype=np.float64)
    j = nearest_centroid(codebook, x)
    out[j * codebook.dim : (j + 1) * codebook.dim] = x - codebook.centroids[j]
    return out


def embed_temb(codebook: KmeansCodebook, x: np.ndarray) -> np.ndarray:
    """Triangulation embedding: unit residual direction towards every centroid."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (codebook.dim,):
        raise ContractViolation(f"expected vector of length {codebook.dim}, got {x.shape}")
    residuals = x[None, :] - codebook.centroids
    norms = np.linalg.norm(residuals, axis=1, keepdims=True)
    scale = np.where(norms > _ZERO_NORM, norms, np.inf)  # zero residual -> zero block
    return (residuals / scale).ravel()


def flatten_outer(matrix: np.ndarray) -> np.ndarray:
    """Flatten a symmetric matrix to its upper triangle, off-diagonal scaled by sqrt(2).

    The scaling makes the flattening inner-product preserving:
    <flatten(A), flatten(B)> equals the Frobenius inner product of A and B.
    """
    d = matrix.shape[0]
    iu = np.triu_indices(d)
    out = matrix[iu].copy()
    out[iu[0] != iu[1]] *= np.sqrt(2.0)
    return out


def local_coding_coefficients(
    centroids: np.ndarray, x: np.ndarray, m: int, mu: float
) -> tuple[np.ndarray, np.ndarray]:
    """Locality-constrained coding weights over the m nearest centroids.

    Solves min ||x - sum_i g_i c_i||^2 + mu*||g||^2 subject to sum_i g_i = 1
    on the support; returns (support indices, weights). A singular system
    falls back to uniform weights with a warning.
    """
    d2 = np.sum((centroids - x) ** 2, axis=1)
    support = np.argsort(d2, kind="stable")[:m]
    shifted = centroids[support] - x  # rows z_i = c_i - x
    gram = shifted @ shifted.T
    system = gram + mu * np.eye(m)
    try:
        y = np.linalg.solve(system, np.ones(m))
    except np.linalg.LinAlgError:
        y = None
    if y is None or not np.all(np.isfinite(y)) or abs(y.sum()) < _ZERO_NORM:
        warnings.warn("singular local coding system; using uniform coefficients",
                      DataWarning, stacklevel=2)
        return support, np.full(m, 1.0 / m)
    return support, y / y.sum()


def embed_ffaemb(
    codebook: KmeansCodebook,
    x: np.ndarray,
    m: int = FFAEMB_DEFAULT_M,
    mu: float = FFAEMB_DEFAULT_MU,
) -> np.ndarray:
    """Function-approximation embedding: coefficient-weighted flattened residual outer products."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (codebook.dim,):
        raise ContractViolation(f"expected vector of length {codebook.dim}, got {x.shape}")
    if not 1 <= m <= codebook.k:
        raise ContractViolation(f"support size m={m} must lie in [1, k={codebook.k}]")
    d = codebook.dim
    block = d * (d + 1) // 2
    out = np.zeros(codebook.k * block, dtype=np.float64)
    support, gamma = local_coding_coefficients(codebook.centroids, x, m, mu)
    for idx, g in zip(support, gamma):
        residual = x - codebook.centroids[idx]
        out[idx * block : (idx + 1) * block] = g * flatten_outer(np.outer(residual, residual))
    return out


def embedding_dim(method: EmbeddingMethod, d: int, k: int) -> int:
    """Embedded dimensionality before any aggregation or truncation."""
    if method is EmbeddingMethod.FV:
        return 2 * k * d
    if method is EmbeddingMethod.FFAEMB:
        return k * d * (d + 1) // 2
    return k * d


def embed_features(
    codebook: KmeansCodebook | GmmCodebook,
    features: FeatureSet,
    method: EmbeddingMethod,
    m: int = FFAEMB_DEFAULT_M,
    mu: float = FFAEMB_DEFAULT_MU,
) -> EmbeddedSet:
    """Embed every feature of a set, preserving order."""
    if method is EmbeddingMethod.FV:
        if not isinstance(codebook, GmmCodebook):
            raise ContractViolation("FV embedding requires a GMM codebook")
        rows = [embed_fv(codebook, x) for x in features.vectors]
    else:
        if not isinstance(codebook, KmeansCodebook):
            raise ContractViolation(f"{method.value} embedding requires a k-means codebook")
        if method is EmbeddingMethod.VLAD:
            rows = [embed_vlad(codebook, x) for x in features.vectors]
        elif method is EmbeddingMethod.TEMB:
            rows = [embed_temb(codebook, x) for x in features.vectors]
        else:
            rows = [embed_ffaemb(codebook, x, m=m, mu=mu) for x in features.vectors]
    if rows:
        vectors = np.vstack(rows)
    else:
        vectors = np.empty((0, embedding_dim(method, codebook.dim, codebook.k)))
    return EmbeddedSet(vectors=vectors, method=method)
