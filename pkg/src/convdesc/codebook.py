"""Visual vocabularies: k-means centroids and diagonal-covariance GMMs."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, DataWarning, ParameterError
from .reduce import stack_features

KMEANS_MAX_ITER = 100
KMEANS_SHIFT_TOL = 1e-4  # fraction of points allowed to change assignment
GMM_MAX_ITER = 100
GMM_LL_TOL = 1e-5  # relative log-likelihood improvement
VARIANCE_FLOOR = 1e-6


@dataclass(frozen=True)
class KmeansCodebook:
    centroids: np.ndarray
    distortion_trace: tuple[float, ...] = field(default=(), compare=False)

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]


@dataclass(frozen=True)
class GmmCodebook:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    loglik_trace: tuple[float, ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        if abs(float(self.weights.sum()) - 1.0) > 1e-6:
            raise ContractViolation("GMM weights must sum to 1")
        if np.any(self.variances < VARIANCE_FLOOR * (1 - 1e-12)):
            raise ContractViolation("GMM variances below the variance floor")

    @property
    def k(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]


def _squared_distances(data: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # (n, k) matrix of ||x - c||^2; the explicit form keeps exact ties exact.
    d2 = (
        np.sum(data * data, axis=1)[:, None]
        - 2.0 * (data @ centroids.T)
        + np.sum(centroids * centroids, axis=1)[None, :]
    )
    return np.maximum(d2, 0.0)


def _kmeans_pp_init(data: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = data.shape[0]
    centroids = np.empty((k, data.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centroids[0] = data[first]
    d2 = np.sum((data - centroids[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            probs = d2 / total
            pick = int(rng.choice(n, p=probs))
        else:  # all remaining mass on already-chosen points (duplicate data)
            pick = int(rng.integers(n))
        centroids[j] = data[pick]
        d2 = np.minimum(d2, np.sum((data - centroids[j]) ** 2, axis=1))
    return centroids


def fit_kmeans(features, k: int, seed: int) -> KmeansCodebook:
    """Lloyd's algorithm with k-means++ seeding.

    Converges when fewer than a 1e-4 fraction of points change assignment or
    after 100 iterations; an emptied cluster is reseeded to the point
    farthest from its current centroid. Deterministic for a given seed.
    """
    data = stack_features(features)
    n = data.shape[0]
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    if n < k:
        raise ParameterError(f"k-means needs at least k={k} samples, got {n}")
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp_init(data, k, rng)
    assignments = np.full(n, -1, dtype=np.int64)
    trace: list[float] = []
    for iteration in range(KMEANS_MAX_ITER):
        d2 = _squared_distances(data, centroids)
        new_assignments = np.argmin(d2, axis=1)
        point_cost = d2[np.arange(n), new_assignments]
        trace.append(float(point_cost.sum()))
        changed = int(np.sum(new_assignments != assignments))
        assignments = new_assignments
        counts = np.bincount(assignments, minlength=k)
        for empty in np.flatnonzero(counts == 0):
            farthest = int(np.argmax(point_cost))
            centroids[empty] = data[farthest]
            assignments[farthest] = empty
            point_cost[farthest] = 0.0
            counts = np.bincount(assignments, minlength=k)
        for j in range(k):
            members = assignments == j
            if np.any(members):
                centroids[j] = data[members].mean(axis=0)
        if iteration > 0 and changed < max(1, int(np.ceil(KMEANS_SHIFT_TOL * n))):
            break
    return KmeansCodebook(centroids=centroids.copy(), distortion_trace=tuple(trace))


def nearest_centroid(codebook: KmeansCodebook, x: np.ndarray) -> int:
    """Index of the nearest centroid under Euclidean distance; ties take the smallest index."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (codebook.dim,):
        raise ContractViolation(f"expected vector of length {codebook.dim}, got {x.shape}")
    d2 = np.sum((codebook.centroids - x) ** 2, axis=1)
    return int(np.argmin(d2))


def _log_gaussians(
    data: np.ndarray, weights: np.ndarray, means: np.ndarray, variances: np.ndarray
) -> np.ndarray:
    # (n, k) matrix of log(w_i) + log N(x; mu_i, diag sigma_i^2)
    log_norm = -0.5 * np.sum(np.log(2.0 * np.pi * variances), axis=1)
    diff = data[:, None, :] - means[None, :, :]
    mahalanobis = np.sum(diff * diff / variances[None, :, :], axis=2)
    return np.log(weights)[None, :] + log_norm[None, :] - 0.5 * mahalanobis


def _logsumexp(rows: np.ndarray) -> np.ndarray:
    peak = rows.max(axis=-1, keepdims=True)
    return (peak + np.log(np.sum(np.exp(rows - peak), axis=-1, keepdims=True))).squeeze(-1)


def fit_gmm(features, k: int, seed: int) -> GmmCodebook:
    """EM for a diagonal-covariance GMM, initialized from k-means (same seed path).

    Stops when the log-likelihood improves by less than 1e-5 relative or
    after 100 iterations. Variances are floored at 1e-6.
    """
    data = stack_features(features)
    n, dim = data.shape
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    if n < 2 * k:
        raise ParameterError(f"GMM with k={k} needs at least {2 * k} samples, got {n}")
    init = fit_kmeans(data, k, seed)
    d2 = _squared_distances(data, init.centroids)
    assignments = np.argmin(d2, axis=1)
    counts = np.maximum(np.bincount(assignments, minlength=k), 1)
    weights = counts / counts.sum()
    means = init.centroids.copy()
    variances = np.empty((k, dim), dtype=np.float64)
    for j in range(k):
        members = data[assignments == j]
        if len(members):
            variances[j] = np.maximum(members.var(axis=0), VARIANCE_FLOOR)
        else:
            variances[j] = np.maximum(data.var(axis=0), VARIANCE_FLOOR)

    trace: list[float] = []
    for _ in range(GMM_MAX_ITER):
        log_joint = _log_gaussians(data, weights, means, variances)
        log_evidence = _logsumexp(log_joint)
        loglik = float(log_evidence.sum())
        resp = np.exp(log_joint - log_evidence[:, None])
        if trace and loglik - trace[-1] < GMM_LL_TOL * abs(trace[-1]):
            trace.append(loglik)
            break
        trace.append(loglik)
        soft_counts = resp.sum(axis=0)
        safe = np.maximum(soft_counts, 1e-300)
        weights = soft_counts / n
        means = (resp.T @ data) / safe[:, None]
        second_moment = (resp.T @ (data * data)) / safe[:, None]
        variances = np.maximum(second_moment - means * means, VARIANCE_FLOOR)
    weights = weights / weights.sum()
    return GmmCodebook(
        weights=weights, means=means, variances=variances, loglik_trace=tuple(trace)
    )


def gmm_posteriors(codebook: GmmCodebook, x: np.ndarray) -> np.ndarray:
    """Posterior component probabilities p_i(x), computed in log-space."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (codebook.dim,):
        raise ContractViolation(f"expected vector of length {codebook.dim}, got {x.shape}")
    logp = _log_gaussians(
        x[None, :], codebook.weights, codebook.means, codebook.variances
    )[0]
    if not np.any(np.isfinite(logp)):
        warnings.warn("all mixture components underflowed; using uniform posteriors",
                      DataWarning, stacklevel=2)
        return np.full(codebook.k, 1.0 / codebook.k)
    logp = logp - logp.max()
    p = np.exp(logp)
    return p / p.sum()
