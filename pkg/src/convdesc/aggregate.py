"""Pooling an embedded set into a single vector: sum, avg, max, or democratic."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .embed import EmbeddedSet
from .errors import DegenerateDataError, EmptyInputError, ParameterError

DEMOCRATIC_TARGET = 1.0
DEMOCRATIC_EPS = 1e-10
DEMOCRATIC_TOL = 1e-6
DEMOCRATIC_DEFAULT_ITERS = 10


class PoolMode(str, Enum):
    SUM = "sum"
    AVG = "avg"
    MAX = "max"
    DEMOCRATIC = "democratic"


@dataclass(frozen=True)
class DemocraticSolution:
    """Per-feature weights balancing each feature's kernel contribution."""

    weights: np.ndarray
    target: float
    residual: float
    iterations: int


def _canonical_order(vectors: np.ndarray) -> np.ndarray:
    # Democratic weights must be exactly equivariant under input permutation,
    # but BLAS reductions are not bit-stable under row reordering. Solving in
    # a canonical row order (sorted by raw bytes; bit-identical rows are
    # interchangeable) makes every float operation independent of the caller's
    # ordering.
    rows = np.ascontiguousarray(vectors)
    return np.array(
        sorted(range(len(rows)), key=lambda i: rows[i].tobytes()), dtype=np.intp
    )


def _balance_weights(kernel: np.ndarray, max_iter: int) -> tuple[np.ndarray, float, int]:
    n = kernel.shape[0]
    lam = np.ones(n, dtype=np.float64)
    iterations = 0
    contributions = lam * (kernel @ lam)
    for _ in range(max_iter):
        residual = float(np.max(np.abs(contributions - DEMOCRATIC_TARGET)))
        if residual < DEMOCRATIC_TOL:
            break
        positive = contributions > 0
        scale = np.sqrt(np.maximum(contributions, DEMOCRATIC_EPS) / DEMOCRATIC_TARGET)
        lam = np.where(positive, lam / scale, lam)
        iterations += 1
        contributions = lam * (kernel @ lam)
    residual = float(np.max(np.abs(contributions - DEMOCRATIC_TARGET)))
    return lam, residual, iterations


def pool(embedded: EmbeddedSet, mode: PoolMode | str) -> np.ndarray:
    """Elementwise sum, mean, or max over the embedded vectors."""
    mode = PoolMode(mode)
    if len(embedded) == 0:
        raise EmptyInputError("cannot pool an empty embedded set")
    if mode is PoolMode.SUM:
        return embedded.vectors.sum(axis=0)
    if mode is PoolMode.AVG:
        return embedded.vectors.mean(axis=0)
    if mode is PoolMode.MAX:
        return embedded.vectors.max(axis=0)
    if mode is PoolMode.DEMOCRATIC:
        return pool_democratic(embedded)
    raise ParameterError(f"unknown pool mode {mode!r}")


def _solve_canonical(embedded: EmbeddedSet, max_iter: int):
    if len(embedded) == 0:
        raise EmptyInputError("cannot weight an empty embedded set")
    if max_iter < 0:
        raise ParameterError("max_iter must be >= 0")
    order = _canonical_order(embedded.vectors)
    vectors = embedded.vectors[order]
    kernel = vectors @ vectors.T
    if not np.any(np.diag(kernel) > 0):
        raise DegenerateDataError("all embedded vectors are zero")
    lam, residual, iterations = _balance_weights(kernel, max_iter)
    return order, vectors, lam, residual, iterations


def democratic_weights(
    embedded: EmbeddedSet, max_iter: int = DEMOCRATIC_DEFAULT_ITERS
) -> DemocraticSolution:
    """Balance per-feature kernel contributions by symmetric Sinkhorn scaling.

    Finds positive lambda with lambda_i * (K lambda)_i ~= 1 for the Gram
    matrix K of the embedded vectors. Updates skip any entry whose current
    contribution is non-positive; stops after ``max_iter`` updates or once
    the worst contribution error drops below 1e-6.
    """
    order, _, lam, residual, iterations = _solve_canonical(embedded, max_iter)
    weights = np.empty_like(lam)
    weights[order] = lam
    return DemocraticSolution(
        weights=weights, target=DEMOCRATIC_TARGET, residual=residual, iterations=iterations
    )


def pool_democratic(
    embedded: EmbeddedSet, max_iter: int = DEMOCRATIC_DEFAULT_ITERS
) -> np.ndarray:
    """Weighted sum of the embedded vectors under democratic weights."""
    _, vectors, lam, _, _ = _solve_canonical(embedded, max_iter)
    return lam @ vectors
