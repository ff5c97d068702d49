"""Descriptor index, similarity ranking, and average-precision evaluation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, ParameterError, UndefinedQueryError, ValidationError


@dataclass(frozen=True)
class DescriptorIndex:
    """Database descriptors, one l2-normalized row per id."""

    ids: tuple[str, ...]
    matrix: np.ndarray

    def __post_init__(self) -> None:
        matrix = np.asarray(self.matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != len(self.ids):
            raise ValidationError("index matrix must have one row per id")
        if len(set(self.ids)) != len(self.ids):
            raise ValidationError("index ids must be unique")
        norms = np.linalg.norm(matrix, axis=1)
        if matrix.shape[0] and np.max(np.abs(norms - 1.0)) > 1e-5:
            raise ValidationError("index rows must be l2-normalized")
        object.__setattr__(self, "matrix", matrix)

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return len(self.ids)


@dataclass(frozen=True)
class RetrievalResult:
    query_id: str
    ranked_ids: tuple[str, ...]
    similarities: tuple[float, ...]
    ap: float


def rank(index: DescriptorIndex, query: np.ndarray) -> list[tuple[str, float]]:
    """Order database ids by descending dot-product similarity.

    Equal similarities are broken by ascending id so rankings are
    reproducible.
    """
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (index.dim,):
        raise ContractViolation(f"query must have dimension {index.dim}, got {query.shape}")
    sims = index.matrix @ query
    order = sorted(range(len(index)), key=lambda i: (-sims[i], index.ids[i]))
    return [(index.ids[i], float(sims[i])) for i in order]


def average_precision(ranked_ids, positives, junk=()) -> float:
    """AP of a ranking after removing junk ids.

    Positives that never appear in the ranking count against the score (the
    divisor is the full positive count).
    """
    positives = set(positives)
    junk = set(junk)
    if positives & junk:
        raise ContractViolation("positives and junk must be disjoint")
    if not positives:
        raise UndefinedQueryError("a query needs at least one positive")
    hits = 0
    total = 0.0
    position = 0
    for image_id in ranked_ids:
        if image_id in junk:
            continue
        position += 1
        if image_id in positives:
            hits += 1
            total += hits / position
    return total / len(positives)


def mean_ap(aps) -> float:
    """Arithmetic mean of per-query average precisions."""
    aps = list(aps)
    if not aps:
        raise ParameterError("mean average precision needs at least one query")
    return float(sum(aps) / len(aps))


def evaluate_queries(
    index: DescriptorIndex,
    query_descriptors: dict[str, np.ndarray],
    queries,
) -> list[RetrievalResult]:
    """Rank every query against the index and score it under its ground truth."""
    results = []
    for q in queries:
        ranking = rank(index, query_descriptors[q.query_id])
        kept = [(i, s) for i, s in ranking if i not in set(q.junk_ids)]
        ap = average_precision([i for i, _ in ranking], q.positive_ids, q.junk_ids)
        results.append(
            RetrievalResult(
                query_id=q.query_id,
                ranked_ids=tuple(i for i, _ in kept),
                similarities=tuple(s for _, s in kept),
                ap=ap,
            )
        )
    return results
