"""Top-K set metrics on binary relevance vectors and their expectations.

A metric maps a length-K 0/1 relevance vector to [0, 1].  Given independent
per-document relevance probabilities, the expected metric value is the sum of
metric(y) * P(y) over all 2^K binary vectors; for linear metrics such as
precision over the retrieved K this collapses to the mean probability.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

# Enumeration guard: beyond this many documents the 2^K sweep is refused.
K_MAX = 20


def _check_bits(y: np.ndarray) -> None:
    if y.ndim != 1 or y.size == 0:
        raise ValueError("relevance vector must be a non-empty 1-D sequence")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("relevance vector entries must be 0 or 1")


def _check_probs(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("probabilities must be a non-empty 1-D sequence")
    if np.any((p < 0.0) | (p > 1.0)):
        raise ValueError("probabilities must lie in [0, 1]")
    return p


def precision_at_k(y) -> float:
    """Fraction of the K retrieved documents that are relevant: sum(y) / K."""
    y = np.asarray(y)
    _check_bits(y)
    return float(y.mean())


@dataclass(frozen=True)
class MetricFn:
    """A named metric over binary relevance vectors.

    ``linear`` marks metrics whose expectation reduces to the mean probability.
    ``batch``, when given, evaluates a (rows, K) matrix of vectors in one call
    and exists purely to keep enumeration fast.
    """

    name: str
    fn: Callable[[np.ndarray], float]
    linear: bool = False
    batch: Callable[[np.ndarray], np.ndarray] | None = None

    def __call__(self, y) -> float:
        return self.fn(np.asarray(y))


PRECISION_AT_K = MetricFn(
    name="precision_at_k",
    fn=precision_at_k,
    linear=True,
    batch=lambda rows: rows.mean(axis=1),
)

# Nonlinear example metric: 1 only when every retrieved doc is relevant.
ALL_RELEVANT = MetricFn(
    name="all_relevant",
    fn=lambda y: float(np.asarray(y).min()),
    batch=lambda rows: rows.min(axis=1).astype(float),
)


@lru_cache(maxsize=4)
def all_binary_vectors(k: int) -> np.ndarray:
    """All 2^k binary vectors as a (2^k, k) uint8 array; row i has bit j = (i >> j) & 1."""
    if not 1 <= k <= K_MAX:
        raise ValueError(f"k must be in 1..{K_MAX}, got {k}")
    idx = np.arange(2**k, dtype=np.int64)
    return ((idx[:, None] >> np.arange(k)) & 1).astype(np.uint8)


def vector_probability(p, y) -> float:
    """Probability of one binary vector under independent Bernoulli(p_j) relevance draws."""
    p = _check_probs(p)
    y = np.asarray(y)
    _check_bits(y)
    if y.size != p.size:
        raise ValueError(f"length mismatch: {p.size} probabilities vs {y.size} bits")
    return float(np.prod(np.where(y == 1, p, 1.0 - p)))


def vector_probabilities(p) -> np.ndarray:
    """Mass of every vector in all_binary_vectors(len(p)) row order.

    Built by doubling: each document multiplies the existing masses by
    (1 - p_j) and p_j, so the whole table costs O(2^K) instead of O(K 2^K).
    """
    p = _check_probs(p)
    if p.size > K_MAX:
        raise ValueError(f"K={p.size} exceeds K_MAX={K_MAX}")
    mass = np.ones(1)
    for pj in p:
        mass = np.concatenate([mass * (1.0 - pj), mass * pj])
    return mass


def expected_metric_enumerate(metric: MetricFn, p) -> float:
    """Expected metric value by exhaustive enumeration of all 2^K relevance vectors.

    Refuses K > K_MAX; callers with a closed form (see expected_metric_linear)
    should use it instead of enumerating.
    """
    p = _check_probs(p)
    k = p.size
    if k > K_MAX:
        raise ValueError(
            f"K={k} exceeds K_MAX={K_MAX}: enumeration over 2^K vectors is intractable,"
            " use a closed form"
        )
    rows = all_binary_vectors(k)
    mass = vector_probabilities(p)
    if metric.batch is not None:
        values = np.asarray(metric.batch(rows), dtype=float)
    else:
        values = np.fromiter((metric.fn(row) for row in rows), dtype=float, count=rows.shape[0])
    # np.sum reduces pairwise, which keeps accumulated rounding well below 1e-10.
    return float(np.sum(values * mass))


def expected_metric_linear(p) -> float:
    """Closed form for linear metrics: the mean per-document probability."""
    p = _check_probs(p)
    return float(p.mean())


def expected_metric(metric: MetricFn, p) -> float:
    """Expectation dispatcher: closed form for linear metrics, enumeration otherwise."""
    if metric.linear:
        return expected_metric_linear(p)
    return expected_metric_enumerate(metric, p)
