"""Verbal-confidence scoring and isotonic calibration of annotator probabilities.

Verbal verdicts are mapped to raw probabilities through a configurable
confidence scale over [0.5, 1.0]; "irrelevant" verdicts score as one minus the
mapped confidence.  Raw probabilities (numeric or mapped) can then be
calibrated against gold labels with a monotone least-squares fit, applied as a
left-closed step function.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import (
    CONFIDENCE_LEVELS,
    RELEVANT,
    Dataset,
    QueryInstance,
    RankedDoc,
    VerbalVerdict,
    canonical_confidence,
)


class CalibrationError(ValueError):
    """Raised when calibration preconditions are not met."""


DEFAULT_CONFIDENCE_SCORES = (0.5, 0.6, 0.7, 0.8, 0.9, 1.0)


@dataclass(frozen=True)
class ConfidenceScale:
    """Scores for the six verbal confidence levels, weakest to strongest.

    Scores must be strictly increasing with the first at least 0.5 and the
    last at most 1.0.  The default spaces the levels evenly over [0.5, 1.0].
    """

    scores: tuple[float, ...] = DEFAULT_CONFIDENCE_SCORES

    def __post_init__(self):
        if len(self.scores) != len(CONFIDENCE_LEVELS):
            raise CalibrationError(
                f"expected {len(CONFIDENCE_LEVELS)} scores, got {len(self.scores)}"
            )
        if any(b <= a for a, b in zip(self.scores, self.scores[1:])):
            raise CalibrationError("confidence scores must be strictly increasing")
        if self.scores[0] < 0.5 or self.scores[-1] > 1.0:
            raise CalibrationError("confidence scores must lie within [0.5, 1.0]")

    def score(self, confidence: str) -> float:
        """Score for a confidence phrase, matched case-insensitively."""
        return self.scores[CONFIDENCE_LEVELS.index(canonical_confidence(confidence))]

    def to_mapping(self) -> dict[str, float]:
        return dict(zip(CONFIDENCE_LEVELS, self.scores))

    @classmethod
    def from_mapping(cls, mapping: dict[str, float]) -> "ConfidenceScale":
        """Build a scale from a {phrase: score} mapping covering all six levels."""
        by_canon = {canonical_confidence(k): float(v) for k, v in mapping.items()}
        missing = [c for c in CONFIDENCE_LEVELS if c not in by_canon]
        if missing:
            raise CalibrationError(f"confidence scale missing levels {missing}")
        return cls(tuple(by_canon[c] for c in CONFIDENCE_LEVELS))


DEFAULT_SCALE = ConfidenceScale()


def raw_probability(verdict: VerbalVerdict, scale: ConfidenceScale = DEFAULT_SCALE) -> float:
    """Relevance probability implied by a verbal verdict.

    Relevant verdicts take the mapped confidence score directly; irrelevant
    verdicts take one minus it, so "irrelevant, Almost Certain" scores 0.0.
    """
    s = scale.score(verdict.confidence)
    return s if verdict.verdict == RELEVANT else 1.0 - s


def doc_probability(doc: RankedDoc, scale: ConfidenceScale = DEFAULT_SCALE) -> float:
    """Raw relevance probability for a document, from either annotation form."""
    if doc.prob is not None:
        return doc.prob
    return raw_probability(doc.verdict, scale)


@dataclass(frozen=True)
class CalibrationMap:
    """A monotone step function from raw to calibrated probability.

    Breakpoints are (raw, calibrated) pairs with raw values strictly
    increasing and calibrated values non-decreasing.  Application is
    left-closed: a raw value takes the calibrated value of the greatest
    breakpoint at or below it, clamping to the end values outside the fitted
    range.
    """

    breakpoints: tuple[tuple[float, float], ...]

    def __post_init__(self):
        pts = tuple((float(r), float(c)) for r, c in self.breakpoints)
        object.__setattr__(self, "breakpoints", pts)
        raws = [r for r, _ in pts]
        cals = [c for _, c in pts]
        if any(b <= a for a, b in zip(raws, raws[1:])):
            raise CalibrationError("breakpoint raw values must be strictly increasing")
        if any(b < a for a, b in zip(cals, cals[1:])):
            raise CalibrationError("calibrated values must be non-decreasing")
        if any(not 0.0 <= v <= 1.0 for v in raws + cals):
            raise CalibrationError("breakpoint values must lie in [0, 1]")

    def apply(self, raw: float) -> float:
        """Calibrated probability for one raw value in [0, 1]."""
        if not 0.0 <= raw <= 1.0:
            raise CalibrationError(f"raw probability {raw} outside [0, 1]")
        return float(self.apply_array(np.array([raw]))[0])

    def apply_array(self, raw: np.ndarray) -> np.ndarray:
        """Vectorized apply; preserves the input shape."""
        if not self.breakpoints:
            raise CalibrationError("cannot apply an empty calibration map")
        pts = np.asarray(self.breakpoints)
        idx = np.searchsorted(pts[:, 0], raw, side="right") - 1
        return pts[np.clip(idx, 0, len(pts) - 1), 1]

    def to_json_dict(self) -> dict:
        return {"breakpoints": [[r, c] for r, c in self.breakpoints]}

    @classmethod
    def from_json_dict(cls, rec: dict) -> "CalibrationMap":
        try:
            pts = rec["breakpoints"]
        except (KeyError, TypeError):
            raise CalibrationError("calibration map JSON must contain 'breakpoints'") from None
        return cls(tuple((float(r), float(c)) for r, c in pts))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "CalibrationMap":
        try:
            rec = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise CalibrationError(f"{path}: invalid calibration map JSON ({exc.msg})") from None
        return cls.from_json_dict(rec)


def _pool_adjacent_violators(targets: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weighted monotone non-decreasing least-squares fit.

    Scans left to right keeping a stack of blocks; a block whose mean drops
    below its predecessor is merged with it (weighted), repeating until the
    block means are non-decreasing.  Returns the fitted value at each point.
    """
    blocks: list[list[float]] = []  # [mean, weight, count]
    for t, w in zip(targets, weights):
        blocks.append([float(t), float(w), 1])
        while len(blocks) > 1 and blocks[-2][0] > blocks[-1][0]:
            mean2, w2, c2 = blocks.pop()
            mean1, w1, c1 = blocks.pop()
            total = w1 + w2
            blocks.append([(mean1 * w1 + mean2 * w2) / total, total, c1 + c2])
    out = np.empty(len(targets))
    pos = 0
    for mean, _, count in blocks:
        out[pos : pos + count] = mean
        pos += count
    return out


def fit_isotonic(pairs) -> CalibrationMap:
    """Fit a monotone calibration map from (raw probability, gold label) pairs.

    Pairs sharing a raw value are merged first, with weight equal to their
    count and target equal to their mean label, so the fit is invariant to
    the order ties arrive in.  Requires at least two pairs; if every pair
    carries the same label the result is a constant map and a warning is
    emitted rather than an error.
    """
    pairs = [(float(r), float(y)) for r, y in pairs]
    if len(pairs) < 2:
        raise CalibrationError(f"need at least 2 calibration pairs, got {len(pairs)}")
    raws = np.array([r for r, _ in pairs])
    labels = np.array([y for _, y in pairs])
    if np.any((raws < 0.0) | (raws > 1.0)):
        raise CalibrationError("raw probabilities must lie in [0, 1]")
    if not np.isin(labels, (0.0, 1.0)).all():
        raise CalibrationError("gold labels must be 0 or 1")
    if labels.min() == labels.max():
        warnings.warn(
            "all calibration pairs share one gold label; the fitted map is constant",
            stacklevel=2,
        )
    order = np.argsort(raws, kind="stable")
    raws, labels = raws[order], labels[order]
    unique_raws, start = np.unique(raws, return_index=True)
    counts = np.diff(np.append(start, len(raws)))
    sums = np.add.reduceat(labels, start)
    fitted = _pool_adjacent_violators(sums / counts, counts.astype(float))
    return CalibrationMap(tuple(zip(unique_raws, fitted)))


def calibration_pairs(
    dataset: Dataset, scale: ConfidenceScale = DEFAULT_SCALE
) -> list[tuple[float, int]]:
    """(raw probability, gold label) pairs from every doc of the gold split."""
    out = []
    for q in dataset.gold:
        for d in q.docs:
            out.append((doc_probability(d, scale), int(d.gold_relevant)))
    return out


def fit_calibration(dataset: Dataset, scale: ConfidenceScale = DEFAULT_SCALE) -> CalibrationMap:
    """Fit an isotonic map on the gold split of a dataset."""
    return fit_isotonic(calibration_pairs(dataset, scale))


def query_probabilities(
    query: QueryInstance,
    scale: ConfidenceScale = DEFAULT_SCALE,
    cal: CalibrationMap | None = None,
) -> np.ndarray:
    """Per-document relevance probabilities for a query, optionally calibrated."""
    raw = np.array([doc_probability(d, scale) for d in query.docs])
    if cal is None:
        return raw
    return cal.apply_array(raw)
