"""Synthetic pools, seeded resampling, size ablations, costs, and diagnostics.

The harness measures estimator quality against a fully labeled pool whose mean
metric is the ground truth: each trial draws a fresh gold/unlabeled split with
a per-trial seed, runs the requested estimators, and the report summarizes
signed bias, absolute bias, and the spread of the per-trial estimates, all in
percentage points.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .calibration import (
    ConfidenceScale,
    DEFAULT_SCALE,
    fit_isotonic,
    query_probabilities,
)
from .data import (
    CONFIDENCE_LEVELS,
    GOLD,
    Dataset,
    DatasetError,
    IRRELEVANT,
    QueryInstance,
    RankedDoc,
    RELEVANT,
    VerbalVerdict,
    split_indices,
)
from .estimators import (
    DEFAULT_POLICY,
    ESTIMATOR_NAMES,
    EstimatorError,
    GOLD_ONLY,
    LLM_BIN,
    LLM_PROB,
    LambdaPolicy,
    PRECISE_PPI,
    PerQueryStats,
    estimate_precise_ppi,
    mean_estimate,
)
from .metrics import MetricFn, PRECISION_AT_K, expected_metric

def _check_dist(dist, name: str) -> None:
    if isinstance(dist, tuple):
        if len(dist) != 2 or dist[0] <= 0 or dist[1] <= 0:
            raise ValueError(f"{name}: Beta parameters must be two positive numbers, got {dist}")
    else:
        if not 0.0 <= float(dist) <= 1.0:
            raise ValueError(f"{name}: constant score must lie in [0, 1], got {dist}")


@dataclass(frozen=True)
class AnnotatorProfile:
    """Label-conditional model of a synthetic annotator's scores.

    Scores for relevant and irrelevant documents are drawn from separate Beta
    distributions (or held at a constant), shifted by ``systematic_shift``,
    and clamped to [0, 1].  With ``verbalize`` set, scores are discretized to
    verbal verdicts through the default confidence scale instead of being
    emitted as numeric probabilities.
    """

    relevant_scores: tuple[float, float] | float = (8.0, 1.5)
    irrelevant_scores: tuple[float, float] | float = (1.5, 8.0)
    systematic_shift: float = 0.0
    verbalize: bool = False

    def __post_init__(self):
        _check_dist(self.relevant_scores, "relevant_scores")
        _check_dist(self.irrelevant_scores, "irrelevant_scores")


# Presets covering the judge behaviors the estimators get exercised against:
# well separated (sonnet), moderately separated (haiku), weakly separated with
# low-scoring relevant docs (jina), symmetric around 0.5 (balanced), and
# high scores for both labels (overconfident).
PROFILES: dict[str, AnnotatorProfile] = {
    "sonnet": AnnotatorProfile((8.0, 1.5), (1.5, 8.0)),
    "haiku": AnnotatorProfile((5.0, 2.2), (1.8, 7.0)),
    "jina": AnnotatorProfile((1.2, 1.8), (1.0, 6.0)),
    "balanced": AnnotatorProfile((6.0, 4.0), (4.0, 6.0)),
    "overconfident": AnnotatorProfile((30.0, 2.5), (12.0, 12.0)),
    "perfect": AnnotatorProfile(1.0, 0.0),
}


def _draw_scores(dist, shift: float, shape, rng: np.random.Generator) -> np.ndarray:
    if isinstance(dist, tuple):
        scores = rng.beta(dist[0], dist[1], shape)
    else:
        scores = np.full(shape, float(dist))
    return np.clip(scores + shift, 0.0, 1.0)


def _verbalize(score: float, scale: ConfidenceScale = DEFAULT_SCALE) -> VerbalVerdict:
    """Nearest verbal verdict for a score: relevant at or above 0.5, else irrelevant."""
    if score >= 0.5:
        verdict, mapped = RELEVANT, score
    else:
        verdict, mapped = IRRELEVANT, 1.0 - score
    idx = int(np.argmin(np.abs(np.asarray(scale.scores) - mapped)))
    return VerbalVerdict(verdict, CONFIDENCE_LEVELS[idx])


def simulate_pool(
    num_queries: int,
    k: int,
    relevance_rate: float,
    profile: AnnotatorProfile = PROFILES["sonnet"],
    seed: int = 0,
) -> Dataset:
    """Generate a fully gold-labeled pool of synthetic queries.

    Each document's gold label is an independent Bernoulli(relevance_rate)
    draw; its annotator score comes from the profile's label-conditional
    distribution.  Deterministic for a given (arguments, seed): labels are
    drawn first, then relevant scores, then irrelevant scores.
    """
    if num_queries < 1:
        raise DatasetError(f"num_queries must be >= 1, got {num_queries}")
    if k < 1:
        raise DatasetError(f"k must be >= 1, got {k}")
    if not 0.0 <= relevance_rate <= 1.0:
        raise DatasetError(f"relevance_rate must lie in [0, 1], got {relevance_rate}")
    rng = np.random.default_rng(seed)
    labels = rng.random((num_queries, k)) < relevance_rate
    relevant = _draw_scores(profile.relevant_scores, profile.systematic_shift, (num_queries, k), rng)
    irrelevant = _draw_scores(
        profile.irrelevant_scores, profile.systematic_shift, (num_queries, k), rng
    )
    scores = np.where(labels, relevant, irrelevant)
    width = len(str(num_queries - 1))
    queries = []
    for i in range(num_queries):
        qid = f"q{i:0{width}d}"
        docs = []
        for r in range(k):
            score = float(scores[i, r])
            docs.append(
                RankedDoc(
                    doc_id=f"{qid}-d{r + 1}",
                    rank=r + 1,
                    prob=None if profile.verbalize else score,
                    verdict=_verbalize(score) if profile.verbalize else None,
                    gold_relevant=bool(labels[i, r]),
                )
            )
        queries.append(QueryInstance(query_id=qid, split=GOLD, docs=tuple(docs)))
    return Dataset(k=k, gold=queries, unlabeled=[])


@dataclass(frozen=True)
class TrialConfig:
    """Settings for one resampling run."""

    n_gold: int
    trials: int = 50
    base_seed: int = 0
    estimators: tuple[str, ...] = ESTIMATOR_NAMES
    lambda_policy: LambdaPolicy = DEFAULT_POLICY
    k: int | None = None
    level: float = 0.95
    bin_threshold: float = 0.5
    calibrate: bool = False
    scale: ConfidenceScale = DEFAULT_SCALE
    metric: MetricFn = PRECISION_AT_K
    per_query_cost_usd: float = 0.0

    def __post_init__(self):
        if self.n_gold < 2:
            raise EstimatorError(f"n_gold must be >= 2, got {self.n_gold}")
        if self.trials < 1:
            raise EstimatorError(f"trials must be >= 1, got {self.trials}")
        unknown = [e for e in self.estimators if e not in ESTIMATOR_NAMES]
        if unknown:
            raise EstimatorError(f"unknown estimators {unknown}; valid: {list(ESTIMATOR_NAMES)}")


@dataclass(frozen=True)
class EstimatorSummary:
    """Resampling summary for one estimator; bias and spread in percentage points."""

    bias: float
    abs_bias: float
    std_error: float
    estimates: tuple[float, ...]


@dataclass(frozen=True)
class SamplingReport:
    """Outcome of a resampling run against a pool with known truth."""

    truth: float
    n: int
    N: int
    trials: int
    cost_usd: float
    estimators: dict[str, EstimatorSummary]

    def to_json_dict(self) -> dict:
        return {
            "truth": self.truth,
            "n": self.n,
            "N": self.N,
            "trials": self.trials,
            "cost_usd": self.cost_usd,
            "estimators": {
                name: {
                    "bias": s.bias,
                    "abs_bias": s.abs_bias,
                    "std_error": s.std_error,
                    "estimates": list(s.estimates),
                }
                for name, s in self.estimators.items()
            },
        }

    @classmethod
    def from_json_dict(cls, rec: dict) -> "SamplingReport":
        return cls(
            truth=rec["truth"],
            n=rec["n"],
            N=rec["N"],
            trials=rec["trials"],
            cost_usd=rec["cost_usd"],
            estimators={
                name: EstimatorSummary(
                    bias=s["bias"],
                    abs_bias=s["abs_bias"],
                    std_error=s["std_error"],
                    estimates=tuple(s["estimates"]),
                )
                for name, s in rec["estimators"].items()
            },
        )

    def save_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load_json(cls, path: str | Path) -> "SamplingReport":
        return cls.from_json_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def save_csv(self, path: str | Path) -> None:
        """Per-trial estimates as rows of estimator,trial,estimate."""
        with Path(path).open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["estimator", "trial", "estimate"])
            for name, summary in self.estimators.items():
                for t, est in enumerate(summary.estimates):
                    writer.writerow([name, t, repr(est)])


def _metric_rows(metric: MetricFn, rows: np.ndarray) -> np.ndarray:
    if metric.batch is not None:
        return np.asarray(metric.batch(rows), dtype=float)
    return np.fromiter((metric.fn(r) for r in rows), dtype=float, count=rows.shape[0])


def _expected_rows(metric: MetricFn, probs: np.ndarray) -> np.ndarray:
    if metric.linear:
        return probs.mean(axis=1)
    return np.fromiter(
        (expected_metric(metric, row) for row in probs), dtype=float, count=probs.shape[0]
    )


class _Pool:
    """Pool matrices in lexicographic query_id order, computed once per run."""

    def __init__(self, pool: Dataset, cfg: TrialConfig):
        if cfg.k is not None and cfg.k != pool.k:
            raise DatasetError(f"config k={cfg.k} does not match pool k={pool.k}")
        queries = sorted(pool.queries(), key=lambda q: q.query_id)
        not_labeled = [q.query_id for q in queries if not q.fully_labeled()]
        if not_labeled:
            raise DatasetError(
                f"pool is not fully gold-labeled; first offenders: {not_labeled[:5]}"
            )
        self.size = len(queries)
        self.qids = [q.query_id for q in queries]
        self.bits = np.array([[1.0 if d.gold_relevant else 0.0 for d in q.docs] for q in queries])
        self.raw_probs = np.array([query_probabilities(q, cfg.scale) for q in queries])
        self.phi = _metric_rows(cfg.metric, self.bits)
        self.mu_raw = _expected_rows(cfg.metric, self.raw_probs)
        self.stats = [
            PerQueryStats(qid, float(mu), float(ph))
            for qid, mu, ph in zip(self.qids, self.mu_raw, self.phi)
        ]


def _trial_estimates(
    pool: _Pool, cfg: TrialConfig, gidx: np.ndarray, uidx: np.ndarray
) -> dict[str, float]:
    """Raw estimate values for one gold/unlabeled split."""
    if cfg.calibrate:
        cal = fit_isotonic(
            zip(pool.raw_probs[gidx].ravel().tolist(), pool.bits[gidx].ravel().tolist())
        )
        probs_g = cal.apply_array(pool.raw_probs[gidx])
        probs_u = cal.apply_array(pool.raw_probs[uidx])
        mu_g = _expected_rows(cfg.metric, probs_g)
        mu_u = _expected_rows(cfg.metric, probs_u)
        gold_stats = [
            PerQueryStats(pool.qids[i], float(m), float(pool.phi[i]))
            for i, m in zip(gidx, mu_g)
        ]
        unl_stats = [PerQueryStats(pool.qids[i], float(m)) for i, m in zip(uidx, mu_u)]
    else:
        probs_u = pool.raw_probs[uidx]
        gold_stats = [pool.stats[i] for i in gidx]
        unl_stats = [pool.stats[i] for i in uidx]

    out: dict[str, float] = {}
    for name in cfg.estimators:
        if name == GOLD_ONLY:
            phi_g = pool.phi[gidx]
            out[name] = mean_estimate(name, phi_g, cfg.level, n=len(gidx), N=0).value
        elif name == LLM_PROB:
            mu_vals = np.fromiter((s.mu_tilde for s in unl_stats), float, count=len(unl_stats))
            out[name] = mean_estimate(name, mu_vals, cfg.level, n=0, N=len(uidx)).value
        elif name == LLM_BIN:
            bin_rows = (probs_u >= cfg.bin_threshold).astype(float)
            values = _metric_rows(cfg.metric, bin_rows)
            out[name] = mean_estimate(name, values, cfg.level, n=0, N=len(uidx)).value
        elif name == PRECISE_PPI:
            est = estimate_precise_ppi(gold_stats, unl_stats, cfg.lambda_policy, cfg.level)
            out[name] = est.value
    return out


def run_resampling(
    pool: Dataset, cfg: TrialConfig, max_unlabeled: int | None = None
) -> SamplingReport:
    """Repeatedly split the pool and summarize each requested estimator.

    Trial t splits with seed ``cfg.base_seed + t`` through the same sampler
    as split_gold, so runs are reproducible and the gold draw for a given
    trial does not depend on ``max_unlabeled``.  When ``max_unlabeled`` is
    set, only the first that-many unlabeled queries after the split are kept.
    Biases are computed from raw estimate values.  With a single trial the
    spread is reported as 0.
    """
    matrices = _Pool(pool, cfg)
    if matrices.size < cfg.n_gold + 1:
        raise EstimatorError(
            f"pool of {matrices.size} queries cannot support n_gold={cfg.n_gold}"
            " plus a non-empty unlabeled remainder"
        )
    if max_unlabeled is not None and max_unlabeled > matrices.size - cfg.n_gold:
        raise EstimatorError(
            f"requested {max_unlabeled} unlabeled queries but only"
            f" {matrices.size - cfg.n_gold} remain after the gold split"
        )
    truth = math.fsum(matrices.phi) / matrices.size
    values: dict[str, list[float]] = {name: [] for name in cfg.estimators}
    n_unlabeled = matrices.size - cfg.n_gold if max_unlabeled is None else max_unlabeled
    for t in range(cfg.trials):
        gidx, uidx = split_indices(matrices.size, cfg.n_gold, cfg.base_seed + t)
        if max_unlabeled is not None:
            uidx = uidx[:max_unlabeled]
        for name, value in _trial_estimates(matrices, cfg, gidx, uidx).items():
            values[name].append(value)

    summaries = {}
    for name, vals in values.items():
        arr = np.array(vals)
        mean = math.fsum(arr) / arr.size
        bias = (mean - truth) * 100.0
        spread = 0.0
        if arr.size > 1:
            spread = math.sqrt(math.fsum((arr - mean) ** 2) / (arr.size - 1)) * 100.0
        summaries[name] = EstimatorSummary(
            bias=bias, abs_bias=abs(bias), std_error=spread, estimates=tuple(vals)
        )
    return SamplingReport(
        truth=truth,
        n=cfg.n_gold,
        N=n_unlabeled,
        trials=cfg.trials,
        cost_usd=cost_report(n_unlabeled, cfg.per_query_cost_usd),
        estimators=summaries,
    )


def ablate_unlabeled_size(
    pool: Dataset, cfg: TrialConfig, multipliers
) -> list[SamplingReport]:
    """Resampling runs at unlabeled sizes of multiplier * n_gold each.

    Every run reuses the same per-trial gold splits, so gold-only results are
    identical across multipliers and only the unlabeled budget varies.
    """
    ms = [int(m) for m in multipliers]
    if not ms:
        raise EstimatorError("need at least one ablation multiplier")
    bad = [m for m in ms if m < 1]
    if bad:
        raise EstimatorError(f"ablation multipliers must be >= 1, got {bad}")
    pool_size = len(pool.queries())
    reports = []
    for m in ms:
        cap = m * cfg.n_gold
        if cfg.n_gold + cap > pool_size:
            raise EstimatorError(
                f"multiplier {m} needs {cap} unlabeled queries but the pool of"
                f" {pool_size} leaves only {pool_size - cfg.n_gold} after the gold split"
            )
        reports.append(run_resampling(pool, cfg, max_unlabeled=cap))
    return reports


def cost_report(num_queries: int, per_query_cost_usd: float) -> float:
    """Annotation cost of scoring num_queries at the configured per-query rate."""
    if num_queries < 0:
        raise ValueError(f"num_queries must be >= 0, got {num_queries}")
    if per_query_cost_usd < 0:
        raise ValueError(f"per_query_cost_usd must be >= 0, got {per_query_cost_usd}")
    return num_queries * per_query_cost_usd


@dataclass(frozen=True)
class CalibrationDiagnostics:
    """Label-split histogram of raw annotator scores plus separation fractions.

    ``bins`` rows are (lo, hi, tp_count, tn_count) with left-closed bins; the
    last bin also includes its right edge so a score of 1.0 is counted.
    ``frac_positive_high`` is the fraction of relevant docs scoring >= 0.5 and
    ``frac_negative_low`` the fraction of irrelevant docs scoring <= 0.4; each
    is None when its label class is empty.
    """

    bin_width: float
    bins: tuple[tuple[float, float, int, int], ...]
    frac_positive_high: float | None
    frac_negative_low: float | None
    n_pairs: int

    def to_json_dict(self) -> dict:
        return {
            "bin_width": self.bin_width,
            "bins": [list(b) for b in self.bins],
            "frac_positive_high": self.frac_positive_high,
            "frac_negative_low": self.frac_negative_low,
            "n_pairs": self.n_pairs,
        }

    def save_csv(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["bin_lo", "bin_hi", "tp_count", "tn_count"])
            for lo, hi, tp, tn in self.bins:
                writer.writerow([repr(lo), repr(hi), tp, tn])


def calibration_diagnostics(pairs, bin_width: float = 0.1) -> CalibrationDiagnostics:
    """Histogram (raw score, gold label) pairs into label-split score bins.

    Bin edges sit at multiples of bin_width and cover [0, 1]; the hi edge of
    the last bin may exceed 1 when the width does not divide it evenly.
    """
    if not 0.0 < bin_width <= 1.0:
        raise ValueError(f"bin_width must lie in (0, 1], got {bin_width}")
    pairs = [(float(r), int(y)) for r, y in pairs]
    if not pairs:
        raise ValueError("need at least one (score, label) pair")
    scores = np.array([r for r, _ in pairs])
    labels = np.array([y for _, y in pairs])
    if np.any((scores < 0.0) | (scores > 1.0)):
        raise ValueError("scores must lie in [0, 1]")
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    n_bins = math.ceil(round(1.0 / bin_width, 9))
    # The small offset keeps scores written as exact edge multiples (0.3 with
    # width 0.1) in their left-closed bin despite binary rounding of the ratio.
    idx = np.minimum(np.floor(scores / bin_width + 1e-9).astype(int), n_bins - 1)
    bins = []
    for b in range(n_bins):
        sel = idx == b
        bins.append(
            (
                b * bin_width,
                (b + 1) * bin_width,
                int(np.count_nonzero(sel & (labels == 1))),
                int(np.count_nonzero(sel & (labels == 0))),
            )
        )
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    return CalibrationDiagnostics(
        bin_width=bin_width,
        bins=tuple(bins),
        frac_positive_high=float((pos >= 0.5).mean()) if pos.size else None,
        frac_negative_low=float((neg <= 0.4).mean()) if neg.size else None,
        n_pairs=len(pairs),
    )
