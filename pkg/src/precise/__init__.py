"""Top-K retrieval metrics from a few gold labels and many machine annotations.

The package turns per-document relevance probabilities (numeric or verbal)
into unbiased metric estimates with confidence intervals, using a small
gold-labeled split to correct the machine annotator's systematic errors.
"""

from .calibration import (
    CalibrationError,
    CalibrationMap,
    ConfidenceScale,
    DEFAULT_SCALE,
    calibration_pairs,
    fit_calibration,
    fit_isotonic,
    query_probabilities,
)
from .data import (
    Dataset,
    DatasetError,
    QueryInstance,
    RankedDoc,
    VerbalVerdict,
    load_dataset,
    save_dataset,
    split_gold,
)
from .estimators import (
    ESTIMATOR_NAMES,
    Estimate,
    EstimatorError,
    GOLD_ONLY,
    LLM_BIN,
    LLM_PROB,
    PRECISE_PPI,
    LambdaPolicy,
    confidence_interval,
    estimate_gold,
    estimate_llm_bin,
    estimate_llm_prob,
    estimate_precise_ppi,
    per_query_stats,
    select_lambda,
)
from .experiments import (
    AnnotatorProfile,
    PROFILES,
    SamplingReport,
    TrialConfig,
    ablate_unlabeled_size,
    calibration_diagnostics,
    cost_report,
    run_resampling,
    simulate_pool,
)
from .metrics import (
    ALL_RELEVANT,
    K_MAX,
    MetricFn,
    PRECISION_AT_K,
    expected_metric,
    precision_at_k,
)

__version__ = "0.1.0"

__all__ = [
    "ALL_RELEVANT",
    "AnnotatorProfile",
    "CalibrationError",
    "CalibrationMap",
    "ConfidenceScale",
    "DEFAULT_SCALE",
    "Dataset",
    "DatasetError",
    "ESTIMATOR_NAMES",
    "Estimate",
    "EstimatorError",
    "GOLD_ONLY",
    "K_MAX",
    "LLM_BIN",
    "LLM_PROB",
    "LambdaPolicy",
    "MetricFn",
    "PRECISE_PPI",
    "PRECISION_AT_K",
    "PROFILES",
    "QueryInstance",
    "RankedDoc",
    "SamplingReport",
    "TrialConfig",
    "VerbalVerdict",
    "ablate_unlabeled_size",
    "calibration_diagnostics",
    "calibration_pairs",
    "confidence_interval",
    "cost_report",
    "estimate_gold",
    "estimate_llm_bin",
    "estimate_llm_prob",
    "estimate_precise_ppi",
    "expected_metric",
    "fit_calibration",
    "fit_isotonic",
    "load_dataset",
    "per_query_stats",
    "precision_at_k",
    "query_probabilities",
    "run_resampling",
    "save_dataset",
    "select_lambda",
    "simulate_pool",
    "split_gold",
]
