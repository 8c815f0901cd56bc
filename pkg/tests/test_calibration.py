import itertools
import math

import numpy as np
import pytest

from precise.calibration import (
    CalibrationError,
    CalibrationMap,
    ConfidenceScale,
    DEFAULT_SCALE,
    calibration_pairs,
    doc_probability,
    fit_calibration,
    fit_isotonic,
    query_probabilities,
    raw_probability,
)
from precise.data import RankedDoc, VerbalVerdict

from conftest import toy_dataset


def monotone_lsq_oracle(raws, labels):
    """Brute-force weighted monotone least squares over contiguous partitions.

    Ties are merged first, mirroring the fit.  Every way of cutting the
    sorted unique raws into blocks is scored (block level = weighted mean of
    its labels); candidates with decreasing levels are infeasible and
    skipped.  Returns the fitted value at each unique raw.
    """
    raws = np.asarray(raws, dtype=float)
    labels = np.asarray(labels, dtype=float)
    order = np.argsort(raws, kind="stable")
    raws, labels = raws[order], labels[order]
    uniq, start = np.unique(raws, return_index=True)
    counts = np.diff(np.append(start, len(raws))).astype(float)
    means = np.add.reduceat(labels, start) / counts
    m = len(uniq)
    best, best_sse = None, math.inf
    for cuts in itertools.product((0, 1), repeat=m - 1):
        bounds = [0] + [i + 1 for i, c in enumerate(cuts) if c] + [m]
        levels = []
        for lo, hi in zip(bounds, bounds[1:]):
            w = counts[lo:hi]
            levels.append(float(np.sum(w * means[lo:hi]) / np.sum(w)))
        if any(levels[i] > levels[i + 1] for i in range(len(levels) - 1)):
            continue
        fitted = np.concatenate(
            [np.full(hi - lo, lev) for (lo, hi), lev in zip(zip(bounds, bounds[1:]), levels)]
        )
        sse = float(np.sum(counts * (means - fitted) ** 2))
        if sse < best_sse - 1e-15:
            best, best_sse = fitted, sse
    return uniq, best


def test_scale_requires_increasing_scores():
    with pytest.raises(CalibrationError):
        ConfidenceScale(scores=(0.5, 0.6, 0.6, 0.8, 0.9, 1.0))
    with pytest.raises(CalibrationError):
        ConfidenceScale(scores=(0.4, 0.6, 0.7, 0.8, 0.9, 1.0))


def test_scale_mapping_roundtrip():
    mapping = DEFAULT_SCALE.to_mapping()
    assert mapping["Almost Certain"] == 1.0
    assert ConfidenceScale.from_mapping(mapping) == DEFAULT_SCALE
    with pytest.raises(CalibrationError):
        ConfidenceScale.from_mapping({"Probably": 0.7})


def test_raw_probability_flips_for_irrelevant():
    assert raw_probability(VerbalVerdict("relevant", "Probably")) == 0.7
    assert raw_probability(VerbalVerdict("irrelevant", "Probably")) == pytest.approx(0.3)
    assert raw_probability(VerbalVerdict("irrelevant", "About Even")) == 0.5


def test_doc_probability_prefers_numeric():
    assert doc_probability(RankedDoc(doc_id="d", rank=1, prob=0.42)) == 0.42
    doc = RankedDoc(doc_id="d", rank=1, verdict=VerbalVerdict("relevant", "Highly Likely"))
    assert doc_probability(doc) == 0.9


def test_fit_on_monotone_data_keeps_means():
    pairs = [(0.1, 0), (0.2, 0), (0.6, 1), (0.9, 1)]
    cal = fit_isotonic(pairs)
    assert cal.apply(0.1) == 0.0
    assert cal.apply(0.9) == 1.0


def test_fit_pools_violations():
    # classic single-violation case: the middle two points merge to 0.5
    pairs = [(0.1, 0.0), (0.4, 1.0), (0.6, 0.0), (0.9, 1.0)]
    cal = fit_isotonic(pairs)
    assert cal.apply(0.4) == pytest.approx(0.5)
    assert cal.apply(0.6) == pytest.approx(0.5)
    assert cal.apply(0.1) == 0.0


def test_ties_merge_before_fitting():
    pairs = [(0.5, 1), (0.5, 0), (0.5, 1), (0.8, 1)]
    cal = fit_isotonic(pairs)
    assert cal.apply(0.5) == pytest.approx(2 / 3)
    assert len(cal.breakpoints) == 2


@pytest.mark.filterwarnings("ignore:all calibration pairs")
def test_fit_matches_partition_oracle():
    rng = np.random.default_rng(42)
    for _ in range(60):
        m = rng.integers(2, 9)
        raws = np.round(rng.random(m), 2)
        labels = (rng.random(m) < 0.5).astype(float)
        uniq, expected = monotone_lsq_oracle(raws, labels)
        cal = fit_isotonic(list(zip(raws, labels)))
        got = cal.apply_array(uniq)
        np.testing.assert_allclose(got, expected, atol=1e-9)


def test_single_label_warns_and_fits_constant():
    with pytest.warns(UserWarning, match="one gold label"):
        cal = fit_isotonic([(0.2, 1), (0.7, 1)])
    assert cal.apply(0.0) == 1.0
    assert cal.apply(1.0) == 1.0


def test_too_few_pairs_rejected():
    with pytest.raises(CalibrationError, match="at least 2"):
        fit_isotonic([(0.5, 1)])


def test_out_of_range_inputs_rejected():
    with pytest.raises(CalibrationError):
        fit_isotonic([(1.2, 1), (0.5, 0)])
    with pytest.raises(CalibrationError):
        fit_isotonic([(0.2, 0.5), (0.5, 0)])


def test_apply_is_a_left_closed_step():
    cal = CalibrationMap(breakpoints=((0.2, 0.1), (0.6, 0.7)))
    assert cal.apply(0.0) == 0.1  # below the first knot clamps
    assert cal.apply(0.2) == 0.1
    assert cal.apply(0.59) == 0.1
    assert cal.apply(0.6) == 0.7
    assert cal.apply(1.0) == 0.7
    arr = np.array([0.0, 0.2, 0.59, 0.6, 1.0])
    np.testing.assert_array_equal(cal.apply_array(arr), [0.1, 0.1, 0.1, 0.7, 0.7])


def test_map_validation():
    with pytest.raises(CalibrationError):
        CalibrationMap(breakpoints=((0.6, 0.2), (0.2, 0.4)))
    with pytest.raises(CalibrationError):
        CalibrationMap(breakpoints=((0.2, 0.8), (0.6, 0.4)))


def test_map_json_and_file_roundtrip(tmp_path):
    cal = CalibrationMap(breakpoints=((0.25, 0.0), (0.75, 1.0)))
    assert CalibrationMap.from_json_dict(cal.to_json_dict()) == cal
    path = tmp_path / "map.json"
    cal.save(path)
    assert CalibrationMap.load(path) == cal


def test_calibration_pairs_and_query_probabilities():
    ds = toy_dataset(gold=[([0.9, 0.1], [1, 0])], unlabeled=[[0.5, 0.5]], k=2)
    pairs = calibration_pairs(ds)
    assert pairs == [(0.9, 1), (0.1, 0)]
    cal = fit_calibration(ds)
    raw = query_probabilities(ds.gold[0])
    np.testing.assert_array_equal(raw, [0.9, 0.1])
    mapped = query_probabilities(ds.gold[0], cal=cal)
    np.testing.assert_array_equal(mapped, [1.0, 0.0])
