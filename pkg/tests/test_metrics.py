import itertools
import math

import numpy as np
import pytest

from precise.metrics import (
    ALL_RELEVANT,
    K_MAX,
    MetricFn,
    PRECISION_AT_K,
    all_binary_vectors,
    expected_metric,
    expected_metric_enumerate,
    expected_metric_linear,
    precision_at_k,
    vector_probabilities,
    vector_probability,
)


def test_precision_at_k_counts_relevant_fraction():
    assert precision_at_k(np.array([1.0, 0.0, 1.0, 1.0])) == 0.75
    assert precision_at_k(np.array([0.0])) == 0.0
    assert PRECISION_AT_K(np.array([1.0, 1.0])) == 1.0


def test_all_binary_vectors_enumerates_every_pattern():
    rows = all_binary_vectors(3)
    assert rows.shape == (8, 3)
    seen = {tuple(r) for r in rows.tolist()}
    assert len(seen) == 8
    # row index encodes the pattern bitwise
    assert rows[5].tolist() == [1, 0, 1]


def test_vector_probabilities_match_scalar_and_sum_to_one():
    rng = np.random.default_rng(0)
    p = rng.random(4)
    mass = vector_probabilities(p)
    rows = all_binary_vectors(4)
    for i in range(16):
        assert mass[i] == pytest.approx(vector_probability(p, rows[i]), abs=1e-15)
    assert math.fsum(mass) == pytest.approx(1.0, abs=1e-12)


def test_enumeration_agrees_with_brute_force_product():
    """independent check against an itertools enumeration, nonlinear metric"""
    rng = np.random.default_rng(7)
    p = rng.random(3)
    expected = 0.0
    for bits in itertools.product((0, 1), repeat=3):
        y = np.array(bits, dtype=float)
        weight = np.prod([pj if b else 1 - pj for pj, b in zip(p, bits)])
        expected += ALL_RELEVANT.fn(y) * weight
    got = expected_metric_enumerate(ALL_RELEVANT, p)
    assert got == pytest.approx(expected, abs=1e-12)
    # all-relevant has the closed form prod(p)
    assert got == pytest.approx(float(np.prod(p)), abs=1e-12)


def test_linear_metric_collapses_to_mean():
    rng = np.random.default_rng(3)
    for k in (1, 2, 5, 11):
        p = rng.random(k)
        assert expected_metric_enumerate(PRECISION_AT_K, p) == pytest.approx(
            float(p.mean()), abs=1e-10
        )
        assert expected_metric_linear(p) == pytest.approx(float(p.mean()), abs=1e-15)


def test_expected_metric_dispatches_on_linearity():
    p = np.array([0.2, 0.9])
    assert expected_metric(PRECISION_AT_K, p) == expected_metric_linear(p)
    assert expected_metric(ALL_RELEVANT, p) == expected_metric_enumerate(ALL_RELEVANT, p)


def test_enumeration_guard_above_k_max():
    nonlinear = MetricFn(name="max", fn=lambda y: float(y.max()))
    with pytest.raises(ValueError, match=str(K_MAX)):
        expected_metric_enumerate(nonlinear, np.full(K_MAX + 1, 0.5))


def test_degenerate_probabilities_pick_single_vector():
    p = np.array([1.0, 0.0, 1.0])
    mass = vector_probabilities(p)
    assert mass[0b101] == 1.0
    assert math.fsum(mass) == 1.0
    assert expected_metric_enumerate(PRECISION_AT_K, p) == pytest.approx(2 / 3, abs=1e-15)
