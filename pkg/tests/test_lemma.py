import numpy as np
import pytest
from numpy.testing import assert_allclose

from CycleWalk.exceptions import ConfigError
from CycleWalk.walk import (
    autodiff_positive_coefficient, false_negative_coefficient, lemma_property_run, sample_lemma_case,
)
from helpers import random_unit_rows


def test_no_true_negatives_means_no_pull(rng):
    q, u = random_unit_rows(rng, 2, 5)
    result = false_negative_coefficient(q, u, [], duplicate_count=3)
    assert result.lambda_u == 0.0
    assert result.partition == pytest.approx(4 * np.exp(u @ q))


def test_without_duplicates_matches_infonce(rng):
    q, u = random_unit_rows(rng, 2, 4)
    v = random_unit_rows(rng, 6, 4)
    result = false_negative_coefficient(q, u, v, duplicate_count=0)
    z = np.exp(u @ q) + np.exp(v @ q).sum()
    assert result.lambda_u == pytest.approx(1 - np.exp(u @ q) / z)


def test_coefficient_in_unit_interval(rng):
    for _ in range(200):
        dim = int(rng.integers(2, 6))
        q, u = random_unit_rows(rng, 2, dim)
        v = random_unit_rows(rng, int(rng.integers(1, 6)), dim)
        result = false_negative_coefficient(q, u, v, int(rng.integers(0, 6)), temperature=float(rng.uniform(0.2, 1)))
        assert 0.0 <= result.lambda_u < 1.0


def test_gradient_matches_autodiff(rng):
    q, u = random_unit_rows(rng, 2, 3)
    v = random_unit_rows(rng, 4, 3)
    exact = false_negative_coefficient(q, u, v, duplicate_count=2, temperature=0.3)
    auto_lambda, auto_grad = autodiff_positive_coefficient(q, u, v, duplicate_count=2, temperature=0.3)
    assert auto_lambda == pytest.approx(exact.lambda_u, abs=1e-12)
    assert_allclose(auto_grad, exact.analytic_grad, atol=1e-12)


def test_negative_duplicates_rejected(rng):
    q, u = random_unit_rows(rng, 2, 3)
    with pytest.raises(ConfigError):
        false_negative_coefficient(q, u, [], duplicate_count=-1)


def test_property_run_passes():
    run = lemma_property_run(draws=500, seed=3)
    assert run.draws == 500
    assert run.passed
    assert run.min_lambda >= 0.0


def test_random_cases_lie_on_the_unit_sphere(rng):
    for _ in range(100):
        case = sample_lemma_case(rng)
        assert np.linalg.norm(case.q) == pytest.approx(1.0)
        assert np.linalg.norm(case.u) == pytest.approx(1.0)
        assert_allclose(np.linalg.norm(case.v_pos, axis=1), 1.0)
        assert 0.05 <= case.temperature < 1.0
