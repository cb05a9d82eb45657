import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from models.errors import DegenerateSampleError, SpecValidationError

CLOSED_FORMS = {
    'uniform': (lambda rng, n: rng.uniform(0.0, 1.0, n), 0.0),
    'gaussian': (lambda rng, n: rng.normal(0.0, 1.0, n), 0.5 * math.log(2 * math.pi * math.e)),
    'exponential': (lambda rng, n: rng.exponential(0.5, n), 1 - math.log(2)),
}


def test_plugin_estimate_of_balanced_sample(estimator):
    result = estimator.plugin_discrete_entropy(['a', 'a', 'b', 'b'])
    assert result.value == pytest.approx(math.log(2))
    assert result.standard_error == pytest.approx(0.0, abs=1e-12)
    assert result.method == 'plug-in'
    assert result.n == 4


def test_plugin_estimate_needs_samples(estimator):
    with pytest.raises(ValueError):
        estimator.plugin_discrete_entropy([])


@pytest.mark.parametrize("family", sorted(CLOSED_FORMS))
def test_nearest_neighbour_estimate_matches_closed_form(estimator, family):
    draw, expected = CLOSED_FORMS[family]
    result = estimator.nn_differential_entropy(draw(np.random.default_rng(17), 20_000), seed=17)
    assert result.method == 'nearest-neighbor'
    assert result.k == 3
    assert result.resamples == 200
    assert abs(result.value - expected) <= 4 * result.standard_error


def test_estimate_is_reproducible(estimator, rng):
    samples = rng.normal(size=2000)
    first = estimator.nn_differential_entropy(samples, seed=5)
    second = estimator.nn_differential_entropy(samples, seed=5)
    assert first == second


def test_ties_are_jittered_and_recorded(estimator):
    samples = np.concatenate([np.linspace(0.0, 1.0, 500), [0.25, 0.25, 0.75, 0.75]])
    result = estimator.nn_differential_entropy(samples, seed=1)
    assert result.jittered == 4
    assert math.isfinite(result.value)


def test_constant_sample_is_degenerate(estimator):
    with pytest.raises(DegenerateSampleError):
        estimator.nn_differential_entropy([1.0] * 10)


def test_too_few_samples_for_the_neighbour_order(estimator):
    with pytest.raises(ValueError):
        estimator.nn_differential_entropy([0.1, 0.2, 0.3], k=3)


def test_load_samples_skips_header_and_comments(estimator, tmp_path):
    target = tmp_path / "samples.csv"
    target.write_text("value\n# drawn by hand\n0.5\n1.5\n\n2.5\n")
    assert estimator.load_samples(str(target)) == [0.5, 1.5, 2.5]


def test_load_samples_reports_the_bad_line(estimator, tmp_path):
    target = tmp_path / "samples.csv"
    target.write_text("value\n1.0\n2.0\noops\n")
    with pytest.raises(SpecValidationError) as info:
        estimator.load_samples(str(target))
    assert info.value.line == 4
    assert info.value.field == 'samples'


def test_load_discrete_samples(estimator, tmp_path):
    target = tmp_path / "coins.txt"
    target.write_text("H\nT\nH\n")
    assert estimator.load_samples(str(target), discrete=True) == ['H', 'T', 'H']


def test_load_samples_from_empty_file(estimator, tmp_path):
    target = tmp_path / "empty.csv"
    target.write_text("")
    with pytest.raises(SpecValidationError):
        estimator.load_samples(str(target))


@pytest.mark.slow
@pytest.mark.parametrize("family", sorted(CLOSED_FORMS))
def test_nearest_neighbour_coverage_over_seeds(estimator, family):
    draw, expected = CLOSED_FORMS[family]
    covered = 0
    for seed in range(100):
        result = estimator.nn_differential_entropy(draw(np.random.default_rng(seed), 100_000), seed=seed)
        covered += abs(result.value - expected) <= 4 * result.standard_error
    assert covered >= 95


@settings(max_examples=20, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(offset=st.floats(min_value=-100.0, max_value=100.0))
def test_nearest_neighbour_estimate_ignores_a_shift(estimator, offset):
    samples = np.random.default_rng(23).normal(size=2000)
    base = estimator.nn_differential_entropy(samples, seed=4)
    moved = estimator.nn_differential_entropy(samples + offset, seed=4)
    assert moved.value == pytest.approx(base.value, abs=1e-9)


@settings(max_examples=20, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(scale=st.floats(min_value=0.01, max_value=100.0), sign=st.sampled_from([-1.0, 1.0]))
def test_nearest_neighbour_estimate_adds_log_scale(estimator, scale, sign):
    samples = np.random.default_rng(29).exponential(size=2000)
    base = estimator.nn_differential_entropy(samples, seed=4)
    scaled = estimator.nn_differential_entropy(sign * scale * samples, seed=4)
    assert scaled.value == pytest.approx(base.value + math.log(scale), abs=1e-9)
    assert scaled.standard_error == pytest.approx(base.standard_error, rel=1e-6)


@pytest.mark.slow
@pytest.mark.parametrize("family", sorted(CLOSED_FORMS))
def test_nearest_neighbour_error_shrinks_with_sample_size(estimator, family):
    draw, expected = CLOSED_FORMS[family]
    medians = []
    for n in (1_000, 10_000, 100_000):
        errors = [abs(estimator.nn_differential_entropy(draw(np.random.default_rng(seed), n), seed=seed,
                                                        resamples=2).value - expected)
                  for seed in range(20)]
        medians.append(float(np.median(errors)))
    assert medians[0] > medians[1] > medians[2]
