import math

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from models.densities import DensitySpec
from models.distributions import MixedPairDistribution, independent_product


def cauchy(core):
    density = DensitySpec.custom(lambda y: 1.0 / (math.pi * (1.0 + y * y)), (-math.inf, math.inf))
    return core.inject_continuous(density)


@pytest.mark.parametrize("density, epsilon, expected", [
    (DensitySpec.uniform(0, 1), 1.0, 0.5),
    (DensitySpec.uniform(0, 2), 2.0, 4 / 3),
    (DensitySpec.exponential(1.0), 1.0, 1.0),
])
def test_epsilon_moment(goodness, core, density, epsilon, expected):
    assert goodness.epsilon_moment(core.inject_continuous(density), epsilon) == pytest.approx(expected, abs=1e-8)


def test_power_integral(goodness, core, u02):
    assert goodness.power_integral(u02, 1.0) == pytest.approx(0.5, abs=1e-10)
    gauss = core.inject_continuous(DensitySpec.gaussian(0.0, 1.0))
    assert goodness.power_integral(gauss, 1.0) == pytest.approx(1 / (2 * math.sqrt(math.pi)), abs=1e-8)


def test_discrete_entropy_of_the_labels(goodness, fair_coin, u02):
    assert goodness.discrete_entropy(fair_coin) == pytest.approx(math.log(2))
    assert goodness.discrete_entropy(u02) == 0.0


@pytest.mark.parametrize("epsilon, expected", [(1.0, 0.5), (2.0, 1 / math.sqrt(math.pi)), (0.5, 0.25)])
def test_normalizing_constant(goodness, epsilon, expected):
    assert goodness.normalizing_constant_c(epsilon) == pytest.approx(expected, rel=1e-7)


def test_normalizing_constant_in_the_plane(goodness):
    assert goodness.normalizing_constant_c(2.0, dimension=2) == pytest.approx(1 / math.pi, rel=1e-12)


@pytest.mark.parametrize("delta", [1.0, 0.5, 1 / math.e])
def test_log_threshold_is_one_for_large_delta(goodness, delta):
    assert goodness.log_threshold_b(delta) == 1.0


@pytest.mark.parametrize("delta", [0.1, 0.05, 0.3])
def test_log_threshold_solves_the_crossing(goodness, delta):
    b = goodness.log_threshold_b(delta)
    assert math.log(b) == pytest.approx(b ** delta, rel=1e-9)
    for x in (b * 1.001, 2 * b, 100 * b):
        assert math.log(x) <= x ** delta


@pytest.mark.parametrize("value", [0.0, -1.0])
def test_parameters_must_be_positive(goodness, u02, value):
    with pytest.raises(ValueError):
        goodness.goodness_check(u02, value, 1.0)
    with pytest.raises(ValueError):
        goodness.goodness_check(u02, 1.0, value)


def test_uniform_passes_and_bounds_the_terms(goodness, entropy, u02):
    report = goodness.goodness_check(u02, 1.0, 1.0)
    assert report.passed
    assert report.failures == []
    assert report.m_epsilon == pytest.approx(1.0, abs=1e-8)
    assert report.magnitude_bound == pytest.approx(math.log(2) + 1.0 + 0.5, abs=1e-7)
    assert entropy.term_magnitudes(u02) <= report.magnitude_bound + 1e-6


def test_heavy_tail_is_not_certified(goodness, core):
    report = goodness.goodness_check(cauchy(core), 1.0, 1.0)
    assert not report.passed
    assert report.failures == ['epsilon moment']
    assert math.isinf(report.magnitude_bound)


def test_vector_check_on_independent_pair(goodness, u02):
    joint = independent_product(u02, u02)
    report = goodness.goodness_check_vector(joint, 2.0, 1.0)
    assert report.passed
    assert report.dimension == 2
    # E|Y|^2 = 2 * E[Y_1^2] = 8/3 for uniforms on [0, 2]
    assert report.m_epsilon == pytest.approx(8 / 3, abs=1e-8)
    assert report.power_integral == pytest.approx(0.25, abs=1e-10)
    assert report.c_epsilon == pytest.approx(1 / math.pi)


@settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(st.lists(st.floats(min_value=0.05, max_value=1.0), min_size=1, max_size=6),
       st.floats(min_value=0.2, max_value=3.0))
def test_bound_dominates_term_magnitudes(goodness, entropy, weights, scale):
    total = sum(weights)
    dist = MixedPairDistribution.from_atoms(
        (k, w / total, DensitySpec.uniform(k * scale, (k + 1) * scale)) for k, w in enumerate(weights))
    report = goodness.goodness_check(dist, 1.0, 1.0)
    assert report.passed
    assert entropy.term_magnitudes(dist) <= report.magnitude_bound + 1e-6


@pytest.mark.parametrize("density", [
    DensitySpec.uniform(-3.0, 5.0),
    DensitySpec.piecewise_linear([(0.0, 0.0), (1.0, 2.0), (4.0, 0.0)]),
    DensitySpec.mixture([(0.5, DensitySpec.uniform(0.0, 1.0)), (0.5, DensitySpec.uniform(10.0, 12.0))]),
])
def test_compact_support_stays_certified_as_epsilon_shrinks(goodness, core, density):
    dist = core.inject_continuous(density)
    reports = [goodness.goodness_check(dist, epsilon, 1.0) for epsilon in (4.0, 3.0, 2.0, 1.0, 0.5)]
    assert all(report.passed for report in reports)
    # Lyapunov: (E|Y|^eps)^(1/eps) is nondecreasing in eps
    norms = [report.m_epsilon ** (1 / report.epsilon) for report in reports]
    assert all(a >= b - 1e-9 for a, b in zip(norms, norms[1:]))
