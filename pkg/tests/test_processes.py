import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from models.data_models import CTMCSpec
from models.densities import DensitySpec
from models.errors import (InvalidDistributionError, NonStationaryStartError, ReducibleChainError,
                           TooFewEventsError)

H_MC_STICKY = 0.383522790107


def test_stationary_distribution_of_sticky_chain(processes, sticky_chain):
    np.testing.assert_allclose(processes.stationary_distribution(sticky_chain.P), [2 / 3, 1 / 3], atol=1e-13)


def test_periodic_chain_has_uniform_stationary_law(processes):
    np.testing.assert_allclose(processes.stationary_distribution([[0.0, 1.0], [1.0, 0.0]]), [0.5, 0.5])


def test_reducible_chain_is_rejected(processes):
    with pytest.raises(ReducibleChainError):
        processes.stationary_distribution(np.eye(2))


def test_markov_transition_entropy(processes, sticky_chain):
    pi = processes.stationary_distribution(sticky_chain.P)
    assert processes.markov_transition_entropy(sticky_chain.P, pi) == pytest.approx(H_MC_STICKY, abs=1e-9)


@pytest.mark.parametrize("lam, expected", [(1.0, 1.0), (math.e, 0.0), (2.0, 2 * (1 - math.log(2)))])
def test_poisson_entropy_rate(processes, lam, expected):
    assert processes.poisson_entropy_rate(lam) == pytest.approx(expected, abs=1e-15)


def test_poisson_rate_must_be_positive(processes):
    with pytest.raises(InvalidDistributionError):
        processes.poisson_entropy_rate(0.0)


def test_ctmc_entropy_rates(processes, single_state_chain, symmetric_chain, sticky_chain):
    assert processes.ctmc_entropy_rate(single_state_chain) == pytest.approx(1.0, abs=1e-15)
    assert processes.ctmc_entropy_rate(symmetric_chain) == pytest.approx(2.0, abs=1e-12)
    assert processes.ctmc_entropy_rate(sticky_chain) == pytest.approx(1 + H_MC_STICKY, abs=1e-9)


def test_count_entropy_at_unit_mean(processes):
    parts = processes.poisson_horizon_decomposition(1.0, 1.0)
    assert parts.count_entropy == pytest.approx(1.304842, abs=1e-6)
    assert parts.mark_entropy == 0.0


def test_small_horizon_behaviour(processes):
    lam, T = 1.0, 1e-3
    mu = lam * T
    parts = processes.poisson_horizon_decomposition(lam, T)
    assert parts.count_entropy == pytest.approx(mu * (1 - math.log(mu)), rel=5e-3)
    assert parts.total == pytest.approx(mu * (1 - math.log(lam)), abs=1e-4)


def test_horizon_mean_guard(processes):
    with pytest.raises(InvalidDistributionError):
        processes.poisson_horizon_decomposition(1.0, 1e7)


@pytest.mark.parametrize("chain", ['single_state_chain', 'symmetric_chain', 'sticky_chain'])
def test_finite_horizon_converges_to_the_rate(processes, request, chain):
    spec = request.getfixturevalue(chain)
    T = 1e3 / spec.lam
    per_unit = processes.finite_horizon_ctmc_entropy(spec, T) / T
    assert abs(per_unit - processes.ctmc_entropy_rate(spec)) <= 0.01


def test_symmetric_chain_horizon_is_close_to_two(processes, symmetric_chain):
    T = 500.0
    assert processes.finite_horizon_ctmc_entropy(symmetric_chain, T) / T == pytest.approx(2.0, abs=0.01)


def test_single_state_chain_reduces_to_poisson(processes, single_state_chain):
    assert processes.finite_horizon_ctmc_entropy(single_state_chain, 50.0) == pytest.approx(
        processes.finite_horizon_poisson_entropy(1.0, 50.0), abs=1e-12)


def test_finite_horizon_needs_stationary_start(processes):
    spec = CTMCSpec(lam=1.0, P=[[0.9, 0.1], [0.2, 0.8]], initial=[1.0, 0.0])
    with pytest.raises(NonStationaryStartError):
        processes.finite_horizon_ctmc_entropy(spec, 10.0)


@pytest.mark.parametrize("lam, p, expected", [(1.0, 0.5, 1 + math.log(2)), (2.0, 0.25, 1.738375928)])
def test_splitting_identity_values(processes, lam, p, expected):
    report = processes.splitting_identity(lam, p)
    assert report.passed
    assert len(report.lines) == 4
    assert report.lhs == pytest.approx(expected, abs=1e-9)


def test_splitting_identity_over_the_grid(processes):
    worst = max(processes.splitting_identity(lam, p).max_discrepancy
                for lam in np.linspace(0.1, 10.0, 20) for p in np.linspace(0.05, 0.95, 19))
    assert worst <= 1e-12


@settings(max_examples=200, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(lam=st.floats(min_value=0.01, max_value=100.0), p=st.floats(min_value=0.001, max_value=0.999))
def test_splitting_adds_the_coin_entropy(processes, lam, p):
    report = processes.splitting_identity(lam, p)
    assert report.passed
    coin = -(p * math.log(p) + (1 - p) * math.log(1 - p))
    assert report.lhs - processes.poisson_entropy_rate(lam) == pytest.approx(lam * coin, rel=1e-9, abs=1e-12)


def test_coin_bias_must_be_inside_the_unit_interval(processes):
    with pytest.raises(InvalidDistributionError):
        processes.splitting_identity(1.0, 1.0)


def test_split_experiment_is_reproducible_and_lossless(processes):
    first = processes.split_entropy_experiment(1.0, 0.5, 2000.0, trials=2, seed=3)
    second = processes.split_entropy_experiment(1.0, 0.5, 2000.0, trials=2, seed=3)
    assert first.merge_lossless
    assert first.heads.estimate == second.heads.estimate
    assert first.tails.standard_error == second.tails.standard_error
    assert len(first.per_trial) == 2
    expected = 0.5 * (1 - math.log(0.5))
    assert first.heads.expected == pytest.approx(expected)
    for baby in (first.heads, first.tails):
        assert abs(baby.z_score) <= 6


def test_split_experiment_needs_enough_events(processes):
    with pytest.raises(TooFewEventsError):
        processes.split_entropy_experiment(1.0, 0.5, 10.0, seed=0)


@pytest.mark.slow
def test_split_experiment_at_full_scale(processes):
    report = processes.split_entropy_experiment(1.0, 0.5, 1e5, seed=0)
    assert report.passed


def test_order_statistics_of_two_uniforms(processes):
    report = processes.order_statistics_entropy(DensitySpec.uniform(0, 1), 2)
    assert report.method == 'quadrature'
    assert report.h_sorted == pytest.approx(-math.log(2), abs=1e-4)
    assert report.discrepancy <= 1e-4


def test_order_statistics_of_two_exponentials(processes):
    report = processes.order_statistics_entropy(DensitySpec.exponential(1.0), 2)
    assert report.h_iid == pytest.approx(2.0, abs=1e-7)
    assert report.h_sorted == pytest.approx(2 - math.log(2), abs=1e-4)


def test_order_statistics_by_monte_carlo(processes):
    report = processes.order_statistics_entropy(DensitySpec.exponential(1.0), 3, np.random.default_rng(8),
                                                method='monte-carlo', samples=200_000)
    assert report.method == 'monte-carlo'
    assert report.expected_difference == pytest.approx(-math.log(6))
    assert report.discrepancy <= 4 * report.error_estimate


def test_order_statistics_guards(processes):
    with pytest.raises(InvalidDistributionError):
        processes.order_statistics_entropy(DensitySpec.uniform(0, 1), 1)
    with pytest.raises(ValueError):
        processes.order_statistics_entropy(DensitySpec.uniform(0, 1), 6, method='monte-carlo')


@pytest.mark.slow
def test_order_statistics_of_three_uniforms_by_monte_carlo(processes):
    report = processes.order_statistics_entropy(DensitySpec.uniform(0, 1), 3, np.random.default_rng(0),
                                                method='monte-carlo', samples=1_000_000)
    assert report.h_iid == pytest.approx(0.0, abs=1e-10)
    assert report.h_sorted == pytest.approx(-math.log(6), abs=1e-9)
    assert report.discrepancy <= 4 * report.error_estimate + 1e-9
