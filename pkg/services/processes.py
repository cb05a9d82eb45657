import concurrent.futures
import logging
import math
from typing import List, Optional, Tuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.special import entr, gammaln
from scipy.stats import poisson

from config.settings import Config
from models.data_models import (BabyEstimate, CTMCSpec, HorizonDecomposition, OrderStatisticsReport,
                                SamplePath, SplitExperimentReport, SplitIdentityReport)
from models.densities import DensitySpec
from models.distributions import ordered_iid
from models.errors import (InvalidDistributionError, NonStationaryStartError, ReducibleChainError,
                           TooFewEventsError)
from services.entropy import EntropyCalculator
from services.estimators import EntropyEstimator
from services.simulation import ProcessSimulator

logger = logging.getLogger(__name__)


class ProcessEntropy:
    """Exact and empirical entropies of Poisson processes and Poisson-clocked Markov chains.

    Rates are in nats per unit time, horizon entropies in nats. Markov chains
    use row-stochastic P and the left fixed point pi P = pi.
    """

    def __init__(self, config: Optional[Config] = None, entropy: Optional[EntropyCalculator] = None):
        self.config = config or Config()
        self.entropy = entropy or EntropyCalculator(self.config)
        self.simulator = ProcessSimulator(self.config)
        self.estimator = EntropyEstimator(self.config)

    @staticmethod
    def _require_positive(name: str, value: float):
        if not value > 0:
            raise InvalidDistributionError(f"{name} must be positive, got {value}")

    @staticmethod
    def _require_bias(p: float):
        if not 0 < p < 1:
            raise InvalidDistributionError(f"coin bias must lie in (0, 1), got {p}")

    # -- Markov chains ----------------------------------------------------

    def stationary_distribution(self, P) -> np.ndarray:
        P = np.atleast_2d(np.asarray(P, dtype=float))
        n = P.shape[0]
        n_components, _ = connected_components(csr_matrix(P > 0), directed=True, connection='strong')
        if n_components > 1:
            raise ReducibleChainError(f"transition matrix splits into {n_components} communicating classes; "
                                      "the stationary distribution is not unique")
        # (P^T - I) pi = 0 with the last equation replaced by sum(pi) = 1
        system = P.T - np.eye(n)
        system[-1, :] = 1.0
        rhs = np.zeros(n)
        rhs[-1] = 1.0
        pi = np.linalg.solve(system, rhs)
        pi = np.clip(pi, 0.0, None)
        pi /= pi.sum()
        for _ in range(10):
            if np.max(np.abs(pi @ P - pi)) <= 1e-13:
                break
            pi = pi @ P
            pi /= pi.sum()
        return pi

    def markov_transition_entropy(self, P, pi) -> float:
        """H_MC = -sum_i pi_i sum_j P_ij log P_ij."""
        P = np.atleast_2d(np.asarray(P, dtype=float))
        pi = np.asarray(pi, dtype=float).ravel()
        if P.shape != (pi.size, pi.size):
            raise InvalidDistributionError(f"transition matrix {P.shape} does not match {pi.size} states")
        return float(math.fsum(pi * entr(P).sum(axis=1)))

    def poisson_entropy_rate(self, lam: float) -> float:
        self._require_positive('rate', lam)
        return lam * (1.0 - math.log(lam))

    def ctmc_entropy_rate(self, spec: CTMCSpec) -> float:
        pi = self.stationary_distribution(spec.P)
        h_mc = self.markov_transition_entropy(spec.P, pi)
        return self.poisson_entropy_rate(spec.lam) + spec.lam * h_mc

    # -- finite horizons --------------------------------------------------

    def _count_law(self, mean: float) -> Tuple[np.ndarray, np.ndarray]:
        if mean > self.config.POISSON_MAX_MEAN:
            raise InvalidDistributionError(
                f"lambda*T = {mean:g} exceeds the series limit {self.config.POISSON_MAX_MEAN:g}")
        upper = int(poisson.isf(self.config.POISSON_TAIL, mean)) + 2
        lower = int(poisson.ppf(self.config.POISSON_TAIL, mean))
        k = np.arange(max(lower - 1, 0), upper + 1)
        return k, poisson.logpmf(k, mean)

    def poisson_horizon_decomposition(self, lam: float, T: float) -> HorizonDecomposition:
        """H(N(T)) and the entropy of the jump locations given their number."""
        self._require_positive('rate', lam)
        self._require_positive('horizon', T)
        k, log_p = self._count_law(lam * T)
        p = np.exp(log_p)
        count = -math.fsum(p * log_p)
        # given N(T) = k the sorted locations are uniform on the simplex of volume T^k / k!
        location = math.fsum(p * (k * math.log(T) - gammaln(k + 1)))
        return HorizonDecomposition(count_entropy=count, location_entropy=location)

    def finite_horizon_poisson_entropy(self, lam: float, T: float) -> float:
        return self.poisson_horizon_decomposition(lam, T).total

    def ctmc_horizon_decomposition(self, spec: CTMCSpec, T: float) -> HorizonDecomposition:
        pi = self.stationary_distribution(spec.P)
        if np.max(np.abs(spec.initial - pi)) > 1e-9:
            raise NonStationaryStartError("finite-horizon chain entropy needs the stationary initial "
                                          f"distribution {pi.tolist()}, got {spec.initial.tolist()}")
        poisson_part = self.poisson_horizon_decomposition(spec.lam, T)
        k, log_p = self._count_law(spec.lam * T)
        mean_jumps = math.fsum(np.exp(log_p) * k)
        marks = self.entropy.shannon_entropy(pi) + mean_jumps * self.markov_transition_entropy(spec.P, pi)
        return HorizonDecomposition(poisson_part.count_entropy, poisson_part.location_entropy, marks)

    def finite_horizon_ctmc_entropy(self, spec: CTMCSpec, T: float) -> float:
        return self.ctmc_horizon_decomposition(spec, T).total

    # -- splitting --------------------------------------------------------

    def splitting_identity(self, lam: float, p: float) -> SplitIdentityReport:
        """Evaluate each line of the splitting chain of equalities independently."""
        self._require_positive('rate', lam)
        self._require_bias(p)
        q = 1.0 - p
        log_lam = math.log(lam)
        h_coin = math.fsum(entr([p, q]))
        lines = [
            lam * p * (1 - math.log(lam * p)) + lam * q * (1 - math.log(lam * q)),
            math.fsum([lam * p, -lam * p * log_lam, -lam * p * math.log(p),
                       lam * q, -lam * q * log_lam, -lam * q * math.log(q)]),
            lam - lam * log_lam - lam * (p * math.log(p) + q * math.log(q)),
            lam * (1 - log_lam) + lam * h_coin,
        ]
        discrepancy = max(abs(a - b) for a, b in zip(lines, lines[1:]))
        return SplitIdentityReport(lam=lam, p=p, lines=lines, max_discrepancy=discrepancy,
                                   tolerance=self.config.IDENTITY_TOL)

    def _baby_estimate(self, name: str, path: SamplePath, rate: float, seed) -> BabyEstimate:
        if path.count < self.config.MIN_SPLIT_EVENTS:
            raise TooFewEventsError(f"{name} process has {path.count} events, fewer than "
                                    f"{self.config.MIN_SPLIT_EVENTS}; raise T or lambda")
        rate_hat = path.count / path.horizon
        h = self.estimator.nn_differential_entropy(path.interarrivals(), seed=seed)
        estimate = rate_hat * h.value
        # rate_hat has standard error sqrt(count) / T
        se = math.hypot(rate_hat * h.standard_error, h.value * math.sqrt(path.count) / path.horizon)
        return BabyEstimate(name=name, events=path.count, rate_hat=rate_hat, estimate=estimate,
                            standard_error=se, expected=self.poisson_entropy_rate(rate),
                            poisson_bound=self.poisson_entropy_rate(rate_hat))

    def _split_trial(self, lam: float, p: float, T: float, seed: int, trial: int):
        rng = np.random.default_rng(np.random.SeedSequence([seed, trial]))
        parent = self.simulator.simulate_poisson(lam, T, rng)
        result = self.simulator.split(parent, p, rng)
        merged = self.simulator.merge(result)
        lossless = np.array_equal(merged.times, parent.times)
        heads = self._baby_estimate('heads', result.heads_path, lam * p, [seed, trial, 1])
        tails = self._baby_estimate('tails', result.tails_path, lam * (1 - p), [seed, trial, 2])
        return heads, tails, lossless

    @staticmethod
    def _pool(estimates: List[BabyEstimate]) -> BabyEstimate:
        first = estimates[0]
        m = len(estimates)
        return BabyEstimate(name=first.name, events=sum(e.events for e in estimates),
                            rate_hat=math.fsum(e.rate_hat for e in estimates) / m,
                            estimate=math.fsum(e.estimate for e in estimates) / m,
                            standard_error=math.sqrt(math.fsum(e.standard_error ** 2 for e in estimates)) / m,
                            expected=first.expected,
                            poisson_bound=math.fsum(e.poisson_bound for e in estimates) / m)

    def split_entropy_experiment(self, lam: float, p: float, T: float, trials: int = 1,
                                 seed: int = 0) -> SplitExperimentReport:
        """Simulate splitting and estimate each baby process's entropy rate as rate_hat * h(interarrivals)."""
        self._require_positive('rate', lam)
        self._require_positive('horizon', T)
        self._require_bias(p)
        if trials < 1:
            raise InvalidDistributionError(f"trials must be at least 1, got {trials}")
        logger.info("Splitting experiment: lambda=%g p=%g T=%g, %d trials, seed %d", lam, p, T, trials, seed)
        with concurrent.futures.ThreadPoolExecutor(max_workers=self.config.MAX_WORKERS) as executor:
            outcomes = list(executor.map(lambda t: self._split_trial(lam, p, T, seed, t), range(trials)))
        per_trial = [(h, t) for h, t, _ in outcomes]
        report = SplitExperimentReport(lam=lam, p=p, horizon=T, trials=trials, seed=seed,
                                       heads=self._pool([h for h, _ in per_trial]),
                                       tails=self._pool([t for _, t in per_trial]),
                                       per_trial=per_trial, merge_lossless=all(ok for _, _, ok in outcomes))
        logger.info("Heads %.6f (expected %.6f), tails %.6f (expected %.6f)", report.heads.estimate,
                    report.heads.expected, report.tails.estimate, report.tails.expected)
        return report

    # -- order statistics -------------------------------------------------

    def order_statistics_entropy(self, density: DensitySpec, n: int, rng: Optional[np.random.Generator] = None,
                                 method: str = 'auto', samples: Optional[int] = None) -> OrderStatisticsReport:
        """Entropy of n i.i.d. draws against the entropy of their sorted vector."""
        if n < 2:
            raise InvalidDistributionError(f"order statistics need n >= 2, got {n}")
        if method == 'auto':
            method = 'quadrature' if n <= self.config.VECTOR_DENSE_MAX_DIM else 'monte-carlo'
        if method not in ('quadrature', 'monte-carlo'):
            raise ValueError(f"unknown method {method!r}")
        h_iid = n * self.entropy.differential_entropy(density).value
        sorted_law = ordered_iid(density, n)
        if method == 'monte-carlo':
            if rng is None:
                raise ValueError("Monte Carlo order statistics need a seeded generator")
            result = self.entropy.mc_entropy(sorted_law, samples or self.config.MC_SAMPLES, rng)
        else:
            result = self.entropy.mixed_entropy_vector(sorted_law, rng)
        return OrderStatisticsReport(n=n, h_iid=h_iid, h_sorted=result.value, difference=result.value - h_iid,
                                     expected_difference=-float(gammaln(n + 1)), method=result.method,
                                     error_estimate=result.error_estimate)
