import logging
import math
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq
from scipy.special import entr, gammaln

from config.settings import Config
from models.data_models import GoodnessReport
from models.distributions import MixedPairDistribution, MixedPairVectorDistribution
from models.errors import IntegrationError
from services.quadrature import AdaptiveQuadrature, VectorIntegrator

logger = logging.getLogger(__name__)


class GoodnessChecker:
    """Sufficient conditions for a finite entropy and the bound they imply.

    A distribution passes when its epsilon-th absolute moment, the integral of
    g^(1+delta) and the entropy of its atom masses are all finite. The bound

        H(masses) + |log C_eps| + M_eps + log B_delta + ∫ g^(1+delta)

    then dominates the sum over atoms of |∫ g_i log g_i|. A failed report
    means "not certified", never "not good".
    """

    def __init__(self, config: Optional[Config] = None):
        self.config = config or Config()
        self.quadrature = AdaptiveQuadrature(self.config)
        self.vector = VectorIntegrator(self.config, self.quadrature)

    @staticmethod
    def _require_positive(name: str, value: float):
        if not value > 0:
            raise ValueError(f"{name} must be positive, got {value}")

    def _over_union(self, dist: MixedPairDistribution, fn: Callable[[np.ndarray], np.ndarray]) -> float:
        lo = min(a.shape.support[0] for a in dist.atoms)
        hi = max(a.shape.support[1] for a in dist.atoms)
        value, _ = self.quadrature.integrate_line(fn, (lo, hi), dist.breakpoints(self.config.TAIL_MASS))
        return value

    # -- components -------------------------------------------------------

    def epsilon_moment(self, dist: MixedPairDistribution, epsilon: float) -> float:
        self._require_positive('epsilon', epsilon)
        return self._over_union(dist, lambda y: np.abs(y) ** epsilon * dist.marginal_density(y))

    def power_integral(self, dist: MixedPairDistribution, delta: float) -> float:
        self._require_positive('delta', delta)
        return self._over_union(dist, lambda y: np.asarray(dist.marginal_density(y)) ** (1.0 + delta))

    def discrete_entropy(self, dist) -> float:
        return float(math.fsum(entr(dist.masses)))

    def normalizing_constant_c(self, epsilon: float, dimension: int = 1) -> float:
        """C_eps with C_eps * ∫ exp(-|y|^eps) dy = 1 over R^dimension."""
        self._require_positive('epsilon', epsilon)
        # log of the closed form: surface of the unit sphere times Γ(d/eps)/eps
        log_closed = (math.log(2) + dimension / 2 * math.log(math.pi) - gammaln(dimension / 2)
                      + gammaln(dimension / epsilon) - math.log(epsilon))
        if dimension > 1:
            return math.exp(-log_closed)
        half, _ = self.quadrature.integrate_line(lambda y: np.exp(-np.abs(y) ** epsilon), (0.0, math.inf),
                                                 [0.0, 1.0])
        integral = 2 * half
        closed = math.exp(log_closed)
        if abs(integral - closed) > 1e-6 * closed:
            logger.warning("C_eps quadrature %.12g disagrees with closed form %.12g", 1 / integral, 1 / closed)
        return 1.0 / integral

    def log_threshold_b(self, delta: float) -> float:
        """Smallest B >= 1 with log x <= x^delta for every x >= B."""
        self._require_positive('delta', delta)
        if delta >= 1 / math.e:
            return 1.0
        # in t = log x the crossing solves t = exp(delta t); the larger root lies past the maximum of t - exp(delta t)
        phi = lambda t: t - math.exp(delta * t)
        t_peak = -math.log(delta) / delta
        t_hi = 2 * t_peak
        while phi(t_hi) > 0:
            t_hi *= 2
        root = brentq(phi, t_peak, t_hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)
        return math.exp(root)

    # -- reports ----------------------------------------------------------

    def _assemble(self, epsilon, delta, moment, power, discrete, dimension) -> GoodnessReport:
        failures = []
        c_eps = self.normalizing_constant_c(epsilon, dimension)
        b_delta = self.log_threshold_b(delta)
        for name, value in (('epsilon moment', moment), ('power integral', power),
                            ('discrete entropy', discrete)):
            if not math.isfinite(value):
                failures.append(name)
        bound = discrete + abs(math.log(c_eps)) + moment + math.log(b_delta) + power
        return GoodnessReport(epsilon=epsilon, delta=delta, m_epsilon=moment, power_integral=power,
                              discrete_entropy=discrete, b_delta=b_delta, c_epsilon=c_eps,
                              magnitude_bound=bound, passed=not failures, failures=failures,
                              dimension=dimension)

    def _guarded(self, name: str, compute: Callable[[], float]) -> float:
        try:
            return compute()
        except IntegrationError as exc:
            logger.warning("%s not certified: %s", name, exc)
            return math.inf

    def goodness_check(self, dist: MixedPairDistribution, epsilon: float, delta: float) -> GoodnessReport:
        self._require_positive('epsilon', epsilon)
        self._require_positive('delta', delta)
        moment = self._guarded('epsilon moment', lambda: self.epsilon_moment(dist, epsilon))
        power = self._guarded('power integral', lambda: self.power_integral(dist, delta))
        report = self._assemble(epsilon, delta, moment, power, self.discrete_entropy(dist), 1)
        logger.info("Goodness check (eps=%g, delta=%g): %s", epsilon, delta,
                    'passed' if report.passed else f"not certified ({', '.join(report.failures)})")
        return report

    def goodness_check_vector(self, dist: MixedPairVectorDistribution, epsilon: float, delta: float,
                              rng: Optional[np.random.Generator] = None) -> GoodnessReport:
        """Vector form: M_eps uses the Euclidean norm and C_eps is taken over R^d."""
        self._require_positive('epsilon', epsilon)
        self._require_positive('delta', delta)

        def moment():
            return math.fsum(a.mass * self.vector.integrate_against(
                a.shape, lambda y: np.linalg.norm(y, axis=1) ** epsilon, rng)[0] for a in dist.atoms)

        def power():
            return math.fsum(a.mass * self.vector.integrate_against(
                a.shape, lambda y: dist.joint_density(y) ** delta, rng)[0] for a in dist.atoms)

        return self._assemble(epsilon, delta, self._guarded('epsilon moment', moment),
                              self._guarded('power integral', power), self.discrete_entropy(dist),
                              dist.dimension)
