import concurrent.futures
import logging
import math
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import entr

from config.settings import Config
from models.data_models import EntropyResult
from models.densities import DensitySpec
from models.distributions import (Atom, GridShape, MixedPairDistribution, MixedPairVectorDistribution,
                                  VectorAtom)
from models.errors import InvalidDistributionError, UncertifiedDistributionError
from services.goodness import GoodnessChecker
from services.quadrature import AdaptiveQuadrature, VectorIntegrator, neg_g_log_g

logger = logging.getLogger(__name__)


class EntropyCalculator:
    """Entropies in nats of discrete, continuous and mixed-pair laws.

    Mixed-pair entropy is gated on the goodness check; ``allow_uncertified``
    lifts the gate and marks the result as uncertified.
    """

    def __init__(self, config: Optional[Config] = None):
        self.config = config or Config()
        self.quadrature = AdaptiveQuadrature(self.config)
        self.vector = VectorIntegrator(self.config, self.quadrature)
        self.goodness = GoodnessChecker(self.config)

    # -- discrete and continuous ------------------------------------------

    def shannon_entropy(self, pmf: Iterable[float]) -> float:
        p = np.asarray(list(pmf), dtype=float)
        if p.size == 0 or np.any(p < 0) or not np.all(np.isfinite(p)):
            raise InvalidDistributionError(f"invalid pmf: {p.tolist()}")
        if abs(math.fsum(p) - 1.0) > self.config.MASS_TOL:
            raise InvalidDistributionError(f"pmf sums to {math.fsum(p)!r}")
        return float(math.fsum(entr(p)))

    def _integrate_entropy(self, density: DensitySpec, scale: float = 1.0) -> Tuple[float, float]:
        """-∫ (scale f) log (scale f) over the support of f."""
        floor = self.config.DENSITY_FLOOR
        return self.quadrature.integrate_line(lambda y: neg_g_log_g(scale * density.pdf(y), floor),
                                              density.support, density.breakpoints(self.config.TAIL_MASS))

    def differential_entropy(self, density: DensitySpec) -> EntropyResult:
        if density.family == 'custom':
            mass, _ = self.quadrature.integrate_line(density.pdf, density.support,
                                                     density.breakpoints(self.config.TAIL_MASS))
        else:
            mass = density.total_mass()
        if abs(mass - 1.0) > self.config.TABULATED_MASS_TOL:
            raise InvalidDistributionError(f"density integrates to {mass!r}, not 1")
        value, err = self._integrate_entropy(density)
        closed = density.closed_form_entropy()
        if closed is not None and abs(closed - value) > 1e-6:
            logger.warning("differential entropy %.12g disagrees with closed form %.12g", value, closed)
        return EntropyResult(value=value, method='quadrature', error_estimate=err)

    # -- mixed pairs ------------------------------------------------------

    def atom_term(self, atom: Atom) -> Tuple[float, float]:
        """-∫ g_i log g_i for one atom."""
        return self._integrate_entropy(atom.shape, atom.mass)

    def _gate(self, report_passed: bool, allow_uncertified: bool, what: str) -> bool:
        if report_passed:
            return True
        if not allow_uncertified:
            raise UncertifiedDistributionError(
                f"{what} is not certified good; pass allow_uncertified to evaluate anyway")
        logger.warning("evaluating entropy of an uncertified %s", what)
        return False

    def _map_ordered(self, fn, items: Sequence) -> List:
        # results come back in submission order, so summation order is fixed
        with concurrent.futures.ThreadPoolExecutor(max_workers=self.config.MAX_WORKERS) as executor:
            return list(executor.map(fn, items))

    def mixed_entropy(self, dist: MixedPairDistribution, allow_uncertified: bool = False,
                      epsilon: Optional[float] = None, delta: Optional[float] = None) -> EntropyResult:
        report = self.goodness.goodness_check(dist, epsilon or self.config.DEFAULT_EPSILON,
                                              delta or self.config.DEFAULT_DELTA)
        certified = self._gate(report.passed, allow_uncertified, 'mixed pair')
        pieces = self._map_ordered(self.atom_term, dist.atoms)
        terms = [value for value, _ in pieces]
        value = math.fsum(terms)
        logger.info("Mixed entropy over %d atoms: %.9g nats", len(terms), value)
        return EntropyResult(value=value, method='quadrature', error_estimate=math.fsum(e for _, e in pieces),
                             terms=terms, certified=certified, tail_mass=dist.tail_mass)

    def term_magnitudes(self, dist: MixedPairDistribution) -> float:
        """Sum over atoms of |∫ g_i log g_i|, the quantity the goodness bound dominates."""
        return math.fsum(abs(value) for value, _ in self._map_ordered(self.atom_term, dist.atoms))

    # -- vectors ----------------------------------------------------------

    def _vector_term(self, atom: VectorAtom, rng: Optional[np.random.Generator],
                     force_monte_carlo: bool) -> Tuple[float, float, str]:
        mass = atom.mass
        if isinstance(atom.shape, GridShape) and not force_monte_carlo:
            cell_mass = mass * atom.shape.values * atom.shape.cell_volumes
            density = mass * atom.shape.values
            positive = density > self.config.DENSITY_FLOOR
            value = -math.fsum((cell_mass[positive] * np.log(density[positive])).ravel())
            return value, 0.0, 'grid'

        def h(points):
            return -np.log(mass * atom.shape.pdf(points))

        value, err, method = self.vector.integrate_against(atom.shape, h, rng, force_monte_carlo)
        return mass * value, mass * err, method

    def mixed_entropy_vector(self, dist: MixedPairVectorDistribution, rng: Optional[np.random.Generator] = None,
                             allow_uncertified: bool = False, force_monte_carlo: bool = False,
                             epsilon: Optional[float] = None, delta: Optional[float] = None) -> EntropyResult:
        report = self.goodness.goodness_check_vector(dist, epsilon or self.config.DEFAULT_EPSILON,
                                                     delta or self.config.DEFAULT_DELTA, rng)
        certified = self._gate(report.passed, allow_uncertified, f"{dist.dimension}-dimensional mixed pair")
        # the random stream is shared, so Monte Carlo terms stay sequential
        pieces = [self._vector_term(a, rng, force_monte_carlo) for a in dist.atoms]
        terms = [value for value, _, _ in pieces]
        methods = {method for _, _, method in pieces}
        method = 'monte-carlo' if 'monte-carlo' in methods else ('grid' if methods == {'grid'} else 'quadrature')
        return EntropyResult(value=math.fsum(terms), method=method,
                             error_estimate=math.fsum(e for _, e, _ in pieces), terms=terms,
                             certified=certified,
                             n_samples=self.config.MC_SAMPLES if method == 'monte-carlo' else None,
                             tail_mass=dist.tail_mass)

    def conditional_entropy(self, joint: MixedPairVectorDistribution, conditioning: Sequence[int],
                            rng: Optional[np.random.Generator] = None, allow_uncertified: bool = False) -> float:
        """H(joint) - H(conditioning coordinates)."""
        conditioning = sorted(set(conditioning))
        if conditioning == list(range(joint.dimension)):
            return 0.0
        whole = self.mixed_entropy_vector(joint, rng, allow_uncertified).value
        part = self.mixed_entropy_vector(joint.marginal(conditioning), rng, allow_uncertified).value
        return whole - part

    def mutual_information(self, joint: MixedPairVectorDistribution, rng: Optional[np.random.Generator] = None,
                           allow_uncertified: bool = False) -> float:
        """I(Z1; Z2) = H(Z1) + H(Z2) - H(Z1, Z2) for a two-coordinate joint."""
        if joint.dimension != 2:
            raise ValueError(f"mutual information needs exactly two coordinates, got {joint.dimension}")
        h1 = self.mixed_entropy_vector(joint.marginal([0]), rng, allow_uncertified).value
        h2 = self.mixed_entropy_vector(joint.marginal([1]), rng, allow_uncertified).value
        h12 = self.mixed_entropy_vector(joint, rng, allow_uncertified).value
        mi = h1 + h2 - h12
        if mi < -1e-8:
            logger.warning("negative mutual information %.3g: quadrature error exceeds tolerance", mi)
        return mi

    # -- Monte Carlo ------------------------------------------------------

    def mc_entropy(self, dist: Union[MixedPairDistribution, MixedPairVectorDistribution], n: int,
                   rng: np.random.Generator) -> EntropyResult:
        """-(1/n) Σ log g_I(Y) over draws (I, Y); the error is the standard error."""
        if n < 1:
            raise ValueError("Monte Carlo needs at least one sample")
        idx, ys = dist.sample_indices(rng, n)
        logs = np.empty(n)
        for i, atom in enumerate(dist.atoms):
            picked = idx == i
            if picked.any():
                logs[picked] = np.log(atom.mass) + np.log(atom.shape.pdf(ys[picked]))
        values = -logs
        se = float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return EntropyResult(value=float(values.mean()), method='monte-carlo', error_estimate=se, n_samples=n,
                             tail_mass=dist.tail_mass)
