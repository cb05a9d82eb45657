import concurrent.futures
import logging
import math
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.stats import qmc
from scipy.special import logit

from config.settings import Config
from models.data_models import CertificationReport, PreservationReport, RegionCheck
from models.densities import DensitySpec, intersect
from models.distributions import Label, MixedPairDistribution
from models.errors import DomainError, UnsupportedShapeError
from models.maps import AffineMap, MixedPairMap, Region, VectorMixedPairMap, VectorRegion, compose, probe_grid
from services.entropy import EntropyCalculator
from services.quadrature import AdaptiveQuadrature

logger = logging.getLogger(__name__)


def _describe(region: Region) -> str:
    lo, hi = region.interval
    left = '[' if region.closed_left else '('
    return f"{region.input_label!r} {left}{lo:g}, {hi:g}] -> {region.output_label!r}"


class TransformCertifier:
    """Applies mixed-pair bijections and certifies that they preserve entropy.

    Certification is grid based: a claim such as |dF/dy| = 1 is checked at
    PROBE_POINTS points per region and reported together with that resolution.
    """

    def __init__(self, config: Optional[Config] = None, entropy: Optional[EntropyCalculator] = None):
        self.config = config or Config()
        self.entropy = entropy or EntropyCalculator(self.config)
        self.quadrature = AdaptiveQuadrature(self.config)

    def apply(self, mapping: MixedPairMap, point: Tuple[Label, float]) -> Tuple[Label, float]:
        label, y = point
        return mapping.apply(label, y)

    def check_bijective(self, mapping: MixedPairMap) -> None:
        mapping.check_bijective(min(self.config.PROBE_POINTS, 1000), self.config.BIJECTIVITY_TOL)

    # -- certification ------------------------------------------------------

    def _check_region(self, region: Region, n: int) -> RegionCheck:
        ys = probe_grid(region.interval, n)
        slopes = np.abs(region.segment.derivative(ys))
        deviation = np.abs(slopes - 1.0)
        worst = int(np.argmax(deviation))
        return RegionCheck(input_label=region.input_label, output_label=region.output_label,
                           region=_describe(region), probe_points=n,
                           worst_deviation=float(deviation[worst]), worst_location=(float(ys[worst]),),
                           worst_value=float(slopes[worst]), singular=int(np.count_nonzero(slopes == 0)))

    def _report(self, kind: str, checks: List[RegionCheck], n: int) -> CertificationReport:
        worst = max(checks, key=lambda c: c.worst_deviation)
        certified = all(c.worst_deviation <= self.config.UNIT_TOL and c.singular == 0 for c in checks)
        report = CertificationReport(kind=kind, certified=certified, probe_points=n, tolerance=self.config.UNIT_TOL,
                                     worst_deviation=worst.worst_deviation, worst_region=worst.region,
                                     worst_location=worst.worst_location, worst_value=worst.worst_value,
                                     regions=checks)
        logger.info("Unit %s check over %d regions at %d probes each: %s (worst deviation %.3g)",
                    kind, len(checks), n, 'certified' if certified else 'not certified', worst.worst_deviation)
        return report

    def unit_derivative_check(self, mapping: MixedPairMap, grid: Optional[int] = None) -> CertificationReport:
        n = grid or self.config.PROBE_POINTS
        with concurrent.futures.ThreadPoolExecutor(max_workers=self.config.MAX_WORKERS) as executor:
            checks = list(executor.map(lambda r: self._check_region(r, n), mapping.regions))
        return self._report('derivative', checks, n)

    def _vector_probes(self, dimension: int, n: int) -> np.ndarray:
        sobol = qmc.Sobol(dimension, scramble=True, seed=0)
        u = sobol.random(n)
        return logit(np.clip(u, 1e-12, 1 - 1e-12))

    def _check_vector_region(self, region: VectorRegion, probes: np.ndarray) -> RegionCheck:
        points = probes[region.contains(probes)]
        if points.shape[0] == 0:
            return RegionCheck(region.input_label, None, region.name, 0, 0.0, None, 1.0)
        jacobians = np.stack([region.jacobian_at(y, self.config.FD_STEP) for y in points])
        dets = np.abs(np.linalg.det(jacobians))
        deviation = np.abs(dets - 1.0)
        worst = int(np.argmax(deviation))
        return RegionCheck(input_label=region.input_label, output_label=None, region=region.name,
                           probe_points=int(points.shape[0]), worst_deviation=float(deviation[worst]),
                           worst_location=tuple(float(v) for v in points[worst]),
                           worst_value=float(dets[worst]), singular=int(np.count_nonzero(dets < 1e-300)))

    def unit_jacobian_check(self, mapping: VectorMixedPairMap, grid: Optional[int] = None) -> CertificationReport:
        n = grid or self.config.PROBE_POINTS
        probes = self._vector_probes(mapping.dimension, n)
        mapping.check_bijective(probes, self.config.BIJECTIVITY_TOL)
        with concurrent.futures.ThreadPoolExecutor(max_workers=self.config.MAX_WORKERS) as executor:
            checks = list(executor.map(lambda r: self._check_vector_region(r, probes), mapping.regions))
        return self._report('jacobian', checks, n)

    # -- pushforward ------------------------------------------------------

    def _restrict(self, shape: DensitySpec, interval) -> Tuple[float, Optional[DensitySpec]]:
        if shape.family != 'custom':
            return shape.restrict(*interval)
        span = intersect(shape.support, interval)
        if span is None:
            return 0.0, None
        mass, _ = self.quadrature.integrate_line(shape.pdf, span, shape.breakpoints(self.config.TAIL_MASS))
        if mass <= 0:
            return 0.0, None
        evaluator = shape.evaluator
        return mass, DensitySpec.custom(lambda y: np.asarray(evaluator(y), dtype=float) / mass, span)

    def _tabulate(self, piece: DensitySpec, region: Region) -> DensitySpec:
        """Change of variables on a knot grid: h(z) = f(F^-1(z)) / |F'(F^-1(z))|."""
        lo, hi = piece.integration_bounds(self.config.TAIL_MASS)
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise UnsupportedShapeError("tabulated pushforward needs a finite support")
        zs = np.sort(region.segment.forward(np.linspace(lo, hi, self.config.TABULATED_KNOTS)))
        ys = region.segment.inverse(zs)
        slopes = np.abs(region.segment.derivative(ys))
        values = np.where(slopes > 0, piece.pdf(ys) / np.where(slopes > 0, slopes, 1.0), 0.0)
        logger.debug("tabulated pushforward of %s with %d knots", _describe(region), zs.size)
        return DensitySpec.piecewise_linear(zip(zs, values), normalize=True)

    @staticmethod
    def _merge_uniform(pieces: List[Tuple[float, DensitySpec]]) -> Optional[DensitySpec]:
        """Adjacent uniforms with one common height are a single uniform."""
        if not all(d.family == 'uniform' for _, d in pieces):
            return None
        ordered = sorted(pieces, key=lambda item: item[1].support[0])
        total = sum(w for w, _ in ordered)
        heights = [w / total / (d.support[1] - d.support[0]) for w, d in ordered]
        touching = all(math.isclose(a[1].support[1], b[1].support[0], rel_tol=0, abs_tol=1e-12)
                       for a, b in zip(ordered, ordered[1:]))
        if touching and max(heights) - min(heights) <= 1e-12 * max(heights):
            return DensitySpec.uniform(ordered[0][1].support[0], ordered[-1][1].support[1])
        return None

    def pushforward(self, dist: MixedPairDistribution, mapping: MixedPairMap) -> MixedPairDistribution:
        self.check_bijective(mapping)
        outputs: Dict[Label, List[Tuple[float, DensitySpec]]] = {}
        for atom in dist.atoms:
            regions = mapping.regions_for(atom.label)
            if not regions:
                raise DomainError(f"map has no region for input label {atom.label!r}")
            covered = 0.0
            for region in regions:
                fraction, piece = self._restrict(atom.shape, region.interval)
                if piece is None:
                    continue
                covered += fraction
                image = None
                if isinstance(region.segment, AffineMap):
                    image = piece.affine(region.segment.slope, region.segment.intercept)
                if image is None:
                    image = self._tabulate(piece, region)
                outputs.setdefault(region.output_label, []).append((atom.mass * fraction, image))
            if abs(covered - 1.0) > self.config.MASS_TOL:
                raise DomainError(f"map regions cover only {covered:.12g} of atom {atom.label!r}")
        atoms = []
        for label, pieces in outputs.items():
            mass = math.fsum(w for w, _ in pieces)
            shape = self._merge_uniform(pieces) or DensitySpec.mixture([(w / mass, d) for w, d in pieces])
            atoms.append((label, mass, shape))
        total = math.fsum(m for _, m, _ in atoms)
        # restriction masses come from cdf differences; renormalize the rounding away
        return MixedPairDistribution.from_atoms(((l, m / total * (1 - dist.tail_mass), s) for l, m, s in atoms),
                                                dist.tail_mass)

    # -- reports ----------------------------------------------------------

    def preservation_report(self, dist: MixedPairDistribution, mapping: MixedPairMap,
                            allow_uncertified: bool = False, grid: Optional[int] = None) -> PreservationReport:
        self.check_bijective(mapping)
        certification = self.unit_derivative_check(mapping, grid)
        image = self.pushforward(dist, mapping)
        h_in = self.entropy.mixed_entropy(dist, allow_uncertified)
        h_out = self.entropy.mixed_entropy(image, allow_uncertified)
        return PreservationReport(h_in=h_in.value, h_out=h_out.value, difference=h_out.value - h_in.value,
                                  certified=certification.certified, certification=certification,
                                  input_result=h_in, output_result=h_out)

    def compose(self, first: MixedPairMap, second: MixedPairMap) -> MixedPairMap:
        """second after first; bijective when both are."""
        combined = compose(first, second)
        self.check_bijective(combined)
        return combined

    def graph_mutual_information(self, dist: MixedPairDistribution, mapping: MixedPairMap,
                                 allow_uncertified: bool = False) -> float:
        """I(Z; F(Z)) for a bijection F.

        The pair (Z, F(Z)) lives on the graph of F, so its joint entropy is
        H(Z) and the information reduces to H(F(Z)).
        """
        return self.entropy.mixed_entropy(self.pushforward(dist, mapping), allow_uncertified).value
