"""One-dimensional density descriptions.

A ``DensitySpec`` is a named analytic family (uniform, exponential, gaussian),
a piecewise-linear table, a finite mixture of other specs, or an in-memory
callable. Every spec carries an explicit support; evaluation outside it is
exactly zero. Analytic families restricted to a narrower support are
renormalized over that support, which keeps region restriction and affine
maps inside the closed set of families.
"""

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from scipy import stats

from models.errors import InvalidDistributionError, UnsupportedShapeError

ANALYTIC_FAMILIES = ('uniform', 'exponential', 'gaussian')
FAMILIES = ANALYTIC_FAMILIES + ('piecewise-linear', 'mixture', 'custom')

Interval = Tuple[float, float]
FULL_LINE: Interval = (-math.inf, math.inf)


def intersect(a: Interval, b: Interval) -> Optional[Interval]:
    lo, hi = max(a[0], b[0]), min(a[1], b[1])
    if hi <= lo:
        return None
    return (lo, hi)


@dataclass(frozen=True)
class DensitySpec:
    family: str
    params: Dict[str, float] = field(default_factory=dict)
    support: Interval = FULL_LINE
    knots: Tuple[Tuple[float, float], ...] = ()
    components: Tuple[Tuple[float, 'DensitySpec'], ...] = ()
    evaluator: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidDistributionError(f"Unknown density family: {self.family!r}")
        lo, hi = float(self.support[0]), float(self.support[1])
        if math.isnan(lo) or math.isnan(hi) or not lo < hi:
            raise InvalidDistributionError(f"Support must be a non-empty interval, got {self.support}")
        object.__setattr__(self, 'support', (lo, hi))
        object.__setattr__(self, 'params', dict(self.params))
        getattr(self, f"_validate_{self.family.replace('-', '_')}")()

    # -- construction -----------------------------------------------------

    @classmethod
    def uniform(cls, a: float, b: float) -> 'DensitySpec':
        return cls('uniform', {'a': float(a), 'b': float(b)}, (float(a), float(b)))

    @classmethod
    def exponential(cls, rate: float, loc: float = 0.0) -> 'DensitySpec':
        return cls('exponential', {'rate': float(rate), 'loc': float(loc)}, (float(loc), math.inf))

    @classmethod
    def gaussian(cls, mean: float, variance: float) -> 'DensitySpec':
        return cls('gaussian', {'mean': float(mean), 'variance': float(variance)}, FULL_LINE)

    @classmethod
    def piecewise_linear(cls, knots, normalize: bool = True) -> 'DensitySpec':
        pairs = tuple((float(y), float(v)) for y, v in knots)
        if normalize and len(pairs) >= 2:
            ys = np.array([p[0] for p in pairs])
            vs = np.array([p[1] for p in pairs])
            area = float(np.trapz(vs, ys))
            if area <= 0:
                raise InvalidDistributionError("Piecewise-linear density has zero area")
            pairs = tuple((y, v / area) for y, v in pairs)
        support = (pairs[0][0], pairs[-1][0]) if len(pairs) >= 2 else FULL_LINE
        return cls('piecewise-linear', {}, support, knots=pairs)

    @classmethod
    def mixture(cls, components) -> 'DensitySpec':
        comps = tuple((float(w), d) for w, d in components if w > 0)
        if not comps:
            raise InvalidDistributionError("Mixture needs at least one component with positive weight")
        total = sum(w for w, _ in comps)
        comps = tuple((w / total, d) for w, d in comps)
        if len(comps) == 1:
            return comps[0][1]
        lo = min(d.support[0] for _, d in comps)
        hi = max(d.support[1] for _, d in comps)
        return cls('mixture', {}, (lo, hi), components=comps)

    @classmethod
    def custom(cls, evaluator: Callable[[np.ndarray], np.ndarray], support: Interval) -> 'DensitySpec':
        return cls('custom', {}, support, evaluator=evaluator)

    # -- validation -------------------------------------------------------

    def _require(self, *names):
        missing = [n for n in names if n not in self.params]
        if missing:
            raise InvalidDistributionError(f"{self.family} density missing parameters: {missing}")

    def _validate_uniform(self):
        self._require('a', 'b')
        a, b = self.params['a'], self.params['b']
        if not (math.isfinite(a) and math.isfinite(b) and a < b):
            raise InvalidDistributionError(f"uniform needs finite a < b, got ({a}, {b})")
        self._clip_support((a, b))

    def _validate_exponential(self):
        self._require('rate')
        self.params.setdefault('loc', 0.0)
        if not self.params['rate'] > 0:
            raise InvalidDistributionError(f"exponential rate must be positive, got {self.params['rate']}")
        self._clip_support((self.params['loc'], math.inf))

    def _validate_gaussian(self):
        self._require('mean', 'variance')
        if not self.params['variance'] > 0:
            raise InvalidDistributionError(f"gaussian variance must be positive, got {self.params['variance']}")

    def _validate_piecewise_linear(self):
        if len(self.knots) < 2:
            raise InvalidDistributionError("piecewise-linear density needs at least two knots")
        ys = np.array([k[0] for k in self.knots])
        vs = np.array([k[1] for k in self.knots])
        if not np.all(np.isfinite(ys)) or np.any(np.diff(ys) <= 0):
            raise InvalidDistributionError("piecewise-linear knots must be finite and strictly increasing")
        if np.any(vs < 0) or not np.all(np.isfinite(vs)):
            raise InvalidDistributionError("piecewise-linear values must be finite and nonnegative")
        # the table itself defines the support
        object.__setattr__(self, 'support', (float(ys[0]), float(ys[-1])))

    def _validate_mixture(self):
        if not self.components:
            raise InvalidDistributionError("mixture density needs components")
        if abs(sum(w for w, _ in self.components) - 1.0) > 1e-9:
            raise InvalidDistributionError("mixture weights must sum to 1")

    def _validate_custom(self):
        if self.evaluator is None:
            raise InvalidDistributionError("custom density needs an evaluator")

    def _clip_support(self, natural: Interval):
        clipped = intersect(self.support, natural)
        if clipped is None:
            raise InvalidDistributionError(f"Support {self.support} misses the family support {natural}")
        object.__setattr__(self, 'support', clipped)

    # -- family internals -------------------------------------------------

    @property
    def is_analytic(self) -> bool:
        return self.family in ANALYTIC_FAMILIES

    @cached_property
    def _frozen(self):
        p = self.params
        if self.family == 'uniform':
            return stats.uniform(loc=p['a'], scale=p['b'] - p['a'])
        if self.family == 'exponential':
            return stats.expon(loc=p['loc'], scale=1.0 / p['rate'])
        if self.family == 'gaussian':
            return stats.norm(loc=p['mean'], scale=math.sqrt(p['variance']))
        return None

    @cached_property
    def _norm(self) -> float:
        lo, hi = self.support
        norm = float(self._frozen.cdf(hi) - self._frozen.cdf(lo))
        if norm <= 0:
            raise InvalidDistributionError(f"Support {self.support} carries no {self.family} mass")
        return norm

    @cached_property
    def _table(self) -> Tuple[np.ndarray, np.ndarray]:
        return (np.array([k[0] for k in self.knots]), np.array([k[1] for k in self.knots]))

    # -- evaluation -------------------------------------------------------

    def contains(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return (y >= self.support[0]) & (y <= self.support[1])

    def pdf(self, y):
        y = np.asarray(y, dtype=float)
        inside = self.contains(y)
        out = np.zeros(y.shape)
        if np.any(inside):
            out[inside] = self._pdf_inside(y[inside])
        return out if out.ndim else float(out)

    def _pdf_inside(self, y: np.ndarray) -> np.ndarray:
        if self.is_analytic:
            return self._frozen.pdf(y) / self._norm
        if self.family == 'piecewise-linear':
            ys, vs = self._table
            return np.interp(y, ys, vs)
        if self.family == 'mixture':
            return sum(w * d.pdf(y) for w, d in self.components)
        return np.broadcast_to(np.asarray(self.evaluator(y), dtype=float), y.shape).copy()

    def cdf(self, y):
        y = np.clip(np.asarray(y, dtype=float), *self.support)
        if self.is_analytic:
            out = (self._frozen.cdf(y) - self._frozen.cdf(self.support[0])) / self._norm
        elif self.family == 'piecewise-linear':
            ys, vs = self._table
            areas = np.concatenate([[0.0], np.cumsum(np.diff(ys) * (vs[:-1] + vs[1:]) / 2)])
            idx = np.clip(np.searchsorted(ys, y, side='right') - 1, 0, len(ys) - 2)
            t = y - ys[idx]
            slope = (vs[idx + 1] - vs[idx]) / (ys[idx + 1] - ys[idx])
            out = areas[idx] + vs[idx] * t + slope * t * t / 2
        elif self.family == 'mixture':
            out = sum(w * d.cdf(y) for w, d in self.components)
        else:
            raise UnsupportedShapeError("custom densities have no closed-form cdf")
        return out if np.ndim(out) else float(out)

    def total_mass(self) -> float:
        """Integral over the support; 1 for analytic families and mixtures."""
        if self.family == 'piecewise-linear':
            ys, vs = self._table
            return float(np.trapz(vs, ys))
        if self.family == 'custom':
            raise UnsupportedShapeError("custom density mass needs quadrature")
        return 1.0

    def mass_in(self, lo: float, hi: float) -> float:
        """Probability of the interval [lo, hi] under this density."""
        span = intersect(self.support, (lo, hi))
        if span is None:
            return 0.0
        return float(self.cdf(span[1]) - self.cdf(span[0])) / self.total_mass()

    # -- bounds for integration --------------------------------------------

    def integration_bounds(self, tail_mass: float) -> Interval:
        """Finite bounds outside which the family carries less than ``tail_mass``.

        Custom densities keep their declared (possibly infinite) support.
        """
        lo, hi = self.support
        if self.is_analytic:
            frozen, norm = self._frozen, self._norm
            if math.isinf(lo):
                lo = float(frozen.ppf(frozen.cdf(self.support[0]) + tail_mass * norm))
            if math.isinf(hi):
                hi = float(frozen.isf(frozen.sf(self.support[1]) + tail_mass * norm))
            return (lo, hi)
        if self.family == 'mixture':
            bounds = [d.integration_bounds(tail_mass) for _, d in self.components]
            return (min(b[0] for b in bounds), max(b[1] for b in bounds))
        return (lo, hi)

    def breakpoints(self, tail_mass: float) -> np.ndarray:
        """Finite points where the density or its derivative may jump."""
        lo, hi = self.integration_bounds(tail_mass)
        points = [lo, hi]
        if self.family == 'piecewise-linear':
            points.extend(self._table[0])
        elif self.family == 'mixture':
            for _, d in self.components:
                points.extend(d.breakpoints(tail_mass))
        elif self.family == 'gaussian':
            mean = self.params['mean']
            if lo < mean < hi:
                points.append(mean)
        pts = np.unique(np.asarray([p for p in points if math.isfinite(p)], dtype=float))
        return pts[(pts >= lo) & (pts <= hi)] if math.isfinite(lo) and math.isfinite(hi) else pts

    # -- sampling ---------------------------------------------------------

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.family == 'mixture':
            weights = np.array([w for w, _ in self.components])
            which = rng.choice(len(self.components), size=n, p=weights)
            out = np.empty(n)
            for j, (_, d) in enumerate(self.components):
                picked = which == j
                out[picked] = d.sample(rng, int(picked.sum()))
            return out
        u = rng.random(n)
        if self.is_analytic:
            frozen = self._frozen
            base = frozen.cdf(self.support[0])
            y = frozen.ppf(base + u * self._norm)
            return np.clip(y, *self.support)
        if self.family == 'piecewise-linear':
            return self._sample_table(*self._table, u)
        lo, hi = self.support
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise UnsupportedShapeError("sampling a custom density needs a finite support")
        ys = np.linspace(lo, hi, 4097)
        return self._sample_table(ys, np.asarray(self.evaluator(ys), dtype=float), u)

    @staticmethod
    def _sample_table(ys: np.ndarray, vs: np.ndarray, u: np.ndarray) -> np.ndarray:
        seg_area = np.diff(ys) * (vs[:-1] + vs[1:]) / 2
        cum = np.concatenate([[0.0], np.cumsum(seg_area)])
        target = u * cum[-1]
        idx = np.clip(np.searchsorted(cum, target, side='right') - 1, 0, len(seg_area) - 1)
        r = target - cum[idx]
        v0 = vs[idx]
        slope = (vs[idx + 1] - v0) / (ys[idx + 1] - ys[idx])
        # stable root of v0*t + slope*t^2/2 = r
        denom = v0 + np.sqrt(np.maximum(v0 * v0 + 2 * slope * r, 0.0))
        with np.errstate(divide='ignore', invalid='ignore'):
            t = np.where(denom > 0, 2 * r / denom, 0.0)
        return np.clip(ys[idx] + t, ys[idx], ys[idx + 1])

    # -- transformations --------------------------------------------------

    def restrict(self, lo: float, hi: float) -> Tuple[float, Optional['DensitySpec']]:
        """Mass of [lo, hi] and the renormalized density restricted to it."""
        span = intersect(self.support, (lo, hi))
        if span is None:
            return 0.0, None
        mass = self.mass_in(*span)
        if mass <= 0:
            return 0.0, None
        if self.family == 'uniform':
            return mass, DensitySpec.uniform(*span)
        if self.is_analytic:
            return mass, DensitySpec(self.family, dict(self.params), span)
        if self.family == 'piecewise-linear':
            ys, vs = self._table
            inner = (ys > span[0]) & (ys < span[1])
            new_ys = np.concatenate([[span[0]], ys[inner], [span[1]]])
            new_vs = np.interp(new_ys, ys, vs)
            return mass, DensitySpec.piecewise_linear(zip(new_ys, new_vs))
        if self.family == 'mixture':
            pieces = []
            for w, d in self.components:
                m, sub = d.restrict(*span)
                if sub is not None:
                    pieces.append((w * m, sub))
            return mass, DensitySpec.mixture(pieces)
        raise UnsupportedShapeError("custom densities cannot be restricted without quadrature")

    def affine(self, slope: float, intercept: float) -> Optional['DensitySpec']:
        """Density of ``slope * Y + intercept``, or None when the family cannot express it."""
        if slope == 0:
            raise InvalidDistributionError("affine image with zero slope has no density")
        image = sorted((slope * self.support[0] + intercept, slope * self.support[1] + intercept))
        image = (image[0], image[1])
        p = self.params
        if self.family == 'uniform':
            return DensitySpec.uniform(*image)
        if self.family == 'gaussian':
            return DensitySpec('gaussian', {'mean': slope * p['mean'] + intercept,
                                            'variance': slope * slope * p['variance']}, image)
        if self.family == 'exponential':
            if slope < 0:
                return None
            return DensitySpec('exponential', {'rate': p['rate'] / slope,
                                               'loc': slope * p['loc'] + intercept}, image)
        if self.family == 'piecewise-linear':
            ys, vs = self._table
            new = sorted(zip(slope * ys + intercept, vs / abs(slope)))
            return DensitySpec.piecewise_linear(new, normalize=False)
        if self.family == 'mixture':
            images = [(w, d.affine(slope, intercept)) for w, d in self.components]
            if any(d is None for _, d in images):
                return None
            return DensitySpec.mixture(images)
        return None

    def closed_form_entropy(self) -> Optional[float]:
        """Differential entropy in nats where a closed form exists."""
        p = self.params
        if self.family == 'uniform':
            return math.log(self.support[1] - self.support[0])
        if self.family == 'gaussian' and self.support == FULL_LINE:
            return 0.5 * math.log(2 * math.pi * math.e * p['variance'])
        if self.family == 'exponential' and self.support == (p['loc'], math.inf):
            return 1.0 - math.log(p['rate'])
        return None
