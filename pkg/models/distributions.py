"""Mixed-pair distributions, scalar and vector.

A scalar mixed pair Z = (X, Y) is a finite, ordered list of atoms. Atom i
carries a discrete label x_i and a sub-density g_i = p_i * shape_i, where
shape_i is the conditional density of Y given X = x_i. Vector distributions
carry label tuples and d-dimensional shapes.
"""

import itertools
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import gammaln

from config.settings import Config
from models.densities import DensitySpec
from models.errors import (AtomIndexError, InvalidDistributionError, UndefinedPosteriorError,
                           UnsupportedShapeError)

Label = Union[int, str]

CONSTANT_LABEL = '*'
CONTINUOUS_LABEL = 'x0'


def normalize_label(label) -> Label:
    """Labels are exact: integers or strings, never floats."""
    if isinstance(label, bool):
        raise InvalidDistributionError(f"Boolean labels are ambiguous: {label!r}")
    if isinstance(label, (int, np.integer)):
        return int(label)
    if isinstance(label, str):
        return label
    if isinstance(label, (float, np.floating)) and float(label).is_integer():
        return int(label)
    if isinstance(label, (tuple, list)):
        return tuple(normalize_label(x) for x in label)
    raise InvalidDistributionError(f"Labels must be integers or strings, got {label!r}")


def _check_masses(masses: np.ndarray, tail_mass: float, tol: float, what: str):
    if np.any(~np.isfinite(masses)) or np.any(masses <= 0):
        raise InvalidDistributionError(f"{what}: every atom mass must be strictly positive")
    if not 0 <= tail_mass < 1:
        raise InvalidDistributionError(f"{what}: tail mass must lie in [0, 1), got {tail_mass}")
    total = math.fsum(masses) + tail_mass
    if abs(total - 1.0) > tol:
        raise InvalidDistributionError(f"{what}: masses sum to {total!r}, expected 1 within {tol}")


@dataclass(frozen=True)
class SubDensity:
    shape: DensitySpec
    mass: float

    def pdf(self, y):
        return self.mass * self.shape.pdf(y)


@dataclass(frozen=True)
class Atom:
    label: Label
    sub: SubDensity

    @property
    def mass(self) -> float:
        return self.sub.mass

    @property
    def shape(self) -> DensitySpec:
        return self.sub.shape


@dataclass(frozen=True)
class MixedPairDistribution:
    atoms: Tuple[Atom, ...]
    tail_mass: float = 0.0

    def __post_init__(self):
        if not self.atoms:
            raise InvalidDistributionError("A mixed pair needs at least one atom")
        labels = [a.label for a in self.atoms]
        if len(set(labels)) != len(labels):
            raise InvalidDistributionError(f"Atom labels must be distinct, got {labels}")
        tabulated = any(a.shape.family in ('piecewise-linear', 'custom') for a in self.atoms)
        tol = Config.TABULATED_MASS_TOL if tabulated else Config.MASS_TOL
        _check_masses(self.masses, self.tail_mass, tol, "mixed pair")
        for a in self.atoms:
            if a.shape.family == 'piecewise-linear' and abs(a.shape.total_mass() - 1.0) > Config.TABULATED_MASS_TOL:
                raise InvalidDistributionError(f"Conditional density of atom {a.label!r} is not normalized")

    @classmethod
    def from_atoms(cls, atoms: Iterable[Tuple[Label, float, DensitySpec]], tail_mass: float = 0.0):
        return cls(tuple(Atom(normalize_label(label), SubDensity(shape, float(mass)))
                         for label, mass, shape in atoms), tail_mass)

    @property
    def labels(self) -> List[Label]:
        return [a.label for a in self.atoms]

    @property
    def masses(self) -> np.ndarray:
        return np.array([a.mass for a in self.atoms], dtype=float)

    def __len__(self) -> int:
        return len(self.atoms)

    def _atom(self, i: int) -> Atom:
        if not isinstance(i, (int, np.integer)) or not 0 <= i < len(self.atoms):
            raise AtomIndexError(f"Atom index {i!r} out of range for {len(self.atoms)} atoms")
        return self.atoms[i]

    def index_of(self, label) -> int:
        label = normalize_label(label)
        for i, a in enumerate(self.atoms):
            if a.label == label:
                return i
        raise AtomIndexError(f"No atom labelled {label!r}")

    def atom_mass(self, i: int) -> float:
        return self._atom(i).mass

    def sub_density(self, i: int, y):
        return self._atom(i).sub.pdf(y)

    def sub_densities(self, y) -> np.ndarray:
        """Array of shape (n_atoms, *y.shape) holding g_i(y)."""
        y = np.asarray(y, dtype=float)
        return np.stack([a.sub.pdf(y) for a in self.atoms])

    def marginal_density(self, y):
        out = self.sub_densities(y).sum(axis=0)
        return out if np.ndim(out) else float(out)

    def posterior_weights(self, y: float) -> np.ndarray:
        g = self.sub_densities(float(y))
        total = g.sum()
        if not total > 0:
            raise UndefinedPosteriorError(f"Marginal density vanishes at y={y}; posterior undefined")
        return g / total

    def conditional_density(self, i: int) -> DensitySpec:
        return self._atom(i).shape

    def breakpoints(self, tail_mass: float) -> np.ndarray:
        return np.unique(np.concatenate([a.shape.breakpoints(tail_mass) for a in self.atoms]))

    def sample_indices(self, rng: np.random.Generator, n: int) -> Tuple[np.ndarray, np.ndarray]:
        probs = self.masses / self.masses.sum()
        idx = rng.choice(len(self.atoms), size=n, p=probs)
        ys = np.empty(n)
        for i, a in enumerate(self.atoms):
            picked = idx == i
            count = int(picked.sum())
            if count:
                ys[picked] = a.shape.sample(rng, count)
        return idx, ys

    def sample(self, rng: np.random.Generator, n: Optional[int] = None):
        """One ``(label, y)`` draw, or lists of labels and values when ``n`` is given."""
        idx, ys = self.sample_indices(rng, 1 if n is None else n)
        if n is None:
            return self.atoms[int(idx[0])].label, float(ys[0])
        return [self.atoms[int(i)].label for i in idx], ys


# ---------------------------------------------------------------------------
# vector shapes


class VectorShape(ABC):
    dimension: int

    @abstractmethod
    def pdf(self, points: np.ndarray) -> np.ndarray:
        """Density at ``points`` of shape (m, d)."""

    @abstractmethod
    def axis_breakpoints(self, axis: int, tail_mass: float) -> np.ndarray:
        pass

    @abstractmethod
    def marginal(self, coords: Sequence[int]) -> 'VectorShape':
        pass

    @abstractmethod
    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        pass


@dataclass(frozen=True)
class ProductShape(VectorShape):
    factors: Tuple[DensitySpec, ...]

    @property
    def dimension(self) -> int:
        return len(self.factors)

    def pdf(self, points):
        points = np.atleast_2d(points)
        out = np.ones(points.shape[0])
        for k, f in enumerate(self.factors):
            out *= f.pdf(points[:, k])
        return out

    def axis_breakpoints(self, axis, tail_mass):
        return self.factors[axis].breakpoints(tail_mass)

    def marginal(self, coords):
        return ProductShape(tuple(self.factors[c] for c in coords))

    def sample(self, rng, n):
        return np.column_stack([f.sample(rng, n) for f in self.factors])


@dataclass(frozen=True)
class OrderedShape(VectorShape):
    """Law of the increasing rearrangement of n i.i.d. draws from ``base``."""
    base: DensitySpec
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise InvalidDistributionError("ordered shape needs n >= 1")

    @property
    def dimension(self) -> int:
        return self.n

    @property
    def log_factorial(self) -> float:
        return float(gammaln(self.n + 1))

    def pdf(self, points):
        points = np.atleast_2d(points)
        ordered = np.all(np.diff(points, axis=1) >= 0, axis=1)
        out = np.exp(self.log_factorial) * np.prod(self.base.pdf(points), axis=1)
        return np.where(ordered, out, 0.0)

    def axis_breakpoints(self, axis, tail_mass):
        return self.base.breakpoints(tail_mass)

    def marginal(self, coords):
        if sorted(coords) == list(range(self.n)):
            return self
        raise UnsupportedShapeError("marginals of ordered shapes are not tabulated; sample instead")

    def sample(self, rng, n):
        return np.sort(self.base.sample(rng, n * self.n).reshape(n, self.n), axis=1)


@dataclass(frozen=True, eq=False)
class GridShape(VectorShape):
    """Piecewise-constant density on a tensor grid of cells."""
    edges: Tuple[np.ndarray, ...]
    values: np.ndarray

    def __post_init__(self):
        edges = tuple(np.asarray(e, dtype=float) for e in self.edges)
        values = np.asarray(self.values, dtype=float)
        if values.shape != tuple(len(e) - 1 for e in edges):
            raise InvalidDistributionError(f"Grid values shape {values.shape} does not match edges")
        if any(np.any(np.diff(e) <= 0) for e in edges):
            raise InvalidDistributionError("Grid edges must be strictly increasing")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise InvalidDistributionError("Grid values must be finite and nonnegative")
        object.__setattr__(self, 'edges', edges)
        object.__setattr__(self, 'values', values)

    @classmethod
    def normalized(cls, edges, values) -> 'GridShape':
        shape = cls(tuple(edges), values)
        total = float(np.sum(shape.values * shape.cell_volumes))
        if total <= 0:
            raise InvalidDistributionError("Grid density has zero mass")
        return cls(shape.edges, shape.values / total)

    @property
    def dimension(self) -> int:
        return len(self.edges)

    @property
    def cell_volumes(self) -> np.ndarray:
        widths = [np.diff(e) for e in self.edges]
        return np.prod(np.meshgrid(*widths, indexing='ij'), axis=0) if widths else np.ones(())

    def total_mass(self) -> float:
        return float(np.sum(self.values * self.cell_volumes))

    def pdf(self, points):
        points = np.atleast_2d(points)
        inside = np.ones(points.shape[0], dtype=bool)
        index = []
        for k, e in enumerate(self.edges):
            col = points[:, k]
            inside &= (col >= e[0]) & (col <= e[-1])
            index.append(np.clip(np.searchsorted(e, col, side='right') - 1, 0, len(e) - 2))
        return np.where(inside, self.values[tuple(index)], 0.0)

    def axis_breakpoints(self, axis, tail_mass):
        return self.edges[axis]

    def marginal(self, coords):
        coords = list(coords)
        dropped = tuple(k for k in range(self.dimension) if k not in coords)
        weighted = self.values
        for k in dropped:
            shape = [1] * self.dimension
            shape[k] = -1
            weighted = weighted * np.diff(self.edges[k]).reshape(shape)
        reduced = weighted.sum(axis=dropped) if dropped else weighted
        kept = [k for k in range(self.dimension) if k not in dropped]
        order = [kept.index(c) for c in coords]
        return GridShape(tuple(self.edges[c] for c in coords), np.transpose(reduced, order))

    def sample(self, rng, n):
        probs = (self.values * self.cell_volumes).ravel()
        cells = rng.choice(probs.size, size=n, p=probs / probs.sum())
        index = np.unravel_index(cells, self.values.shape)
        cols = []
        for k, e in enumerate(self.edges):
            lo = e[index[k]]
            cols.append(lo + rng.random(n) * (e[index[k] + 1] - lo))
        return np.column_stack(cols)


@dataclass(frozen=True, eq=False)
class MixtureShape(VectorShape):
    components: Tuple[Tuple[float, VectorShape], ...]

    @classmethod
    def of(cls, components) -> VectorShape:
        comps = [(float(w), s) for w, s in components if w > 0]
        total = sum(w for w, _ in comps)
        comps = [(w / total, s) for w, s in comps]
        # grids on identical edges collapse into one grid
        if len(comps) > 1 and all(isinstance(s, GridShape) for _, s in comps):
            first = comps[0][1]
            if all(len(s.edges) == len(first.edges) and
                   all(np.array_equal(a, b) for a, b in zip(s.edges, first.edges)) for _, s in comps):
                return GridShape(first.edges, sum(w * s.values for w, s in comps))
        if len(comps) == 1:
            return comps[0][1]
        return cls(tuple(comps))

    @property
    def dimension(self) -> int:
        return self.components[0][1].dimension

    def pdf(self, points):
        return sum(w * s.pdf(points) for w, s in self.components)

    def axis_breakpoints(self, axis, tail_mass):
        return np.unique(np.concatenate([s.axis_breakpoints(axis, tail_mass) for _, s in self.components]))

    def marginal(self, coords):
        return MixtureShape.of([(w, s.marginal(coords)) for w, s in self.components])

    def sample(self, rng, n):
        weights = np.array([w for w, _ in self.components])
        which = rng.choice(len(self.components), size=n, p=weights)
        out = np.empty((n, self.dimension))
        for j, (_, s) in enumerate(self.components):
            picked = which == j
            if picked.any():
                out[picked] = s.sample(rng, int(picked.sum()))
        return out


@dataclass(frozen=True)
class VectorAtom:
    label: Tuple[Label, ...]
    mass: float
    shape: VectorShape


@dataclass(frozen=True)
class MixedPairVectorDistribution:
    atoms: Tuple[VectorAtom, ...]
    tail_mass: float = 0.0

    def __post_init__(self):
        if not self.atoms:
            raise InvalidDistributionError("A mixed-pair vector needs at least one atom")
        dims = {a.shape.dimension for a in self.atoms} | {len(a.label) for a in self.atoms}
        if len(dims) != 1:
            raise InvalidDistributionError(f"Labels and shapes must share one dimension, got {sorted(dims)}")
        labels = [a.label for a in self.atoms]
        if len(set(labels)) != len(labels):
            raise InvalidDistributionError("Atom label vectors must be distinct")
        tabulated = any(isinstance(a.shape, GridShape) for a in self.atoms)
        _check_masses(np.array([a.mass for a in self.atoms]), self.tail_mass,
                      Config.TABULATED_MASS_TOL if tabulated else Config.MASS_TOL, "mixed-pair vector")

    @classmethod
    def from_atoms(cls, atoms: Iterable[Tuple[Sequence[Label], float, VectorShape]], tail_mass: float = 0.0):
        return cls(tuple(VectorAtom(normalize_label(tuple(label)), float(mass), shape)
                         for label, mass, shape in atoms), tail_mass)

    @property
    def dimension(self) -> int:
        return len(self.atoms[0].label)

    @property
    def masses(self) -> np.ndarray:
        return np.array([a.mass for a in self.atoms], dtype=float)

    def joint_density(self, points: np.ndarray) -> np.ndarray:
        return sum(a.mass * a.shape.pdf(points) for a in self.atoms)

    def marginal(self, coords: Sequence[int]) -> 'MixedPairVectorDistribution':
        """Marginal over ``coords``: atoms grouped by projected label, coordinates integrated out."""
        coords = list(coords)
        if not coords or any(not 0 <= c < self.dimension for c in coords) or len(set(coords)) != len(coords):
            raise AtomIndexError(f"Invalid coordinate selection {coords} for dimension {self.dimension}")
        groups = {}
        for a in self.atoms:
            key = tuple(a.label[c] for c in coords)
            groups.setdefault(key, []).append(a)
        atoms = []
        for key, members in groups.items():
            mass = math.fsum(a.mass for a in members)
            shape = MixtureShape.of([(a.mass / mass, a.shape.marginal(coords)) for a in members])
            atoms.append(VectorAtom(key, mass, shape))
        return MixedPairVectorDistribution(tuple(atoms), self.tail_mass)

    def sample_indices(self, rng: np.random.Generator, n: int) -> Tuple[np.ndarray, np.ndarray]:
        probs = self.masses / self.masses.sum()
        idx = rng.choice(len(self.atoms), size=n, p=probs)
        points = np.empty((n, self.dimension))
        for i, a in enumerate(self.atoms):
            picked = idx == i
            if picked.any():
                points[picked] = a.shape.sample(rng, int(picked.sum()))
        return idx, points


# ---------------------------------------------------------------------------
# builders


def as_vector(dist: MixedPairDistribution) -> MixedPairVectorDistribution:
    return MixedPairVectorDistribution(
        tuple(VectorAtom((a.label,), a.mass, ProductShape((a.shape,))) for a in dist.atoms), dist.tail_mass)


def independent_product(*dists: MixedPairDistribution) -> MixedPairVectorDistribution:
    """Joint law of independent mixed pairs."""
    if not dists:
        raise InvalidDistributionError("independent_product needs at least one distribution")
    atoms = []
    for combo in itertools.product(*(d.atoms for d in dists)):
        mass = math.prod(a.mass for a in combo)
        atoms.append(VectorAtom(tuple(a.label for a in combo), mass,
                                ProductShape(tuple(a.shape for a in combo))))
    tail = 1.0 - math.prod(1.0 - d.tail_mass for d in dists)
    return MixedPairVectorDistribution(tuple(atoms), tail)


def pair_with_label(dist: MixedPairDistribution) -> MixedPairVectorDistribution:
    """Joint law of Z = (X, Y) and the injected copy of its discrete part X.

    The copy carries its own independent uniform[0, 1] coordinate.
    """
    unit = DensitySpec.uniform(0.0, 1.0)
    return MixedPairVectorDistribution(
        tuple(VectorAtom((a.label, a.label), a.mass, ProductShape((a.shape, unit))) for a in dist.atoms),
        dist.tail_mass)


def ordered_iid(density: DensitySpec, n: int, label: Label = CONSTANT_LABEL) -> MixedPairVectorDistribution:
    return MixedPairVectorDistribution((VectorAtom((label,) * n, 1.0, OrderedShape(density, n)),))


def grid_joint(cells: Iterable[Tuple[Sequence[Label], float, Sequence[np.ndarray], np.ndarray]]
               ) -> MixedPairVectorDistribution:
    """Vector distribution whose atoms carry tabulated grids; each grid is normalized."""
    return MixedPairVectorDistribution.from_atoms(
        (label, mass, GridShape.normalized(edges, values)) for label, mass, edges, values in cells)
