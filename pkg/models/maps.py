"""Bijections between mixed-pair spaces.

A scalar map is a list of regions. Each region sends the points of one input
label whose continuous coordinate lies in an interval to one output label,
through a strictly monotone segment map. Region boundaries belong to the
left region; the first region of a label also owns its left end.

Vector maps follow the same pattern with d-dimensional regions described by
a membership test and a diffeomorphism with a Jacobian.
"""

import itertools
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logit

from models.densities import FULL_LINE, Interval, intersect
from models.distributions import CONSTANT_LABEL, CONTINUOUS_LABEL, Label, normalize_label
from models.errors import DomainError, InvalidDistributionError, NonBijectiveMapError

ArrayFn = Callable[[np.ndarray], np.ndarray]


def probe_grid(interval: Interval, n: int) -> np.ndarray:
    """``n`` interior points spread uniformly in a support-adapted parameter.

    Finite intervals are sampled linearly, half-lines through u / (1 - u) and
    the full line through the logit.
    """
    u = (np.arange(n) + 0.5) / n
    lo, hi = interval
    if math.isfinite(lo) and math.isfinite(hi):
        return lo + u * (hi - lo)
    if math.isfinite(lo):
        return lo + u / (1 - u)
    if math.isfinite(hi):
        return hi - u / (1 - u)
    return logit(u)


class SegmentMap(ABC):
    """Strictly monotone map of the real line (or part of it)."""

    increasing: bool = True

    @abstractmethod
    def forward(self, y: np.ndarray) -> np.ndarray:
        pass

    @abstractmethod
    def inverse(self, z: np.ndarray) -> np.ndarray:
        pass

    @abstractmethod
    def derivative(self, y: np.ndarray) -> np.ndarray:
        pass

    def image(self, interval: Interval) -> Interval:
        with np.errstate(all='ignore'):
            ends = self.forward(np.array(interval, dtype=float))
        lo, hi = sorted(float(e) for e in ends)
        return (lo, hi)


@dataclass(frozen=True)
class AffineMap(SegmentMap):
    slope: float
    intercept: float = 0.0

    @property
    def increasing(self) -> bool:
        return self.slope > 0

    def forward(self, y):
        return self.slope * np.asarray(y, dtype=float) + self.intercept

    def inverse(self, z):
        if self.slope == 0:
            raise NonBijectiveMapError("constant segment has no inverse")
        return (np.asarray(z, dtype=float) - self.intercept) / self.slope

    def derivative(self, y):
        return np.full(np.shape(y), float(self.slope))


@dataclass(frozen=True, eq=False)
class TabulatedMap(SegmentMap):
    """Piecewise-linear monotone map through ``(y, z)`` knots, extended linearly."""
    knots: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        ys = np.array([k[0] for k in self.knots], dtype=float)
        zs = np.array([k[1] for k in self.knots], dtype=float)
        if len(ys) < 2 or np.any(np.diff(ys) <= 0):
            raise InvalidDistributionError("tabulated map needs at least two strictly increasing knots")
        dz = np.diff(zs)
        if not (np.all(dz > 0) or np.all(dz < 0)):
            raise NonBijectiveMapError("tabulated map is not strictly monotone")
        object.__setattr__(self, '_ys', ys)
        object.__setattr__(self, '_zs', zs)

    @property
    def increasing(self) -> bool:
        return self._zs[-1] > self._zs[0]

    @staticmethod
    def _extended_interp(x, xs, vs):
        x = np.asarray(x, dtype=float)
        out = np.interp(x, xs, vs)
        lo_slope = (vs[1] - vs[0]) / (xs[1] - xs[0])
        hi_slope = (vs[-1] - vs[-2]) / (xs[-1] - xs[-2])
        out = np.where(x < xs[0], vs[0] + lo_slope * (x - xs[0]), out)
        return np.where(x > xs[-1], vs[-1] + hi_slope * (x - xs[-1]), out)

    def forward(self, y):
        return self._extended_interp(y, self._ys, self._zs)

    def inverse(self, z):
        if self.increasing:
            return self._extended_interp(z, self._zs, self._ys)
        return self._extended_interp(z, self._zs[::-1], self._ys[::-1])

    def derivative(self, y):
        slopes = np.diff(self._zs) / np.diff(self._ys)
        # a knot takes the slope of the segment on its left
        idx = np.clip(np.searchsorted(self._ys, np.asarray(y, dtype=float), side='left') - 1,
                      0, len(slopes) - 1)
        return slopes[idx]


@dataclass(frozen=True, eq=False)
class CallableMap(SegmentMap):
    """Map given by Python callables; the derivative falls back to central differences."""
    forward_fn: ArrayFn
    inverse_fn: ArrayFn
    derivative_fn: Optional[ArrayFn] = None
    increasing: bool = True
    fd_step: float = 1e-6

    def forward(self, y):
        return np.asarray(self.forward_fn(np.asarray(y, dtype=float)), dtype=float)

    def inverse(self, z):
        return np.asarray(self.inverse_fn(np.asarray(z, dtype=float)), dtype=float)

    def derivative(self, y):
        y = np.asarray(y, dtype=float)
        if self.derivative_fn is not None:
            return np.asarray(self.derivative_fn(y), dtype=float)
        h = self.fd_step * np.maximum(1.0, np.abs(y))
        return (self.forward(y + h) - self.forward(y - h)) / (2 * h)


@dataclass(frozen=True, eq=False)
class ComposedSegmentMap(SegmentMap):
    first: SegmentMap
    second: SegmentMap

    @property
    def increasing(self) -> bool:
        return self.first.increasing == self.second.increasing

    def forward(self, y):
        return self.second.forward(self.first.forward(y))

    def inverse(self, z):
        return self.first.inverse(self.second.inverse(z))

    def derivative(self, y):
        return self.second.derivative(self.first.forward(y)) * self.first.derivative(y)


def compose_segments(first: SegmentMap, second: SegmentMap) -> SegmentMap:
    if isinstance(first, AffineMap) and isinstance(second, AffineMap):
        return AffineMap(second.slope * first.slope, second.slope * first.intercept + second.intercept)
    return ComposedSegmentMap(first, second)


# ---------------------------------------------------------------------------
# scalar maps


@dataclass(frozen=True)
class Region:
    input_label: Label
    interval: Interval
    output_label: Label
    segment: SegmentMap
    closed_left: bool = False

    def contains(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        lo, hi = self.interval
        left = (y >= lo) if self.closed_left else (y > lo)
        return left & (y <= hi)

    @property
    def image(self) -> Interval:
        return self.segment.image(self.interval)


@dataclass(frozen=True)
class MixedPairMap:
    regions: Tuple[Region, ...]
    name: str = ''

    def __post_init__(self):
        if not self.regions:
            raise InvalidDistributionError("A map needs at least one region")
        ordered: Dict[Label, List[Region]] = {}
        for r in self.regions:
            lo, hi = r.interval
            if not lo < hi:
                raise InvalidDistributionError(f"Empty region interval {r.interval} for label {r.input_label!r}")
            ordered.setdefault(r.input_label, []).append(r)
        fixed = []
        for label, regions in ordered.items():
            regions.sort(key=lambda r: r.interval[0])
            for left, right in zip(regions, regions[1:]):
                if right.interval[0] < left.interval[1]:
                    raise InvalidDistributionError(f"Regions of label {label!r} overlap at {right.interval[0]}")
            fixed.extend(Region(r.input_label, r.interval, r.output_label, r.segment, closed_left=(k == 0))
                         for k, r in enumerate(regions))
        object.__setattr__(self, 'regions', tuple(fixed))

    @property
    def input_labels(self) -> List[Label]:
        return list(dict.fromkeys(r.input_label for r in self.regions))

    @property
    def output_labels(self) -> List[Label]:
        return list(dict.fromkeys(r.output_label for r in self.regions))

    def regions_for(self, label: Label) -> List[Region]:
        return [r for r in self.regions if r.input_label == label]

    def locate(self, label, y: float) -> Region:
        label = normalize_label(label)
        for r in self.regions_for(label):
            if r.contains(y):
                return r
        raise DomainError(f"Point ({label!r}, {y}) lies outside the map's declared domain")

    def apply(self, label, y: float) -> Tuple[Label, float]:
        region = self.locate(label, y)
        return region.output_label, float(region.segment.forward(y))

    def apply_inverse(self, label, z: float) -> Tuple[Label, float]:
        label = normalize_label(label)
        for r in self.regions:
            if r.output_label != label:
                continue
            lo, hi = r.image
            if lo <= z <= hi:
                y = float(r.segment.inverse(z))
                if r.contains(y):
                    return r.input_label, y
        raise DomainError(f"Point ({label!r}, {z}) lies outside the map's image")

    def check_bijective(self, probe_points: int = 1000, tol: float = 1e-9) -> None:
        """Raise ``NonBijectiveMapError`` unless every region is invertible and images are disjoint."""
        for r in self.regions:
            if isinstance(r.segment, AffineMap) and r.segment.slope == 0:
                raise NonBijectiveMapError(
                    f"Region {r.interval} of label {r.input_label!r} collapses onto one point")
        by_output: Dict[Label, List[Tuple[Interval, Region]]] = {}
        for r in self.regions:
            by_output.setdefault(r.output_label, []).append((r.image, r))
        for label, images in by_output.items():
            images.sort(key=lambda item: item[0][0])
            for (a, ra), (b, rb) in zip(images, images[1:]):
                if b[0] < a[1]:
                    raise NonBijectiveMapError(
                        f"Images of regions {ra.interval} and {rb.interval} overlap on output label {label!r}")
        for r in self.regions:
            ys = probe_grid(r.interval, probe_points)
            back = r.segment.inverse(r.segment.forward(ys))
            err = np.abs(back - ys) / np.maximum(1.0, np.abs(ys))
            worst = int(np.argmax(err))
            if not err[worst] <= tol:
                raise NonBijectiveMapError(
                    f"Forward/inverse mismatch {err[worst]:.3g} at y={ys[worst]} in region {r.interval}")


def compose(first: MixedPairMap, second: MixedPairMap) -> MixedPairMap:
    """The map ``second(first(.))``, built region by region."""
    regions = []
    for r in first.regions:
        image = r.image
        for s in second.regions_for(r.output_label):
            piece = intersect(image, s.interval)
            if piece is None:
                continue
            with np.errstate(all='ignore'):
                pulled = sorted(float(v) for v in r.segment.inverse(np.array(piece)))
            pulled = intersect((pulled[0], pulled[1]), r.interval)
            if pulled is None:
                continue
            regions.append(Region(r.input_label, pulled, s.output_label,
                                  compose_segments(r.segment, s.segment)))
    if not regions:
        raise DomainError("The second map is not defined anywhere on the image of the first")
    return MixedPairMap(tuple(regions), name=f"{first.name}+{second.name}".strip('+'))


def identity_map(labels: Sequence[Label]) -> MixedPairMap:
    return MixedPairMap(tuple(Region(normalize_label(x), FULL_LINE, normalize_label(x), AffineMap(1.0, 0.0))
                              for x in labels), name='identity')


def affine_map(slope: float, intercept: float, labels: Sequence[Label]) -> MixedPairMap:
    return MixedPairMap(tuple(Region(normalize_label(x), FULL_LINE, normalize_label(x),
                                     AffineMap(float(slope), float(intercept))) for x in labels),
                        name=f"affine({slope},{intercept})")


def shift_map(offset: float, labels: Sequence[Label]) -> MixedPairMap:
    return affine_map(1.0, offset, labels)


def scaling_map(factor: float, labels: Sequence[Label]) -> MixedPairMap:
    return affine_map(factor, 0.0, labels)


def split_map(cuts: Sequence[float], label: Label = CONSTANT_LABEL) -> MixedPairMap:
    """Cut the line at ``cuts``; piece k gets label k and is shifted back by the cut on its left.

    With ``cuts=(1,)`` a uniform on [0, 2] becomes a fair coin paired with a
    uniform on [0, 1].
    """
    edges = [-math.inf] + sorted(float(c) for c in cuts) + [math.inf]
    regions = []
    for k, (lo, hi) in enumerate(zip(edges, edges[1:])):
        offset = 0.0 if k == 0 else -lo
        regions.append(Region(normalize_label(label), (lo, hi), k, AffineMap(1.0, offset)))
    return MixedPairMap(tuple(regions), name='split')


def quantization_map(cut: float = 1.0, atom: Label = 2, label: Label = CONSTANT_LABEL) -> MixedPairMap:
    """Keep y up to ``cut`` as the continuous part and collapse the rest onto one atom.

    Not a bijection: ``check_bijective`` rejects it.
    """
    return MixedPairMap((
        Region(normalize_label(label), (-math.inf, cut), CONTINUOUS_LABEL, AffineMap(1.0, 0.0)),
        Region(normalize_label(label), (cut, math.inf), normalize_label(atom), AffineMap(0.0, 0.0)),
    ), name='quantization')


# ---------------------------------------------------------------------------
# vector maps


@dataclass(frozen=True, eq=False)
class VectorRegion:
    """Diffeomorphic piece of a vector map.

    ``member`` selects the points of the region (None means all of R^d);
    ``relabel`` maps an input label vector to the output label vector.
    """
    forward: ArrayFn
    inverse: ArrayFn
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    member: Optional[Callable[[np.ndarray], np.ndarray]] = None
    relabel: Callable[[tuple], tuple] = field(default=lambda label: label)
    input_label: Optional[tuple] = None
    name: str = ''

    def accepts(self, label: tuple) -> bool:
        return self.input_label is None or tuple(self.input_label) == tuple(label)

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        if self.member is None:
            return np.ones(points.shape[0], dtype=bool)
        return np.asarray(self.member(points), dtype=bool)

    def jacobian_at(self, y: np.ndarray, fd_step: float = 1e-6) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self.jacobian is not None:
            return np.asarray(self.jacobian(y), dtype=float)
        d = y.size
        jac = np.empty((d, d))
        for l in range(d):
            h = fd_step * max(1.0, abs(y[l]))
            step = np.zeros(d)
            step[l] = h
            up = self.forward((y + step)[None, :])[0]
            down = self.forward((y - step)[None, :])[0]
            jac[:, l] = (up - down) / (2 * h)
        return jac


@dataclass(frozen=True)
class VectorMixedPairMap:
    dimension: int
    regions: Tuple[VectorRegion, ...]
    name: str = ''

    def locate(self, label, y: np.ndarray) -> VectorRegion:
        label = tuple(label)
        point = np.asarray(y, dtype=float).reshape(1, -1)
        if point.shape[1] != self.dimension:
            raise DomainError(f"Point has dimension {point.shape[1]}, map expects {self.dimension}")
        for r in self.regions:
            if r.accepts(label) and r.contains(point)[0]:
                return r
        raise DomainError(f"Point ({label!r}, {y}) lies outside the map's declared domain")

    def apply(self, label, y) -> Tuple[tuple, np.ndarray]:
        region = self.locate(label, y)
        z = region.forward(np.asarray(y, dtype=float).reshape(1, -1))[0]
        return tuple(region.relabel(tuple(label))), z

    def check_bijective(self, points: np.ndarray, tol: float = 1e-9) -> None:
        """Raise ``NonBijectiveMapError`` unless each region inverts on ``points`` and images are disjoint.

        Two regions collide when one's inverse pulls an image point of the
        other back inside itself to a different input with the same output
        label.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        default_label = (CONSTANT_LABEL,) * self.dimension
        images = []
        for r in self.regions:
            ys = points[r.contains(points)]
            if ys.shape[0] == 0:
                images.append((ys, ys))
                continue
            zs = np.atleast_2d(r.forward(ys))
            back = np.atleast_2d(r.inverse(zs))
            err = np.max(np.abs(back - ys) / np.maximum(1.0, np.abs(ys)), axis=1)
            worst = int(np.argmax(err))
            if not err[worst] <= tol:
                raise NonBijectiveMapError(
                    f"Forward/inverse mismatch {err[worst]:.3g} at y={ys[worst]} in region {r.name or '?'}")
            images.append((ys, zs))
        for i, (r, (ys, zs)) in enumerate(zip(self.regions, images)):
            if zs.shape[0] == 0:
                continue
            r_label = tuple(r.input_label) if r.input_label is not None else default_label
            for j, s in enumerate(self.regions):
                if i == j:
                    continue
                s_label = tuple(s.input_label) if s.input_label is not None else r_label
                if tuple(r.relabel(r_label)) != tuple(s.relabel(s_label)):
                    continue
                with np.errstate(all='ignore'):
                    pulled = np.atleast_2d(s.inverse(zs))
                    inside = s.contains(pulled) & np.all(np.isfinite(pulled), axis=1)
                if not inside.any():
                    continue
                pushed = np.atleast_2d(s.forward(pulled[inside]))
                same_image = np.max(np.abs(pushed - zs[inside]) / np.maximum(1.0, np.abs(zs[inside])), axis=1) <= tol
                moved = np.max(np.abs(pulled[inside] - ys[inside]) / np.maximum(1.0, np.abs(ys[inside])), axis=1) > tol
                if np.any(same_image & moved):
                    raise NonBijectiveMapError(
                        f"Images of regions {r.name or i} and {s.name or j} overlap")


def linear_map(matrix, name: str = 'linear') -> VectorMixedPairMap:
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidDistributionError(f"linear map needs a square matrix, got shape {a.shape}")
    if np.linalg.matrix_rank(a) < a.shape[0]:
        raise NonBijectiveMapError("linear map matrix is singular")
    a_inv = np.linalg.inv(a)
    region = VectorRegion(forward=lambda y: y @ a.T, inverse=lambda z: z @ a_inv.T,
                          jacobian=lambda y: a, name=name)
    return VectorMixedPairMap(a.shape[0], (region,), name=name)


def rotation_map(angle: float) -> VectorMixedPairMap:
    c, s = math.cos(angle), math.sin(angle)
    return linear_map([[c, -s], [s, c]], name=f"rotation({angle})")


def sorting_map(dimension: int) -> VectorMixedPairMap:
    """Sort the coordinates; the first output label records which ordering was undone.

    Each ordering cone is one region whose map permutes coordinates, so every
    Jacobian is a permutation matrix.
    """
    regions = []
    for index, perm in enumerate(itertools.permutations(range(dimension))):
        perm = np.array(perm)
        undo = np.argsort(perm)
        matrix = np.eye(dimension)[perm]
        regions.append(VectorRegion(
            forward=lambda y, perm=perm: np.atleast_2d(y)[:, perm],
            inverse=lambda z, undo=undo: np.atleast_2d(z)[:, undo],
            jacobian=lambda y, matrix=matrix: matrix,
            member=lambda y, perm=perm: np.all(np.diff(np.atleast_2d(y)[:, perm], axis=1) >= 0, axis=1),
            relabel=lambda label, index=index: (index,) + tuple(label[1:]),
            name=f"order{tuple(int(p) for p in perm)}",
        ))
    return VectorMixedPairMap(dimension, tuple(regions), name='sort')
