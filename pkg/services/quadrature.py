import heapq
import logging
import math
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import entr

from config.settings import Config
from models.distributions import OrderedShape, VectorShape
from models.errors import DimensionLimitError, DivergentIntegralError, IntegrationError

logger = logging.getLogger(__name__)

Integrand = Callable[[np.ndarray], np.ndarray]


def neg_g_log_g(g: np.ndarray, floor: float = 1e-300) -> np.ndarray:
    """-g log g with 0 log 0 = 0; values at or below ``floor`` contribute nothing."""
    g = np.asarray(g, dtype=float)
    return np.where(g > floor, entr(np.maximum(g, floor)), 0.0)


class AdaptiveQuadrature:
    """Adaptive Gauss-Legendre integration between breakpoints.

    Each panel is estimated with one rule on the whole panel and one on its
    two halves; the panel with the largest disagreement is split until the
    summed disagreement falls under the tolerance.
    """

    def __init__(self, config: Optional[Config] = None):
        self.config = config or Config()
        self.nodes, self.weights = leggauss(self.config.GL_ORDER)

    # -- one dimension ----------------------------------------------------

    def _rule(self, f: Integrand, a: float, b: float) -> float:
        half = (b - a) / 2
        x = a + half * (self.nodes + 1)
        return float(half * np.dot(self.weights, f(x)))

    def _panel(self, f: Integrand, a: float, b: float) -> Tuple[float, float]:
        mid = (a + b) / 2
        whole = self._rule(f, a, b)
        halves = self._rule(f, a, mid) + self._rule(f, mid, b)
        return halves, abs(whole - halves)

    def integrate(self, f: Integrand, breakpoints: Sequence[float],
                  tol: Optional[float] = None) -> Tuple[float, float]:
        """Integral of ``f`` over [min(breakpoints), max(breakpoints)] and its error estimate."""
        tol = self.config.QUADRATURE_ABS_TOL if tol is None else tol
        points = np.unique(np.asarray(breakpoints, dtype=float))
        if points.size < 2:
            return 0.0, 0.0
        if not np.all(np.isfinite(points)):
            raise IntegrationError("finite integration needs finite breakpoints")

        # max-heap on panel error
        heap = []
        for a, b in zip(points[:-1], points[1:]):
            value, err = self._panel(f, a, b)
            heap.append((-err, a, b, value))
        heapq.heapify(heap)
        total_err = sum(-item[0] for item in heap)
        # MAX_PANELS counts subdivisions beyond the caller's breakpoints
        limit = len(heap) + self.config.MAX_PANELS

        while total_err > tol:
            if len(heap) >= limit:
                value = math.fsum(item[3] for item in heap)
                raise IntegrationError(
                    f"quadrature did not converge: error {total_err:.3g} > {tol:.3g} "
                    f"after {len(heap)} panels (value {value:.12g})")
            neg_err, a, b, value = heapq.heappop(heap)
            mid = (a + b) / 2
            if not a < mid < b:
                # panel cannot be split further in floating point
                heapq.heappush(heap, (0.0, a, b, value))
                total_err += neg_err
                continue
            left = self._panel(f, a, mid)
            right = self._panel(f, mid, b)
            heapq.heappush(heap, (-left[1], a, mid, left[0]))
            heapq.heappush(heap, (-right[1], mid, b, right[0]))
            total_err += neg_err + left[1] + right[1]

        logger.debug("quadrature converged with %d panels, error %.3g", len(heap), total_err)
        return math.fsum(item[3] for item in heap), total_err

    def integrate_line(self, f: Integrand, support: Tuple[float, float], breakpoints: Sequence[float],
                       tol: Optional[float] = None) -> Tuple[float, float]:
        """Integral over a possibly infinite support.

        Infinite ends are covered by doubling shells up to DIVERGENCE_RADIUS.
        When the geometric tail estimate at that radius is still above
        DIVERGENCE_REL_TOL of the accumulated value the integral is declared
        divergent.
        """
        tol = self.config.QUADRATURE_ABS_TOL if tol is None else tol
        lo, hi = support
        finite = [min(max(p, lo), hi) for p in breakpoints if math.isfinite(p)]
        finite += [e for e in (lo, hi) if math.isfinite(e)]
        if not finite:
            finite = [-1.0, 1.0]
        core_lo, core_hi = min(finite), max(finite)
        if core_lo == core_hi:
            # widen into the support only
            core_lo, core_hi = max(core_lo - 1.0, lo), min(core_hi + 1.0, hi)
        inner = [p for p in finite if core_lo <= p <= core_hi] + [core_lo, core_hi]
        value, err = self.integrate(f, inner, tol)
        acc = value
        for direction, start, open_end in ((-1, core_lo, math.isinf(lo)), (1, core_hi, math.isinf(hi))):
            if not open_end:
                continue
            tail, tail_err = self._shells(f, start, direction, tol, acc)
            value += tail
            err += tail_err
            acc = value
        return value, err

    def _shells(self, f: Integrand, start: float, direction: int, tol: float,
                acc: float) -> Tuple[float, float]:
        width = max(1.0, abs(start))
        total, err = 0.0, 0.0
        previous = None
        k = 0
        while True:
            a = start + direction * width * (2 ** k - 1)
            b = start + direction * width * (2 ** (k + 1) - 1)
            shell, shell_err = self.integrate(f, sorted((a, b)), tol)
            total += shell
            err += shell_err
            ratio = abs(shell / previous) if previous not in (None, 0.0) else (0.0 if shell == 0 else 1.0)
            tail = abs(shell) * ratio / (1 - ratio) if ratio < 1 else math.inf
            if k >= 2 and abs(shell) <= tol and tail <= tol:
                return total, err + tail
            if abs(b) >= self.config.DIVERGENCE_RADIUS:
                scale = max(abs(acc + total), tol)
                if tail > self.config.DIVERGENCE_REL_TOL * scale:
                    raise DivergentIntegralError(
                        f"tail beyond |y| = {abs(b):.3g} is still {tail:.3g} "
                        f"against accumulated {acc + total:.6g}")
                return total, err + tail
            previous = shell
            k += 1

    # -- several dimensions -------------------------------------------------

    def axis_rule(self, breakpoints: Sequence[float], n_points: int) -> Tuple[np.ndarray, np.ndarray]:
        """Composite Gauss-Legendre rule with about ``n_points`` nodes spread over the panels."""
        points = np.unique(np.asarray(breakpoints, dtype=float))
        span = points[-1] - points[0]
        order = min(self.config.GL_ORDER, max(2, n_points))
        panels_total = max(len(points) - 1, n_points // order)
        nodes, weights = [], []
        x, w = leggauss(order)
        for a, b in zip(points[:-1], points[1:]):
            pieces = max(1, int(round(panels_total * (b - a) / span)))
            edges = np.linspace(a, b, pieces + 1)
            for c, d in zip(edges[:-1], edges[1:]):
                half = (d - c) / 2
                nodes.append(c + half * (x + 1))
                weights.append(half * w)
        return np.concatenate(nodes), np.concatenate(weights)

    def _tensor_sum(self, f: Integrand, rules: List[Tuple[np.ndarray, np.ndarray]]) -> float:
        first_nodes, first_weights = rules[0]
        rest = rules[1:]
        if rest:
            rest_grid = np.meshgrid(*[r[0] for r in rest], indexing='ij')
            rest_points = np.column_stack([g.ravel() for g in rest_grid])
            rest_weights = np.prod(np.meshgrid(*[r[1] for r in rest], indexing='ij'), axis=0).ravel()
        else:
            rest_points = np.empty((1, 0))
            rest_weights = np.ones(1)
        chunk = max(1, self.config.VECTOR_MESH_BUDGET // max(1, rest_weights.size) // 4)
        total = []
        for start in range(0, first_nodes.size, chunk):
            xs = first_nodes[start:start + chunk]
            ws = first_weights[start:start + chunk]
            pts = np.column_stack([np.repeat(xs, rest_weights.size), np.tile(rest_points, (xs.size, 1))])
            vals = np.asarray(f(pts), dtype=float).reshape(xs.size, rest_weights.size)
            total.append(float(ws @ vals @ rest_weights))
        return math.fsum(total)

    def integrate_tensor(self, f: Integrand, axis_breakpoints: Sequence[Sequence[float]],
                         tol: Optional[float] = None) -> Tuple[float, float]:
        """Tensor-product rule refined by doubling until two levels agree or VECTOR_MESH_BUDGET is reached."""
        tol = self.config.QUADRATURE_ABS_TOL if tol is None else tol
        limit = max(4, int(self.config.VECTOR_MESH_BUDGET ** (1.0 / len(axis_breakpoints))))
        n = min(limit, self.config.GL_ORDER)
        previous = self._tensor_sum(f, [self.axis_rule(b, n) for b in axis_breakpoints])
        while True:
            n_next = min(limit, 2 * n)
            value = self._tensor_sum(f, [self.axis_rule(b, n_next) for b in axis_breakpoints])
            err = abs(value - previous)
            if err <= tol or n_next == n or n_next == limit:
                if err > tol:
                    logger.warning("tensor rule stopped at the mesh limit (%d nodes per axis) with error %.3g > %.3g",
                                   n_next, err, tol)
                return value, err
            previous, n = value, n_next

    def simplex_rule(self, lo: float, hi: float, n: int, per_level: int) -> Tuple[np.ndarray, np.ndarray]:
        """Nodes and weights on lo <= y_1 <= ... <= y_n <= hi by iterated Gauss-Legendre."""
        x, w = leggauss(per_level)
        points = np.empty((1, 0))
        weights = np.ones(1)
        for _ in range(n):
            left = points[:, -1] if points.shape[1] else np.full(points.shape[0], lo)
            half = (hi - left) / 2
            new = left[:, None] + half[:, None] * (x[None, :] + 1)
            weights = (weights[:, None] * half[:, None] * w[None, :]).ravel()
            points = np.column_stack([np.repeat(points, per_level, axis=0), new.ravel()])
        return points, weights

    def integrate_simplex(self, f: Integrand, lo: float, hi: float, n: int,
                          tol: Optional[float] = None) -> Tuple[float, float]:
        """Iterated simplex rule, doubling the nodes per level until two levels agree."""
        tol = self.config.QUADRATURE_ABS_TOL if tol is None else tol
        limit = min(512, max(8, int(self.config.VECTOR_MESH_BUDGET ** (1.0 / n))))
        per_level = min(limit, 16)
        nodes, weights = self.simplex_rule(lo, hi, n, per_level)
        previous = float(weights @ f(nodes))
        while True:
            nxt = min(limit, 2 * per_level)
            nodes, weights = self.simplex_rule(lo, hi, n, nxt)
            value = float(weights @ f(nodes))
            err = abs(value - previous)
            if err <= tol or nxt == per_level or nxt == limit:
                if err > tol:
                    logger.warning("simplex rule stopped at the mesh limit (%d nodes per level) with error %.3g > %.3g",
                                   nxt, err, tol)
                return value, err
            previous, per_level = value, nxt


class VectorIntegrator:
    """Integrals of the form  ∫ shape(y) h(y) dy  over R^d for vector shapes.

    Dense rules are used up to VECTOR_DENSE_MAX_DIM dimensions; above it the
    integral is the Monte Carlo mean of h under the shape.
    """

    def __init__(self, config: Optional[Config] = None, quadrature: Optional[AdaptiveQuadrature] = None):
        self.config = config or Config()
        self.quadrature = quadrature or AdaptiveQuadrature(self.config)

    def method_for(self, shape: VectorShape) -> str:
        return 'quadrature' if shape.dimension <= self.config.VECTOR_DENSE_MAX_DIM else 'monte-carlo'

    def integrate_against(self, shape: VectorShape, h: Integrand, rng: Optional[np.random.Generator] = None,
                          force_monte_carlo: bool = False) -> Tuple[float, float, str]:
        """Value, error estimate and method of  ∫ shape(y) h(y) dy."""
        if force_monte_carlo or self.method_for(shape) == 'monte-carlo':
            if rng is None:
                raise DimensionLimitError(
                    f"dimension {shape.dimension} exceeds the dense limit "
                    f"{self.config.VECTOR_DENSE_MAX_DIM}; pass a random stream for Monte Carlo")
            n = self.config.MC_SAMPLES
            values = np.asarray(h(shape.sample(rng, n)), dtype=float)
            return float(values.mean()), float(values.std(ddof=1) / math.sqrt(n)), 'monte-carlo'

        def integrand(points):
            density = shape.pdf(points)
            out = np.zeros(points.shape[0])
            inside = density > self.config.DENSITY_FLOOR
            if np.any(inside):
                out[inside] = density[inside] * h(points[inside])
            return out

        if isinstance(shape, OrderedShape):
            lo, hi = shape.base.integration_bounds(self.config.TAIL_MASS)
            value, err = self.quadrature.integrate_simplex(integrand, lo, hi, shape.n)
        else:
            breaks = [shape.axis_breakpoints(k, self.config.TAIL_MASS) for k in range(shape.dimension)]
            value, err = self.quadrature.integrate_tensor(integrand, breaks)
        return value, err, 'quadrature'
