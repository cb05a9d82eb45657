"""Mixed-pair construction, derived quantities and spec documents.

Spec documents are JSON. Validation errors carry the dotted field path and,
when the document came from text, the line where that field starts.
"""

import json
import logging
import math
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from config.settings import Config
from models.data_models import CTMCSpec
from models.densities import FAMILIES, DensitySpec
from models.distributions import (CONSTANT_LABEL, CONTINUOUS_LABEL, GridShape, Label, MixedPairDistribution,
                                  MixedPairVectorDistribution, OrderedShape, ProductShape, VectorAtom,
                                  VectorShape, normalize_label)
from models.errors import InvalidDistributionError, MixedPairError, SpecValidationError
from models.maps import AffineMap, MixedPairMap, Region, SegmentMap, TabulatedMap
from services.quadrature import AdaptiveQuadrature

logger = logging.getLogger(__name__)

DENSITY_KEYS = {'family', 'support', 'a', 'b', 'rate', 'loc', 'mean', 'variance', 'knots', 'components'}


class DistributionCore:
    def __init__(self, config: Optional[Config] = None):
        self.config = config or Config()
        self.quadrature = AdaptiveQuadrature(self.config)

    # -- derived quantities -----------------------------------------------

    def atom_mass(self, dist: MixedPairDistribution, i: int, verify: bool = False) -> float:
        """Stored p_i; with ``verify`` the sub-density is integrated and compared."""
        mass = dist.atom_mass(i)
        if verify:
            integral = self.integrate_sub_density(dist, i)
            if abs(integral - mass) > max(self.config.TABULATED_MASS_TOL, 10 * self.config.QUADRATURE_ABS_TOL):
                raise InvalidDistributionError(
                    f"atom {i}: stored mass {mass!r} but the sub-density integrates to {integral!r}")
        return mass

    def integrate_sub_density(self, dist: MixedPairDistribution, i: int) -> float:
        shape = dist.conditional_density(i)
        mass = dist.atom_mass(i)
        value, _ = self.quadrature.integrate_line(
            lambda y: mass * shape.pdf(y), shape.support, shape.breakpoints(self.config.TAIL_MASS))
        return value

    def marginal_density(self, dist: MixedPairDistribution, y):
        return dist.marginal_density(y)

    def posterior_weights(self, dist: MixedPairDistribution, y: float) -> np.ndarray:
        weights = dist.posterior_weights(y)
        if abs(math.fsum(weights) - 1.0) > self.config.POSTERIOR_TOL:
            weights = weights / math.fsum(weights)
        return weights

    def conditional_density(self, dist: MixedPairDistribution, i: int) -> DensitySpec:
        return dist.conditional_density(i)

    def posterior_mass(self, dist: MixedPairDistribution, i: int) -> float:
        """The integral of p_i(y) g(y) over the line, which must reproduce p_i."""
        def integrand(y):
            g = dist.sub_densities(y)
            total = g.sum(axis=0)
            posterior = np.where(total > 0, g[i] / np.where(total > 0, total, 1.0), 0.0)
            return posterior * total
        lo = min(a.shape.support[0] for a in dist.atoms)
        hi = max(a.shape.support[1] for a in dist.atoms)
        value, _ = self.quadrature.integrate_line(integrand, (lo, hi), dist.breakpoints(self.config.TAIL_MASS))
        return value

    def sample(self, dist: MixedPairDistribution, rng: np.random.Generator, n: Optional[int] = None):
        return dist.sample(rng, n)

    # -- injections -------------------------------------------------------

    def _check_pmf(self, pmf: Sequence[Tuple[Any, float]], expected_total: float = 1.0):
        if not pmf and expected_total > 0:
            raise InvalidDistributionError("pmf is empty")
        probs = [float(p) for _, p in pmf]
        if any(not p > 0 for p in probs):
            raise InvalidDistributionError(f"pmf probabilities must be positive, got {probs}")
        if abs(math.fsum(probs) - expected_total) > self.config.MASS_TOL:
            raise InvalidDistributionError(f"pmf sums to {math.fsum(probs)!r}, expected {expected_total}")

    def inject_discrete(self, pmf) -> MixedPairDistribution:
        """Pair each discrete value with an independent uniform[0, 1]."""
        pmf = list(pmf.items()) if isinstance(pmf, dict) else list(pmf)
        self._check_pmf(pmf)
        unit = DensitySpec.uniform(0.0, 1.0)
        return MixedPairDistribution.from_atoms((label, p, unit) for label, p in pmf)

    def inject_continuous(self, density: DensitySpec, label: Label = CONSTANT_LABEL) -> MixedPairDistribution:
        if density.family == 'piecewise-linear' and abs(density.total_mass() - 1.0) > self.config.TABULATED_MASS_TOL:
            raise InvalidDistributionError("density is not normalized")
        return MixedPairDistribution.from_atoms([(label, 1.0, density)])

    def inject_mixed(self, atoms, continuous_part: Optional[Tuple[float, DensitySpec]] = None
                     ) -> MixedPairDistribution:
        """Discrete values get uniform[0, 1] shapes; the continuous part becomes the atom ``x0``."""
        atoms = list(atoms.items()) if isinstance(atoms, dict) else list(atoms)
        cont_mass = 0.0 if continuous_part is None else float(continuous_part[0])
        if any(normalize_label(label) == CONTINUOUS_LABEL for label, _ in atoms):
            raise InvalidDistributionError(f"label {CONTINUOUS_LABEL!r} is reserved for the continuous part")
        if cont_mass < 0:
            raise InvalidDistributionError("continuous mass must be nonnegative")
        self._check_pmf(atoms, 1.0 - cont_mass)
        unit = DensitySpec.uniform(0.0, 1.0)
        entries = [(label, p, unit) for label, p in atoms]
        if cont_mass > 0:
            entries.append((CONTINUOUS_LABEL, cont_mass, continuous_part[1]))
        return MixedPairDistribution.from_atoms(entries)


# ---------------------------------------------------------------------------
# spec documents


def _line_of(text: Optional[str], path: str) -> Optional[int]:
    """Best-effort line number of the JSON value at a dotted path like ``atoms[1].density``."""
    if not text or not path:
        return None
    pos = 0
    for token in path.replace('[', '.[').split('.'):
        if not token:
            continue
        if token.startswith('['):
            index = int(token[1:-1])
            start = text.find('[', pos)
            if start < 0:
                return None
            pos = _element_start(text, start, index)
            if pos is None:
                return None
        else:
            found = text.find(f'"{token}"', pos)
            if found < 0:
                return None
            pos = found
    return text.count('\n', 0, pos) + 1


def _element_start(text: str, start: int, index: int) -> Optional[int]:
    depth, count, in_string, escaped = 0, 0, False, False
    for k in range(start, len(text)):
        ch = text[k]
        if in_string:
            if escaped:
                escaped = False
            elif ch == '\\':
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
            if depth == 1 and count == index:
                return k
        elif ch in '[{':
            depth += 1
            if depth == 2 and count == index:
                return k
        elif ch in ']}':
            depth -= 1
            if depth == 0:
                return None
        elif ch == ',' and depth == 1:
            count += 1
        elif depth == 1 and count == index and not ch.isspace():
            return k
    return None


class SpecReader:
    """Parses spec documents, remembering the source text for line diagnostics."""

    def __init__(self, text: Optional[str] = None, source: str = '<document>'):
        self.text = text
        self.source = source

    @classmethod
    def from_path(cls, path: str) -> Tuple['SpecReader', Any]:
        with open(path, 'r', encoding='utf-8') as handle:
            text = handle.read()
        return cls.from_text(text, source=path)

    @classmethod
    def from_text(cls, text: str, source: str = '<document>') -> Tuple['SpecReader', Any]:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SpecValidationError(f"{source}: invalid JSON: {exc.msg}", line=exc.lineno) from exc
        return cls(text, source), data

    def fail(self, message: str, path: str) -> SpecValidationError:
        return SpecValidationError(f"{self.source}: {message}", field=path, line=_line_of(self.text, path))

    def _warn_unknown(self, obj: Dict[str, Any], known, path: str):
        extra = sorted(set(obj) - set(known))
        if extra:
            logger.warning("%s: ignoring unknown fields %s at %s", self.source, extra, path or 'top level')

    def _number(self, obj: Dict[str, Any], key: str, path: str, default=None) -> float:
        if key not in obj:
            if default is not None:
                return default
            raise self.fail(f"missing field {key!r}", path)
        value = obj[key]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise self.fail(f"field {key!r} must be a number, got {value!r}", f"{path}.{key}".lstrip('.'))
        return float(value)

    def _label(self, value, path: str) -> Label:
        try:
            return normalize_label(value)
        except InvalidDistributionError as exc:
            raise self.fail(str(exc), path) from exc

    def _support(self, raw, path: str) -> Tuple[float, float]:
        if not isinstance(raw, (list, tuple)) or len(raw) != 2:
            raise self.fail("support must be a [lo, hi] pair (null for infinite ends)", path)
        lo = -math.inf if raw[0] is None else raw[0]
        hi = math.inf if raw[1] is None else raw[1]
        if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in (lo, hi)):
            raise self.fail(f"support bounds must be numbers or null, got {raw!r}", path)
        return float(lo), float(hi)

    # -- densities --------------------------------------------------------

    def density(self, obj: Any, path: str = 'density') -> DensitySpec:
        if not isinstance(obj, dict):
            raise self.fail("density must be an object", path)
        family = obj.get('family')
        if family not in FAMILIES or family == 'custom':
            raise self.fail(f"unknown density family {family!r}", f"{path}.family")
        self._warn_unknown(obj, DENSITY_KEYS, path)
        try:
            if family == 'uniform':
                spec = DensitySpec.uniform(self._number(obj, 'a', path), self._number(obj, 'b', path))
            elif family == 'exponential':
                spec = DensitySpec.exponential(self._number(obj, 'rate', path), self._number(obj, 'loc', path, 0.0))
            elif family == 'gaussian':
                spec = DensitySpec.gaussian(self._number(obj, 'mean', path), self._number(obj, 'variance', path))
            elif family == 'piecewise-linear':
                knots = obj.get('knots')
                if not isinstance(knots, list) or not all(isinstance(k, list) and len(k) == 2 for k in knots):
                    raise self.fail("knots must be a list of [y, value] pairs", f"{path}.knots")
                spec = DensitySpec.piecewise_linear(knots, normalize=False)
                area = spec.total_mass()
                if abs(area - 1.0) > 1e-6:
                    raise self.fail(f"piecewise-linear density integrates to {area!r}, expected 1", f"{path}.knots")
            else:
                comps = obj.get('components')
                if not isinstance(comps, list) or not comps:
                    raise self.fail("mixture needs a non-empty components list", f"{path}.components")
                pieces = [(self._number(c, 'weight', f"{path}.components[{k}]"),
                           self.density(c.get('density'), f"{path}.components[{k}].density"))
                          for k, c in enumerate(comps)]
                if abs(math.fsum(w for w, _ in pieces) - 1.0) > 1e-9:
                    raise self.fail("mixture weights must sum to 1", f"{path}.components")
                spec = DensitySpec.mixture(pieces)
            if 'support' in obj and spec.is_analytic:
                lo, hi = self._support(obj['support'], f"{path}.support")
                spec = DensitySpec(spec.family, dict(spec.params), (lo, hi), spec.knots, spec.components)
        except SpecValidationError:
            raise
        except MixedPairError as exc:
            raise self.fail(str(exc), path) from exc
        return spec

    # -- distributions ----------------------------------------------------

    def distribution(self, obj: Any) -> Union[MixedPairDistribution, MixedPairVectorDistribution]:
        if not isinstance(obj, dict) or not isinstance(obj.get('atoms'), list):
            raise self.fail("distribution needs an 'atoms' list", 'atoms')
        self._warn_unknown(obj, {'atoms', 'dimension', 'tail_mass'}, '')
        tail = self._number(obj, 'tail_mass', '', 0.0)
        if 'dimension' in obj:
            return self._vector_distribution(obj, tail)
        entries = []
        for k, atom in enumerate(obj['atoms']):
            path = f"atoms[{k}]"
            if not isinstance(atom, dict):
                raise self.fail("atom must be an object", path)
            self._warn_unknown(atom, {'label', 'mass', 'density'}, path)
            if 'label' not in atom:
                raise self.fail("missing field 'label'", path)
            label = self._label(atom['label'], f"{path}.label")
            mass = self._number(atom, 'mass', path)
            entries.append((label, mass, self.density(atom.get('density'), f"{path}.density")))
        self._check_total([m for _, m, _ in entries], tail,
                          any(d.family == 'piecewise-linear' for _, _, d in entries))
        try:
            return MixedPairDistribution.from_atoms(entries, tail)
        except MixedPairError as exc:
            raise self.fail(str(exc), 'atoms') from exc

    def _check_total(self, masses: List[float], tail: float, tabulated: bool):
        for k, m in enumerate(masses):
            if not m > 0:
                raise self.fail(f"atom mass must be strictly positive, got {m!r}", f"atoms[{k}].mass")
        total = math.fsum(masses) + tail
        tol = 1e-6 if tabulated else 1e-9
        if abs(total - 1.0) > tol:
            raise self.fail(f"masses sum to {total!r}, expected 1 within {tol}", 'atoms')

    def _vector_shape(self, obj: Any, dimension: int, path: str) -> VectorShape:
        if not isinstance(obj, dict):
            raise self.fail("vector density must be an object", path)
        if 'product' in obj:
            factors = obj['product']
            if not isinstance(factors, list) or len(factors) != dimension:
                raise self.fail(f"product needs {dimension} factor densities", f"{path}.product")
            return ProductShape(tuple(self.density(f, f"{path}.product[{k}]") for k, f in enumerate(factors)))
        if 'ordered' in obj:
            ordered = obj['ordered']
            n = int(self._number(ordered, 'n', f"{path}.ordered", float(dimension)))
            if n != dimension:
                raise self.fail("ordered shape size must equal the dimension", f"{path}.ordered.n")
            return OrderedShape(self.density(ordered.get('base'), f"{path}.ordered.base"), n)
        if 'grid' in obj:
            grid = obj['grid']
            try:
                return GridShape.normalized(tuple(np.asarray(e, dtype=float) for e in grid['edges']),
                                            np.asarray(grid['values'], dtype=float))
            except (KeyError, TypeError, ValueError) as exc:
                raise self.fail(f"bad grid: {exc}", f"{path}.grid") from exc
        raise self.fail("vector density needs one of 'product', 'ordered', 'grid'", path)

    def _vector_distribution(self, obj: Dict[str, Any], tail: float) -> MixedPairVectorDistribution:
        dimension = int(self._number(obj, 'dimension', ''))
        atoms = []
        for k, atom in enumerate(obj['atoms']):
            path = f"atoms[{k}]"
            label = atom.get('label')
            if not isinstance(label, list) or len(label) != dimension:
                raise self.fail(f"label must be a list of {dimension} values", f"{path}.label")
            label = tuple(self._label(v, f"{path}.label") for v in label)
            mass = self._number(atom, 'mass', path)
            atoms.append(VectorAtom(label, mass, self._vector_shape(atom.get('density'), dimension,
                                                                    f"{path}.density")))
        self._check_total([a.mass for a in atoms], tail, any(isinstance(a.shape, GridShape) for a in atoms))
        try:
            return MixedPairVectorDistribution(tuple(atoms), tail)
        except MixedPairError as exc:
            raise self.fail(str(exc), 'atoms') from exc

    # -- maps and chains --------------------------------------------------

    def segment(self, obj: Any, path: str) -> SegmentMap:
        if not isinstance(obj, dict):
            raise self.fail("map must be an object", path)
        kind = obj.get('type')
        if kind == 'affine':
            return AffineMap(self._number(obj, 'slope', path), self._number(obj, 'intercept', path, 0.0))
        if kind == 'tabulated':
            try:
                return TabulatedMap(tuple((float(y), float(z)) for y, z in obj.get('knots', [])))
            except (TypeError, ValueError) as exc:
                raise self.fail(f"bad tabulated knots: {exc}", f"{path}.knots") from exc
        raise self.fail(f"unknown map type {kind!r}", f"{path}.type")

    def mixed_pair_map(self, obj: Any) -> MixedPairMap:
        if not isinstance(obj, dict) or not isinstance(obj.get('regions'), list):
            raise self.fail("map document needs a 'regions' list", 'regions')
        self._warn_unknown(obj, {'regions', 'name'}, '')
        regions = []
        for k, reg in enumerate(obj['regions']):
            path = f"regions[{k}]"
            self._warn_unknown(reg, {'input_label', 'interval', 'output_label', 'map'}, path)
            for key in ('input_label', 'output_label'):
                if key not in reg:
                    raise self.fail(f"missing field {key!r}", path)
            interval = self._support(reg.get('interval', [None, None]), f"{path}.interval")
            regions.append(Region(self._label(reg['input_label'], f"{path}.input_label"), interval,
                                  self._label(reg['output_label'], f"{path}.output_label"),
                                  self.segment(reg.get('map'), f"{path}.map")))
        try:
            return MixedPairMap(tuple(regions), name=str(obj.get('name', '')))
        except InvalidDistributionError as exc:
            raise self.fail(str(exc), 'regions') from exc

    def pmf(self, obj: Any) -> MixedPairDistribution:
        """``{"pmf": {label: p, ...}}`` or ``{"pmf": [[label, p], ...]}``, injected with uniform shapes."""
        raw = obj.get('pmf') if isinstance(obj, dict) else None
        if isinstance(raw, dict):
            pairs = list(raw.items())
        elif isinstance(raw, list) and all(isinstance(e, list) and len(e) == 2 for e in raw):
            pairs = [tuple(e) for e in raw]
        else:
            raise self.fail("pmf must be an object or a list of [label, probability] pairs", 'pmf')
        entries = []
        for k, (label, p) in enumerate(pairs):
            if isinstance(p, bool) or not isinstance(p, (int, float)):
                raise self.fail(f"probability must be a number, got {p!r}", f"pmf[{k}]")
            entries.append((self._label(label, f"pmf[{k}]"), float(p)))
        try:
            return DistributionCore().inject_discrete(entries)
        except MixedPairError as exc:
            raise self.fail(str(exc), 'pmf') from exc

    def chain(self, obj: Any) -> CTMCSpec:
        if not isinstance(obj, dict):
            raise self.fail("chain document must be an object", '')
        self._warn_unknown(obj, {'lambda', 'P', 'initial', 'stationary', 'states'}, '')
        lam = self._number(obj, 'lambda', '')
        if not isinstance(obj.get('P'), list):
            raise self.fail("missing transition matrix", 'P')
        P = np.asarray(obj['P'], dtype=float)
        if obj.get('stationary'):
            # deferred to keep the services import graph acyclic
            from services.processes import ProcessEntropy
            try:
                initial = ProcessEntropy().stationary_distribution(P)
            except MixedPairError as exc:
                raise self.fail(str(exc), 'P') from exc
        elif 'initial' in obj:
            initial = np.asarray(obj['initial'], dtype=float)
        else:
            raise self.fail("chain needs 'initial' or 'stationary': true", 'initial')
        try:
            return CTMCSpec(lam, P, initial, obj.get('states'))
        except InvalidDistributionError as exc:
            raise self.fail(str(exc), 'P') from exc


def load_document(path: str, kind: str):
    """Read a distribution, map, chain or density document from ``path``."""
    reader, data = SpecReader.from_path(path)
    return read_document(reader, data, kind)


def parse_document(data: Any, kind: str, source: str = '<inline>'):
    """Parse an inline document (JSON text or an already-decoded object)."""
    if isinstance(data, str):
        reader, data = SpecReader.from_text(data, source)
    else:
        reader = SpecReader(json.dumps(data, indent=1), source)
    return read_document(reader, data, kind)


def read_document(reader: SpecReader, data: Any, kind: str):
    parsers = {'distribution': reader.distribution, 'map': reader.mixed_pair_map,
               'chain': reader.chain, 'density': reader.density, 'pmf': reader.pmf}
    if kind == 'auto':
        kind = document_kind(data)
    if kind not in parsers:
        raise ValueError(f"unknown document kind {kind!r}")
    result = parsers[kind](data)
    logger.info("Loaded %s from %s", kind, reader.source)
    return result


# ---------------------------------------------------------------------------
# serialization


def _bound(v: float) -> Optional[float]:
    return None if math.isinf(v) else v


def density_to_dict(spec: DensitySpec) -> Dict[str, Any]:
    if spec.family == 'custom':
        raise InvalidDistributionError("custom densities are in-memory only and cannot be serialized")
    out: Dict[str, Any] = {'family': spec.family}
    if spec.family == 'piecewise-linear':
        out['knots'] = [[y, v] for y, v in spec.knots]
        return out
    if spec.family == 'mixture':
        out['components'] = [{'weight': w, 'density': density_to_dict(d)} for w, d in spec.components]
        return out
    out.update(spec.params)
    out['support'] = [_bound(spec.support[0]), _bound(spec.support[1])]
    return out


def distribution_to_dict(dist: MixedPairDistribution) -> Dict[str, Any]:
    doc: Dict[str, Any] = {'atoms': [{'label': a.label, 'mass': a.mass, 'density': density_to_dict(a.shape)}
                                     for a in dist.atoms]}
    if dist.tail_mass:
        doc['tail_mass'] = dist.tail_mass
    return doc


def map_to_dict(mapping: MixedPairMap) -> Dict[str, Any]:
    regions = []
    for r in mapping.regions:
        if isinstance(r.segment, AffineMap):
            seg = {'type': 'affine', 'slope': r.segment.slope, 'intercept': r.segment.intercept}
        elif isinstance(r.segment, TabulatedMap):
            seg = {'type': 'tabulated', 'knots': [list(k) for k in r.segment.knots]}
        else:
            raise InvalidDistributionError("only affine and tabulated segments can be serialized")
        regions.append({'input_label': r.input_label, 'interval': [_bound(r.interval[0]), _bound(r.interval[1])],
                        'output_label': r.output_label, 'map': seg})
    return {'name': mapping.name, 'regions': regions}


def chain_to_dict(spec: CTMCSpec) -> Dict[str, Any]:
    return {'lambda': spec.lam, 'P': spec.P.tolist(), 'initial': spec.initial.tolist(), 'states': spec.states}


def document_kind(data: Any) -> str:
    """Guess the kind of a decoded document from its top-level keys."""
    if isinstance(data, dict):
        if 'pmf' in data:
            return 'pmf'
        if 'family' in data:
            return 'density'
        if 'regions' in data:
            return 'map'
        if 'P' in data:
            return 'chain'
    return 'distribution'
