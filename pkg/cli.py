"""Command-line front end: every computation, driven by JSON spec documents.

Exit status is 0 on success, 1 when a computed claim fails (certification,
identity, experiment bounds) and 2 on input errors.
"""

import argparse
import copy
import dataclasses
import io
import json
import logging
import math
import sys
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from config.settings import Config
from models.data_models import COMMANDS, OUTPUT_FORMATS, RunConfig
from models.distributions import MixedPairVectorDistribution
from models.errors import CertificationFailure, SpecValidationError, UncertifiedDistributionError
from services import __version__
from services.distribution_core import SpecReader, read_document
from services.entropy import EntropyCalculator
from services.estimators import EntropyEstimator
from services.goodness import GoodnessChecker
from services.processes import ProcessEntropy
from services.simulation import ProcessSimulator
from services.transform import TransformCertifier

logger = logging.getLogger('mpe')

EXIT_OK, EXIT_CLAIM_FAILED, EXIT_INPUT_ERROR = 0, 1, 2


def sanitize(value: Any) -> Any:
    """JSON-safe copy: numpy scalars unwrapped, non-finite floats spelled out."""
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        value = dataclasses.asdict(value)
    if isinstance(value, dict):
        return {str(k): sanitize(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [sanitize(v) for v in value]
    if isinstance(value, np.ndarray):
        return sanitize(value.tolist())
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return 'nan' if math.isnan(value) else ('inf' if value > 0 else '-inf')
    return value


def flatten(value: Any, prefix: str = '') -> List[Tuple[str, Any]]:
    if isinstance(value, dict):
        rows = []
        for k, v in value.items():
            rows.extend(flatten(v, f"{prefix}.{k}" if prefix else str(k)))
        return rows
    if isinstance(value, list) and value and isinstance(value[0], (dict, list)):
        rows = []
        for k, v in enumerate(value):
            rows.extend(flatten(v, f"{prefix}[{k}]"))
        return rows
    return [(prefix, value)]


class CommandRunner:
    """Dispatches a RunConfig to the services and collects a report."""

    def __init__(self, run_config: RunConfig, config: Optional[Config] = None):
        self.run_config = run_config
        self.config = copy.copy(config) if config is not None else Config()
        if run_config.tol is not None and run_config.command == 'split-identity':
            self.config.IDENTITY_TOL = run_config.tol
        self.entropy = EntropyCalculator(self.config)
        self.goodness = GoodnessChecker(self.config)
        self.transform = TransformCertifier(self.config, self.entropy)
        self.processes = ProcessEntropy(self.config, self.entropy)
        self.simulator = ProcessSimulator(self.config)
        self.estimator = EntropyEstimator(self.config)
        self.diagnostics: List[str] = []
        self.frame: Optional[pd.DataFrame] = None

    # -- inputs -----------------------------------------------------------

    def document(self, name: str, kind: str = 'auto'):
        rc = self.run_config
        if name in rc.documents:
            raw = rc.documents[name]
            if isinstance(raw, str):
                reader, data = SpecReader.from_text(raw, name)
            else:
                reader, data = SpecReader(json.dumps(raw, indent=1), name), raw
        elif getattr(rc, name) is not None:
            reader, data = SpecReader.from_path(getattr(rc, name))
        else:
            raise SpecValidationError(f"{rc.command} needs --{name}", field=name)
        return read_document(reader, data, kind)

    def require(self, *names: str):
        missing = [n for n in names if getattr(self.run_config, n) is None]
        if missing:
            flags = {'lam': 'lambda'}
            raise SpecValidationError(f"{self.run_config.command} needs "
                                      + ', '.join(f"--{flags.get(n, n)}" for n in missing), field=missing[0])

    @property
    def rng(self) -> Optional[np.random.Generator]:
        seed = self.run_config.seed
        return None if seed is None else np.random.default_rng(seed)

    def _eps_delta(self) -> Tuple[float, float]:
        rc = self.run_config
        return (rc.epsilon or self.config.DEFAULT_EPSILON, rc.delta or self.config.DEFAULT_DELTA)

    # -- commands ---------------------------------------------------------

    def cmd_entropy(self) -> Tuple[Dict[str, Any], bool]:
        rc = self.run_config
        obj = self.document('spec' if rc.spec is not None or 'spec' in rc.documents else 'dist')
        eps, delta = self._eps_delta()
        if rc.method == 'monte-carlo':
            if self.rng is None:
                raise SpecValidationError("Monte Carlo entropy needs --seed", field='seed')
            if not hasattr(obj, 'atoms'):
                raise SpecValidationError("Monte Carlo entropy needs a distribution document", field='spec')
            result = self.entropy.mc_entropy(obj, rc.n or self.config.MC_SAMPLES, self.rng)
        elif isinstance(obj, MixedPairVectorDistribution):
            result = self.entropy.mixed_entropy_vector(obj, self.rng, rc.allow_uncertified, epsilon=eps, delta=delta)
        elif hasattr(obj, 'atoms'):
            result = self.entropy.mixed_entropy(obj, rc.allow_uncertified, eps, delta)
        else:
            result = self.entropy.differential_entropy(obj)
        if not result.certified:
            self.diagnostics.append("goodness check failed; value computed under --allow-uncertified")
        return {'entropy': result}, True

    def cmd_check(self) -> Tuple[Dict[str, Any], bool]:
        rc = self.run_config
        dist = self.document('spec' if rc.spec is not None or 'spec' in rc.documents else 'dist')
        eps, delta = self._eps_delta()
        if isinstance(dist, MixedPairVectorDistribution):
            report = self.goodness.goodness_check_vector(dist, eps, delta, self.rng)
            return {'goodness': report}, report.passed
        report = self.goodness.goodness_check(dist, eps, delta)
        results: Dict[str, Any] = {'goodness': report}
        if report.passed:
            results['term_magnitudes'] = self.entropy.term_magnitudes(dist)
        else:
            self.diagnostics.append(f"not certified: {', '.join(report.failures)} not finite")
        return results, report.passed

    def cmd_transform(self) -> Tuple[Dict[str, Any], bool]:
        rc = self.run_config
        dist = self.document('dist')
        mapping = self.document('map', 'map')
        report = self.transform.preservation_report(dist, mapping, rc.allow_uncertified)
        tol = rc.tol if rc.tol is not None else 1e-8
        preserved = abs(report.difference) <= tol
        if not report.certified:
            self.diagnostics.append(
                f"unit derivative check failed: |dF/dy| = {report.certification.worst_value:.9g} "
                f"at {report.certification.worst_location} in region {report.certification.worst_region}")
        results = {'h_in': report.h_in, 'h_out': report.h_out, 'difference': report.difference,
                   'certified': report.certified, 'certification': report.certification}
        return results, report.certified and preserved

    def cmd_ctmc_rate(self) -> Tuple[Dict[str, Any], bool]:
        rc = self.run_config
        if rc.chain is None and 'chain' not in rc.documents:
            self.require('lam')
            return {'poisson_rate': self.processes.poisson_entropy_rate(rc.lam)}, True
        spec = self.document('chain', 'chain')
        pi = self.processes.stationary_distribution(spec.P)
        h_mc = self.processes.markov_transition_entropy(spec.P, pi)
        return {'lambda': spec.lam, 'stationary': pi, 'h_mc': h_mc,
                'poisson_rate': self.processes.poisson_entropy_rate(spec.lam),
                'entropy_rate': self.processes.ctmc_entropy_rate(spec)}, True

    def cmd_horizon(self) -> Tuple[Dict[str, Any], bool]:
        rc = self.run_config
        self.require('T')
        if rc.chain is not None or 'chain' in rc.documents:
            spec = self.document('chain', 'chain')
            parts = self.processes.ctmc_horizon_decomposition(spec, rc.T)
            rate = self.processes.ctmc_entropy_rate(spec)
        else:
            self.require('lam')
            parts = self.processes.poisson_horizon_decomposition(rc.lam, rc.T)
            rate = self.processes.poisson_entropy_rate(rc.lam)
        return {'count_entropy': parts.count_entropy, 'location_entropy': parts.location_entropy,
                'mark_entropy': parts.mark_entropy, 'total': parts.total,
                'per_unit_time': parts.total / rc.T, 'entropy_rate': rate}, True

    def cmd_split_identity(self) -> Tuple[Dict[str, Any], bool]:
        rc = self.run_config
        self.require('lam', 'p')
        report = self.processes.splitting_identity(rc.lam, rc.p)
        return {'lhs': report.lhs, 'rhs_chain': report.rhs_chain, 'max_discrepancy': report.max_discrepancy,
                'tolerance': report.tolerance}, report.passed

    def cmd_split_experiment(self) -> Tuple[Dict[str, Any], bool]:
        rc = self.run_config
        self.require('lam', 'p', 'T')
        report = self.processes.split_entropy_experiment(rc.lam, rc.p, rc.T, rc.trials, rc.seed)
        for baby in (report.heads, report.tails):
            if abs(baby.z_score) > report.z_limit:
                self.diagnostics.append(f"{baby.name} estimate is {baby.z_score:.2f} standard errors from "
                                        f"{baby.expected:.9g}")
            if not baby.below_bound:
                self.diagnostics.append(f"{baby.name} estimate exceeds its Poisson bound by more than 3 s.e.")

        def baby(b):
            return {'events': b.events, 'rate_hat': b.rate_hat, 'estimate': b.estimate,
                    'standard_error': b.standard_error, 'expected': b.expected,
                    'poisson_bound': b.poisson_bound, 'z_score': b.z_score}

        return {'heads': baby(report.heads), 'tails': baby(report.tails),
                'merge_lossless': report.merge_lossless}, report.passed

    def cmd_order_stats(self) -> Tuple[Dict[str, Any], bool]:
        rc = self.run_config
        self.require('n')
        density = self.document('spec', 'density')
        report = self.processes.order_statistics_entropy(density, rc.n, self.rng, rc.method)
        if report.method == 'monte-carlo':
            ok = report.discrepancy <= 4 * report.error_estimate
        else:
            ok = report.discrepancy <= (rc.tol if rc.tol is not None else 1e-4)
        return {'h_iid': report.h_iid, 'h_sorted': report.h_sorted, 'difference': report.difference,
                'expected_difference': report.expected_difference, 'method': report.method,
                'error_estimate': report.error_estimate}, ok

    def cmd_estimate(self) -> Tuple[Dict[str, Any], bool]:
        rc = self.run_config
        if 'samples' in rc.documents:
            samples = rc.documents['samples']
        else:
            self.require('samples')
            samples = self.estimator.load_samples(rc.samples, rc.discrete)
        if rc.discrete:
            result = self.estimator.plugin_discrete_entropy(samples)
        else:
            if rc.seed is None:
                self.diagnostics.append("bootstrap seeded with 0")
            result = self.estimator.nn_differential_entropy(samples, rc.k, seed=rc.seed if rc.seed is not None else 0)
            if result.jittered:
                self.diagnostics.append(f"{result.jittered} tied samples jittered")
        return {'estimate': result}, True

    def cmd_simulate(self) -> Tuple[Dict[str, Any], bool]:
        rc = self.run_config
        self.require('T')
        rng = self.rng
        if rc.chain is not None or 'chain' in rc.documents:
            path = self.simulator.simulate_ctmc(self.document('chain', 'chain'), rc.T, rng)
        else:
            self.require('lam')
            path = self.simulator.simulate_poisson(rc.lam, rc.T, rng)
        results: Dict[str, Any] = {'events': path.count, 'horizon': path.horizon,
                                   'rate_hat': path.count / path.horizon}
        if path.initial_mark is not None:
            results['initial_mark'] = path.initial_mark
        if rc.p is not None:
            split = self.simulator.split(path, rc.p, rng)
            results.update(heads=split.heads_path.count, tails=split.tails_path.count)
            self.frame = self.simulator.split_frame(split)
        else:
            self.frame = self.simulator.path_frame(path)
        return results, True

    def execute(self) -> Tuple[Dict[str, Any], bool]:
        handler = getattr(self, 'cmd_' + self.run_config.command.replace('-', '_'))
        logger.info("Running %s", self.run_config.command)
        return handler()


# ---------------------------------------------------------------------------
# output


def render(run_config: RunConfig, results: Optional[Dict[str, Any]], diagnostics: List[str],
           frame: Optional[pd.DataFrame] = None, digits: int = 9) -> str:
    clean = sanitize(results) if results is not None else None
    fmt = run_config.output_format
    if fmt == 'structured':
        document: Dict[str, Any] = {'command': run_config.command, 'inputs': sanitize(run_config.inputs()),
                                    'results': clean, 'diagnostics': diagnostics}
        if run_config.is_stochastic or (clean or {}).get('method') == 'monte-carlo':
            document.update(version=__version__, seed=run_config.seed, trials=run_config.trials)
        return json.dumps(document, sort_keys=True, indent=2, allow_nan=False) + '\n'
    if fmt == 'csv':
        if frame is not None:
            return frame.to_csv(index=False, float_format='%.17g')
        rows = flatten(clean or {})
        buffer = io.StringIO()
        pd.DataFrame(rows, columns=['key', 'value']).to_csv(buffer, index=False, float_format='%.17g')
        return buffer.getvalue()
    lines = []
    for key, value in flatten(clean or {}):
        if isinstance(value, float):
            value = f"{value:.{digits}g}"
        elif isinstance(value, list):
            value = ', '.join(f"{v:.{digits}g}" if isinstance(v, float) else str(v) for v in value)
        lines.append(f"{key}: {value}")
    lines.extend(f"note: {d}" for d in diagnostics)
    return '\n'.join(lines) + '\n'


def run(run_config: RunConfig, config: Optional[Config] = None, stream=None) -> int:
    """Validate, dispatch, write the report once and return the exit status."""
    config = config or Config()
    stream = stream or sys.stdout
    diagnostics: List[str] = []
    results, frame, status = None, None, EXIT_OK
    try:
        run_config.validate()
        runner = CommandRunner(run_config, config)
        results, ok = runner.execute()
        diagnostics, frame = runner.diagnostics, runner.frame
        status = EXIT_OK if ok else EXIT_CLAIM_FAILED
    except (CertificationFailure, UncertifiedDistributionError, ArithmeticError) as exc:
        logger.error("%s: %s", run_config.command, exc)
        diagnostics.append(str(exc))
        status = EXIT_CLAIM_FAILED
    except (SpecValidationError, ValueError, LookupError, OSError) as exc:
        logger.error("%s: %s", run_config.command, exc)
        diagnostics.append(str(exc))
        status = EXIT_INPUT_ERROR
    text = render(run_config, results, diagnostics, frame, config.OUTPUT_DIGITS)
    if run_config.output:
        with open(run_config.output, 'w') as handle:
            handle.write(text)
    else:
        stream.write(text)
    return status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='mpe', description="Entropy of mixed discrete-continuous pairs, "
                                                             "bijections, point processes and Markov chains")
    parser.add_argument('command', choices=COMMANDS)
    parser.add_argument('--spec', help="distribution, pmf or density document")
    parser.add_argument('--dist', help="distribution document")
    parser.add_argument('--map', help="mixed-pair map document")
    parser.add_argument('--chain', help="Markov chain document")
    parser.add_argument('--samples', help="CSV file, one sample per line")
    parser.add_argument('--lambda', dest='lam', type=float)
    parser.add_argument('--p', type=float)
    parser.add_argument('--T', type=float)
    parser.add_argument('--trials', type=int, default=1)
    parser.add_argument('--seed', type=int)
    parser.add_argument('--epsilon', type=float)
    parser.add_argument('--delta', type=float)
    parser.add_argument('--tol', type=float)
    parser.add_argument('--n', type=int, help="order-statistics size or Monte Carlo sample count")
    parser.add_argument('--k', type=int, help="nearest-neighbour order")
    parser.add_argument('--method', choices=('auto', 'quadrature', 'monte-carlo'), default='auto')
    parser.add_argument('--discrete', action='store_true', help="treat samples as discrete labels")
    parser.add_argument('--allow-uncertified', action='store_true')
    parser.add_argument('--format', dest='output_format', choices=OUTPUT_FORMATS, default='human')
    parser.add_argument('--output', help="write the report here instead of stdout")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    config = Config()
    logging.basicConfig(level=getattr(logging, str(config.LOG_LEVEL).upper(), logging.INFO), stream=sys.stderr,
                        format='%(asctime)s [%(levelname)s] %(name)s: %(message)s')
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT_ERROR if exc.code else EXIT_OK
    return run(RunConfig(**vars(args)), config)


if __name__ == '__main__':
    sys.exit(main())
