import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from models.errors import InvalidDistributionError, SpecValidationError

COMMANDS = ('entropy', 'check', 'transform', 'ctmc-rate', 'horizon', 'split-identity',
            'split-experiment', 'order-stats', 'estimate', 'simulate')
STOCHASTIC_COMMANDS = ('split-experiment', 'simulate')
OUTPUT_FORMATS = ('human', 'csv', 'structured')


@dataclass
class GoodnessReport:
    epsilon: float
    delta: float
    m_epsilon: float
    power_integral: float
    discrete_entropy: float
    b_delta: float
    c_epsilon: float
    magnitude_bound: float
    passed: bool
    failures: List[str] = field(default_factory=list)
    dimension: int = 1


@dataclass
class EntropyResult:
    value: float
    method: str  # 'quadrature', 'closed-form', 'grid', 'monte-carlo'
    error_estimate: float
    terms: Optional[List[float]] = None
    certified: bool = True
    n_samples: Optional[int] = None
    tail_mass: float = 0.0

    def __post_init__(self):
        if self.error_estimate < 0:
            raise ValueError(f"error_estimate must be nonnegative, got {self.error_estimate}")


@dataclass
class RegionCheck:
    input_label: Any
    output_label: Any
    region: str
    probe_points: int
    worst_deviation: float
    worst_location: Optional[Tuple[float, ...]]
    worst_value: float
    singular: int = 0


@dataclass
class CertificationReport:
    kind: str  # 'derivative' or 'jacobian'
    certified: bool
    probe_points: int
    tolerance: float
    worst_deviation: float
    worst_region: Optional[str]
    worst_location: Optional[Tuple[float, ...]]
    worst_value: float
    regions: List[RegionCheck] = field(default_factory=list)


@dataclass
class PreservationReport:
    h_in: float
    h_out: float
    difference: float
    certified: bool
    certification: CertificationReport
    input_result: Optional[EntropyResult] = None
    output_result: Optional[EntropyResult] = None


@dataclass
class EstimatorResult:
    value: float
    n: int
    standard_error: float
    method: str  # 'plug-in' or 'nearest-neighbor'
    k: Optional[int] = None
    resamples: Optional[int] = None
    jittered: int = 0


@dataclass
class HorizonDecomposition:
    count_entropy: float
    location_entropy: float
    mark_entropy: float = 0.0

    @property
    def total(self) -> float:
        return self.count_entropy + self.location_entropy + self.mark_entropy


@dataclass
class SplitIdentityReport:
    lam: float
    p: float
    lines: List[float]
    max_discrepancy: float
    tolerance: float

    @property
    def lhs(self) -> float:
        return self.lines[0]

    @property
    def rhs_chain(self) -> List[float]:
        return self.lines[1:]

    @property
    def passed(self) -> bool:
        return self.max_discrepancy <= self.tolerance


@dataclass
class BabyEstimate:
    name: str  # 'heads' or 'tails'
    events: int
    rate_hat: float
    estimate: float
    standard_error: float
    expected: float
    poisson_bound: float

    @property
    def z_score(self) -> float:
        if self.standard_error == 0:
            return 0.0 if self.estimate == self.expected else float('inf')
        return (self.estimate - self.expected) / self.standard_error

    @property
    def below_bound(self) -> bool:
        return self.estimate <= self.poisson_bound + 3 * self.standard_error


@dataclass
class SplitExperimentReport:
    lam: float
    p: float
    horizon: float
    trials: int
    seed: int
    heads: BabyEstimate
    tails: BabyEstimate
    per_trial: List[Tuple[BabyEstimate, BabyEstimate]] = field(default_factory=list)
    merge_lossless: bool = True
    z_limit: float = 4.0

    @property
    def passed(self) -> bool:
        return (self.merge_lossless
                and all(abs(b.z_score) <= self.z_limit and b.below_bound for b in (self.heads, self.tails)))


@dataclass
class OrderStatisticsReport:
    n: int
    h_iid: float
    h_sorted: float
    difference: float
    expected_difference: float
    method: str
    error_estimate: float

    @property
    def discrepancy(self) -> float:
        return abs(self.difference - self.expected_difference)


@dataclass
class CTMCSpec:
    lam: float
    P: np.ndarray
    initial: np.ndarray
    states: Optional[List[Any]] = None

    def __post_init__(self):
        self.P = np.atleast_2d(np.asarray(self.P, dtype=float))
        self.initial = np.asarray(self.initial, dtype=float).ravel()
        n = self.P.shape[0]
        if not self.lam > 0:
            raise InvalidDistributionError(f"jump rate must be positive, got {self.lam}")
        if self.P.shape != (n, n):
            raise InvalidDistributionError(f"transition matrix must be square, got {self.P.shape}")
        if np.any(self.P < 0) or np.any(self.P > 1):
            raise InvalidDistributionError("transition probabilities must lie in [0, 1]")
        if np.max(np.abs(self.P.sum(axis=1) - 1.0)) > 1e-12:
            raise InvalidDistributionError("rows of the transition matrix must sum to 1")
        if self.initial.shape != (n,) or np.any(self.initial < 0) or abs(self.initial.sum() - 1.0) > 1e-9:
            raise InvalidDistributionError("initial distribution must be a pmf over the chain's states")
        if self.states is None:
            self.states = list(range(n))
        elif len(self.states) != n:
            raise InvalidDistributionError("state names must match the transition matrix size")

    @property
    def n_states(self) -> int:
        return self.P.shape[0]


@dataclass
class SamplePath:
    horizon: float
    times: np.ndarray
    marks: Optional[np.ndarray] = None
    initial_mark: Optional[Any] = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.size:
            if np.any(np.diff(self.times) <= 0):
                raise InvalidDistributionError("jump times must be strictly increasing")
            if self.times[0] <= 0 or self.times[-1] > self.horizon:
                raise InvalidDistributionError("jump times must lie in (0, T]")
        if self.marks is not None:
            self.marks = np.asarray(self.marks)
            if len(self.marks) != len(self.times):
                raise InvalidDistributionError("marks and jump times differ in length")

    @property
    def count(self) -> int:
        return int(self.times.size)

    def interarrivals(self) -> np.ndarray:
        return np.diff(np.concatenate([[0.0], self.times]))


@dataclass
class SplitResult:
    parent: SamplePath
    coins: np.ndarray
    heads_path: SamplePath
    tails_path: SamplePath

    @property
    def heads_count(self) -> int:
        return int(np.count_nonzero(self.coins))


@dataclass
class RunConfig:
    command: str
    spec: Optional[str] = None
    dist: Optional[str] = None
    map: Optional[str] = None
    chain: Optional[str] = None
    samples: Optional[str] = None
    lam: Optional[float] = None
    p: Optional[float] = None
    T: Optional[float] = None
    trials: int = 1
    seed: Optional[int] = None
    epsilon: Optional[float] = None
    delta: Optional[float] = None
    tol: Optional[float] = None
    n: Optional[int] = None
    k: Optional[int] = None
    method: str = 'auto'
    discrete: bool = False
    allow_uncertified: bool = False
    output_format: str = 'human'
    output: Optional[str] = None
    # inline documents (used by the HTTP service instead of paths)
    documents: Dict[str, Any] = field(default_factory=dict)

    def validate(self):
        if self.command not in COMMANDS:
            raise SpecValidationError(f"Unknown command {self.command!r}", field='command')
        if self.output_format not in OUTPUT_FORMATS:
            raise SpecValidationError(f"Unknown output format {self.output_format!r}", field='format')
        if self.command in STOCHASTIC_COMMANDS and self.seed is None:
            raise SpecValidationError(f"{self.command} is stochastic and needs --seed", field='seed')
        if self.seed is not None and not 0 <= int(self.seed) < 2 ** 64:
            raise SpecValidationError("seed must be a 64-bit unsigned integer", field='seed')
        if self.trials < 1:
            raise SpecValidationError("trials must be at least 1", field='trials')
        for name in ('spec', 'dist', 'map', 'chain', 'samples'):
            path = getattr(self, name)
            if path is not None and name not in self.documents and not os.path.exists(path):
                raise SpecValidationError(f"No such file: {path}", field=name)
        return self

    @property
    def is_stochastic(self) -> bool:
        """True when the run draws random numbers, so its report must carry seed and version."""
        return (self.seed is not None or self.command in STOCHASTIC_COMMANDS or self.method == 'monte-carlo'
                or (self.command == 'estimate' and not self.discrete))

    def inputs(self) -> Dict[str, Any]:
        """Flags that shaped the run, for embedding in reports."""
        skip = {'command', 'documents', 'output', 'output_format'}
        return {k: v for k, v in self.__dict__.items() if k not in skip and v is not None}
