import logging
from typing import Optional, Union

import numpy as np
import pandas as pd

from config.settings import Config
from models.data_models import CTMCSpec, SamplePath, SplitResult
from models.errors import InvalidDistributionError

logger = logging.getLogger(__name__)


class ProcessSimulator:
    """Seeded sample paths of Poisson processes and Poisson-clocked Markov chains."""

    def __init__(self, config: Optional[Config] = None):
        self.config = config or Config()

    @staticmethod
    def _require_positive(name: str, value: float):
        if not value > 0:
            raise InvalidDistributionError(f"{name} must be positive, got {value}")

    def _jump_times(self, lam: float, T: float, rng: np.random.Generator) -> np.ndarray:
        # draw interarrivals in blocks until the running sum passes T
        block = int(lam * T + 5 * np.sqrt(lam * T) + 16)
        times = np.cumsum(rng.exponential(1.0 / lam, size=block))
        while times[-1] <= T:
            more = np.cumsum(rng.exponential(1.0 / lam, size=block)) + times[-1]
            times = np.concatenate([times, more])
        return times[times <= T]

    def simulate_poisson(self, lam: float, T: float, rng: np.random.Generator) -> SamplePath:
        self._require_positive('rate', lam)
        self._require_positive('horizon', T)
        path = SamplePath(horizon=T, times=self._jump_times(lam, T, rng))
        logger.debug("Poisson(%g) path on (0, %g]: %d events", lam, T, path.count)
        return path

    def simulate_ctmc(self, spec: CTMCSpec, T: float, rng: np.random.Generator) -> SamplePath:
        """Jumps at Poisson(lambda) times; each jump moves the state by one step of P."""
        self._require_positive('horizon', T)
        times = self._jump_times(spec.lam, T, rng)
        cumulative = np.cumsum(spec.P, axis=1)
        state = int(rng.choice(spec.n_states, p=spec.initial))
        initial = state
        draws = rng.random(times.size)
        marks = np.empty(times.size, dtype=int)
        for i, u in enumerate(draws):
            state = min(int(np.searchsorted(cumulative[state], u, side='right')), spec.n_states - 1)
            marks[i] = state
        logger.debug("CTMC path on (0, %g]: %d jumps from state %d", T, times.size, initial)
        return SamplePath(horizon=T, times=times, marks=marks, initial_mark=initial)

    def split(self, path: SamplePath, p: float, rng: np.random.Generator) -> SplitResult:
        """Toss an independent p-coin per jump; heads go to the first baby process."""
        if not 0 < p < 1:
            raise InvalidDistributionError(f"coin bias must lie in (0, 1), got {p}")
        coins = rng.random(path.count) < p

        def part(mask):
            marks = None if path.marks is None else path.marks[mask]
            return SamplePath(horizon=path.horizon, times=path.times[mask], marks=marks)

        return SplitResult(parent=path, coins=coins, heads_path=part(coins), tails_path=part(~coins))

    def merge(self, split: Union[SplitResult, SamplePath], other: Optional[SamplePath] = None) -> SamplePath:
        """Superpose two paths on the same horizon (or the two halves of a split)."""
        if isinstance(split, SplitResult):
            first, second = split.heads_path, split.tails_path
        else:
            first, second = split, other
        if second is None:
            raise ValueError("merge needs two paths")
        if first.horizon != second.horizon:
            raise ValueError(f"cannot merge paths on horizons {first.horizon} and {second.horizon}")
        times = np.concatenate([first.times, second.times])
        order = np.argsort(times, kind='stable')
        marks = None
        if first.marks is not None and second.marks is not None:
            marks = np.concatenate([first.marks, second.marks])[order]
        return SamplePath(horizon=first.horizon, times=times[order], marks=marks)

    @staticmethod
    def path_frame(path: SamplePath) -> pd.DataFrame:
        marks = path.marks if path.marks is not None else np.full(path.count, np.nan)
        return pd.DataFrame({'time': path.times, 'mark': marks})

    @staticmethod
    def split_frame(split: SplitResult) -> pd.DataFrame:
        """Parent jump times marked H or T by their coin."""
        return pd.DataFrame({'time': split.parent.times, 'mark': np.where(split.coins, 'H', 'T')})

    def export_csv(self, path: Union[SamplePath, SplitResult], destination=None) -> str:
        frame = self.split_frame(path) if isinstance(path, SplitResult) else self.path_frame(path)
        text = frame.to_csv(index=False, float_format='%.17g')
        if destination is not None:
            with open(destination, 'w') as f:
                f.write(text)
            logger.info("Wrote %d events to %s", len(frame), destination)
        return text
