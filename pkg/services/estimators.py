import logging
import math
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.spatial import cKDTree
from scipy.special import digamma, entr

from config.settings import Config
from models.data_models import EstimatorResult
from models.errors import DegenerateSampleError, SpecValidationError

logger = logging.getLogger(__name__)


class EntropyEstimator:
    """Sample-based entropy estimates used to cross-check the exact values."""

    def __init__(self, config: Optional[Config] = None):
        self.config = config or Config()

    def plugin_discrete_entropy(self, samples: Iterable) -> EstimatorResult:
        series = pd.Series(list(samples))
        n = len(series)
        if n < 1:
            raise ValueError("plug-in estimate needs at least one sample")
        freqs = series.value_counts(normalize=True, sort=False).to_numpy(dtype=float)
        value = float(math.fsum(entr(freqs)))
        # delta method: Var(-log p(X)) / n
        second = math.fsum(freqs * np.log(freqs) ** 2)
        se = math.sqrt(max(second - value ** 2, 0.0) / n)
        return EstimatorResult(value=value, n=n, standard_error=se, method='plug-in')

    def _jitter_ties(self, x: np.ndarray, rng: np.random.Generator) -> Tuple[np.ndarray, int]:
        tied = pd.Series(x).duplicated(keep=False).to_numpy()
        count = int(tied.sum())
        if count:
            scale = 1e-12 * max(1.0, float(np.max(np.abs(x))))
            x = x.copy()
            x[tied] += scale * rng.random(count)
            logger.warning("Jittered %d tied samples at scale %.1e", count, scale)
        return x, count

    def nn_summands(self, samples: Sequence[float], k: int, rng: np.random.Generator) -> Tuple[np.ndarray, int]:
        """Per-sample terms log(2 eps_i), eps_i the distance to the k-th neighbour."""
        x = np.asarray(samples, dtype=float).ravel()
        if x.size < k + 1:
            raise ValueError(f"nearest-neighbour estimate of order {k} needs at least {k + 1} samples")
        if np.all(x == x[0]):
            raise DegenerateSampleError("all samples are equal; the differential entropy is -inf")
        x, jittered = self._jitter_ties(x, rng)
        points = x[:, None]
        distances, _ = cKDTree(points).query(points, k=k + 1)
        return np.log(2.0 * distances[:, k]), jittered

    def nn_differential_entropy(self, samples: Sequence[float], k: Optional[int] = None,
                                seed: Union[int, Sequence[int], None] = 0,
                                resamples: Optional[int] = None) -> EstimatorResult:
        """Kozachenko-Leonenko estimate psi(n) - psi(k) + mean log(2 eps_i) with a bootstrap error."""
        k = k or self.config.KNN_K
        if k < 1:
            raise ValueError(f"neighbour order must be at least 1, got {k}")
        resamples = resamples or self.config.BOOTSTRAP_RESAMPLES
        jitter_stream, boot_stream = np.random.SeedSequence(seed).spawn(2)
        summands, jittered = self.nn_summands(samples, k, np.random.default_rng(jitter_stream))
        n = summands.size
        offset = digamma(n) - digamma(k)
        value = float(offset + summands.mean())

        rng = np.random.default_rng(boot_stream)
        means = np.fromiter((summands[rng.integers(0, n, n)].mean() for _ in range(resamples)),
                            dtype=float, count=resamples)
        se = float(means.std(ddof=1)) if resamples > 1 else 0.0
        return EstimatorResult(value=value, n=n, standard_error=se, method='nearest-neighbor', k=k,
                               resamples=resamples, jittered=jittered)

    def load_samples(self, path: str, discrete: bool = False) -> List:
        """One value per line; a non-numeric first line is taken as a header."""
        try:
            frame = pd.read_csv(path, header=None, comment='#', skip_blank_lines=True, dtype=str)
        except pd.errors.EmptyDataError:
            raise SpecValidationError(f"{path} holds no samples", field='samples')
        column = frame.iloc[:, 0].str.strip()
        if discrete:
            return column.tolist()
        numeric = pd.to_numeric(column, errors='coerce')
        if len(numeric) and pd.isna(numeric.iloc[0]):
            numeric = numeric.iloc[1:]
        bad = numeric.index[numeric.isna()]
        if len(bad):
            raise SpecValidationError(f"non-numeric sample {column[bad[0]]!r}", field='samples',
                                      line=int(bad[0]) + 1)
        logger.info("Loaded %d samples from %s", len(numeric), path)
        return numeric.to_numpy(dtype=float).tolist()
