"""
Shuffled-ratings control model.

Shuffling permutes whole rating vectors across stimuli while the stimulus ids
stay in place, which severs the pairing between a stimulus and its ratings but
keeps the marginal distribution of ratings. Any metric evaluated against the
reference on shuffled copies gives its chance-level distribution.
"""
import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np
from joblib import Parallel, delayed

from .errors import InputError, NullModelError
from .evaluation import select_top_k
from .rating_matrix import RatingMatrix
from .rsa import per_stimulus_correlations, rdm_correlation
from .structure import build_rdm

logger = logging.getLogger(__name__)

SHUFFLE_MODES = ('rows', 'columns')

Metric = Callable[[RatingMatrix, RatingMatrix], float]
"""metric(reference, shuffled) -> value"""


@dataclass(frozen=True)
class NullSummary:
    """
    Null distribution of one metric.
    """

    metric_name: str

    samples: tuple[float, ...]
    "metric value per shuffle, in shuffle order"

    interval_95: tuple[float, float]
    "2.5th and 97.5th percentiles of samples"

    n_shuffles: int

    base_seed: int = 0

    def contains(self, value: float) -> bool:
        lo, hi = self.interval_95
        return lo <= value <= hi


def percentile_interval(samples, level: float = 95.0) -> tuple[float, float]:
    """Central percentile interval with linear interpolation between order statistics."""
    samples = np.sort(np.asarray(samples, dtype=float))
    if samples.size == 0:
        raise InputError('Cannot compute a percentile interval of no samples')
    tail = (100.0 - level) / 2.0
    lo, hi = np.percentile(samples, [tail, 100.0 - tail], method='linear')
    return float(lo), float(hi)


def gwot_shuffle_count(n: int) -> int:
    """GWOT null shuffles: 10 for up to 500 stimuli, a single shuffle above."""
    return 10 if n <= 500 else 1


def shuffle_ratings(matrix: RatingMatrix, seed: int, mode: str = 'rows') -> RatingMatrix:
    """
    Permutes ratings across stimuli; stimulus ids keep their order.

    Parameters
    ----------
    matrix : RatingMatrix
    seed : int
        Seed for numpy's default generator.
    mode : str
        'rows' moves whole rating vectors (default). 'columns' permutes every
        category column independently, for sensitivity analyses.
    """
    if matrix.n_stimuli < 2:
        raise InputError('Shuffling needs at least two stimuli')
    rng = np.random.default_rng(seed)
    if mode == 'rows':
        values = matrix.values[rng.permutation(matrix.n_stimuli)]
    elif mode == 'columns':
        values = np.column_stack([column[rng.permutation(matrix.n_stimuli)] for column in matrix.values.T])
    else:
        raise InputError(f'Unknown shuffle mode "{mode}"; expected one of {", ".join(SHUFFLE_MODES)}')
    return matrix.with_values(values)


def _evaluate(metric: Metric, reference: RatingMatrix, matrix: RatingMatrix, seed: int, mode: str):
    return metric(reference, shuffle_ratings(matrix, seed, mode))


def null_samples(metric: Callable, matrix: RatingMatrix, reference: RatingMatrix,
        n_shuffles: int, base_seed: int = 0, mode: str = 'rows', n_jobs: int = 1) -> list:
    """
    Raw per-shuffle outputs of `metric`, in shuffle order.

    Like null_distribution, but `metric` may return anything (a tuple of rates,
    a vector of per-stimulus correlations). Shuffle i uses seed base_seed + i.
    """
    if n_shuffles < 1:
        raise InputError(f'n_shuffles must be positive, got {n_shuffles}')
    if mode not in SHUFFLE_MODES:
        raise InputError(f'Unknown shuffle mode "{mode}"; expected one of {", ".join(SHUFFLE_MODES)}')

    def guarded(index: int):
        try:
            return _evaluate(metric, reference, matrix, base_seed + index, mode)
        except Exception as exc:
            raise NullModelError(index, exc) from exc

    samples = Parallel(n_jobs=n_jobs)(delayed(guarded)(i) for i in range(n_shuffles))
    logger.debug('Evaluated %d shuffles from seed %d', n_shuffles, base_seed)
    return list(samples)


def summarize(metric_name: str, samples, base_seed: int = 0) -> NullSummary:
    """Wraps precomputed samples in a NullSummary with their 95% interval."""
    samples = tuple(float(s) for s in samples)
    summary = NullSummary(metric_name, samples, percentile_interval(samples), len(samples), base_seed)
    logger.info('Null %s over %d shuffles: [%.4g, %.4g]', metric_name, len(samples), *summary.interval_95)
    return summary


def null_distribution(metric: Metric, matrix: RatingMatrix, reference: RatingMatrix,
        n_shuffles: int, base_seed: int = 0,
        metric_name: str | None = None, mode: str = 'rows', n_jobs: int = 1) -> NullSummary:
    """
    Evaluates `metric` between `reference` and shuffled copies of `matrix`.

    Parameters
    ----------
    metric : callable
        metric(reference, shuffled) -> float.
    matrix : RatingMatrix
        The matrix to shuffle (often the reference itself).
    reference : RatingMatrix
        Fixed side of every comparison.
    n_shuffles : int
        Shuffle i uses seed base_seed + i.
    base_seed : int
    metric_name : str, optional
        Default: the metric's __name__.
    mode : str
        Shuffle mode, see shuffle_ratings. Default: 'rows'
    n_jobs : int
        joblib workers; samples are returned in shuffle order regardless.

    Returns
    -------
    NullSummary with the samples and their 95% percentile interval.

    Raises
    ------
    NullModelError
        If the metric fails on a shuffle; carries the shuffle index.

    Examples
    --------
    >>> null_distribution(mean_correlation, human, human, n_shuffles=1000)
    """
    name = metric_name or getattr(metric, '__name__', 'metric')
    samples = null_samples(metric, matrix, reference, n_shuffles, base_seed, mode, n_jobs)
    return summarize(name, samples, base_seed)


def null_top_k_selection(shuffled: RatingMatrix, original: RatingMatrix, k: int) -> list[str]:
    """Top-k stimuli ranked by the correlation between shuffled and original ratings."""
    return select_top_k(per_stimulus_correlations(original, shuffled), k)


def mean_correlation(reference: RatingMatrix, other: RatingMatrix) -> float:
    """Mean per-stimulus correlation; a ready-made metric for null_distribution."""
    return per_stimulus_correlations(reference, other).mean_r


def rdm_correlation_to(reference: RatingMatrix, other: RatingMatrix) -> float:
    """RSA correlation between the cosine RDMs of two matrices; a ready-made metric."""
    return rdm_correlation(build_rdm(reference), build_rdm(other))
