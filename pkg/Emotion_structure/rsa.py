"""
Supervised comparisons: per-stimulus correlations, RDM correlation (RSA) and effect sizes.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.stats import pearsonr

from .errors import InputError, NumericalError, UndefinedCorrelationError
from .rating_matrix import RatingMatrix
from .structure import RDM, upper_triangle

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PerStimulusCorrelations:
    """
    Pearson correlation between two rating matrices, one value per stimulus.
    """

    stimulus_ids: tuple[str, ...]
    "row labels shared by both matrices"

    r_values: np.ndarray
    "correlation per stimulus; NaN where undefined (a constant row)"

    @property
    def defined(self) -> np.ndarray:
        return ~np.isnan(self.r_values)

    @property
    def n_defined(self) -> int:
        return int(self.defined.sum())

    @property
    def n_undefined(self) -> int:
        return len(self.stimulus_ids) - self.n_defined

    @property
    def mean_r(self) -> float:
        """Unweighted mean over stimuli with a defined correlation."""
        if self.n_defined == 0:
            return float('nan')
        return float(np.mean(self.r_values[self.defined]))

    def summary(self) -> dict:
        return {'mean_r': self.mean_r, 'n_defined': self.n_defined, 'n_undefined': self.n_undefined}


def pearson(x, y) -> float:
    """
    Sample Pearson correlation of two equal-length sequences.

    Raises
    ------
    UndefinedCorrelationError
        If x or y is constant; `side` tells which.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise InputError(f'pearson needs two 1-d sequences of equal length, got {x.shape} and {y.shape}')
    if x.size < 2:
        raise InputError('pearson needs at least two observations')
    x_constant = bool(np.all(x == x[0]))
    y_constant = bool(np.all(y == y[0]))
    if x_constant or y_constant:
        side = 'both' if x_constant and y_constant else ('x' if x_constant else 'y')
        raise UndefinedCorrelationError(f'Correlation is undefined: {side} is constant', side)
    r, _ = pearsonr(x, y)
    return float(r)


def _rowwise_pearson(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = a - a.mean(axis=1, keepdims=True)
    b = b - b.mean(axis=1, keepdims=True)
    denominator = np.sqrt(np.sum(a * a, axis=1) * np.sum(b * b, axis=1))
    with np.errstate(invalid='ignore', divide='ignore'):
        r = np.sum(a * b, axis=1) / denominator
    r[denominator == 0] = np.nan
    return np.clip(r, -1.0, 1.0)


def per_stimulus_correlations(a: RatingMatrix, b: RatingMatrix) -> PerStimulusCorrelations:
    """
    Correlates the two matrices row by row, across categories.

    Both matrices must carry the same stimulus ids and category names in the
    same order. Rows that are constant in either matrix get NaN and are left
    out of mean_r.
    """
    if a.stimulus_ids != b.stimulus_ids:
        raise InputError('Rating matrices have different stimulus ids or order')
    if a.category_names != b.category_names:
        raise InputError('Rating matrices have different category names or order')
    if a.n_categories < 2:
        raise InputError('Per-stimulus correlation needs at least two categories')
    r = _rowwise_pearson(a.values, b.values)
    result = PerStimulusCorrelations(a.stimulus_ids, r)
    if result.n_undefined:
        logger.warning('%d stimuli have an undefined correlation (constant ratings)', result.n_undefined)
    return result


def rdm_correlation(d1: RDM, d2: RDM) -> float:
    """Pearson correlation between the upper triangles of two RDMs over the same stimuli."""
    if d1.stimulus_ids != d2.stimulus_ids:
        raise InputError(f'RDMs differ in size or stimulus order ({d1.n} vs {d2.n} stimuli)')
    return pearson(upper_triangle(d1), upper_triangle(d2))


def cohens_d(sample_a, sample_b) -> float:
    """
    Cohen's D with the pooled two-sample standard deviation.

    Parameters
    ----------
    sample_a, sample_b : sequence of float
        At least two values each.

    Returns
    -------
    (mean_a - mean_b) / pooled_sd
    """
    a = np.asarray(sample_a, dtype=float)
    b = np.asarray(sample_b, dtype=float)
    a = a[~np.isnan(a)]
    b = b[~np.isnan(b)]
    if a.size < 2 or b.size < 2:
        raise InputError("Cohen's D needs at least two values per sample")
    pooled_var = ((a.size - 1) * a.var(ddof=1) + (b.size - 1) * b.var(ddof=1)) / (a.size + b.size - 2)
    if pooled_var == 0:
        raise NumericalError("Cohen's D is undefined: pooled variance is zero")
    return float((a.mean() - b.mean()) / np.sqrt(pooled_var))


def top_correlated(correlations: PerStimulusCorrelations, k: int) -> list[tuple[str, float]]:
    """The k best-predicted stimuli as (stimulus_id, r), highest r first."""
    defined = np.flatnonzero(correlations.defined)
    order = defined[np.argsort(-correlations.r_values[defined], kind='stable')]
    return [(correlations.stimulus_ids[i], float(correlations.r_values[i])) for i in order[:k]]
