"""
Representational dissimilarity matrices (RDMs) and histogram matching.
"""
import enum
import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .errors import InputError, ZeroRowError
from .rating_matrix import RatingMatrix

logger = logging.getLogger(__name__)

# dissimilarities bounded by 2
BOUNDED_METRICS = ('cosine', 'correlation')
BOUND_TOL = 1e-12


class Dissimilarity(str, enum.Enum):
    """Row dissimilarity used to build an RDM. Only COSINE is used for emotion structures."""

    COSINE = 'cosine'
    CORRELATION = 'correlation'
    EUCLIDEAN = 'euclidean'


@dataclass(frozen=True)
class RDM:
    """
    Symmetric stimulus x stimulus dissimilarity matrix with a zero diagonal.
    """

    stimulus_ids: tuple[str, ...]
    "row and column labels"

    values: np.ndarray
    "n x n dissimilarities"

    metric: str = 'cosine'
    "dissimilarity the values came from; cosine and correlation values lie in [0, 2]"

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        ids = tuple(str(s) for s in self.stimulus_ids)
        if self.metric not in {m.value for m in Dissimilarity}:
            raise InputError(f'Unknown RDM metric "{self.metric}"')
        n = len(ids)
        if values.shape != (n, n):
            raise InputError(f'RDM values have shape {values.shape}, expected {(n, n)}')
        if not np.all(np.isfinite(values)):
            raise InputError('RDM values must be finite')
        if not np.array_equal(values, values.T):
            raise InputError('RDM must be exactly symmetric')
        if np.any(np.diag(values) != 0):
            raise InputError('RDM diagonal must be zero')
        if np.any(values < 0):
            raise InputError('RDM values must be nonnegative')
        if self.metric in BOUNDED_METRICS and np.any(values > 2.0 + BOUND_TOL):
            raise InputError(f'{self.metric} RDM values must not exceed 2, got {values.max():.6g}')
        values.setflags(write=False)
        object.__setattr__(self, 'stimulus_ids', ids)
        object.__setattr__(self, 'values', values)

    @property
    def n(self) -> int:
        return len(self.stimulus_ids)

    def permuted(self, order) -> 'RDM':
        """Returns the RDM with rows and columns taken in `order` (i.e. P D P^T)."""
        order = np.asarray(order)
        return RDM(tuple(self.stimulus_ids[i] for i in order), self.values[np.ix_(order, order)], self.metric)


def drop_zero_rows(matrix: RatingMatrix) -> tuple[RatingMatrix, list[str]]:
    """
    Removes stimuli whose ratings are all zero (their cosine similarity is undefined).

    Returns
    -------
    (matrix without the zero rows, list of dropped stimulus ids)
    """
    zero = ~np.any(matrix.values != 0, axis=1)
    dropped = [s for s, z in zip(matrix.stimulus_ids, zero) if z]
    if not dropped:
        return matrix, []
    logger.info('Dropping %d all-zero stimuli: %s', len(dropped), ', '.join(dropped))
    keep = [s for s, z in zip(matrix.stimulus_ids, zero) if not z]
    return matrix.subset(keep), dropped


def build_rdm(matrix: RatingMatrix, metric: Dissimilarity | str = Dissimilarity.COSINE) -> RDM:
    """
    Builds the RDM D_ij = 1 - cos(r_i, r_j) from a rating matrix.

    Parameters
    ----------
    matrix : RatingMatrix
        Stimulus rating vectors (rows).
    metric : Dissimilarity
        Default: COSINE. CORRELATION and EUCLIDEAN are available for sensitivity checks.

    Returns
    -------
    RDM labelled by matrix.stimulus_ids.

    Raises
    ------
    ZeroRowError
        If any row is all zero (use drop_zero_rows first).
    """
    metric = Dissimilarity(metric)
    values = matrix.values
    if metric is Dissimilarity.COSINE:
        zero = ~np.any(values != 0, axis=1)
        if zero.any():
            raise ZeroRowError([s for s, z in zip(matrix.stimulus_ids, zero) if z])
    if matrix.n_stimuli < 2:
        return RDM(matrix.stimulus_ids, np.zeros((matrix.n_stimuli, matrix.n_stimuli)), metric.value)
    condensed = pdist(values, metric=metric.value)
    if metric is not Dissimilarity.EUCLIDEAN:
        # rounding can push 1 - cos slightly outside [0, 2]
        condensed = np.clip(condensed, 0.0, 2.0)
    if not np.all(np.isfinite(condensed)):
        raise InputError(f'{metric.value} dissimilarity is undefined for some rows (constant rating vectors?)')
    return RDM(matrix.stimulus_ids, squareform(condensed, checks=False), metric.value)


def upper_triangle(rdm: RDM) -> np.ndarray:
    """Strictly-upper-triangular entries in row-major order, length n(n-1)/2."""
    rows, cols = np.triu_indices(rdm.n, k=1)
    return rdm.values[rows, cols]


def rdm_from_upper(stimulus_ids, upper: np.ndarray, metric: str = 'cosine') -> RDM:
    """Inverse of upper_triangle: mirrors the entries and sets a zero diagonal."""
    n = len(stimulus_ids)
    values = np.zeros((n, n))
    rows, cols = np.triu_indices(n, k=1)
    values[rows, cols] = upper
    values[cols, rows] = upper
    return RDM(tuple(stimulus_ids), values, metric)


def histogram_match(source: RDM, target: RDM) -> RDM:
    """
    Gives `target` the value distribution of `source` while keeping its ranks.

    The upper triangles are sorted in descending order and the target entry of
    rank r receives the source value of rank r. Equal target values are ranked by
    position (stable sort). When the triangles differ in length, each target
    entry's empirical quantile is looked up in the source's quantile function
    with linear interpolation instead.

    Parameters
    ----------
    source : RDM
        Reference structure whose values are used.
    target : RDM
        Structure to rewrite.

    Returns
    -------
    RDM with target's labels and rank order and source's values.

    Examples
    --------
    Source upper triangle (0.9, 0.5, 0.1) and target (0.8, 0.7, 0.2) give a
    target triangle of (0.9, 0.5, 0.1).
    """
    u = upper_triangle(source)
    v = upper_triangle(target)
    if v.size == 0:
        return target
    order = np.argsort(-v, kind='stable')
    matched = np.empty_like(v)
    if u.size == v.size:
        matched[order] = np.sort(u)[::-1]
    else:
        logger.warning('Histogram matching %d target entries to %d source entries by quantile interpolation',
                       v.size, u.size)
        if u.size == 0:
            raise InputError('Cannot histogram-match to an RDM with fewer than two stimuli')
        # descending rank r -> quantile 1 - r / (L' - 1)
        quantiles = 1.0 - np.arange(v.size) / max(v.size - 1, 1)
        matched[order] = np.quantile(u, quantiles, method='linear')
    return rdm_from_upper(target.stimulus_ids, matched, source.metric)
