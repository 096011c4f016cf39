"""
Scoring transport plans: one-to-one and category matching rates, Ward categories and top-K subsets.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .errors import InputError
from .gwot import TransportPlan
from .rating_matrix import RatingMatrix
from .rsa import PerStimulusCorrelations

logger = logging.getLogger(__name__)

DEFAULT_N_CLUSTERS = 10


@dataclass(frozen=True)
class CategoryAssignment:
    """
    Data-driven stimulus categories.
    """

    stimulus_ids: tuple[str, ...]
    "stimuli in matrix order"

    labels: tuple[int, ...]
    "category id per stimulus, dense in 0..k-1 and numbered by first occurrence"

    @property
    def k(self) -> int:
        return len(set(self.labels))

    @property
    def category_of(self) -> dict[str, int]:
        return dict(zip(self.stimulus_ids, self.labels))


@dataclass(frozen=True)
class AssignmentMatrix:
    """
    Binary ground-truth matrix C; C[i, k] = 1 when row i and column k count as a correct match.
    """

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 2 or not np.isin(values, (0, 1)).all():
            raise InputError('Assignment matrix must be a 2-d 0/1 matrix')
        values = values.astype(np.int8)
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)


def identity_assignment(row_ids, col_ids=None) -> AssignmentMatrix:
    """Truth pairing each row stimulus with the column stimulus of the same id."""
    row_ids = list(row_ids)
    col_ids = row_ids if col_ids is None else list(col_ids)
    codes = {s: i for i, s in enumerate(dict.fromkeys(row_ids + col_ids))}
    return AssignmentMatrix(np.equal.outer(np.array([codes[s] for s in row_ids]),
                                           np.array([codes[s] for s in col_ids])))


def permutation_assignment(permutation) -> AssignmentMatrix:
    """Truth pairing row i with column permutation[i]."""
    permutation = np.asarray(permutation)
    values = np.zeros((permutation.size, permutation.size), dtype=np.int8)
    values[np.arange(permutation.size), permutation] = 1
    return AssignmentMatrix(values)


def category_assignment_matrix(categories: CategoryAssignment, row_ids, col_ids) -> AssignmentMatrix:
    """C[i, k] = 1 iff row stimulus i and column stimulus k share a category."""
    category_of = categories.category_of
    unmapped = [s for s in list(row_ids) + list(col_ids) if s not in category_of]
    if unmapped:
        raise InputError('Stimuli without a category: ' + ', '.join(dict.fromkeys(unmapped)))
    rows = np.array([category_of[s] for s in row_ids])
    cols = np.array([category_of[s] for s in col_ids])
    return AssignmentMatrix(np.equal.outer(rows, cols))


def matching_rate(plan: TransportPlan, truth: AssignmentMatrix) -> float:
    """
    Percentage of rows whose largest plan entry sits on a correct pair.

    Only the first (lowest-index) maximum of each row is consulted.

    Parameters
    ----------
    plan : TransportPlan
    truth : AssignmentMatrix
        Same shape as the plan.

    Returns
    -------
    Matching rate in percent.
    """
    values = plan.values
    if truth.values.shape != values.shape:
        raise InputError(f'Plan shape {values.shape} does not match truth shape {truth.values.shape}')
    if values.shape[0] == 0:
        raise InputError('Cannot score an empty plan')
    empty = np.flatnonzero(~np.any(values != 0, axis=1))
    if empty.size:
        raise InputError(f'Plan rows without mass: {empty.tolist()}')
    winners = np.argmax(values, axis=1)
    hits = truth.values[np.arange(values.shape[0]), winners]
    return float(100.0 * hits.mean())


def category_matching_rate(plan: TransportPlan, categories: CategoryAssignment) -> float:
    """
    Matching rate where any same-category pair counts as correct.

    The plan's row and column ids are looked up in `categories`; a plan without
    ids is taken to follow categories.stimulus_ids on both axes.
    """
    row_ids = plan.row_ids if plan.row_ids is not None else categories.stimulus_ids
    col_ids = plan.col_ids if plan.col_ids is not None else categories.stimulus_ids
    return matching_rate(plan, category_assignment_matrix(categories, row_ids, col_ids))


def theoretical_chance_rate(n: int) -> float:
    """One-to-one chance level in percent, 100 / n."""
    if n < 1:
        raise InputError(f'n must be positive, got {n}')
    return 100.0 / n


def _canonical_labels(labels) -> tuple[int, ...]:
    relabel = {}
    for label in labels:
        relabel.setdefault(label, len(relabel))
    return tuple(relabel[label] for label in labels)


def ward_linkage(values) -> np.ndarray:
    """
    Ward agglomeration of the rows of `values` in scipy's linkage format.

    Row s of the result is (id_a, id_b, merge cost, size) for the s-th merge,
    with id_a < id_b; points are ids 0..n-1 and merge s creates id n + s.
    Merge costs follow scipy's Ward distance and the Lance-Williams update.
    Among pairs of equal cost the one with the lexicographically smallest
    (min id, max id) merges first; scipy's linkage leaves that order open.
    """
    points = np.asarray(values, dtype=float)
    n = points.shape[0]
    if n < 2:
        raise InputError(f'Ward clustering needs at least two stimuli, got {n}')
    dist = squareform(pdist(points))
    np.fill_diagonal(dist, np.inf)
    size = np.ones(n)
    ids = np.arange(n)
    active = np.ones(n, dtype=bool)
    tree = np.empty((n - 1, 4))
    for step in range(n - 1):
        masked = np.where(active[:, None] & active[None, :], dist, np.inf)
        cost = masked.min()
        rows, cols = np.nonzero(masked == cost)
        lo, hi = np.minimum(ids[rows], ids[cols]), np.maximum(ids[rows], ids[cols])
        pick = np.lexsort((hi, lo))[0]
        i, j = rows[pick], cols[pick]
        s, t = size[i], size[j]
        tree[step] = (lo[pick], hi[pick], cost, s + t)

        merged = ((size + s) * dist[i] ** 2 + (size + t) * dist[j] ** 2 - size * cost ** 2) / (size + s + t)
        merged = np.sqrt(np.maximum(merged, 0.0))
        dist[i, :] = merged
        dist[:, i] = merged
        dist[i, i] = np.inf
        active[j] = False
        size[i] = s + t
        ids[i] = n + step
    return tree


def _cut(tree: np.ndarray, n: int, k: int) -> list[int]:
    # apply the first n - k merges; each point takes the id of its final cluster
    owner = list(range(2 * n - 1))
    for step in range(n - k):
        for child in tree[step, :2].astype(int):
            owner[child] = n + step

    def root(node):
        while owner[node] != node:
            node = owner[node]
        return node

    return [root(point) for point in range(n)]


def cluster_categories(matrix: RatingMatrix, k: int = DEFAULT_N_CLUSTERS) -> CategoryAssignment:
    """
    Hierarchical agglomerative clustering of the stimulus rating vectors.

    Ward linkage on Euclidean distances (see ward_linkage for the order of
    equal-cost merges), cut to exactly k clusters. Cluster ids
    are renumbered by first occurrence in matrix order, so the output only
    depends on cluster membership.

    Parameters
    ----------
    matrix : RatingMatrix
        Usually the reference (human) ratings.
    k : int
        Number of categories, 2 <= k <= n. Default: 10

    Returns
    -------
    CategoryAssignment
    """
    n = matrix.n_stimuli
    if not 2 <= k <= n:
        raise InputError(f'Cluster count must be between 2 and {n}, got {k}')
    labels = _cut(ward_linkage(matrix.values), n, k)
    assignment = CategoryAssignment(matrix.stimulus_ids, _canonical_labels(labels))
    logger.debug('Ward clustering of %d stimuli into %d categories', n, assignment.k)
    return assignment


def select_top_k(correlations: PerStimulusCorrelations, k: int) -> list[str]:
    """
    The k stimuli with the highest correlation, highest first.

    Ties keep the original stimulus order; undefined correlations are never selected.
    """
    n_defined = correlations.n_defined
    if not 1 <= k <= n_defined:
        raise InputError(f'Top-k must be between 1 and {n_defined} (defined correlations), got {k}')
    defined = np.flatnonzero(correlations.defined)
    order = defined[np.argsort(-correlations.r_values[defined], kind='stable')]
    return [correlations.stimulus_ids[i] for i in order[:k]]
