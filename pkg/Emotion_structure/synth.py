"""
Synthetic rating data with planted categories, for demos and end-to-end checks.
"""
import logging
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .rating_matrix import RatingMatrix

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PlantedDataset:
    """
    Two noisy views of the same stimuli, plus the planted category of each stimulus.
    """

    reference: RatingMatrix
    "first view (plays the human role)"

    comparison: RatingMatrix
    "second view (plays the model or second-group role)"

    labels: tuple[int, ...]
    "planted category per stimulus, in stimulus order"


def planted_dataset(n_stimuli: int = 200, n_categories: int = 10, n_dims: int = 34,
        separation: float = 70.0, spread: float = 8.0, noise: float = 5.0,
        scale: float = 100.0, seed: int = 0) -> PlantedDataset:
    """
    Generates rating matrices around k nonnegative category prototypes.

    Each prototype has a low baseline on every dimension, `separation` extra
    intensity on its own block of dimensions, a weaker random share of one
    other category's block and its own share (up to 40% of `separation`) of a
    common profile over all dimensions, so categories are not all equidistant
    and differ in how typical they are.

    A stimulus is its category's prototype plus a stimulus-specific offset
    (sd `spread`) shared by both views; each view then adds independent noise
    (sd `noise`). Values are clipped to [0, scale].

    Parameters
    ----------
    n_stimuli, n_categories, n_dims : int
        Matrix shape and number of planted categories.
    separation : float
        Prototype elevation; keep it well above 3 * noise for separable categories.
    spread : float
        Within-category sd of the shared stimulus vectors.
    noise : float
        Independent per-view sd.
    scale : float
        Declared rating maximum. Default: 100
    seed : int

    Returns
    -------
    PlantedDataset
    """
    if not 2 <= n_categories <= n_stimuli:
        raise InputError(f'Need 2 <= n_categories <= n_stimuli, got {n_categories} and {n_stimuli}')
    if n_dims < n_categories:
        raise InputError(f'Need at least one dimension per category, got {n_dims} for {n_categories}')
    rng = np.random.default_rng(seed)

    blocks = np.array_split(rng.permutation(n_dims), n_categories)
    prototypes = rng.uniform(0.0, 0.1 * separation, size=(n_categories, n_dims))
    for category, block in enumerate(blocks):
        prototypes[category, block] += separation
        other = (category + 1 + rng.integers(n_categories - 1)) % n_categories
        prototypes[category, blocks[other]] += rng.uniform(0.2, 0.6) * separation
    shares = rng.permutation(np.linspace(0.0, 0.4, n_categories)) * separation
    prototypes += np.outer(shares, rng.uniform(0.5, 1.0, size=n_dims))

    labels = rng.permutation(np.arange(n_stimuli) % n_categories)
    shared = prototypes[labels] + rng.normal(0.0, spread, size=(n_stimuli, n_dims))
    views = [np.clip(shared + rng.normal(0.0, noise, size=shared.shape), 0.0, scale) for _ in range(2)]

    stimulus_ids = tuple(f's{i:04d}' for i in range(n_stimuli))
    category_names = tuple(f'emotion_{j:02d}' for j in range(n_dims))
    logger.info('Planted %d categories over %d stimuli x %d dimensions (seed %d)',
                n_categories, n_stimuli, n_dims, seed)
    return PlantedDataset(RatingMatrix(stimulus_ids, category_names, views[0], scale),
                          RatingMatrix(stimulus_ids, category_names, views[1], scale),
                          tuple(int(label) for label in labels))
