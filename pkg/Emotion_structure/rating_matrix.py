# rating data containers
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import InputError


@dataclass(frozen=True)
class RaterRecord:
    """
    One rater's continuous ratings for one emotion category.
    """

    rater_id: str
    "opaque rater identifier"

    emotion_category: str
    "the category this rater reported"

    per_video_series: dict[str, np.ndarray]
    "video id -> intensity samples recorded at one-second intervals"

    scale: float = 100.0
    "declared maximum of the rating scale"

    def __post_init__(self):
        series = {}
        for video_id, samples in self.per_video_series.items():
            arr = np.asarray(samples, dtype=float)
            if arr.ndim != 1:
                raise InputError(f'Series for ({self.rater_id}, {self.emotion_category}, {video_id}) is not one-dimensional')
            if arr.size and (not np.all(np.isfinite(arr)) or arr.min() < 0 or arr.max() > self.scale):
                raise InputError(f'Series for ({self.rater_id}, {self.emotion_category}, {video_id}) '
                                 f'has samples outside [0, {self.scale}]')
            arr.setflags(write=False)
            series[str(video_id)] = arr
        object.__setattr__(self, 'per_video_series', series)

    @property
    def key(self) -> tuple[str, str]:
        return (self.rater_id, self.emotion_category)


@dataclass(frozen=True)
class RatingMatrix:
    """
    Stimuli x emotion-category intensity matrix.

    Rows follow `stimulus_ids`, columns follow `category_names`. Values are
    nonnegative, finite and bounded by `scale` (100 for continuous slider data,
    1 for proportion data). Instances are immutable; operations return new matrices.
    """

    stimulus_ids: tuple[str, ...]
    "row labels"

    category_names: tuple[str, ...]
    "column labels"

    values: np.ndarray
    "float matrix of shape (len(stimulus_ids), len(category_names))"

    scale: float = 100.0
    "declared maximum of the rating scale"

    def __post_init__(self):
        ids = tuple(str(s) for s in self.stimulus_ids)
        names = tuple(str(c) for c in self.category_names)
        values = np.array(self.values, dtype=float)
        if values.ndim != 2 and values.size == 0:
            values = values.reshape(len(ids), len(names))
        if len(set(ids)) != len(ids):
            raise InputError('Duplicate stimulus ids: ' + ', '.join(_duplicates(ids)))
        if len(set(names)) != len(names):
            raise InputError('Duplicate category names: ' + ', '.join(_duplicates(names)))
        if values.shape != (len(ids), len(names)):
            raise InputError(f'Values have shape {values.shape}, expected {(len(ids), len(names))}')
        if self.scale <= 0:
            raise InputError(f'Scale must be positive, got {self.scale}')
        if values.size:
            if not np.all(np.isfinite(values)):
                raise InputError('Rating values must be finite')
            low, high = values.min(), values.max()
            if low < 0 or high > self.scale:
                bad = np.argwhere((values < 0) | (values > self.scale))[0]
                raise InputError(f'Rating for ({ids[bad[0]]}, {names[bad[1]]}) = {values[bad[0], bad[1]]} '
                                 f'is outside [0, {self.scale}]')
        values.setflags(write=False)
        object.__setattr__(self, 'stimulus_ids', ids)
        object.__setattr__(self, 'category_names', names)
        object.__setattr__(self, 'values', values)

    @property
    def n_stimuli(self) -> int:
        return len(self.stimulus_ids)

    @property
    def n_categories(self) -> int:
        return len(self.category_names)

    def row(self, stimulus_id: str) -> np.ndarray:
        return self.values[self.stimulus_ids.index(stimulus_id)]

    def subset(self, stimulus_ids) -> 'RatingMatrix':
        """Returns the rows for `stimulus_ids`, in that order."""
        index = {s: i for i, s in enumerate(self.stimulus_ids)}
        missing = [s for s in stimulus_ids if s not in index]
        if missing:
            raise InputError('Unknown stimulus ids: ' + ', '.join(missing))
        rows = [index[s] for s in stimulus_ids]
        return RatingMatrix(tuple(stimulus_ids), self.category_names, self.values[rows], self.scale)

    def with_values(self, values: np.ndarray, scale: float | None = None) -> 'RatingMatrix':
        return RatingMatrix(self.stimulus_ids, self.category_names, values,
                            self.scale if scale is None else scale)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.values, index=list(self.stimulus_ids), columns=list(self.category_names))
        frame.index.name = 'stimulus_id'
        return frame

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, scale: float = 100.0) -> 'RatingMatrix':
        """Creates a RatingMatrix from a DataFrame indexed by stimulus id."""
        return cls(tuple(frame.index.astype(str)), tuple(frame.columns.astype(str)),
                   frame.to_numpy(dtype=float), scale)


@dataclass(frozen=True)
class GroupSplit:
    """
    Two rater groups; within every category their rater ids are disjoint.
    """

    group1: frozenset = field(default_factory=frozenset)
    "set of (rater_id, emotion_category)"

    group2: frozenset = field(default_factory=frozenset)
    "set of (rater_id, emotion_category)"

    def categories(self) -> list[str]:
        return sorted({c for _, c in self.group1 | self.group2})

    def raters(self, group: int, category: str) -> list[str]:
        members = self.group1 if group == 1 else self.group2
        return sorted(r for r, c in members if c == category)


def _duplicates(items) -> list[str]:
    seen = set()
    dups = []
    for item in items:
        if item in seen and item not in dups:
            dups.append(item)
        seen.add(item)
    return dups
