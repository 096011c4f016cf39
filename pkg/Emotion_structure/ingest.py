"""
Loading, aggregating, splitting and parsing emotion ratings.

Human data arrives either as a ready stimulus x category CSV or as per-rater
time series; model data arrives as raw response text in the prompt's
`<category>: <value>` format. Everything ends up as a RatingMatrix.
"""
import logging
import re
from collections import defaultdict
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import IngestError, ResponseParseError
from .rating_matrix import GroupSplit, RaterRecord, RatingMatrix

logger = logging.getLogger(__name__)

LONG_FORMAT_COLUMNS = ('rater_id', 'category', 'stimulus_id', 't_index', 'value')
"""Columns of the long-format rater-record CSV."""

RECORD_FILE_SEPARATOR = '__'
"""Per-record files are named `<rater_id>__<category>.csv`."""

_NUMBER = re.compile(r'^[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?$')
_LIST_MARKER = re.compile(r'^(?:[-*•]\s+|\d+[.)]\s+)')
_MARKDOWN = re.compile(r'[*_`#>]')


def aggregate_time_series(record: RaterRecord) -> dict[str, float]:
    """
    Collapses a rater's second-by-second ratings to one intensity per video.

    Parameters
    ----------
    record : RaterRecord
        The record to aggregate.

    Returns
    -------
    dict of video id -> arithmetic mean of that video's samples.

    Examples
    --------
    >>> aggregate_time_series(RaterRecord('r1', 'joy', {'v1': [10, 20, 30]}))
    {'v1': 20.0}
    """
    aggregated = {}
    for video_id, samples in record.per_video_series.items():
        if samples.size == 0:
            raise IngestError(f'Empty rating series for video "{video_id}" '
                              f'(rater {record.rater_id}, category {record.emotion_category})')
        aggregated[video_id] = float(np.mean(samples))
    return aggregated


def _check_unique(records: list[RaterRecord]):
    seen = set()
    for record in records:
        if record.key in seen:
            raise IngestError(f'Duplicate record for rater "{record.rater_id}" and category "{record.emotion_category}"')
        seen.add(record.key)


def split_groups(records: list[RaterRecord], seed: int) -> GroupSplit:
    """
    Randomly splits the raters of every category into two equal halves.

    Categories are visited in sorted order and raters sorted by id before the
    seeded permutation is applied, so the split depends only on the record set
    and `seed`.

    Parameters
    ----------
    records : list[RaterRecord]
        All records of the dataset.
    seed : int
        Seed for numpy's default generator.

    Returns
    -------
    GroupSplit where, for each category, both groups hold half of its raters.
    """
    _check_unique(records)
    raters_by_category = defaultdict(list)
    for record in records:
        raters_by_category[record.emotion_category].append(record.rater_id)

    rng = np.random.default_rng(seed)
    group1, group2 = set(), set()
    for category in sorted(raters_by_category):
        raters = sorted(raters_by_category[category])
        if len(raters) < 2 or len(raters) % 2:
            raise IngestError(f'Category "{category}" has {len(raters)} raters; an even count of at least 2 is needed')
        order = rng.permutation(len(raters))
        half = len(raters) // 2
        group1.update((raters[i], category) for i in order[:half])
        group2.update((raters[i], category) for i in order[half:])
    logger.debug('Split %d categories into two rater groups (seed %d)', len(raters_by_category), seed)
    return GroupSplit(frozenset(group1), frozenset(group2))


def records_for_group(records: list[RaterRecord], group: frozenset) -> list[RaterRecord]:
    """Returns the records whose (rater_id, category) key is in `group`."""
    return [record for record in records if record.key in group]


def average_group(records: list[RaterRecord],
        category_names: list[str] | None = None,
        stimulus_ids: list[str] | None = None) -> RatingMatrix:
    """
    Averages a group's aggregated ratings into a stimulus x category matrix.

    Parameters
    ----------
    records : list[RaterRecord]
        The records of one group (or of all raters, for the unsplit matrix).
    category_names : list[str], optional
        Column order. Every listed category must have at least one record.
        Default: order of first appearance in `records`.
    stimulus_ids : list[str], optional
        Row order. Default: the video order of the first record.

    Returns
    -------
    RatingMatrix whose cell (video, category) is the mean over that category's raters.
    """
    if not records:
        raise IngestError('No records to average')
    _check_unique(records)
    scales = {record.scale for record in records}
    if len(scales) != 1:
        raise IngestError(f'Records use different scales: {sorted(scales)}')

    aggregated = [(record, aggregate_time_series(record)) for record in records]
    universe = set()
    for _, per_video in aggregated:
        universe.update(per_video)
    missing = [f'({record.rater_id}, {record.emotion_category}, {video})'
               for record, per_video in aggregated
               for video in sorted(universe - set(per_video))]
    if missing:
        raise IngestError('Inconsistent stimulus coverage; missing (rater, category, stimulus): ' + ', '.join(missing))

    if stimulus_ids is None:
        stimulus_ids = list(aggregated[0][1])
    elif set(stimulus_ids) != universe:
        raise IngestError('Requested stimulus ids do not match the records: ' +
                          ', '.join(sorted(set(stimulus_ids) ^ universe)))

    present = list(dict.fromkeys(record.emotion_category for record in records))
    if category_names is None:
        category_names = present
    else:
        absent = [c for c in category_names if c not in present]
        if absent:
            raise IngestError('Categories missing from group: ' + ', '.join(absent))
        extra = [c for c in present if c not in category_names]
        if extra:
            raise IngestError('Records for unrequested categories: ' + ', '.join(extra))

    row = {s: i for i, s in enumerate(stimulus_ids)}
    col = {c: j for j, c in enumerate(category_names)}
    sums = np.zeros((len(stimulus_ids), len(category_names)))
    counts = np.zeros(len(category_names))
    for record, per_video in aggregated:
        j = col[record.emotion_category]
        counts[j] += 1
        for video, value in per_video.items():
            sums[row[video], j] += value
    return RatingMatrix(tuple(stimulus_ids), tuple(category_names), sums / counts, scales.pop())


def average_all(records: list[RaterRecord], category_names: list[str] | None = None) -> RatingMatrix:
    """The unsplit matrix: every rater of a category contributes to its mean."""
    return average_group(records, category_names)


def _normalize_name(name: str) -> str:
    name = _MARKDOWN.sub('', name)
    return ' '.join(name.split()).casefold()


def parse_model_response(text: str, expected_categories: list[str], scale: float) -> np.ndarray:
    """
    Parses a model's `<category>: <number>` response into a rating vector.

    Category names match case-insensitively; blank lines, code fences, list
    markers, emphasis markers and lines that do not name an expected category
    are skipped. Values are not clamped.

    Parameters
    ----------
    text : str
        Raw model output.
    expected_categories : list[str]
        Categories in the order of the returned vector.
    scale : float
        Declared maximum; values outside [0, scale] are rejected.

    Returns
    -------
    numpy.ndarray of length len(expected_categories).

    Examples
    --------
    >>> parse_model_response('love: 80\\namusement: 5', ['love', 'amusement'], 100)
    array([80.,  5.])
    """
    lookup = {_normalize_name(c): i for i, c in enumerate(expected_categories)}
    values: list[float | None] = [None] * len(expected_categories)
    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith('```'):
            continue
        line = _LIST_MARKER.sub('', line)
        name, sep, value_text = line.replace('：', ':').partition(':')
        if not sep:
            continue
        key = _normalize_name(name)
        if key not in lookup:
            logger.debug('Skipping response line %d: %r', line_number, raw)
            continue
        index = lookup[key]
        category = expected_categories[index]
        value_text = _MARKDOWN.sub('', value_text).strip()
        if not _NUMBER.match(value_text):
            raise ResponseParseError(f'Line {line_number}: cannot parse a number for "{category}" from {value_text!r}',
                                     line_number, category)
        value = float(value_text)
        if value < 0 or value > scale:
            raise ResponseParseError(f'Line {line_number}: value {value} for "{category}" is outside [0, {scale}]',
                                     line_number, category)
        if values[index] is not None and values[index] != value:
            raise ResponseParseError(f'Line {line_number}: conflicting values for "{category}" '
                                     f'({values[index]} and {value})', line_number, category)
        values[index] = value

    missing = [c for c, v in zip(expected_categories, values) if v is None]
    if missing:
        raise ResponseParseError('Response is missing categories: ' + ', '.join(missing), category=missing[0])
    return np.array(values, dtype=float)


def format_model_response(vector, categories: list[str]) -> str:
    """Writes a rating vector in the prompt's response format (inverse of parse_model_response)."""
    vector = np.asarray(vector, dtype=float)
    if vector.shape != (len(categories),):
        raise IngestError(f'Vector of length {vector.size} does not match {len(categories)} categories')
    return '\n'.join(f'{name}: {np.format_float_positional(value, trim="-")}'
                     for name, value in zip(categories, vector))


def average_responses(vectors: list) -> np.ndarray:
    """Elementwise mean of repeated model responses for the same stimulus."""
    if len(vectors) == 0:
        raise IngestError('At least one response vector is required')
    lengths = {len(v) for v in vectors}
    if len(lengths) != 1:
        raise IngestError(f'Response vectors have different lengths: {sorted(lengths)}')
    return np.mean(np.vstack([np.asarray(v, dtype=float) for v in vectors]), axis=0)


def read_model_responses(directory, expected_categories: list[str], scale: float,
        divisor: float | None = None) -> RatingMatrix:
    """
    Reads a directory of raw model responses into a rating matrix.

    Files are named `<stimulus_id>.txt` or `<stimulus_id>__<repetition>.txt`;
    repeated responses for one stimulus are averaged. Stimuli are sorted by id.

    Parameters
    ----------
    directory : str or Path
    expected_categories : list[str]
        Category names in column order.
    scale : float
        Maximum of the response scale (100, or 9 for 0-9 responses).
    divisor : float, optional
        If given, values and scale are divided by it after averaging.
    """
    directory = Path(directory)
    files = sorted(directory.glob('*.txt'))
    if not files:
        raise IngestError(f'{directory}: no response files (*.txt) found')
    responses = defaultdict(list)
    for file in files:
        stimulus_id = file.stem.split(RECORD_FILE_SEPARATOR)[0]
        try:
            responses[stimulus_id].append(parse_model_response(file.read_text(encoding='utf-8'),
                                                               expected_categories, scale))
        except ResponseParseError as exc:
            raise ResponseParseError(f'{file}: {exc}', exc.line_number, exc.category) from exc
    stimulus_ids = sorted(responses)
    values = np.vstack([average_responses(responses[s]) for s in stimulus_ids])
    matrix = RatingMatrix(tuple(stimulus_ids), tuple(expected_categories), values, scale)
    logger.info('Parsed %d responses for %d stimuli from %s', len(files), len(stimulus_ids), directory)
    return matrix if divisor is None else rescale_proportions(matrix, divisor)


def rescale_proportions(matrix: RatingMatrix, divisor: float) -> RatingMatrix:
    """Divides every cell and the declared scale by `divisor` (e.g. 0-9 responses -> 0-0.9)."""
    if not divisor > 0:
        raise IngestError(f'Divisor must be positive, got {divisor}')
    return matrix.with_values(matrix.values / divisor, scale=matrix.scale / divisor)


def read_rating_csv(path, scale: float = 100.0) -> RatingMatrix:
    """
    Reads a stimulus x category rating CSV.

    The first header cell must be `stimulus_id`; the remaining header cells are
    category names. Parse errors name the offending file line.
    """
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding='utf-8')
        header = pd.read_csv(path, header=None, nrows=1, dtype=str, keep_default_na=False, encoding='utf-8').iloc[0]
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise IngestError(f'{path}: {exc}') from exc
    duplicated = header[header.duplicated()].unique().tolist()
    if duplicated:
        raise IngestError(f'{path}: duplicate header cells: ' + ', '.join(duplicated))
    if len(frame.columns) == 0 or frame.columns[0] != 'stimulus_id':
        raise IngestError(f'{path}: first header cell must be "stimulus_id"')
    cells = frame.iloc[:, 1:].apply(lambda column: column.str.strip())
    bad = cells.apply(lambda column: pd.to_numeric(column, errors='coerce')).isna().to_numpy()
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise IngestError(f'{path}, line {row + 2}: cannot parse {frame.iat[row, col + 1]!r} '
                          f'in column "{frame.columns[col + 1]}"')
    try:
        return RatingMatrix(tuple(frame['stimulus_id']), tuple(frame.columns[1:]), cells.apply(lambda column: column.map(float)).to_numpy(dtype=float), scale)
    except ValueError as exc:
        raise IngestError(f'{path}: {exc}') from exc


def write_rating_csv(matrix: RatingMatrix, path) -> Path:
    path = Path(path)
    matrix.to_frame().to_csv(path, float_format='%.17g', encoding='utf-8')
    return path


def _records_from_long_frame(frame: pd.DataFrame, scale: float, source: str) -> list[RaterRecord]:
    missing = [c for c in LONG_FORMAT_COLUMNS if c not in frame.columns]
    if missing:
        raise IngestError(f'{source}: missing columns ' + ', '.join(missing))
    frame = frame.astype({'rater_id': str, 'category': str, 'stimulus_id': str})
    frame['value'] = pd.to_numeric(frame['value'], errors='coerce')
    if frame['value'].isna().any():
        row = int(np.flatnonzero(frame['value'].isna().to_numpy())[0])
        raise IngestError(f'{source}, line {row + 2}: value is not numeric')
    frame = frame.sort_values(['rater_id', 'category', 'stimulus_id', 't_index'], kind='stable')
    records = []
    for (rater_id, category), block in frame.groupby(['rater_id', 'category'], sort=True):
        series = {stimulus: group['value'].to_numpy()
                  for stimulus, group in block.groupby('stimulus_id', sort=False)}
        records.append(RaterRecord(rater_id, category, series, scale))
    return records


def read_rater_records(path, scale: float = 100.0) -> list[RaterRecord]:
    """
    Reads rater time series.

    Parameters
    ----------
    path : str or Path
        Either a long-format CSV with columns `rater_id, category, stimulus_id,
        t_index, value`, or a directory of `<rater_id>__<category>.csv` files
        with columns `stimulus_id, t_index, value`.
    scale : float
        Declared maximum of the rating scale. Default: 100

    Returns
    -------
    list of RaterRecord, sorted by (rater_id, category).
    """
    path = Path(path)
    if path.is_dir():
        records = []
        files = sorted(path.glob('*.csv'))
        if not files:
            raise IngestError(f'{path}: no rater-record CSV files found')
        for file in files:
            rater_id, sep, category = file.stem.partition(RECORD_FILE_SEPARATOR)
            if not sep:
                raise IngestError(f'{file}: file name must be <rater_id>{RECORD_FILE_SEPARATOR}<category>.csv')
            try:
                frame = pd.read_csv(file)
            except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
                raise IngestError(f'{file}: {exc}') from exc
            records.extend(_records_from_long_frame(frame.assign(rater_id=rater_id, category=category), scale, str(file)))
        records.sort(key=lambda record: (record.rater_id, record.emotion_category))
    else:
        try:
            frame = pd.read_csv(path)
        except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
            raise IngestError(f'{path}: {exc}') from exc
        records = _records_from_long_frame(frame, scale, str(path))
    _check_unique(records)
    logger.info('Loaded %d rater records from %s', len(records), path)
    return records


def write_rater_records(records: list[RaterRecord], path) -> Path:
    """Writes records in the long format read by read_rater_records."""
    rows = [(r.rater_id, r.emotion_category, video, t, float(value))
            for r in records
            for video, samples in r.per_video_series.items()
            for t, value in enumerate(samples)]
    path = Path(path)
    pd.DataFrame(rows, columns=list(LONG_FORMAT_COLUMNS)).to_csv(path, index=False, float_format='%.17g')
    return path
