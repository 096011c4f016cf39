"""
Readers and writers for everything the tool puts on disk.

CSV goes through pandas with full float precision, so numeric files read back
bit-identically. JSON goes through jsons for dataclasses; NaN is written as null.
"""
import json
import logging
import math
from pathlib import Path

import jsons
import numpy as np
import pandas as pd

from .errors import InputError
from .evaluation import CategoryAssignment
from .gwot import SolverResult, TransportPlan
from .nullmodel import NullSummary, percentile_interval
from .rsa import PerStimulusCorrelations
from .structure import RDM

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.17g'

jsons.set_serializer(lambda obj, **kwargs: obj.tolist(), np.ndarray)
jsons.set_serializer(lambda obj, **kwargs: obj.item(), np.generic)


def _plain(obj):
    # jsons output -> strict JSON values
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, np.generic):
        return _plain(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def to_json_text(obj) -> str:
    """Canonical JSON text: sorted keys, two-space indent, NaN as null."""
    return json.dumps(_plain(jsons.dump(obj, strip_privates=True, strip_properties=True)),
                      sort_keys=True, indent=2, allow_nan=False) + '\n'


def write_json(obj, path) -> Path:
    path = Path(path)
    path.write_text(to_json_text(obj), encoding='utf-8')
    return path


def read_json(path):
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding='utf-8'))
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f'{path}: {exc}') from exc


def _read_labelled_square(path) -> tuple[list[str], list[str], np.ndarray]:
    path = Path(path)
    try:
        frame = pd.read_csv(path, index_col=0, dtype={'stimulus_id': str}, float_precision='round_trip', encoding='utf-8')
    except (OSError, pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise InputError(f'{path}: {exc}') from exc
    if frame.index.name != 'stimulus_id':
        raise InputError(f'{path}: first header cell must be "stimulus_id"')
    try:
        values = frame.to_numpy(dtype=float)
    except ValueError as exc:
        raise InputError(f'{path}: {exc}') from exc
    return [str(s) for s in frame.index], [str(c) for c in frame.columns], values


def write_rdm_csv(rdm: RDM, path) -> Path:
    path = Path(path)
    frame = pd.DataFrame(rdm.values, index=list(rdm.stimulus_ids), columns=list(rdm.stimulus_ids))
    frame.index.name = 'stimulus_id'
    frame.to_csv(path, float_format=FLOAT_FORMAT, encoding='utf-8')
    return path


def read_rdm_csv(path, metric: str = 'cosine') -> RDM:
    """`metric` names the dissimilarity the file holds; CSV does not record it."""
    rows, cols, values = _read_labelled_square(path)
    if rows != cols:
        raise InputError(f'{path}: row and column stimulus ids differ')
    return RDM(tuple(rows), values, metric)


def write_rdm_json(rdm: RDM, path) -> Path:
    """Compact form {ids, values, metric} with values in row-major order."""
    return write_json({'ids': list(rdm.stimulus_ids), 'values': rdm.values.ravel().tolist(), 'metric': rdm.metric},
                      path)


def read_rdm_json(path, metric: str = 'cosine') -> RDM:
    """A stored metric takes precedence over `metric`."""
    data = read_json(path)
    try:
        ids = data['ids']
        values = np.array(data['values'], dtype=float).reshape(len(ids), len(ids))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f'{path}: not an RDM JSON file ({exc})') from exc
    return RDM(tuple(ids), values, data.get('metric', metric))


def write_rdm(rdm: RDM, path) -> Path:
    """Writes JSON for a .json suffix and CSV otherwise."""
    path = Path(path)
    return write_rdm_json(rdm, path) if path.suffix == '.json' else write_rdm_csv(rdm, path)


def read_rdm(path, metric: str = 'cosine') -> RDM:
    path = Path(path)
    return read_rdm_json(path, metric) if path.suffix == '.json' else read_rdm_csv(path, metric)


def write_plan_csv(plan: TransportPlan, path) -> Path:
    path = Path(path)
    n = plan.n
    rows = list(plan.row_ids) if plan.row_ids is not None else [str(i) for i in range(n)]
    cols = list(plan.col_ids) if plan.col_ids is not None else [str(i) for i in range(n)]
    frame = pd.DataFrame(plan.values, index=rows, columns=cols)
    frame.index.name = 'stimulus_id'
    frame.to_csv(path, float_format=FLOAT_FORMAT, encoding='utf-8')
    return path


def read_plan_csv(path) -> TransportPlan:
    rows, cols, values = _read_labelled_square(path)
    return TransportPlan(values, tuple(rows), tuple(cols))


def write_plan_json(plan: TransportPlan, path) -> Path:
    """Sparse form {ids_row, ids_col, n, triplets: [[i, k, mass], ...]} listing nonzero entries."""
    rows, cols = np.nonzero(plan.values)
    triplets = [[int(i), int(k), float(plan.values[i, k])] for i, k in zip(rows, cols)]
    return write_json({'ids_row': list(plan.row_ids) if plan.row_ids is not None else None,
                       'ids_col': list(plan.col_ids) if plan.col_ids is not None else None,
                       'n': plan.n,
                       'triplets': triplets}, path)


def read_plan_json(path) -> TransportPlan:
    data = read_json(path)
    try:
        n = int(data['n'])
        values = np.zeros((n, n))
        for i, k, mass in data['triplets']:
            values[int(i), int(k)] = float(mass)
        return TransportPlan(values, data.get('ids_row'), data.get('ids_col'))
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise InputError(f'{path}: not a transport-plan JSON file ({exc})') from exc


def read_plan(path) -> TransportPlan:
    path = Path(path)
    return read_plan_json(path) if path.suffix == '.json' else read_plan_csv(path)


def write_solver_log(result: SolverResult, path) -> Path:
    """One JSON object per restart: restart, seed, initial_gwd, gwd, iterations, converged, exchange_rounds."""
    path = Path(path)
    with path.open('w', encoding='utf-8') as stream:
        for log in result.restarts:
            stream.write(json.dumps(_plain(jsons.dump(log, strip_privates=True)), sort_keys=True, allow_nan=False) + '\n')
    return path


def read_solver_log(path) -> list[dict]:
    path = Path(path)
    return [json.loads(line) for line in path.read_text(encoding='utf-8').splitlines() if line.strip()]


def write_correlations(correlations: PerStimulusCorrelations, path) -> Path:
    """CSV with columns stimulus_id, r; undefined correlations are left empty."""
    path = Path(path)
    frame = pd.DataFrame({'stimulus_id': list(correlations.stimulus_ids), 'r': correlations.r_values})
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, encoding='utf-8')
    return path


def read_correlations(path) -> PerStimulusCorrelations:
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype={'stimulus_id': str}, float_precision='round_trip', encoding='utf-8')
        return PerStimulusCorrelations(tuple(frame['stimulus_id']), frame['r'].to_numpy(dtype=float))
    except (OSError, KeyError, ValueError, pd.errors.ParserError) as exc:
        raise InputError(f'{path}: {exc}') from exc


def write_correlation_summary(correlations: PerStimulusCorrelations, path) -> Path:
    return write_json(correlations.summary(), path)


def write_categories(assignment: CategoryAssignment, path) -> Path:
    path = Path(path)
    frame = pd.DataFrame({'stimulus_id': list(assignment.stimulus_ids), 'category': list(assignment.labels)})
    frame.to_csv(path, index=False, encoding='utf-8')
    return path


def read_categories(path) -> CategoryAssignment:
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype={'stimulus_id': str}, float_precision='round_trip', encoding='utf-8')
        return CategoryAssignment(tuple(frame['stimulus_id']), tuple(int(c) for c in frame['category']))
    except (OSError, KeyError, ValueError, pd.errors.ParserError) as exc:
        raise InputError(f'{path}: {exc}') from exc


def write_evaluation(path, matching_rate_pct: float, category_matching_rate_pct: float | None,
        k: int | None, n: int) -> Path:
    return write_json({'matching_rate_pct': matching_rate_pct,
                       'category_matching_rate_pct': category_matching_rate_pct,
                       'k': k, 'n': n}, path)


def write_null_report(summary: NullSummary, path) -> Path:
    lo, hi = summary.interval_95
    return write_json({'metric': summary.metric_name, 'n_shuffles': summary.n_shuffles,
                       'base_seed': summary.base_seed, 'samples': list(summary.samples),
                       'lo': lo, 'hi': hi}, path)


def read_null_report(path) -> NullSummary:
    data = read_json(path)
    try:
        samples = tuple(float('nan') if s is None else float(s) for s in data['samples'])
        return NullSummary(data['metric'], samples, (float(data['lo']), float(data['hi'])),
                           int(data['n_shuffles']), int(data.get('base_seed', 0)))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f'{path}: not a null-report JSON file ({exc})') from exc


def write_null_samples_csv(summary: NullSummary, path) -> Path:
    path = Path(path)
    frame = pd.DataFrame({'shuffle': range(summary.n_shuffles), 'seed': [summary.base_seed + i for i in range(summary.n_shuffles)],
                          summary.metric_name: list(summary.samples)})
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, encoding='utf-8')
    return path


def read_null_samples_csv(path, metric_name: str) -> NullSummary:
    path = Path(path)
    frame = pd.read_csv(path, float_precision='round_trip', encoding='utf-8')
    if metric_name not in frame.columns:
        raise InputError(f'{path}: no column "{metric_name}"')
    samples = tuple(frame[metric_name].astype(float))
    base_seed = int(frame['seed'].iloc[0]) if len(frame) else 0
    return NullSummary(metric_name, samples, percentile_interval(samples), len(samples), base_seed)
