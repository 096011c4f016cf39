"""
End-to-end comparison of two emotion structures.

Stages run in order: ingest, rsa, rdm, gwot, evaluation, null, report. Each
stage writes its artifacts to the output directory as soon as it finishes. A
failing stage raises StageError and leaves a FAILED marker next to the
artifacts written before it.
"""
import contextlib
import dataclasses
import datetime
import logging
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, artifacts
from .config import PipelineConfig, config_hash, derive_seed, write_config
from .errors import ConfigError, InputError, NumericalError, StageError, UndefinedCorrelationError
from .evaluation import (category_matching_rate, cluster_categories, identity_assignment,
                         matching_rate, select_top_k, theoretical_chance_rate)
from .gwot import SolverConfig, SolverResult, solve_gwot
from .ingest import (average_all, average_group, read_rater_records, read_rating_csv,
                     records_for_group, split_groups, write_rating_csv)
from .nullmodel import NullSummary, gwot_shuffle_count, null_samples, null_top_k_selection, summarize
from .rating_matrix import RatingMatrix
from .rsa import PerStimulusCorrelations, cohens_d, per_stimulus_correlations, rdm_correlation
from .structure import RDM, build_rdm, drop_zero_rows, histogram_match

logger = logging.getLogger(__name__)

FAILED_MARKER = 'FAILED'
REPORT_FILE = 'report.json'
NULL_SELECTORS = ('mean_correlation', 'rdm_correlation', 'matching_rate', 'category_matching_rate')


@dataclass
class NullInterval:
    lo: float
    hi: float
    n_shuffles: int


@dataclass
class SubsetReport:
    """
    Metrics for one stimulus subset ("all", "top_250", ...).
    """

    name: str

    n: int
    "number of stimuli in the subset"

    mean_r: float
    "mean per-stimulus correlation"

    rdm_r: Optional[float] = None
    "RSA correlation of the two RDMs"

    gwd: Optional[float] = None
    "best GW objective"

    n_restarts: Optional[int] = None
    "GWOT restarts used for this subset"

    matching_rate_pct: Optional[float] = None

    category_matching_rate_pct: Optional[float] = None

    chance_rate_pct: Optional[float] = None
    "theoretical one-to-one chance, 100 / n"

    n_categories: Optional[int] = None

    nulls: dict = field(default_factory=dict)
    "metric name -> NullInterval"


@dataclass
class Skipped:
    metric: str
    subset: str
    reason: str


@dataclass
class Provenance:
    config_hash: str
    base_seed: int
    version: str
    created_at: str


@dataclass
class RunReport:
    """
    Summary of a pipeline run, one section per stimulus subset.
    """

    correlation_summary: dict
    "mean_r, n_defined, n_undefined over all stimuli"

    subsets: list
    "SubsetReport per subset, 'all' first"

    cohens_d: dict
    "one_shot (first shuffle) and pooled (all correlation-null shuffles) effect sizes"

    dropped_stimuli: list
    "all-zero stimuli removed before analysis"

    skipped: list
    "Skipped entries for every metric that could not be computed"

    null_pairing: str

    histogram_match_direction: Optional[str]

    provenance: Provenance

    def subset(self, name: str) -> SubsetReport:
        for report in self.subsets:
            if report.name == name:
                return report
        raise LookupError(f'No subset "{name}" in report')


@contextlib.contextmanager
def _stage(name: str, output_dir: Path):
    logger.info('Stage %s', name)
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        marker = output_dir / FAILED_MARKER
        marker.write_text(f'stage: {name}\nerror: {type(exc).__name__}: {exc}\n', encoding='utf-8')
        logger.error('Stage %s failed: %s', name, exc)
        raise StageError(name, exc) from exc


def _read_side(path: str, file_format: str, scale: float, categories=None) -> RatingMatrix:
    if file_format == 'records':
        records = read_rater_records(path, scale)
        return average_all(records, categories or sorted({r.emotion_category for r in records}))
    return read_rating_csv(path, scale)


def align(matrix: RatingMatrix, reference: RatingMatrix) -> RatingMatrix:
    """Reorders `matrix` to the reference's stimulus and category order; both sets must agree."""
    for what, mine, theirs in (('stimulus ids', matrix.stimulus_ids, reference.stimulus_ids),
                               ('category names', matrix.category_names, reference.category_names)):
        difference = sorted(set(mine) ^ set(theirs))
        if difference:
            raise InputError(f'Comparison and reference differ in {what}: ' + ', '.join(difference[:10]))
    frame = matrix.to_frame().loc[list(reference.stimulus_ids), list(reference.category_names)]
    return RatingMatrix(reference.stimulus_ids, reference.category_names, frame.to_numpy(), matrix.scale)


def load_inputs(config: PipelineConfig) -> tuple[RatingMatrix, RatingMatrix]:
    """
    Reads the reference and comparison matrices described by config.inputs.

    Rater-record input without a comparison is split into two rater groups
    (group 1 becomes the reference).
    """
    inputs = config.inputs
    if inputs.reference_format == 'records' and inputs.comparison is None:
        records = read_rater_records(inputs.reference, inputs.scale)
        split = split_groups(records, derive_seed(config.base_seed, 'split'))
        categories = split.categories()
        reference = average_group(records_for_group(records, split.group1), categories)
        comparison = average_group(records_for_group(records, split.group2), categories,
                                   list(reference.stimulus_ids))
        return reference, comparison
    reference = _read_side(inputs.reference, inputs.reference_format, inputs.scale)
    comparison = _read_side(inputs.comparison, inputs.comparison_format, inputs.scale,
                            list(reference.category_names))
    return reference, align(comparison, reference)


def drop_zero_pairs(reference: RatingMatrix, comparison: RatingMatrix):
    """Drops every stimulus that is all-zero in either matrix, from both."""
    _, dropped_reference = drop_zero_rows(reference)
    _, dropped_comparison = drop_zero_rows(comparison)
    dropped = set(dropped_reference) | set(dropped_comparison)
    keep = [s for s in reference.stimulus_ids if s not in dropped]
    if len(keep) < 2:
        raise InputError(f'Only {len(keep)} stimuli remain after dropping all-zero rows')
    return reference.subset(keep), comparison.subset(keep), [s for s in reference.stimulus_ids if s in dropped]


def _restrict(correlations: PerStimulusCorrelations, ids) -> PerStimulusCorrelations:
    index = {s: i for i, s in enumerate(correlations.stimulus_ids)}
    return PerStimulusCorrelations(tuple(ids), correlations.r_values[[index[s] for s in ids]])


def _selected(reference: RatingMatrix, shuffled: RatingMatrix, k: Optional[int]):
    if k is None:
        return reference, shuffled
    ids = null_top_k_selection(shuffled, reference, k)
    return reference.subset(ids), shuffled.subset(ids)


def _null_r_values(reference: RatingMatrix, shuffled: RatingMatrix) -> np.ndarray:
    return per_stimulus_correlations(reference, shuffled).r_values


def _null_mean_r(reference: RatingMatrix, shuffled: RatingMatrix, k: Optional[int] = None) -> float:
    reference, shuffled = _selected(reference, shuffled, k)
    return per_stimulus_correlations(reference, shuffled).mean_r


def _null_rdm_r(reference: RatingMatrix, shuffled: RatingMatrix, metric: str, k: Optional[int] = None) -> float:
    reference, shuffled = _selected(reference, shuffled, k)
    return rdm_correlation(build_rdm(reference, metric), build_rdm(shuffled, metric))


def _matched_pair(d_reference: RDM, d_comparison: RDM, config: PipelineConfig) -> tuple[RDM, RDM]:
    if not config.histogram_match.enabled:
        return d_reference, d_comparison
    if config.histogram_match.direction == 'comparison_to_reference':
        return d_reference, histogram_match(d_reference, d_comparison)
    return histogram_match(d_comparison, d_reference), d_comparison


def _solver_config(config: PipelineConfig, n_restarts: Optional[int] = None, n_jobs: Optional[int] = None) -> SolverConfig:
    return dataclasses.replace(config.solver,
                               base_seed=derive_seed(config.base_seed, 'gwot'),
                               histogram_match_inputs=False,
                               n_restarts=n_restarts or config.solver.n_restarts,
                               n_jobs=n_jobs or config.solver.n_jobs)


def _align_and_score(reference: RatingMatrix, comparison: RatingMatrix, config: PipelineConfig,
        solver: SolverConfig):
    d_reference, d_comparison = _matched_pair(build_rdm(reference, config.metric),
                                              build_rdm(comparison, config.metric), config)
    result = solve_gwot(d_reference, d_comparison, solver)
    plan = result.best_plan
    rate = matching_rate(plan, identity_assignment(plan.row_ids, plan.col_ids))
    category_rate = float('nan')
    if config.n_clusters <= reference.n_stimuli:
        category_rate = category_matching_rate(plan, cluster_categories(reference, config.n_clusters))
    return rate, category_rate


def _null_gwot_rates(reference: RatingMatrix, shuffled: RatingMatrix, config: PipelineConfig,
        solver: SolverConfig, k: Optional[int] = None) -> tuple[float, float]:
    reference, shuffled = _selected(reference, shuffled, k)
    return _align_and_score(reference, shuffled, config, solver)


def _gwot_null_settings(config: PipelineConfig, n: int) -> tuple[int, SolverConfig]:
    n_shuffles = config.null.gwot_shuffles or gwot_shuffle_count(n)
    return n_shuffles, _solver_config(config, n_restarts=config.null.gwot_restarts)


def _write_null(summary: NullSummary, output_dir: Path, stem: str):
    artifacts.write_null_report(summary, output_dir / f'{stem}.json')
    artifacts.write_null_samples_csv(summary, output_dir / f'{stem}.csv')


def _interval(summary: NullSummary) -> NullInterval:
    return NullInterval(summary.interval_95[0], summary.interval_95[1], summary.n_shuffles)


def _analyze_subset(name: str, ids: list, reference: RatingMatrix, comparison: RatingMatrix,
        correlations: PerStimulusCorrelations, config: PipelineConfig,
        output_dir: Path, skipped: list) -> SubsetReport:
    reference = reference.subset(ids)
    comparison = comparison.subset(ids)
    report = SubsetReport(name, len(ids), _restrict(correlations, ids).mean_r)

    with _stage(f'rdm[{name}]', output_dir):
        d_reference = build_rdm(reference, config.metric)
        d_comparison = build_rdm(comparison, config.metric)
        artifacts.write_rdm_csv(d_reference, output_dir / f'rdm_reference_{name}.csv')
        artifacts.write_rdm_csv(d_comparison, output_dir / f'rdm_comparison_{name}.csv')
        try:
            report.rdm_r = rdm_correlation(d_reference, d_comparison)
        except UndefinedCorrelationError as exc:
            skipped.append(Skipped('rdm_r', name, str(exc)))

    with _stage(f'gwot[{name}]', output_dir):
        result: SolverResult = solve_gwot(*_matched_pair(d_reference, d_comparison, config), _solver_config(config))
        report.gwd = result.best_gwd
        report.n_restarts = len(result.per_restart_gwd)
        artifacts.write_plan_json(result.best_plan, output_dir / f'plan_{name}.json')
        artifacts.write_plan_csv(result.best_plan, output_dir / f'plan_{name}.csv')
        artifacts.write_solver_log(result, output_dir / f'solver_log_{name}.jsonl')

    with _stage(f'evaluation[{name}]', output_dir):
        plan = result.best_plan
        report.matching_rate_pct = matching_rate(plan, identity_assignment(plan.row_ids, plan.col_ids))
        report.chance_rate_pct = theoretical_chance_rate(len(ids))
        if config.n_clusters <= len(ids):
            categories = cluster_categories(reference, config.n_clusters)
            report.n_categories = categories.k
            report.category_matching_rate_pct = category_matching_rate(plan, categories)
            artifacts.write_categories(categories, output_dir / f'categories_{name}.csv')
        else:
            skipped.append(Skipped('category_matching_rate_pct', name,
                                   f'{config.n_clusters} categories exceed {len(ids)} stimuli'))
        artifacts.write_evaluation(output_dir / f'evaluation_{name}.json', report.matching_rate_pct,
                                   report.category_matching_rate_pct, report.n_categories, len(ids))
    logger.info('%s: mean r %.4f, RDM r %s, matching %.2f%%', name, report.mean_r,
                'n/a' if report.rdm_r is None else f'{report.rdm_r:.4f}', report.matching_rate_pct)
    return report


def _null_subset(report: SubsetReport, k: Optional[int], reference: RatingMatrix, comparison: RatingMatrix,
        config: PipelineConfig, output_dir: Path, skipped: list):
    null = config.null
    shuffled = reference if null.pairing == 'reference' else comparison
    n_jobs = config.solver.n_jobs
    name = report.name

    if k is not None:
        samples = null_samples(partial(_null_mean_r, k=k), shuffled, reference, null.correlation_shuffles,
                               derive_seed(config.base_seed, 'null_correlation'), null.mode, n_jobs)
        summary = summarize('mean_r', samples, derive_seed(config.base_seed, 'null_correlation'))
        report.nulls['mean_r'] = _interval(summary)
        _write_null(summary, output_dir, f'null_mean_r_{name}')

    if report.rdm_r is not None:
        seed = derive_seed(config.base_seed, 'null_rdm')
        samples = null_samples(partial(_null_rdm_r, metric=config.metric, k=k), shuffled, reference,
                               null.rdm_shuffles, seed, null.mode, n_jobs)
        summary = summarize('rdm_r', samples, seed)
        report.nulls['rdm_r'] = _interval(summary)
        _write_null(summary, output_dir, f'null_rdm_r_{name}')
    else:
        skipped.append(Skipped('null.rdm_r', name, 'RDM correlation is undefined'))

    n_shuffles, solver = _gwot_null_settings(config, report.n)
    seed = derive_seed(config.base_seed, 'null_gwot')
    samples = null_samples(partial(_null_gwot_rates, config=config, solver=solver, k=k), shuffled, reference,
                           n_shuffles, seed, null.mode)
    rates = summarize('matching_rate_pct', [s[0] for s in samples], seed)
    report.nulls['matching_rate_pct'] = _interval(rates)
    _write_null(rates, output_dir, f'null_matching_rate_pct_{name}')
    if report.category_matching_rate_pct is not None:
        category_rates = summarize('category_matching_rate_pct', [s[1] for s in samples], seed)
        report.nulls['category_matching_rate_pct'] = _interval(category_rates)
        _write_null(category_rates, output_dir, f'null_category_matching_rate_pct_{name}')


def _correlation_null(correlations: PerStimulusCorrelations, report: SubsetReport, reference: RatingMatrix,
        comparison: RatingMatrix, config: PipelineConfig, output_dir: Path, skipped: list) -> dict:
    """Null of the mean per-stimulus correlation over all stimuli, plus the effect sizes against it."""
    null = config.null
    shuffled = reference if null.pairing == 'reference' else comparison
    seed = derive_seed(config.base_seed, 'null_correlation')
    r_samples = null_samples(_null_r_values, shuffled, reference, null.correlation_shuffles,
                             seed, null.mode, config.solver.n_jobs)
    summary = summarize('mean_r', [np.nanmean(r) if np.any(~np.isnan(r)) else np.nan for r in r_samples], seed)
    report.nulls['mean_r'] = _interval(summary)
    _write_null(summary, output_dir, f'null_mean_r_{report.name}')

    effect = {}
    for label, null_r in (('one_shot', r_samples[0]), ('pooled', np.concatenate(r_samples))):
        try:
            effect[label] = cohens_d(correlations.r_values, null_r)
        except (InputError, NumericalError) as exc:
            effect[label] = None
            skipped.append(Skipped(f'cohens_d.{label}', report.name, str(exc)))
    return effect


def run_pipeline(config: PipelineConfig, check_paths: bool = True) -> RunReport:
    """
    Runs every stage and writes report.json plus the per-stage artifacts.

    Parameters
    ----------
    config : PipelineConfig
        Effective configuration, see config.load_config.
    check_paths : bool
        Validate that input paths exist before starting. Default: True

    Returns
    -------
    RunReport, also written to <output_dir>/report.json.

    Raises
    ------
    ConfigError
        Before any stage runs, for an invalid config.
    StageError
        When a stage fails; `stage` names it and the original error is its cause.
    """
    config.validate(check_paths)
    output_dir = Path(config.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    (output_dir / FAILED_MARKER).unlink(missing_ok=True)
    write_config(config, output_dir / 'config.json')
    skipped: list[Skipped] = []

    with _stage('ingest', output_dir):
        reference, comparison = load_inputs(config)
        reference, comparison, dropped = drop_zero_pairs(reference, comparison)
        write_rating_csv(reference, output_dir / 'ratings_reference.csv')
        write_rating_csv(comparison, output_dir / 'ratings_comparison.csv')

    with _stage('rsa', output_dir):
        correlations = per_stimulus_correlations(reference, comparison)
        artifacts.write_correlations(correlations, output_dir / 'correlations.csv')
        artifacts.write_correlation_summary(correlations, output_dir / 'correlation_summary.json')

    subsets: list[tuple[str, list, Optional[int]]] = [('all', list(reference.stimulus_ids), None)]
    for k in config.top_k:
        if k > correlations.n_defined:
            skipped.append(Skipped('*', f'top_{k}', f'{k} exceeds the {correlations.n_defined} '
                                                     'stimuli with a defined correlation'))
            continue
        subsets.append((f'top_{k}', select_top_k(correlations, k), k))

    reports = [_analyze_subset(name, ids, reference, comparison, correlations, config, output_dir, skipped)
               for name, ids, _ in subsets]

    effect = {'one_shot': None, 'pooled': None}
    if config.null.enabled:
        with _stage('null', output_dir):
            effect = _correlation_null(correlations, reports[0], reference, comparison, config, output_dir, skipped)
            for report, (_, _, k) in zip(reports, subsets):
                _null_subset(report, k, reference, comparison, config, output_dir, skipped)
    else:
        skipped.append(Skipped('null', '*', 'null models disabled in config'))

    with _stage('report', output_dir):
        provenance = Provenance(config_hash(config), config.base_seed, __version__,
                                datetime.datetime.now(datetime.timezone.utc).isoformat(timespec='seconds'))
        report = RunReport(correlations.summary(), reports, effect, dropped, skipped, config.null.pairing,
                           config.histogram_match.direction if config.histogram_match.enabled else None,
                           provenance)
        artifacts.write_json(report, output_dir / REPORT_FILE)
    return report


def run_null(config: PipelineConfig, selector: str, check_paths: bool = True) -> NullSummary:
    """
    Runs a single null analysis on all stimuli.

    Parameters
    ----------
    config : PipelineConfig
    selector : str
        One of mean_correlation, rdm_correlation, matching_rate, category_matching_rate.

    Returns
    -------
    NullSummary, also written as null_<selector>.json and .csv in the output directory.
    """
    if selector not in NULL_SELECTORS:
        raise ConfigError(f'Unknown null metric "{selector}"; valid selectors: {", ".join(NULL_SELECTORS)}')
    config.validate(check_paths)
    output_dir = Path(config.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    null = config.null

    with _stage('ingest', output_dir):
        reference, comparison = load_inputs(config)
        reference, comparison, _ = drop_zero_pairs(reference, comparison)
    shuffled = reference if null.pairing == 'reference' else comparison

    with _stage(f'null[{selector}]', output_dir):
        if selector == 'mean_correlation':
            seed = derive_seed(config.base_seed, 'null_correlation')
            samples = null_samples(_null_mean_r, shuffled, reference, null.correlation_shuffles,
                                   seed, null.mode, config.solver.n_jobs)
        elif selector == 'rdm_correlation':
            seed = derive_seed(config.base_seed, 'null_rdm')
            samples = null_samples(partial(_null_rdm_r, metric=config.metric), shuffled, reference,
                                   null.rdm_shuffles, seed, null.mode, config.solver.n_jobs)
        else:
            if selector == 'category_matching_rate' and config.n_clusters > reference.n_stimuli:
                raise InputError(f'{config.n_clusters} categories exceed {reference.n_stimuli} stimuli')
            n_shuffles, solver = _gwot_null_settings(config, reference.n_stimuli)
            seed = derive_seed(config.base_seed, 'null_gwot')
            pairs = null_samples(partial(_null_gwot_rates, config=config, solver=solver), shuffled, reference,
                                 n_shuffles, seed, null.mode)
            samples = [pair[0] if selector == 'matching_rate' else pair[1] for pair in pairs]
        summary = summarize(selector, samples, seed)
        _write_null(summary, output_dir, f'null_{selector}')
    return summary
