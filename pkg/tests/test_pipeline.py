import json

import numpy as np
import pytest
import Emotion_structure
from Emotion_structure.errors import ConfigError, IngestError, InputError, StageError
from Emotion_structure.rating_matrix import RaterRecord, RatingMatrix

# Settings small enough for a test run on 40 planted stimuli.
SMALL_RUN = [
    'n_clusters=4',
    'top_k=[20, 100]',
    'solver.n_restarts=20',
    'null.correlation_shuffles=20',
    'null.rdm_shuffles=20',
    'null.gwot_shuffles=3',
    'null.gwot_restarts=2',
]


def planted_inputs(tmp_path):
    data = Emotion_structure.synth.planted_dataset(n_stimuli=40, n_categories=4, n_dims=12, noise=2.0, seed=11)
    reference = Emotion_structure.ingest.write_rating_csv(data.reference, tmp_path / 'reference.csv')
    comparison = Emotion_structure.ingest.write_rating_csv(data.comparison, tmp_path / 'comparison.csv')
    return reference, comparison


def small_config(tmp_path, output='out', extra=()):
    reference, comparison = planted_inputs(tmp_path)
    overrides = [f'inputs.reference={reference}', f'inputs.comparison={comparison}',
                 f'output_dir={tmp_path / output}'] + SMALL_RUN + list(extra)
    return Emotion_structure.config.load_config(overrides=overrides, environ={})


def test_run_pipeline_planted(tmp_path):
    """
    Test a full run on planted data: strong agreement, well above every null.
    """
    config = small_config(tmp_path)
    report = Emotion_structure.pipeline.run_pipeline(config)
    out = tmp_path / 'out'

    assert [subset.name for subset in report.subsets] == ['all', 'top_20']
    assert report.skipped[0].subset == 'top_100'
    assert report.correlation_summary['n_defined'] == 40
    assert report.dropped_stimuli == []

    full = report.subset('all')
    assert full.n == 40
    assert full.chance_rate_pct == 2.5
    assert full.rdm_r > 0.8
    assert full.rdm_r > full.nulls['rdm_r'].hi
    assert full.mean_r > full.nulls['mean_r'].hi
    assert 0 <= full.matching_rate_pct <= 100
    assert full.n_categories == 4
    assert full.category_matching_rate_pct > 60
    assert full.category_matching_rate_pct > full.nulls['category_matching_rate_pct'].hi
    assert full.nulls['matching_rate_pct'].n_shuffles == 3
    assert report.cohens_d['one_shot'] > 0
    assert report.cohens_d['pooled'] > 0

    top = report.subset('top_20')
    assert top.n == 20
    assert set(top.nulls) == {'mean_r', 'rdm_r', 'matching_rate_pct', 'category_matching_rate_pct'}

    for name in ('config.json', 'report.json', 'correlations.csv', 'rdm_reference_all.csv', 'plan_all.json',
                 'plan_top_20.csv', 'solver_log_all.jsonl', 'categories_all.csv', 'evaluation_top_20.json',
                 'null_mean_r_all.json', 'null_rdm_r_top_20.csv', 'null_matching_rate_pct_all.json'):
        assert (out / name).exists(), name
    assert not (out / Emotion_structure.pipeline.FAILED_MARKER).exists()

    saved = json.loads((out / 'report.json').read_text(encoding='utf-8'))
    assert saved['provenance']['config_hash'] == Emotion_structure.config.config_hash(config)
    assert saved['subsets'][0]['nulls']['rdm_r']['n_shuffles'] == 20
    for key in ('rdm_r', 'gwd', 'n_restarts', 'matching_rate_pct', 'category_matching_rate_pct',
                'chance_rate_pct', 'n_categories'):
        assert saved['subsets'][0][key] == pytest.approx(getattr(full, key)), key
    assert saved['subsets'][0]['n_restarts'] == 20
    assert saved['null_pairing'] == 'reference'
    assert saved['provenance']['base_seed'] == 0
    plan = Emotion_structure.artifacts.read_plan(out / 'plan_all.json')
    assert plan.is_feasible(1e-8)
    assert plan.row_ids == tuple(f's{i:04d}' for i in range(40))


def test_run_pipeline_deterministic(tmp_path):
    """
    Test that two runs with the same config, nulls included, give identical results.
    """
    first = Emotion_structure.pipeline.run_pipeline(small_config(tmp_path, 'first'))
    second = Emotion_structure.pipeline.run_pipeline(small_config(tmp_path, 'second'))
    for report in (first, second):
        report.provenance.created_at = ''
        report.provenance.config_hash = ''
    assert Emotion_structure.artifacts.to_json_text(first) == Emotion_structure.artifacts.to_json_text(second)
    for name in ('plan_all.json', 'plan_top_20.csv', 'solver_log_all.jsonl', 'null_mean_r_all.csv',
                 'null_rdm_r_top_20.csv', 'null_matching_rate_pct_all.json'):
        assert (tmp_path / 'first' / name).read_bytes() == (tmp_path / 'second' / name).read_bytes(), name


def test_run_pipeline_default_restarts(tmp_path, monkeypatch):
    """
    Test that an unset restart count is resolved for each subset from its size.
    """
    monkeypatch.setattr(Emotion_structure.gwot, 'restart_schedule', lambda n: n // 10)
    overrides = [item for item in SMALL_RUN if not item.startswith('solver.n_restarts')]
    reference, comparison = planted_inputs(tmp_path)
    config = Emotion_structure.config.load_config(
        overrides=[f'inputs.reference={reference}', f'inputs.comparison={comparison}',
                   f'output_dir={tmp_path / "out"}', 'null.enabled=false'] + overrides, environ={})
    assert config.solver.n_restarts is None
    report = Emotion_structure.pipeline.run_pipeline(config)
    assert report.subset('all').n_restarts == 4
    assert report.subset('top_20').n_restarts == 2


def test_run_pipeline_planted_200(tmp_path):
    """
    Test a run on 200 planted stimuli from random starts only: matching well above the null.
    """
    data = Emotion_structure.synth.planted_dataset(n_stimuli=200, n_categories=10, n_dims=34, seed=0)
    reference = Emotion_structure.ingest.write_rating_csv(data.reference, tmp_path / 'reference.csv')
    comparison = Emotion_structure.ingest.write_rating_csv(data.comparison, tmp_path / 'comparison.csv')
    overrides = [f'inputs.reference={reference}', f'inputs.comparison={comparison}', f'output_dir={tmp_path / "out"}',
                 'top_k=[]', 'solver.n_restarts=200', 'solver.n_jobs=4', 'null.correlation_shuffles=50',
                 'null.rdm_shuffles=50', 'null.gwot_shuffles=3', 'null.gwot_restarts=20']
    config = Emotion_structure.config.load_config(overrides=overrides, environ={})
    report = Emotion_structure.pipeline.run_pipeline(config)

    full = report.subset('all')
    assert full.n == 200
    assert full.n_restarts == 200
    assert full.rdm_r > 0.8
    assert full.category_matching_rate_pct > 60
    assert full.matching_rate_pct > full.nulls['matching_rate_pct'].hi
    assert full.category_matching_rate_pct > full.nulls['category_matching_rate_pct'].hi


def test_run_pipeline_null_disabled(tmp_path):
    """
    Test that a run without nulls records why they are missing.
    """
    report = Emotion_structure.pipeline.run_pipeline(small_config(tmp_path, extra=['null.enabled=false']))
    assert report.subset('all').nulls == {}
    assert any(entry.metric == 'null' for entry in report.skipped)
    assert report.cohens_d == {'one_shot': None, 'pooled': None}


def test_run_pipeline_failed_stage(tmp_path):
    """
    Test that a failing stage leaves a FAILED marker and names the stage.
    """
    reference = tmp_path / 'reference.csv'
    reference.write_text('stimulus_id,a,b\ns1,1,2\ns2,x,3\n', encoding='utf-8')
    overrides = [f'inputs.reference={reference}', f'inputs.comparison={reference}', f'output_dir={tmp_path / "out"}']
    config = Emotion_structure.config.load_config(overrides=overrides, environ={})
    with pytest.raises(StageError) as error:
        Emotion_structure.pipeline.run_pipeline(config)
    assert error.value.stage == 'ingest'
    assert isinstance(error.value.cause, IngestError)
    marker = (tmp_path / 'out' / Emotion_structure.pipeline.FAILED_MARKER).read_text(encoding='utf-8')
    assert marker.startswith('stage: ingest\n')
    assert (tmp_path / 'out' / 'config.json').exists()


def test_run_pipeline_invalid_config(tmp_path):
    """
    Test that an invalid config fails before any stage runs.
    """
    config = small_config(tmp_path, extra=['null.pairing=both'])
    with pytest.raises(ConfigError):
        Emotion_structure.pipeline.run_pipeline(config)
    assert not (tmp_path / 'out').exists()


def test_run_pipeline_split_records(tmp_path):
    """
    Test a run that compares two halves of the same raters.
    """
    rng = np.random.default_rng(0)
    records = [RaterRecord(f'r{i}', category, {f'v{v}': rng.uniform(1, 100, 5) for v in range(8)})
               for category in ('joy', 'fear', 'awe') for i in range(4)]
    path = Emotion_structure.ingest.write_rater_records(records, tmp_path / 'records.csv')
    overrides = [f'inputs.reference={path}', 'inputs.reference_format=records', f'output_dir={tmp_path / "out"}',
                 'n_clusters=3', 'top_k=[]', 'solver.n_restarts=5', 'null.enabled=false']
    config = Emotion_structure.config.load_config(overrides=overrides, environ={})
    report = Emotion_structure.pipeline.run_pipeline(config)
    assert report.subset('all').n == 8
    ratings = Emotion_structure.ingest.read_rating_csv(tmp_path / 'out' / 'ratings_reference.csv')
    assert ratings.category_names == ('awe', 'fear', 'joy')


def test_align():
    """
    Test that the comparison is reordered to the reference and mismatches are named.
    """
    reference = RatingMatrix(('a', 'b'), ('x', 'y'), [[1, 2], [3, 4]])
    comparison = RatingMatrix(('b', 'a'), ('y', 'x'), [[40, 30], [20, 10]])
    aligned = Emotion_structure.pipeline.align(comparison, reference)
    np.testing.assert_array_equal(aligned.values, [[10, 20], [30, 40]])
    with pytest.raises(InputError, match='stimulus ids: c'):
        Emotion_structure.pipeline.align(RatingMatrix(('a', 'b', 'c'), ('x', 'y'), np.ones((3, 2))), reference)


def test_drop_zero_pairs():
    """
    Test that a stimulus all-zero on either side is dropped from both.
    """
    reference = RatingMatrix(('a', 'b', 'c'), ('x', 'y'), [[1, 2], [0, 0], [3, 4]])
    comparison = RatingMatrix(('a', 'b', 'c'), ('x', 'y'), [[0, 0], [1, 1], [3, 4]])
    with pytest.raises(InputError):
        Emotion_structure.pipeline.drop_zero_pairs(reference, comparison)
    reference = RatingMatrix(('a', 'b', 'c', 'd'), ('x', 'y'), [[1, 2], [0, 0], [3, 4], [5, 1]])
    comparison = RatingMatrix(('a', 'b', 'c', 'd'), ('x', 'y'), [[1, 1], [1, 1], [3, 4], [2, 2]])
    kept_reference, kept_comparison, dropped = Emotion_structure.pipeline.drop_zero_pairs(reference, comparison)
    assert dropped == ['b']
    assert kept_comparison.stimulus_ids == ('a', 'c', 'd')
    assert kept_reference.stimulus_ids == ('a', 'c', 'd')


def test_run_null(tmp_path):
    """
    Test a single null analysis and its output files.
    """
    config = small_config(tmp_path, extra=['null.correlation_shuffles=1'])
    summary = Emotion_structure.pipeline.run_null(config, 'mean_correlation')
    assert summary.n_shuffles == 1
    assert summary.interval_95 == (summary.samples[0], summary.samples[0])
    assert (tmp_path / 'out' / 'null_mean_correlation.json').exists()

    rates = Emotion_structure.pipeline.run_null(config, 'category_matching_rate')
    assert rates.n_shuffles == 3
    assert all(0 <= rate <= 100 for rate in rates.samples)


def test_run_null_unknown_selector(tmp_path):
    """
    Test that a misspelt null metric lists the valid ones.
    """
    config = small_config(tmp_path)
    with pytest.raises(ConfigError, match='rdm_correlation'):
        Emotion_structure.pipeline.run_null(config, 'rdm_corelation')
