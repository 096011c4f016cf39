import json

import pytest
import Emotion_structure
from Emotion_structure.config import PipelineConfig
from Emotion_structure.errors import ConfigError

# Overrides that must be rejected when the config is loaded or validated.
EXAMPLE_BAD_OVERRIDES = [
    'solver.restarts=5',
    'nul.enabled=false',
    'top_k',
    'metric=manhattan',
    'histogram_match.direction=sideways',
    'null.pairing=both',
    'null.mode=cells',
    'n_clusters=1',
    'top_k=[100,0]',
    'solver.n_restarts=0',
    'inputs.reference_format=tsv',
    'base_seed=-1',
]


def write_run(tmp_path, data):
    (tmp_path / 'ref.csv').write_text('stimulus_id,a\ns1,1\n', encoding='utf-8')
    (tmp_path / 'cmp.csv').write_text('stimulus_id,a\ns1,1\n', encoding='utf-8')
    path = tmp_path / 'run.json'
    path.write_text(json.dumps(data), encoding='utf-8')
    return path


def test_defaults():
    """
    Test the default settings of a run.
    """
    config = Emotion_structure.config.load_config(environ={})
    assert config.metric == 'cosine'
    assert config.n_clusters == 10
    assert config.top_k == [250, 100]
    assert config.null.correlation_shuffles == 1000
    assert config.null.gwot_shuffles is None
    assert config.solver.n_restarts is None
    assert config.histogram_match.direction == 'comparison_to_reference'
    assert config.output_dir == Emotion_structure.config.DEFAULT_OUTPUT_DIR


def test_precedence(tmp_path):
    """
    Test that overrides beat the file, the file beats the environment, and the environment beats defaults.
    """
    env = {Emotion_structure.config.OUTPUT_DIR_ENV: 'from_env'}
    assert Emotion_structure.config.load_config(environ=env).output_dir == 'from_env'

    path = write_run(tmp_path, {'inputs': {'reference': 'ref.csv', 'comparison': 'cmp.csv'},
                                'output_dir': 'from_file', 'solver': {'n_restarts': 7}})
    config = Emotion_structure.config.load_config(path, environ=env)
    assert config.output_dir == 'from_file'
    assert config.solver.n_restarts == 7
    assert config.solver.max_fw_iterations == 1000

    config = Emotion_structure.config.load_config(
        path, ['output_dir=from_flag', 'solver.n_restarts=9', 'null.enabled=false', 'top_k=[20, 10]'], environ=env)
    assert config.output_dir == 'from_flag'
    assert config.solver.n_restarts == 9
    assert config.null.enabled is False
    assert config.top_k == [20, 10]


def test_relative_inputs(tmp_path):
    """
    Test that input paths in a config file are relative to the file.
    """
    path = write_run(tmp_path, {'inputs': {'reference': 'ref.csv', 'comparison': str(tmp_path / 'cmp.csv')}})
    config = Emotion_structure.config.load_config(path, environ={})
    assert config.inputs.reference == str(tmp_path / 'ref.csv')
    assert config.inputs.comparison == str(tmp_path / 'cmp.csv')
    config.validate()


def test_unknown_file_key(tmp_path):
    """
    Test that a misspelt key in the file is named in the error.
    """
    path = write_run(tmp_path, {'solver': {'n_restart': 5}})
    with pytest.raises(ConfigError, match='solver.n_restart'):
        Emotion_structure.config.load_config(path, environ={})


def test_unreadable_file(tmp_path):
    """
    Test that a missing or malformed config file is a config error.
    """
    with pytest.raises(ConfigError):
        Emotion_structure.config.load_config(tmp_path / 'missing.json', environ={})
    path = tmp_path / 'broken.json'
    path.write_text('{"metric": ', encoding='utf-8')
    with pytest.raises(ConfigError):
        Emotion_structure.config.load_config(path, environ={})


@pytest.mark.parametrize('override', EXAMPLE_BAD_OVERRIDES)
def test_bad_overrides(tmp_path, override):
    """
    Test that unknown keys and invalid values are rejected.
    """
    path = write_run(tmp_path, {'inputs': {'reference': 'ref.csv', 'comparison': 'cmp.csv'}})
    with pytest.raises(ConfigError):
        Emotion_structure.config.load_config(path, [override], environ={}).validate()


def test_validate_inputs(tmp_path):
    """
    Test the input checks of validate.
    """
    with pytest.raises(ConfigError, match='inputs.reference'):
        PipelineConfig().validate()

    config = Emotion_structure.config.load_config(overrides=['inputs.reference=ref.csv'], environ={})
    with pytest.raises(ConfigError, match='inputs.comparison'):
        config.validate(check_paths=False)

    config = Emotion_structure.config.load_config(
        overrides=['inputs.reference=records', 'inputs.reference_format=records'], environ={})
    config.validate(check_paths=False)
    with pytest.raises(ConfigError, match='does not exist'):
        config.validate()


def test_config_hash(tmp_path):
    """
    Test that the hash follows the effective settings, not how they were given.
    """
    first = Emotion_structure.config.load_config(overrides=['solver.n_restarts=10'], environ={})
    second = Emotion_structure.config.load_config(overrides=['solver.n_restarts=10'], environ={})
    third = Emotion_structure.config.load_config(overrides=['solver.n_restarts=11'], environ={})
    assert Emotion_structure.config.config_hash(first) == Emotion_structure.config.config_hash(second)
    assert Emotion_structure.config.config_hash(first) != Emotion_structure.config.config_hash(third)
    assert len(Emotion_structure.config.config_hash(first)) == 64

    path = Emotion_structure.config.write_config(first, tmp_path / 'config.json')
    again = Emotion_structure.config.load_config(path, environ={})
    assert Emotion_structure.config.config_hash(again) == Emotion_structure.config.config_hash(first)


def test_derive_seed():
    """
    Test that stage seeds are reproducible and distinct.
    """
    seeds = [Emotion_structure.config.derive_seed(0, stage) for stage in Emotion_structure.config.SEED_STAGES]
    assert len(set(seeds)) == len(seeds)
    assert seeds == [Emotion_structure.config.derive_seed(0, stage) for stage in Emotion_structure.config.SEED_STAGES]
    assert Emotion_structure.config.derive_seed(1, 'gwot') != Emotion_structure.config.derive_seed(0, 'gwot')
    assert all(isinstance(seed, int) and seed >= 0 for seed in seeds)
    with pytest.raises(ConfigError):
        Emotion_structure.config.derive_seed(0, 'shuffle')


def test_config_to_dict_keeps_defaults():
    """
    Test that every setting, defaulted or not, appears in the dict form.
    """
    data = Emotion_structure.config.config_to_dict(PipelineConfig())
    assert set(data) == {'inputs', 'metric', 'histogram_match', 'solver', 'n_clusters', 'top_k', 'null',
                         'base_seed', 'output_dir'}
    assert data['base_seed'] == 0
    assert data['metric'] == 'cosine'
    assert data['solver']['n_restarts'] is None
    assert data['solver']['max_fw_iterations'] == 1000
    assert data['null']['correlation_shuffles'] == 1000
    assert data['inputs']['reference_format'] == 'matrix'


@pytest.mark.parametrize('override', ['base_seed=1', 'metric=correlation', 'solver.pairwise_exchange=false',
                                      'null.rdm_shuffles=999', 'output_dir=elsewhere'])
def test_config_hash_follows_defaulted_settings(override):
    """
    Test that changing any single setting away from its default changes the hash.
    """
    default = Emotion_structure.config.load_config(environ={})
    changed = Emotion_structure.config.load_config(overrides=[override], environ={})
    assert Emotion_structure.config.config_hash(changed) != Emotion_structure.config.config_hash(default)


def test_written_config_roundtrip(tmp_path):
    """
    Test that a written config loads back to the same settings.
    """
    config = Emotion_structure.config.load_config(overrides=['base_seed=3', 'top_k=[50]', 'null.mode=columns'],
                                                  environ={})
    path = Emotion_structure.config.write_config(config, tmp_path / 'config.json')
    again = Emotion_structure.config.load_config(path, environ={})
    assert again == config
    assert json.loads(path.read_text(encoding='utf-8'))['base_seed'] == 3
