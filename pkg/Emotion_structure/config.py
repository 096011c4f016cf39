"""
Pipeline configuration.

A run is described by one JSON file with nested sections. Values are layered,
highest precedence first:

1. command-line overrides (`--set section.key=value` and the dedicated flags),
2. the JSON config file,
3. the EMOTION_STRUCTURE_OUTPUT_DIR environment variable (output directory only),
4. the dataclass defaults below.
"""
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import jsons
import numpy as np

from .errors import ConfigError
from .gwot import SolverConfig
from .nullmodel import SHUFFLE_MODES
from .structure import Dissimilarity

logger = logging.getLogger(__name__)

OUTPUT_DIR_ENV = 'EMOTION_STRUCTURE_OUTPUT_DIR'
DEFAULT_OUTPUT_DIR = 'emotion_structure_output'
INPUT_FORMATS = ('matrix', 'records')
MATCH_DIRECTIONS = ('comparison_to_reference', 'reference_to_comparison')
NULL_PAIRINGS = ('reference', 'comparison')
SEED_STAGES = ('split', 'gwot', 'null_correlation', 'null_rdm', 'null_gwot')


@dataclass
class InputConfig:
    reference: Optional[str] = None
    "rating CSV, or rater records when reference_format is 'records'"

    comparison: Optional[str] = None
    "rating CSV or rater records; leave empty with 'records' input to compare two halves of the reference raters"

    reference_format: str = 'matrix'
    "'matrix' (stimulus x category CSV) or 'records' (rater time series)"

    comparison_format: str = 'matrix'

    scale: float = 100.0
    "declared rating maximum of the input files"


@dataclass
class HistogramMatchConfig:
    enabled: bool = True

    direction: str = 'comparison_to_reference'
    "which RDM is rewritten: the comparison takes the reference's values by default"


@dataclass
class NullConfig:
    enabled: bool = True

    correlation_shuffles: int = 1000
    "shuffles for the per-stimulus correlation null"

    rdm_shuffles: int = 1000
    "shuffles for the RDM correlation null"

    gwot_shuffles: Optional[int] = None
    "shuffles for the matching-rate nulls; default 10 up to 500 stimuli and 1 above"

    gwot_restarts: Optional[int] = None
    "restarts per null GWOT solve; default solver.n_restarts"

    pairing: str = 'reference'
    "matrix shuffled before comparison with the reference: 'reference' or 'comparison'"

    mode: str = 'rows'
    "shuffle mode, 'rows' or 'columns'"


@dataclass
class PipelineConfig:
    """
    Effective configuration of a pipeline run.

    solver.base_seed and solver.histogram_match_inputs are set by the pipeline
    from base_seed and the histogram_match section.
    """

    inputs: InputConfig = field(default_factory=InputConfig)

    metric: str = 'cosine'
    "row dissimilarity for the RDMs"

    histogram_match: HistogramMatchConfig = field(default_factory=HistogramMatchConfig)

    solver: SolverConfig = field(default_factory=SolverConfig)

    n_clusters: int = 10
    "Ward categories for the category matching rate"

    top_k: List[int] = field(default_factory=lambda: [250, 100])
    "sizes of the best-correlated stimulus subsets analysed besides 'all'"

    null: NullConfig = field(default_factory=NullConfig)

    base_seed: int = 0
    "every stage seed is derived from this"

    output_dir: str = DEFAULT_OUTPUT_DIR

    def validate(self, check_paths: bool = True):
        """
        Raises ConfigError on the first invalid setting.

        Parameters
        ----------
        check_paths : bool
            Also require the input paths to exist. Default: True
        """
        inputs = self.inputs
        if inputs.reference is None:
            raise ConfigError('inputs.reference is required')
        for name in ('reference_format', 'comparison_format'):
            _check_choice(f'inputs.{name}', getattr(inputs, name), INPUT_FORMATS)
        if inputs.comparison is None and inputs.reference_format != 'records':
            raise ConfigError('inputs.comparison is required unless the reference is split from rater records')
        if check_paths:
            for path in (inputs.reference, inputs.comparison):
                if path is not None and not Path(path).exists():
                    raise ConfigError(f'Input path does not exist: {path}')
        if not inputs.scale > 0:
            raise ConfigError(f'inputs.scale must be positive, got {inputs.scale}')
        _check_choice('metric', self.metric, tuple(d.value for d in Dissimilarity))
        _check_choice('histogram_match.direction', self.histogram_match.direction, MATCH_DIRECTIONS)
        _check_choice('null.pairing', self.null.pairing, NULL_PAIRINGS)
        _check_choice('null.mode', self.null.mode, SHUFFLE_MODES)
        counts = {'n_clusters': self.n_clusters,
                  'null.correlation_shuffles': self.null.correlation_shuffles,
                  'null.rdm_shuffles': self.null.rdm_shuffles,
                  'null.gwot_shuffles': self.null.gwot_shuffles,
                  'null.gwot_restarts': self.null.gwot_restarts}
        counts.update({f'top_k[{i}]': k for i, k in enumerate(self.top_k)})
        for name, value in counts.items():
            if value is not None and value < 1:
                raise ConfigError(f'{name} must be positive, got {value}')
        if self.n_clusters < 2:
            raise ConfigError(f'n_clusters must be at least 2, got {self.n_clusters}')
        if self.base_seed < 0:
            raise ConfigError(f'base_seed must be nonnegative, got {self.base_seed}')
        try:
            self.solver.validate()
        except (ValueError, ArithmeticError) as exc:
            raise ConfigError(str(exc)) from exc


def _check_choice(name: str, value, choices):
    if value not in choices:
        raise ConfigError(f'{name} must be one of {", ".join(choices)}; got "{value}"')


def config_to_dict(config: PipelineConfig) -> dict:
    return jsons.dump(config, strip_privates=True, strip_properties=True)


def config_hash(config: PipelineConfig) -> str:
    """SHA-256 of the canonical (sorted-key) JSON form of the config."""
    canonical = json.dumps(config_to_dict(config), sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


def derive_seed(base_seed: int, stage: str) -> int:
    """Stage seed drawn from numpy's SeedSequence of (base_seed, stage index)."""
    if stage not in SEED_STAGES:
        raise ConfigError(f'Unknown seed stage "{stage}"')
    return int(np.random.SeedSequence([base_seed, SEED_STAGES.index(stage)]).generate_state(1)[0])


def _merge(base: dict, update: dict, prefix: str = ''):
    for key, value in update.items():
        name = prefix + key
        if key not in base:
            raise ConfigError(f'Unknown config key "{name}"')
        if isinstance(base[key], dict) and isinstance(value, dict):
            _merge(base[key], value, name + '.')
        else:
            base[key] = value


def _parse_override(text: str) -> tuple[list[str], object]:
    key, sep, raw = text.partition('=')
    if not sep or not key.strip():
        raise ConfigError(f'Override must look like section.key=value, got "{text}"')
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip().split('.'), value


def apply_override(data: dict, text: str):
    """Applies one `section.key=value` override to a config dict; value is JSON or a bare string."""
    path, value = _parse_override(text)
    node = data
    for i, key in enumerate(path):
        if not isinstance(node, dict) or key not in node:
            raise ConfigError(f'Unknown config key "{".".join(path[:i + 1])}"')
        if i == len(path) - 1:
            node[key] = value
        else:
            node = node[key]


def _resolve_inputs(file_data: dict, base_dir: Path):
    inputs = file_data.get('inputs')
    if not isinstance(inputs, dict):
        return
    for key in ('reference', 'comparison'):
        value = inputs.get(key)
        if isinstance(value, str) and not Path(value).is_absolute():
            inputs[key] = str(base_dir / value)


def load_config(path=None, overrides=(), environ=None) -> PipelineConfig:
    """
    Builds the effective PipelineConfig.

    Parameters
    ----------
    path : str or Path, optional
        JSON config file. Relative input paths inside it are resolved against
        the file's directory.
    overrides : sequence of str
        `section.key=value` strings, applied last.
    environ : mapping, optional
        Environment to read EMOTION_STRUCTURE_OUTPUT_DIR from. Default: os.environ

    Returns
    -------
    PipelineConfig (not yet validated)

    Examples
    --------
    >>> load_config('run.json', ['solver.n_restarts=500', 'null.enabled=false'])
    """
    environ = os.environ if environ is None else environ
    data = config_to_dict(PipelineConfig())
    if environ.get(OUTPUT_DIR_ENV):
        data['output_dir'] = environ[OUTPUT_DIR_ENV]
    if path is not None:
        path = Path(path)
        try:
            file_data = json.loads(path.read_text(encoding='utf-8'))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f'{path}: {exc}') from exc
        if not isinstance(file_data, dict):
            raise ConfigError(f'{path}: top level must be a JSON object')
        _resolve_inputs(file_data, path.parent)
        _merge(data, file_data)
    for text in overrides:
        apply_override(data, text)
    try:
        config = jsons.load(data, PipelineConfig)
    except jsons.exceptions.JsonsError as exc:
        raise ConfigError(f'Invalid config: {exc}') from exc
    logger.debug('Loaded config %s', config_hash(config)[:12])
    return config


def write_config(config: PipelineConfig, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(config_to_dict(config), sort_keys=True, indent=2) + '\n', encoding='utf-8')
    return path
