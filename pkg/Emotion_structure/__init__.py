# ruff: noqa: E402
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version('Emotion_structure')
except PackageNotFoundError:
    __version__ = '0.1.0'

from .rating_matrix import RaterRecord as RaterRecord, RatingMatrix as RatingMatrix, GroupSplit as GroupSplit
from .structure import RDM as RDM
from .gwot import SolverConfig as SolverConfig, TransportPlan as TransportPlan

from . import errors as errors, categories as categories, ingest as ingest, structure as structure, rsa as rsa, gwot as gwot
from . import evaluation as evaluation, nullmodel as nullmodel, synth as synth, artifacts as artifacts
from . import config as config, pipeline as pipeline, cli as cli
