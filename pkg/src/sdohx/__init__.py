"""Staged LLM extraction of social-determinants-of-health factors from
death-investigation narratives, with oracle mocks, an evaluation harness,
and the two-arm annotation study service."""

__version__ = "0.1.0"

from .corpus import IncidentRecord, balanced_sample, concat_reports, load_corpus, write_corpus
from .factors import FactorDefinition, FactorRegistry, builtin_registry, load_registry
from .pipeline import ExtractionVerdict, StageTrace, TaskSpec, run_batch
from .segmenter import SentenceSpan, normalize, segment
from .synth import GeneratorSpec, generate_corpus

__all__ = [
    "__version__",
    "IncidentRecord",
    "balanced_sample",
    "concat_reports",
    "load_corpus",
    "write_corpus",
    "FactorDefinition",
    "FactorRegistry",
    "builtin_registry",
    "load_registry",
    "ExtractionVerdict",
    "StageTrace",
    "TaskSpec",
    "run_batch",
    "SentenceSpan",
    "normalize",
    "segment",
    "GeneratorSpec",
    "generate_corpus",
]
