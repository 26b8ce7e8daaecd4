import pytest

from sdohx.factors import builtin_registry
from sdohx.synth import GeneratorSpec, generate_corpus

SIX_FACTORS = (
    "alcohol_problem",
    "exposure_to_disaster",
    "financial_problem",
    "job_problem",
    "mental_health_problem",
    "school_problem",
)


@pytest.fixture(scope="session")
def registry():
    return builtin_registry()


@pytest.fixture(scope="session")
def small_corpus(registry):
    spec = GeneratorSpec(seed=11, n_incidents=25, factor_ids=SIX_FACTORS)
    return generate_corpus(spec, registry)
