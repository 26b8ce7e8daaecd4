import json

import pytest

from sdohx.factors import (
    FactorDefinition,
    FactorRegistry,
    RegistryError,
    builtin_registry,
    load_registry,
)


def test_builtin_registry_has_eighteen_factors():
    registry = builtin_registry()
    assert len(registry) == 18
    frequent = [f for f in registry if f.frequency_class == "frequent"]
    infrequent = [f for f in registry if f.frequency_class == "infrequent"]
    assert len(frequent) == 8
    assert len(infrequent) == 10


def test_builtin_definitions_nonempty_and_named():
    for factor in builtin_registry():
        assert factor.definition.strip()
        assert factor.name.strip()


def test_lookup_and_contains():
    registry = builtin_registry()
    assert "alcohol_problem" in registry
    assert registry["alcohol_problem"].name == "Alcohol Problem"
    with pytest.raises(RegistryError, match="unknown factor_id"):
        registry["nonexistent_factor"]


def test_duplicate_ids_rejected():
    factor = FactorDefinition("x", "X", "def", "frequent")
    with pytest.raises(RegistryError, match="duplicate"):
        FactorRegistry([factor, factor])


def test_invalid_definition_rejected():
    with pytest.raises(RegistryError):
        FactorDefinition("x", "X", "", "frequent")
    with pytest.raises(RegistryError):
        FactorDefinition("", "X", "def", "frequent")
    with pytest.raises(RegistryError):
        FactorDefinition("x", "X", "def", "sometimes")


def test_load_registry_roundtrip(tmp_path):
    data = [
        {"factor_id": "a", "name": "A", "definition": "da", "frequency_class": "frequent"},
        {"factor_id": "b", "name": "B", "definition": "db", "frequency_class": "infrequent"},
    ]
    path = tmp_path / "registry.json"
    path.write_text(json.dumps(data))
    registry = load_registry(path)
    assert registry.ids() == ["a", "b"]


def test_load_registry_bad_json(tmp_path):
    path = tmp_path / "registry.json"
    path.write_text("{not json")
    with pytest.raises(RegistryError, match="not valid JSON"):
        load_registry(path)
