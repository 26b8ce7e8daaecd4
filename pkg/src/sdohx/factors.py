"""Factor definitions and the registry they are looked up in.

The built-in registry ships the 18 coding-manual factors used throughout;
custom registries load from a JSON array of factor objects.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator

FREQUENCY_CLASSES = ("frequent", "infrequent")


class RegistryError(ValueError):
    """Invalid factor definition, duplicate id, or unknown factor lookup."""


@dataclass(frozen=True)
class FactorDefinition:
    factor_id: str
    name: str
    definition: str
    frequency_class: str

    def __post_init__(self) -> None:
        if not self.factor_id:
            raise RegistryError("factor_id must be non-empty")
        if not self.name:
            raise RegistryError(f"factor {self.factor_id!r}: name must be non-empty")
        if not self.definition:
            raise RegistryError(f"factor {self.factor_id!r}: definition must be non-empty")
        if self.frequency_class not in FREQUENCY_CLASSES:
            raise RegistryError(
                f"factor {self.factor_id!r}: frequency_class must be one of {FREQUENCY_CLASSES}, "
                f"got {self.frequency_class!r}"
            )


class FactorRegistry:
    """Immutable id-keyed collection of factor definitions."""

    def __init__(self, factors: Iterable[FactorDefinition]):
        by_id: dict[str, FactorDefinition] = {}
        for factor in factors:
            if factor.factor_id in by_id:
                raise RegistryError(f"duplicate factor_id {factor.factor_id!r}")
            by_id[factor.factor_id] = factor
        self._by_id = by_id

    def __contains__(self, factor_id: str) -> bool:
        return factor_id in self._by_id

    def __getitem__(self, factor_id: str) -> FactorDefinition:
        try:
            return self._by_id[factor_id]
        except KeyError:
            raise RegistryError(f"unknown factor_id {factor_id!r}") from None

    def __iter__(self) -> Iterator[FactorDefinition]:
        return iter(self._by_id.values())

    def __len__(self) -> int:
        return len(self._by_id)

    def ids(self) -> list[str]:
        return list(self._by_id)


def _registry_from_obj(obj: object, source: str) -> FactorRegistry:
    if not isinstance(obj, list):
        raise RegistryError(f"{source}: expected a JSON array of factor objects")
    factors = []
    for entry in obj:
        if not isinstance(entry, dict):
            raise RegistryError(f"{source}: factor entries must be objects")
        try:
            factors.append(
                FactorDefinition(
                    factor_id=entry["factor_id"],
                    name=entry["name"],
                    definition=entry["definition"],
                    frequency_class=entry["frequency_class"],
                )
            )
        except KeyError as exc:
            raise RegistryError(f"{source}: factor entry missing key {exc}") from None
    return FactorRegistry(factors)


def load_registry(path: str | Path) -> FactorRegistry:
    """Load a factor registry from a JSON file."""
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise RegistryError(f"{path}: not valid JSON: {exc}") from exc
    return _registry_from_obj(obj, str(path))


def builtin_registry() -> FactorRegistry:
    """The 18 coding-manual factors bundled with the package."""
    text = resources.files("sdohx.data").joinpath("factors.json").read_text(encoding="utf-8")
    return _registry_from_obj(json.loads(text), "builtin factors.json")
