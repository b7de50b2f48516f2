"""Object-class catalog with nominal sizes and randomized size variation"""
import json
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, ValidationError

from config import DEFAULT_CATALOG_PATH
from errors import CatalogSchemaError, InvalidJitter, UnknownClass
from scene.geometry import Dims3


class CatalogRow(BaseModel):
    """One record of the catalog file"""

    model_config = ConfigDict(extra="forbid")

    name: str = Field(min_length=1)
    width: PositiveFloat
    length: PositiveFloat
    height: PositiveFloat


class CatalogFile(BaseModel):
    model_config = ConfigDict(extra="forbid")

    classes: List[CatalogRow] = Field(min_length=1)


@dataclass(frozen=True)
class ObjectClass:
    name: str
    nominal_dims: Dims3


class Catalog:
    """Ordered, immutable collection of object classes"""

    def __init__(self, classes: Iterable[ObjectClass]):
        self._classes: Tuple[ObjectClass, ...] = tuple(classes)
        self._by_name: Dict[str, ObjectClass] = {}
        for object_class in self._classes:
            if object_class.name in self._by_name:
                raise CatalogSchemaError(f"Duplicate class name in catalog: {object_class.name}")
            self._by_name[object_class.name] = object_class
        if not self._classes:
            raise CatalogSchemaError("Catalog must contain at least one class")

    @property
    def classes(self) -> Tuple[ObjectClass, ...]:
        return self._classes

    @property
    def names(self) -> List[str]:
        return [c.name for c in self._classes]

    def __len__(self) -> int:
        return len(self._classes)

    def __contains__(self, class_name: str) -> bool:
        return class_name in self._by_name

    def get(self, class_name: str) -> ObjectClass:
        try:
            return self._by_name[class_name]
        except KeyError:
            raise UnknownClass(class_name) from None

    def __eq__(self, other) -> bool:
        return isinstance(other, Catalog) and self._classes == other._classes

    def to_records(self) -> List[dict]:
        return [
            {"name": c.name, "width": c.nominal_dims.width, "length": c.nominal_dims.length,
             "height": c.nominal_dims.height}
            for c in self._classes
        ]


def nominal_dims(catalog: Catalog, class_name: str) -> Dims3:
    """Catalog size of a class, before jitter"""
    return catalog.get(class_name).nominal_dims


def sample_dims(catalog: Catalog, class_name: str, jitter: float, rng: np.random.Generator) -> Dims3:
    """Scale each axis independently by a factor drawn uniformly from [1 - jitter, 1 + jitter]"""
    if not 0 <= jitter < 1:
        raise InvalidJitter(jitter)
    dims = nominal_dims(catalog, class_name)
    scale = rng.uniform(1.0 - jitter, 1.0 + jitter, size=3)
    return Dims3(
        float(dims.width * scale[0]),
        float(dims.length * scale[1]),
        float(dims.height * scale[2]),
    )


def catalog_from_records(records: List[dict]) -> Catalog:
    """Validate `{name, width, length, height}` rows into a Catalog"""
    try:
        parsed = CatalogFile(classes=records)
    except ValidationError as e:
        raise CatalogSchemaError(f"Invalid catalog records: {e}")
    return Catalog(
        ObjectClass(row.name, Dims3(row.width, row.length, row.height)) for row in parsed.classes
    )


def load_catalog(path: Optional[str] = None) -> Catalog:
    """Load a catalog file; the shipped table is used when no path is given"""
    path = path or DEFAULT_CATALOG_PATH
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise CatalogSchemaError(f"Cannot read catalog file {path}: {e}")
    if not isinstance(data, dict) or set(data) != {"classes"}:
        raise CatalogSchemaError(f"Catalog file {path} must be an object with a single 'classes' list")
    return catalog_from_records(data["classes"])


def save_catalog(catalog: Catalog, path: str) -> None:
    """Write the catalog in the format load_catalog reads"""
    with open(path, "w", encoding="utf-8") as f:
        json.dump({"classes": catalog.to_records()}, f, indent=2, ensure_ascii=False)
