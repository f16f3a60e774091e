"""Schemas, attribute domains, tuples and relations.

Every predicate and constraint in the package is interpreted against a
:class:`Schema`.  Numeric attributes carry a closed ``[lo, hi]`` domain;
categorical attributes carry a finite value set.  Time attributes are plain
numeric attributes holding epoch seconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

NUMERIC = "numeric"
CATEGORICAL = "categorical"


class SchemaError(ValueError):
    """Raised for malformed schemas, arity mismatches and unknown attributes."""


@dataclass(frozen=True)
class AttributeDomain:
    name: str
    kind: str
    lo: float = 0.0
    hi: float = 0.0
    values: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.name:
            raise SchemaError("attribute name must be nonempty")
        if self.kind == NUMERIC:
            if math.isnan(self.lo) or math.isnan(self.hi) or self.lo > self.hi:
                raise SchemaError(f"{self.name}: numeric domain needs lo <= hi")
            if math.isinf(self.lo) or math.isinf(self.hi):
                raise SchemaError(f"{self.name}: numeric domains must be bounded")
        elif self.kind == CATEGORICAL:
            if not self.values:
                raise SchemaError(f"{self.name}: categorical domain is empty")
            if len(set(self.values)) != len(self.values):
                raise SchemaError(f"{self.name}: duplicate categorical values")
        else:
            raise SchemaError(f"{self.name}: unknown kind {self.kind!r}")

    @classmethod
    def numeric(cls, name: str, lo: float, hi: float) -> AttributeDomain:
        return cls(name, NUMERIC, float(lo), float(hi))

    @classmethod
    def categorical(cls, name: str, values: Iterable[str]) -> AttributeDomain:
        return cls(name, CATEGORICAL, values=tuple(values))

    @property
    def is_numeric(self) -> bool:
        return self.kind == NUMERIC

    @cached_property
    def value_set(self) -> frozenset[str]:
        return frozenset(self.values)

    def contains(self, value: Any) -> bool:
        if self.kind == NUMERIC:
            if isinstance(value, (bool, str)) or value is None:
                return False
            try:
                v = float(value)
            except (TypeError, ValueError):
                return False
            return self.lo <= v <= self.hi
        return isinstance(value, str) and value in self.value_set

    def widens(self, other: AttributeDomain) -> bool:
        """True when this domain contains ``other``."""
        if self.kind != other.kind:
            return False
        if self.kind == NUMERIC:
            return self.lo <= other.lo and other.hi <= self.hi
        return other.value_set <= self.value_set

    def to_json(self) -> dict:
        if self.kind == NUMERIC:
            return {"name": self.name, "kind": NUMERIC, "lo": self.lo, "hi": self.hi}
        return {"name": self.name, "kind": CATEGORICAL, "values": list(self.values)}

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> AttributeDomain:
        kind = obj.get("kind", NUMERIC)
        if kind == NUMERIC:
            return cls.numeric(obj["name"], obj["lo"], obj["hi"])
        return cls.categorical(obj["name"], obj["values"])


@dataclass(frozen=True)
class Schema:
    attributes: tuple[AttributeDomain, ...]

    def __post_init__(self) -> None:
        names = [a.name for a in self.attributes]
        if len(set(names)) != len(names):
            raise SchemaError(f"duplicate attribute names in {names}")

    @classmethod
    def of(cls, *attributes: AttributeDomain) -> Schema:
        return cls(tuple(attributes))

    @cached_property
    def index(self) -> dict[str, int]:
        return {a.name: i for i, a in enumerate(self.attributes)}

    @property
    def names(self) -> list[str]:
        return [a.name for a in self.attributes]

    def __len__(self) -> int:
        return len(self.attributes)

    def __contains__(self, name: object) -> bool:
        return name in self.index

    def __getitem__(self, name: str) -> AttributeDomain:
        try:
            return self.attributes[self.index[name]]
        except KeyError:
            raise SchemaError(f"unknown attribute {name!r}") from None

    def position(self, name: str) -> int:
        try:
            return self.index[name]
        except KeyError:
            raise SchemaError(f"unknown attribute {name!r}") from None

    def row(self, values: Mapping[str, Any]) -> tuple:
        """Build a tuple in schema order from a name -> value mapping."""
        missing = [n for n in self.names if n not in values]
        if missing:
            raise SchemaError(f"row is missing attributes {missing}")
        return tuple(values[n] for n in self.names)

    def widens(self, other: Schema) -> bool:
        return self.names == other.names and all(
            a.widens(b) for a, b in zip(self.attributes, other.attributes)
        )

    def to_json(self) -> dict:
        return {"attributes": [a.to_json() for a in self.attributes]}

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> Schema:
        return cls(tuple(AttributeDomain.from_json(a) for a in obj["attributes"]))


def validate_tuple(schema: Schema, tup: Sequence[Any]) -> bool:
    if len(tup) != len(schema):
        raise SchemaError(f"tuple arity {len(tup)} does not match schema arity {len(schema)}")
    return all(a.contains(v) for a, v in zip(schema.attributes, tup))


@dataclass(frozen=True)
class Relation:
    """A multiset of tuples over a schema.

    Rows are kept as tuples in schema order; column arrays are materialised
    lazily for vectorised evaluation.
    """

    schema: Schema
    rows: tuple[tuple, ...] = field(default=())
    validate: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "rows", tuple(tuple(r) for r in self.rows))
        if self.validate:
            for i, r in enumerate(self.rows):
                if not validate_tuple(self.schema, r):
                    raise SchemaError(f"row {i} {r!r} lies outside the schema domains")

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    @cached_property
    def columns(self) -> dict[str, np.ndarray]:
        cols: dict[str, np.ndarray] = {}
        for j, a in enumerate(self.schema.attributes):
            data = [r[j] for r in self.rows]
            cols[a.name] = np.asarray(data, dtype=float if a.is_numeric else object)
        return cols

    @classmethod
    def from_columns(cls, schema: Schema, columns: Mapping[str, Sequence], validate: bool = True) -> Relation:
        arrays = [list(columns[n]) for n in schema.names]
        rows = tuple(zip(*arrays)) if arrays else ()
        rel = cls(schema, rows, validate=validate)
        cols = {}
        for a in schema.attributes:
            cols[a.name] = np.asarray(columns[a.name], dtype=float if a.is_numeric else object)
        rel.__dict__["columns"] = cols
        return rel

    def take(self, indices: Iterable[int]) -> Relation:
        idx = np.asarray(list(indices), dtype=int)
        cols = {k: v[idx] for k, v in self.columns.items()}
        return Relation.from_columns(self.schema, cols, validate=False)
