"""Predicate-constraints and predicate-constraint sets."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .predicates import (
    EMPTY,
    TRUE,
    Interval,
    Predicate,
    SignedConjunction,
    ValueConstraint,
    conjoin,
    evaluate,
    find_witness,
    mask,
    to_box,
)
from .schema import AttributeDomain, Relation, Schema, SchemaError


@dataclass(frozen=True)
class FrequencyConstraint:
    kl: int
    ku: int

    def __post_init__(self) -> None:
        if int(self.kl) != self.kl or int(self.ku) != self.ku:
            raise ValueError("frequency bounds must be integers")
        if not 0 <= self.kl <= self.ku:
            raise ValueError(f"frequency window needs 0 <= kl <= ku, got ({self.kl}, {self.ku})")
        object.__setattr__(self, "kl", int(self.kl))
        object.__setattr__(self, "ku", int(self.ku))

    def admits(self, count: int) -> bool:
        return self.kl <= count <= self.ku


@dataclass(frozen=True)
class PredicateConstraint:
    """``psi => nu`` for every missing row, with ``kl <= |{r : psi(r)}| <= ku``."""

    id: str
    psi: Predicate
    nu: ValueConstraint
    kappa: FrequencyConstraint

    @classmethod
    def make(cls, id: str, psi: Predicate | None = None, nu: Mapping[str, tuple[float, float]] | None = None,
             kl: int = 0, ku: int = 0) -> PredicateConstraint:
        return cls(id, psi if psi is not None else TRUE, ValueConstraint(dict(nu or {})),
                   FrequencyConstraint(kl, ku))

    def check(self, schema: Schema) -> None:
        for name in self.psi.atoms:
            schema.position(name)
        for name, (l, h) in self.nu.ranges.items():
            dom = schema[name]
            if not dom.is_numeric:
                raise SchemaError(f"{self.id}: value constraint on categorical attribute {name!r}")
            if l > dom.hi or h < dom.lo:
                raise SchemaError(f"{self.id}: value constraint on {name!r} lies outside the domain")

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "psi": self.psi.to_json(),
            "nu": self.nu.to_json(),
            "kappa": {"kl": self.kappa.kl, "ku": self.kappa.ku},
        }

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> PredicateConstraint:
        kappa = obj.get("kappa", {})
        return cls(
            str(obj["id"]),
            Predicate.from_json(obj.get("psi")),
            ValueConstraint.from_json(obj.get("nu")),
            FrequencyConstraint(kappa.get("kl", 0), kappa["ku"]),
        )


@dataclass(frozen=True)
class PCSet:
    schema: Schema
    constraints: tuple[PredicateConstraint, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "constraints", tuple(self.constraints))
        if not self.constraints:
            raise ValueError("a predicate-constraint set must be nonempty")
        ids = [c.id for c in self.constraints]
        if len(set(ids)) != len(ids):
            raise ValueError("predicate-constraint ids must be unique")
        for c in self.constraints:
            c.check(self.schema)

    def __len__(self) -> int:
        return len(self.constraints)

    def __iter__(self):
        return iter(self.constraints)

    def __getitem__(self, i: int) -> PredicateConstraint:
        return self.constraints[i]

    @cached_property
    def by_id(self) -> dict[str, PredicateConstraint]:
        return {c.id: c for c in self.constraints}

    @cached_property
    def pairwise_disjoint(self) -> bool:
        """True when no two predicates share a domain tuple."""
        return _pairwise_disjoint(self)

    @cached_property
    def domain_closure(self) -> tuple | None:
        """None when closed over the whole domain, else a witness tuple."""
        return check_closure(self, None)

    def to_json(self) -> dict:
        return {"schema": self.schema.to_json(), "constraints": [c.to_json() for c in self.constraints]}

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> PCSet:
        schema = Schema.from_json(obj["schema"])
        return cls(schema, tuple(PredicateConstraint.from_json(c) for c in obj["constraints"]))

    @classmethod
    def load(cls, path: str | Path) -> PCSet:
        return cls.from_json(json.loads(Path(path).read_text()))


def satisfies(relation: Relation, pc: PredicateConstraint) -> bool:
    schema = relation.schema
    count = 0
    for r in relation.rows:
        if evaluate(pc.psi, r, schema):
            count += 1
            if not pc.nu.holds(schema, r):
                return False
    return pc.kappa.admits(count)


def satisfies_fast(relation: Relation, pc: PredicateConstraint) -> bool:
    """Column-wise :func:`satisfies` for large relations."""
    cols = relation.columns
    m = mask(pc.psi, cols, len(relation))
    if not pc.kappa.admits(int(m.sum())):
        return False
    for name, (l, h) in pc.nu.ranges.items():
        v = cols[name][m]
        if v.size and (v.min() < l or v.max() > h):
            return False
    return True


def satisfies_set(relation: Relation, pcset: PCSet) -> bool:
    check = satisfies_fast if len(relation) > 256 else satisfies
    return all(check(relation, pc) for pc in pcset)


def check_closure(pcset: PCSet, query_region: Predicate | None = None) -> tuple | None:
    """None when every (query-restricted) domain tuple satisfies some predicate.

    Otherwise returns a witness tuple, in schema order, covered by no predicate.
    """
    sc = SignedConjunction(
        positives=(query_region,) if query_region is not None else (),
        negatives=tuple(c.psi for c in pcset),
    )
    return find_witness(sc, pcset.schema)


def is_closed(pcset: PCSet, query_region: Predicate | None = None) -> bool:
    if query_region is None:
        return pcset.domain_closure is None
    if pcset.domain_closure is None:
        return True
    return check_closure(pcset, query_region) is None


def direct_product(a: PredicateConstraint, b: PredicateConstraint, schema_a: Schema | None = None,
                   schema_b: Schema | None = None) -> tuple[PredicateConstraint, Schema | None]:
    """Direct product over the concatenated schema.

    Conjoins the predicates, concatenates the value constraints and
    multiplies the frequency windows elementwise.
    """
    if schema_a is not None and schema_b is not None:
        clash = set(schema_a.names) & set(schema_b.names)
        if clash:
            raise SchemaError(f"direct product needs disjoint attribute names, both have {sorted(clash)}")
        schema = Schema(schema_a.attributes + schema_b.attributes)
    else:
        clash = (a.psi.attributes | set(a.nu.ranges)) & (b.psi.attributes | set(b.nu.ranges))
        if clash:
            raise SchemaError(f"direct product needs disjoint attribute names, both use {sorted(clash)}")
        schema = None
    psi = conjoin(a.psi, b.psi)
    nu = ValueConstraint({**a.nu.ranges, **b.nu.ranges})
    kappa = FrequencyConstraint(a.kappa.kl * b.kappa.kl, a.kappa.ku * b.kappa.ku)
    return PredicateConstraint(f"{a.id}*{b.id}", psi, nu, kappa), schema


def _pairwise_disjoint(pcset: PCSet) -> bool:
    """Vectorised pairwise emptiness test on predicate boxes."""
    schema = pcset.schema
    boxes = [to_box(c.psi, schema) for c in pcset]
    live = [b for b in boxes if b is not None]
    n = len(live)
    if n < 2:
        return True
    overlap = np.ones((n, n), dtype=bool)
    for j, dom in enumerate(schema.attributes):
        atoms = [b[j] for b in live]
        if dom.is_numeric:
            lo = np.array([a.lo for a in atoms])
            hi = np.array([a.hi for a in atoms])
            lo_open = np.array([a.lo_open for a in atoms])
            hi_open = np.array([a.hi_open for a in atoms])
            # intersection lower endpoint = max of los, upper = min of his
            L = np.maximum(lo[:, None], lo[None, :])
            H = np.minimum(hi[:, None], hi[None, :])
            lo_o = np.where(lo[:, None] > lo[None, :], lo_open[:, None],
                            np.where(lo[:, None] < lo[None, :], lo_open[None, :],
                                     lo_open[:, None] | lo_open[None, :]))
            hi_o = np.where(hi[:, None] < hi[None, :], hi_open[:, None],
                            np.where(hi[:, None] > hi[None, :], hi_open[None, :],
                                     hi_open[:, None] | hi_open[None, :]))
            overlap &= (L < H) | ((L == H) & ~lo_o & ~hi_o)
        else:
            values = {v: k for k, v in enumerate(dom.values)}
            if len(values) <= 62:
                bits = np.array([sum(1 << values[v] for v in a) for a in atoms], dtype=np.int64)
                overlap &= (bits[:, None] & bits[None, :]) != 0
            else:
                for p in range(n):
                    for q in range(p + 1, n):
                        if not (atoms[p] & atoms[q]):
                            overlap[p, q] = overlap[q, p] = False
    np.fill_diagonal(overlap, False)
    return not overlap.any()


def merge_domains(a: AttributeDomain, b: AttributeDomain) -> AttributeDomain:
    """Domain of an attribute shared by two joined relations."""
    if a.kind != b.kind:
        raise SchemaError(f"join attribute {a.name!r} has kinds {a.kind} and {b.kind}")
    if a.is_numeric:
        lo, hi = max(a.lo, b.lo), min(a.hi, b.hi)
        if lo > hi:
            raise SchemaError(f"join attribute {a.name!r} has disjoint domains")
        return AttributeDomain.numeric(a.name, lo, hi)
    vals = [v for v in a.values if v in b.value_set]
    if not vals:
        raise SchemaError(f"join attribute {a.name!r} has disjoint domains")
    return AttributeDomain.categorical(a.name, vals)
