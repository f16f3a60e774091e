"""Conjunctive range predicates and an exact satisfiability procedure.

A predicate is a conjunction of per-attribute atoms: an :class:`Interval`
with independently open or closed endpoints for numeric attributes, or a
membership set for categorical ones.  Satisfiability of a conjunction of
positive predicates and negated predicates is decided by recursive splitting
of the positive box at the endpoints of the negated boxes; a split always
lands on an endpoint, so the procedure is exact for this predicate class.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Any, Iterable, Mapping, Sequence, Union

import numpy as np

from .schema import NUMERIC, Schema, SchemaError

INF = math.inf


@dataclass(frozen=True, slots=True)
class Interval:
    lo: float = -INF
    hi: float = INF
    lo_open: bool = False
    hi_open: bool = False

    def __post_init__(self) -> None:
        # infinite endpoints are never attained
        if self.lo == -INF and not self.lo_open:
            object.__setattr__(self, "lo_open", True)
        if self.hi == INF and not self.hi_open:
            object.__setattr__(self, "hi_open", True)

    @classmethod
    def closed(cls, lo: float, hi: float) -> Interval:
        return cls(float(lo), float(hi))

    @classmethod
    def point(cls, v: float) -> Interval:
        return cls(float(v), float(v))

    @property
    def empty(self) -> bool:
        return self.lo > self.hi or (self.lo == self.hi and (self.lo_open or self.hi_open))

    def __contains__(self, v: float) -> bool:
        if v < self.lo or v > self.hi:
            return False
        if v == self.lo and self.lo_open:
            return False
        if v == self.hi and self.hi_open:
            return False
        return True

    def intersect(self, other: Interval) -> Interval:
        if self.lo > other.lo:
            lo, lo_open = self.lo, self.lo_open
        elif other.lo > self.lo:
            lo, lo_open = other.lo, other.lo_open
        else:
            lo, lo_open = self.lo, self.lo_open or other.lo_open
        if self.hi < other.hi:
            hi, hi_open = self.hi, self.hi_open
        elif other.hi < self.hi:
            hi, hi_open = other.hi, other.hi_open
        else:
            hi, hi_open = self.hi, self.hi_open or other.hi_open
        return Interval(lo, hi, lo_open, hi_open)

    def covers(self, other: Interval) -> bool:
        """``other`` (nonempty) lies inside ``self``."""
        lo_ok = self.lo < other.lo or (self.lo == other.lo and (not self.lo_open or other.lo_open))
        hi_ok = self.hi > other.hi or (self.hi == other.hi and (not self.hi_open or other.hi_open))
        return lo_ok and hi_ok

    def representative(self) -> float:
        if self.lo == self.hi:
            return self.lo
        if math.isfinite(self.lo) and math.isfinite(self.hi):
            return self.lo + (self.hi - self.lo) / 2.0
        if math.isfinite(self.lo):
            return self.lo if not self.lo_open else self.lo + 1.0
        if math.isfinite(self.hi):
            return self.hi if not self.hi_open else self.hi - 1.0
        return 0.0

    def to_json(self) -> dict:
        out: dict[str, Any] = {}
        if math.isfinite(self.lo):
            out["lo"] = self.lo
            out["lo_open"] = self.lo_open
        if math.isfinite(self.hi):
            out["hi"] = self.hi
            out["hi_open"] = self.hi_open
        return out

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> Interval:
        return cls(
            float(obj.get("lo", -INF)),
            float(obj.get("hi", INF)),
            bool(obj.get("lo_open", False)),
            bool(obj.get("hi_open", False)),
        )


Atom = Union[Interval, frozenset]


def _atom_empty(a: Atom) -> bool:
    return a.empty if isinstance(a, Interval) else not a


def _atom_intersect(a: Atom, b: Atom) -> Atom:
    if isinstance(a, Interval):
        if not isinstance(b, Interval):
            raise SchemaError("cannot intersect a numeric atom with a categorical one")
        return a.intersect(b)
    if isinstance(b, Interval):
        raise SchemaError("cannot intersect a categorical atom with a numeric one")
    return a & b


def _atom_covers(outer: Atom, inner: Atom) -> bool:
    if isinstance(outer, Interval):
        return outer.covers(inner)
    return inner <= outer


def _atom_contains(a: Atom, v: Any) -> bool:
    if isinstance(a, Interval):
        if isinstance(v, str):
            return False
        return float(v) in a
    return v in a


class Predicate:
    """Conjunction of per-attribute atoms; the empty mapping is TRUE.

    ``Predicate.EMPTY`` (``empty=True``) is the unsatisfiable predicate
    produced when a conjunction voids some attribute.
    """

    __slots__ = ("atoms", "empty", "_key")

    def __init__(self, atoms: Mapping[str, Atom] | None = None, *, empty: bool = False) -> None:
        norm: dict[str, Atom] = {}
        if not empty:
            for name, atom in sorted((atoms or {}).items()):
                if isinstance(atom, (set, list, tuple)):
                    atom = frozenset(atom)
                if _atom_empty(atom):
                    raise ValueError(f"atom on {name!r} is empty; use Predicate.EMPTY")
                norm[name] = atom
        self.atoms: Mapping[str, Atom] = MappingProxyType(norm)
        self.empty = empty
        self._key = (empty, tuple((k, _atom_key(v)) for k, v in norm.items()))

    @property
    def is_true(self) -> bool:
        return not self.empty and not self.atoms

    @property
    def attributes(self) -> frozenset[str]:
        return frozenset(self.atoms)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Predicate) and self._key == other._key

    def __hash__(self) -> int:
        return hash(self._key)

    def __repr__(self) -> str:
        if self.empty:
            return "Predicate.EMPTY"
        if not self.atoms:
            return "Predicate.TRUE"
        return f"Predicate({dict(self.atoms)!r})"

    def restrict(self, names: Iterable[str]) -> Predicate:
        """Keep only the atoms on ``names`` (a weakening)."""
        if self.empty:
            return self
        keep = set(names)
        return Predicate({k: v for k, v in self.atoms.items() if k in keep})

    def to_json(self) -> dict:
        if self.empty:
            return {"atoms": {}, "empty": True}
        atoms: dict[str, Any] = {}
        for name, atom in self.atoms.items():
            if isinstance(atom, Interval):
                atoms[name] = atom.to_json()
            else:
                atoms[name] = {"in": sorted(atom)}
        return {"atoms": atoms}

    @classmethod
    def from_json(cls, obj: Mapping[str, Any] | None) -> Predicate:
        if not obj:
            return TRUE
        if obj.get("empty"):
            return EMPTY
        atoms: dict[str, Atom] = {}
        for name, spec in obj.get("atoms", {}).items():
            if "in" in spec:
                atoms[name] = frozenset(spec["in"])
            else:
                atoms[name] = Interval.from_json(spec)
        return cls(atoms)


def _atom_key(a: Atom):
    if isinstance(a, Interval):
        return ("n", a.lo, a.hi, a.lo_open, a.hi_open)
    return ("c", tuple(sorted(a)))


TRUE = Predicate()
EMPTY = Predicate(empty=True)
Predicate.TRUE = TRUE  # type: ignore[attr-defined]
Predicate.EMPTY = EMPTY  # type: ignore[attr-defined]


@dataclass(frozen=True)
class ValueConstraint:
    """Closed ranges ``[l, h]`` per numeric attribute; omitted attributes span the domain."""

    ranges: Mapping[str, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        norm = {}
        for name, (l, h) in sorted(self.ranges.items()):
            l, h = float(l), float(h)
            if not l <= h:
                raise ValueError(f"value constraint on {name!r} has l > h")
            norm[name] = (l, h)
        object.__setattr__(self, "ranges", MappingProxyType(norm))

    def __hash__(self) -> int:
        return hash(tuple(self.ranges.items()))

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ValueConstraint) and dict(self.ranges) == dict(other.ranges)

    def bounds(self, schema: Schema, name: str) -> tuple[float, float]:
        dom = schema[name]
        l, h = self.ranges.get(name, (dom.lo, dom.hi))
        return max(l, dom.lo), min(h, dom.hi)

    def as_predicate(self) -> Predicate:
        return Predicate({k: Interval.closed(l, h) for k, (l, h) in self.ranges.items()})

    def holds(self, schema: Schema, tup: Sequence[Any]) -> bool:
        for name, (l, h) in self.ranges.items():
            v = tup[schema.position(name)]
            if not l <= float(v) <= h:
                return False
        return True

    def to_json(self) -> dict:
        return {k: {"lo": l, "hi": h} for k, (l, h) in self.ranges.items()}

    @classmethod
    def from_json(cls, obj: Mapping[str, Any] | None) -> ValueConstraint:
        return cls({k: (v["lo"], v["hi"]) for k, v in (obj or {}).items()})


@dataclass(frozen=True)
class SignedConjunction:
    positives: tuple[Predicate, ...] = ()
    negatives: tuple[Predicate, ...] = ()
    clip: Predicate | None = None


# ---------------------------------------------------------------------------
# evaluation and conjunction


def evaluate(pred: Predicate, tup: Sequence[Any], schema: Schema) -> bool:
    if pred.empty:
        return False
    for name, atom in pred.atoms.items():
        if not _atom_contains(atom, tup[schema.position(name)]):
            return False
    return True


def mask(pred: Predicate, columns: Mapping[str, np.ndarray], n: int) -> np.ndarray:
    """Vectorised :func:`evaluate` over column arrays of length ``n``."""
    out = np.ones(n, dtype=bool)
    if pred.empty:
        return np.zeros(n, dtype=bool)
    for name, atom in pred.atoms.items():
        if name not in columns:
            raise SchemaError(f"unknown attribute {name!r}")
        col = columns[name]
        if isinstance(atom, Interval):
            out &= (col > atom.lo) if atom.lo_open else (col >= atom.lo)
            out &= (col < atom.hi) if atom.hi_open else (col <= atom.hi)
        else:
            out &= np.isin(col, list(atom))
    return out


def conjoin(p: Predicate, q: Predicate) -> Predicate:
    if p.empty or q.empty:
        return EMPTY
    atoms = dict(p.atoms)
    for name, atom in q.atoms.items():
        if name in atoms:
            merged = _atom_intersect(atoms[name], atom)
            if _atom_empty(merged):
                return EMPTY
            atoms[name] = merged
        else:
            atoms[name] = atom
    return Predicate(atoms)


# ---------------------------------------------------------------------------
# boxes: dense per-attribute atoms aligned with a schema

Box = tuple  # tuple[Atom, ...]
NegBox = tuple  # tuple[tuple[int, Atom], ...] -- sparse, constrained attributes only


def domain_box(schema: Schema) -> Box:
    return tuple(
        Interval.closed(a.lo, a.hi) if a.kind == NUMERIC else a.value_set
        for a in schema.attributes
    )


def intersect_box(box: Box | None, pred: Predicate, schema: Schema) -> Box | None:
    """Intersect a dense box with a predicate; None when the result is empty."""
    if box is None or pred.empty:
        return None
    if not pred.atoms:
        return box
    out = list(box)
    for name, atom in pred.atoms.items():
        i = schema.position(name)
        merged = _atom_intersect(out[i], atom)
        if _atom_empty(merged):
            return None
        out[i] = merged
    return tuple(out)


def to_box(pred: Predicate, schema: Schema) -> Box | None:
    return intersect_box(domain_box(schema), pred, schema)


def neg_box(pred: Predicate, schema: Schema) -> NegBox:
    return tuple((schema.position(k), v) for k, v in pred.atoms.items())


def box_is_empty(box: Box) -> bool:
    return any(_atom_empty(a) for a in box)


def _meets(box: Box, neg: NegBox) -> bool:
    for i, a in neg:
        b = box[i]
        if isinstance(a, Interval):
            if a.intersect(b).empty:
                return False
        elif not (a & b):
            return False
    return True


def _covered_by(box: Box, neg: NegBox) -> bool:
    for i, a in neg:
        if not _atom_covers(a, box[i]):
            return False
    return True


def _replace(box: Box, i: int, atom: Atom) -> Box:
    return box[:i] + (atom,) + box[i + 1:]


def _split(box: Box, live: list[NegBox]) -> list[Box]:
    cuts: dict[int, set[float]] = {}
    for neg in live:
        for i, a in neg:
            if isinstance(a, Interval):
                b = box[i]
                for v in (a.lo, a.hi):
                    if b.lo < v < b.hi:
                        cuts.setdefault(i, set()).add(v)
    if cuts:
        i = max(sorted(cuts), key=lambda k: len(cuts[k]))
        vals = sorted(cuts[i])
        v = vals[len(vals) // 2]
        b = box[i]
        return [
            _replace(box, i, Interval(b.lo, v, b.lo_open, True)),
            _replace(box, i, Interval(v, v)),
            _replace(box, i, Interval(v, b.hi, True, b.hi_open)),
        ]
    for neg in live:
        for i, a in neg:
            b = box[i]
            if isinstance(a, Interval):
                if a.covers(b):
                    continue
                # overlap with the negative box plus whatever lies either side of it
                pieces = [Interval(-INF, a.lo, True, not a.lo_open).intersect(b), a.intersect(b),
                          Interval(a.hi, INF, not a.hi_open, True).intersect(b)]
                return [_replace(box, i, p) for p in pieces if not p.empty]
            else:
                inside = b & a
                if inside != b:
                    return [_replace(box, i, inside), _replace(box, i, b - inside)]
    raise AssertionError("no split available for an uncovered box")  # pragma: no cover


def escape(box: Box | None, negs: Sequence[NegBox]) -> Box | None:
    """Return a sub-box of ``box`` disjoint from every negative box, or None.

    The result is nonempty whenever it is not None, so any point inside it
    witnesses satisfiability.
    """
    if box is None or box_is_empty(box):
        return None
    stack: list[tuple[Box, Sequence[NegBox]]] = [(box, negs)]
    while stack:
        b, ns = stack.pop()
        live = []
        covered = False
        for n in ns:
            if _meets(b, n):
                if _covered_by(b, n):
                    covered = True
                    break
                live.append(n)
        if covered:
            continue
        if not live:
            return b
        for piece in reversed(_split(b, live)):
            if not box_is_empty(piece):
                stack.append((piece, live))
    return None


def box_point(box: Box) -> tuple:
    return tuple(a.representative() if isinstance(a, Interval) else min(a) for a in box)


def box_extreme(box: Box | None, negs: Sequence[NegBox], i: int, upper: bool = True) -> float | None:
    """Supremum (or infimum) of attribute ``i`` over ``box`` minus the negatives.

    Scans elementary slabs of attribute ``i`` from the top (or bottom) and
    returns the bound of the first satisfiable slab; None if the region is
    empty.  The bound may be an unattained supremum of an open slab.
    """
    if box is None:
        return None
    b = box[i]
    pts = {b.lo, b.hi}
    for neg in negs:
        for j, a in neg:
            if j == i:
                for v in (a.lo, a.hi):
                    if b.lo < v < b.hi:
                        pts.add(v)
    pts = sorted(pts)
    slabs: list[Interval] = []
    for k, v in enumerate(pts):
        slabs.append(Interval(v, v))
        if k + 1 < len(pts):
            slabs.append(Interval(v, pts[k + 1], True, True))
    if upper:
        slabs.reverse()
    for s in slabs:
        piece_atom = b.intersect(s)
        if piece_atom.empty:
            continue
        if escape(_replace(box, i, piece_atom), negs) is not None:
            return s.hi if upper else s.lo
    return None


# ---------------------------------------------------------------------------
# public satisfiability interface


def _prepare(sc: SignedConjunction, schema: Schema) -> tuple[Box | None, list[NegBox]]:
    box: Box | None = domain_box(schema)
    for p in sc.positives:
        box = intersect_box(box, p, schema)
    if sc.clip is not None:
        box = intersect_box(box, sc.clip, schema)
    negs = [neg_box(n, schema) for n in sc.negatives if not n.empty]
    return box, negs


def find_witness(sc: SignedConjunction, schema: Schema) -> tuple | None:
    """A tuple satisfying every positive and the clip and no negative, or None."""
    box, negs = _prepare(sc, schema)
    piece = escape(box, negs)
    return None if piece is None else box_point(piece)


def is_satisfiable(sc: SignedConjunction, schema: Schema) -> bool:
    box, negs = _prepare(sc, schema)
    return escape(box, negs) is not None


def endpoint_grid(boxes: Iterable[Predicate], schema: Schema | None = None) -> dict[str, list]:
    """Representative coordinates per attribute for a set of boxes.

    Numeric attributes get every endpoint plus the midpoint between
    consecutive endpoints; categorical attributes get the values mentioned
    (and, with a schema, the whole finite domain).
    """
    numeric: dict[str, set[float]] = {}
    categorical: dict[str, set[str]] = {}
    for p in boxes:
        if p.empty:
            continue
        for name, atom in p.atoms.items():
            if isinstance(atom, Interval):
                s = numeric.setdefault(name, set())
                for v in (atom.lo, atom.hi):
                    if math.isfinite(v):
                        s.add(v)
            else:
                categorical.setdefault(name, set()).update(atom)
    if schema is not None:
        for a in schema.attributes:
            if a.kind == NUMERIC:
                s = numeric.setdefault(a.name, set())
                s.update({a.lo, a.hi})
            else:
                categorical.setdefault(a.name, set()).update(a.values)
    grid: dict[str, list] = {}
    for name, pts in numeric.items():
        pts_sorted = sorted(pts)
        if schema is not None:
            dom = schema[name]
            pts_sorted = [v for v in pts_sorted if dom.lo <= v <= dom.hi]
        reps: list[float] = []
        for k, v in enumerate(pts_sorted):
            reps.append(v)
            if k + 1 < len(pts_sorted):
                reps.append(v + (pts_sorted[k + 1] - v) / 2.0)
        grid[name] = reps
    for name, vals in categorical.items():
        grid[name] = sorted(vals)
    return grid


box_meets = _meets
box_covered_by = _covered_by
