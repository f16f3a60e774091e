"""Result ranges for aggregates over natural joins of constrained relations.

Two upper bounds are offered.  The naive bound multiplies PCs across
relations and bounds the joined table as if it were a single relation.  The
cover bound weights per-relation COUNT/SUM maxima by a fractional edge cover
of the join hypergraph, chosen by a small LP to minimise the log of the
product.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .bounds import ResultRange, bound_query
from .optim import LinearProgram, Status, solve_lp
from .pcs import FrequencyConstraint, PCSet, PredicateConstraint, merge_domains
from .predicates import ValueConstraint, conjoin
from .query import QuerySpec
from .schema import Schema, SchemaError


@dataclass(frozen=True)
class JoinRelation:
    name: str
    pcset: PCSet

    @property
    def attributes(self) -> frozenset[str]:
        return frozenset(self.pcset.schema.names)


@dataclass(frozen=True)
class JoinGraph:
    relations: tuple[JoinRelation, ...]

    def __post_init__(self) -> None:
        if not self.relations:
            raise ValueError("a join graph needs at least one relation")
        names = [r.name for r in self.relations]
        if len(set(names)) != len(names):
            raise ValueError("relation names must be unique")

    @property
    def attributes(self) -> list[str]:
        seen: list[str] = []
        for r in self.relations:
            for a in r.pcset.schema.names:
                if a not in seen:
                    seen.append(a)
        return seen

    def containing(self, attr: str) -> list[int]:
        return [i for i, r in enumerate(self.relations) if attr in r.attributes]

    def join_attributes(self) -> list[str]:
        return [a for a in self.attributes if len(self.containing(a)) > 1]

    def merged_schema(self) -> Schema:
        doms: dict[str, Any] = {}
        for r in self.relations:
            for d in r.pcset.schema.attributes:
                doms[d.name] = merge_domains(doms[d.name], d) if d.name in doms else d
        return Schema(tuple(doms[a] for a in self.attributes))

    def aggregate_relation(self, attr: str) -> int:
        holders = self.containing(attr)
        if len(holders) != 1:
            raise SchemaError(f"aggregate attribute {attr!r} must belong to exactly one relation, "
                              f"found {len(holders)}")
        return holders[0]

    def to_json(self) -> dict:
        return {"relations": [{"name": r.name, "pcs": r.pcset.to_json()} for r in self.relations]}

    @classmethod
    def from_json(cls, obj: Mapping[str, Any], base: Path | None = None) -> JoinGraph:
        rels = []
        for r in obj["relations"]:
            if "pcs" in r:
                pcs = PCSet.from_json(r["pcs"])
            else:
                path = Path(r["pcs_file"])
                pcs = PCSet.load(path if base is None or path.is_absolute() else base / path)
            rels.append(JoinRelation(r["name"], pcs))
        return cls(tuple(rels))

    @classmethod
    def load(cls, path: str | Path) -> JoinGraph:
        p = Path(path)
        return cls.from_json(json.loads(p.read_text()), p.parent)


@dataclass(frozen=True)
class CoverVector:
    c: tuple[float, ...]

    def covers(self, graph: JoinGraph, tol: float = 1e-7) -> bool:
        return all(sum(self.c[i] for i in graph.containing(a)) >= 1 - tol for a in graph.attributes)


@dataclass(frozen=True)
class RelationSummary:
    count_upper: float
    sum_upper: float | None = None


# ---------------------------------------------------------------------------
# naive direct-product bound


def _product(a: PredicateConstraint, b: PredicateConstraint, shared: bool) -> PredicateConstraint | None:
    psi = conjoin(a.psi, b.psi)
    if psi.empty:
        return None
    ranges = dict(a.nu.ranges)
    contradictory = False
    for name, (l, h) in b.nu.ranges.items():
        if name in ranges:
            l0, h0 = ranges[name]
            l, h = max(l, l0), min(h, h0)
            if l > h:
                contradictory = True
                break
        ranges[name] = (l, h)
    if contradictory:
        # joined tuples here would violate one side's value constraint
        return PredicateConstraint(f"{a.id}*{b.id}", psi, ValueConstraint(), FrequencyConstraint(0, 0))
    # an equi-join can match no pairs at all, so lower counts only multiply for cross products
    kl = 0 if shared else a.kappa.kl * b.kappa.kl
    return PredicateConstraint(f"{a.id}*{b.id}", psi, ValueConstraint(ranges),
                               FrequencyConstraint(kl, a.kappa.ku * b.kappa.ku))


def product_pcset(graph: JoinGraph) -> PCSet:
    """Left-fold of pairwise products, dropping products with empty predicates."""
    schema = graph.merged_schema()
    acc = list(graph.relations[0].pcset.constraints)
    seen = set(graph.relations[0].attributes)
    for rel in graph.relations[1:]:
        shared = bool(seen & rel.attributes)
        nxt = []
        for a in acc:
            for b in rel.pcset.constraints:
                p = _product(a, b, shared)
                if p is not None:
                    nxt.append(p)
        acc = nxt
        seen |= rel.attributes
        if not acc:
            break
    if not acc:
        # no pair of predicates is compatible: the join is necessarily empty
        return PCSet(schema, (PredicateConstraint.make("empty-join", ku=0),))
    return PCSet(schema, tuple(acc))


def naive_join_bound(graph: JoinGraph, spec: QuerySpec, **kwargs) -> ResultRange:
    pcs = product_pcset(graph)
    res = bound_query(QuerySpec(spec.aggregate, spec.target, spec.relations, spec.predicate), pcs, **kwargs)
    res.diagnostics["products"] = len(pcs)
    return res


# ---------------------------------------------------------------------------
# fractional-edge-cover bound


def fec_lp(graph: JoinGraph, terms: list[float], pinned: int | None = None) -> CoverVector:
    """Cover minimising ``sum_i c_i log(terms[i])``; ``pinned`` fixes that relation's weight to 1."""
    k = len(graph.relations)
    if any(t <= 0 for t in terms):
        raise ValueError("cover weights need positive per-relation terms")
    obj = np.array([0.0 if i == pinned else math.log(t) for i, t in enumerate(terms)])
    rows, rhs = [], []
    for a in graph.attributes:
        holders = graph.containing(a)
        if not holders:  # pragma: no cover - attributes come from relations
            raise ValueError(f"attribute {a!r} is covered by no relation")
        r = np.zeros(k)
        r[holders] = 1.0
        rows.append(r)
        rhs.append(1.0)
    lo = np.zeros(k)
    hi = np.full(k, math.inf)
    if pinned is not None:
        lo[pinned] = hi[pinned] = 1.0
    # weights above 1 never help: each attribute needs total weight only 1
    hi = np.minimum(hi, 1.0)
    out = solve_lp(LinearProgram(obj, "min", np.array(rows), [">="] * len(rows), np.array(rhs), lo, hi))
    if out.status is not Status.OPTIMAL:  # pragma: no cover - all-ones is feasible
        raise RuntimeError(f"cover LP ended with status {out.status.value}")
    c = np.clip(out.x, 0.0, 1.0)
    return CoverVector(tuple(float(v) for v in c))


def summarize(graph: JoinGraph, spec: QuerySpec, agg_index: int | None, **kwargs) -> list[RelationSummary]:
    """Per-relation COUNT maxima (and the SUM maximum of the aggregate relation)."""
    out = []
    for i, rel in enumerate(graph.relations):
        pred = spec.predicate.restrict(rel.attributes)
        cnt = bound_query(QuerySpec("COUNT", "*", (rel.name,), pred), rel.pcset, **kwargs)
        if not cnt.ok:
            raise _SummaryError(cnt)
        s = None
        if i == agg_index:
            r = bound_query(QuerySpec("SUM", spec.target, (rel.name,), pred), rel.pcset, **kwargs)
            if not r.ok:
                raise _SummaryError(r)
            s = r.upper
        out.append(RelationSummary(cnt.upper, s))
    return out


class _SummaryError(Exception):
    def __init__(self, result: ResultRange) -> None:
        super().__init__(result.status.value)
        self.result = result


def _may_be_negative(rel: JoinRelation, attr: str) -> bool:
    dom = rel.pcset.schema[attr]
    return any(pc.nu.bounds(rel.pcset.schema, attr)[0] < 0 for pc in rel.pcset) or (
        dom.lo < 0 and not all(attr in pc.nu.ranges for pc in rel.pcset))


def gwe_bound(graph: JoinGraph, spec: QuerySpec, naive: ResultRange | None = None, **kwargs) -> ResultRange:
    """Cover-weighted upper bound, capped by the naive bound; lower side from the naive bound."""
    agg = spec.aggregate
    if agg not in ("SUM", "COUNT"):
        raise ValueError("the cover bound handles SUM and COUNT")
    if naive is None:
        naive = naive_join_bound(graph, spec, **kwargs)
    if not naive.ok:
        return naive
    agg_index = None if agg == "COUNT" else graph.aggregate_relation(spec.target)
    diag: dict[str, Any] = {"naive_upper": naive.upper, "naive_lower": naive.lower}
    if agg_index is not None and _may_be_negative(graph.relations[agg_index], spec.target):
        diag["fallback"] = "aggregate attribute may be negative"
        return ResultRange(naive.lower, naive.upper, naive.status, naive.witness_upper, naive.witness_lower,
                           {**naive.diagnostics, **diag})
    try:
        summaries = summarize(graph, spec, agg_index, **kwargs)
    except _SummaryError as e:
        return e.result
    counts = [s.count_upper for s in summaries]
    if any(c <= 0 for c in counts):
        gwe = 0.0
        cover = None
    elif agg == "COUNT":
        cover = fec_lp(graph, counts)
        gwe = math.prod(c ** w for c, w in zip(counts, cover.c))
    else:
        sum_a = summaries[agg_index].sum_upper
        terms = [max(c, 1.0) for c in counts]
        cover = fec_lp(graph, terms, pinned=agg_index)
        gwe = max(sum_a, 0.0) * math.prod(c ** w for i, (c, w) in enumerate(zip(counts, cover.c))
                                          if i != agg_index)
    diag.update({"gwe_upper": gwe, "cover": None if cover is None else list(cover.c),
                 "count_upper": counts})
    upper = min(gwe, naive.upper)
    lower = min(naive.lower, upper)
    return ResultRange(lower, upper, naive.status, {}, naive.witness_lower, diag)


def join_bound(graph: JoinGraph, spec: QuerySpec, method: str = "best", **kwargs) -> ResultRange:
    if method == "naive" or spec.aggregate not in ("SUM", "COUNT"):
        return naive_join_bound(graph, spec, **kwargs)
    if method in ("gwe", "best"):
        return gwe_bound(graph, spec, **kwargs)
    raise ValueError(f"unknown join method {method!r}")

