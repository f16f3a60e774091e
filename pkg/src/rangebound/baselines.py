"""Sampling and histogram estimators used as comparison points.

Sampling estimators draw rows from the missing data (whose size ``M`` is
known) and scale sample means up to a SUM or COUNT over the query predicate.
Histograms summarise the missing rows' aggregate attribute in equi-width
buckets, with marginal histograms for the other predicate attributes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Sequence

import numpy as np

from .pcs import PCSet, PredicateConstraint
from .predicates import Interval, Predicate, mask
from .query import QuerySpec
from .schema import AttributeDomain, Relation, Schema

UNIFORM = "uniform"
STRATIFIED = "stratified"
PARAMETRIC = "parametric"
NONPARAMETRIC = "nonparametric"


@dataclass(frozen=True)
class SampleInterval:
    lower: float
    upper: float
    estimate: float
    undefined: bool = False


def z_quantile(confidence: float) -> float:
    """Two-sided standard normal critical value."""
    if not 0 < confidence < 1:
        raise ValueError("confidence must lie in (0, 1)")
    return NormalDist().inv_cdf(0.5 + confidence / 2.0)


def _draw(rng: np.random.Generator, population: int, n: int) -> np.ndarray:
    n = min(n, population)
    if n <= 0:
        return np.zeros(0, dtype=int)
    return np.sort(rng.choice(population, size=n, replace=False))


def _fpc(N: int, n: int) -> float:
    return math.sqrt((N - n) / (N - 1)) if N > 1 else 0.0


@dataclass
class _Stratum:
    size: int  # rows of the missing data in this stratum
    rows: Relation  # sampled rows


@dataclass
class SampleEstimator:
    """Sample of the missing rows with the stratum structure it was drawn under."""

    strata: list[_Stratum]
    missing_count: int
    scheme: str = UNIFORM
    interval: str = PARAMETRIC
    confidence: float = 0.99

    def __post_init__(self) -> None:
        if not 0 < self.confidence < 1:
            raise ValueError("confidence must lie in (0, 1)")
        if self.scheme not in (UNIFORM, STRATIFIED):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.interval not in (PARAMETRIC, NONPARAMETRIC):
            raise ValueError(f"unknown interval kind {self.interval!r}")

    @property
    def sample_size(self) -> int:
        return sum(len(s.rows) for s in self.strata)

    @classmethod
    def uniform(cls, missing: Relation, n: int, seed: int, interval: str = PARAMETRIC,
                confidence: float = 0.99) -> SampleEstimator:
        rng = np.random.default_rng(seed)
        idx = _draw(rng, len(missing), n)
        return cls([_Stratum(len(missing), missing.take(idx))], len(missing), UNIFORM, interval, confidence)

    @classmethod
    def stratified(cls, missing: Relation, predicates: Sequence[Predicate], n: int, seed: int,
                   interval: str = NONPARAMETRIC, confidence: float = 0.99) -> SampleEstimator:
        """Strata are the first predicate each row satisfies (unmatched rows form a last stratum).

        Sample sizes are proportional to stratum size, at least one per nonempty stratum.
        """
        rng = np.random.default_rng(seed)
        N = len(missing)
        label = np.full(N, len(predicates), dtype=int)
        for k in range(len(predicates) - 1, -1, -1):
            label[mask(predicates[k], missing.columns, N)] = k
        strata = []
        for k in range(len(predicates) + 1):
            members = np.nonzero(label == k)[0]
            if members.size == 0:
                continue
            n_h = max(1, int(round(n * members.size / N))) if N else 0
            pick = members[_draw(rng, members.size, n_h)]
            strata.append(_Stratum(int(members.size), missing.take(pick)))
        return cls(strata, N, STRATIFIED, interval, confidence)

    def _terms(self, stratum: _Stratum, query: QuerySpec) -> tuple[np.ndarray, bool]:
        rows = stratum.rows
        m = mask(query.predicate, rows.columns, len(rows))
        if query.aggregate == "COUNT":
            y = m.astype(float)
        elif query.aggregate == "SUM":
            y = np.where(m, rows.columns[query.target], 0.0) if len(rows) else np.zeros(0)
        else:
            raise ValueError("sampling estimators support SUM and COUNT")
        return y, bool(m.any())

    def interval_for(self, query: QuerySpec) -> SampleInterval:
        delta = 1.0 - self.confidence
        est = 0.0
        var = 0.0
        spread = 0.0
        matched = False
        for s in self.strata:
            n = len(s.rows)
            if n == 0:
                continue
            y, hit = self._terms(s, query)
            matched |= hit
            N = s.size
            est += N * float(y.mean())
            f2 = _fpc(N, n) ** 2
            sd = float(y.std(ddof=1)) if n > 1 else 0.0
            var += N * N * sd * sd / n * f2
            r = float(y.max() - y.min())
            spread += N * N * r * r / n * f2
        if not matched:
            return SampleInterval(math.nan, math.nan, math.nan, True)
        if self.interval == PARAMETRIC:
            half = z_quantile(self.confidence) * math.sqrt(var)
        else:
            half = math.sqrt(math.log(2.0 / delta) * spread / 2.0)
        return SampleInterval(est - half, est + half, est)


def sample_interval(estimator: SampleEstimator, query: QuerySpec) -> SampleInterval:
    return estimator.interval_for(query)


# ---------------------------------------------------------------------------
# histograms


def _bucket(edges: np.ndarray, k: int) -> Interval:
    last = k == len(edges) - 2
    return Interval(float(edges[k]), float(edges[k + 1]), False, not last)


def _equi_width(values: np.ndarray, buckets: int) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        return np.array([lo, hi]), np.array([values.size])
    edges = np.linspace(lo, hi, buckets + 1)
    idx = np.clip(np.searchsorted(edges, values, side="right") - 1, 0, buckets - 1)
    return edges, np.bincount(idx, minlength=buckets)


@dataclass
class HistogramSynopsis:
    attr: str
    edges: np.ndarray
    counts: np.ndarray
    missing_count: int
    marginals: dict[str, tuple] = field(default_factory=dict)  # attr -> (edges, counts) or {value: count}

    @classmethod
    def build(cls, missing: Relation, attr: str, buckets: int, secondary: Sequence[str] = ()) -> HistogramSynopsis:
        if buckets < 1:
            raise ValueError("a histogram needs at least one bucket")
        cols = missing.columns
        M = len(missing)
        if M == 0:
            return cls(attr, np.zeros(0), np.zeros(0, dtype=int), 0)
        edges, counts = _equi_width(cols[attr], buckets)
        marg: dict[str, tuple] = {}
        for a in secondary:
            if a == attr:
                continue
            if missing.schema[a].is_numeric:
                marg[a] = _equi_width(cols[a], buckets)
            else:
                vals, cnt = np.unique(cols[a].astype(str), return_counts=True)
                marg[a] = ({str(v): int(c) for v, c in zip(vals, cnt)},)
        return cls(attr, edges, counts.astype(int), M, marg)

    @property
    def buckets(self) -> list[Interval]:
        return [_bucket(self.edges, k) for k in range(len(self.counts))]

    def _fraction(self, attr: str, atom) -> tuple[float, float]:
        """Bounds on the fraction of missing rows whose ``attr`` satisfies ``atom``."""
        M = self.missing_count
        if attr not in self.marginals:
            return 0.0, 1.0  # nothing known about this attribute
        entry = self.marginals[attr]
        if len(entry) == 1:
            counts = entry[0]
            c = sum(counts.get(v, 0) for v in atom)
            return c / M, c / M
        edges, counts = entry
        inside = overlap = 0
        for k, c in enumerate(counts):
            b = _bucket(edges, k)
            if atom.intersect(b).empty:
                continue
            overlap += c
            if atom.covers(b):
                inside += c
        return inside / M, overlap / M

    def bound(self, query: QuerySpec) -> tuple[float, float]:
        agg = query.aggregate
        if agg not in ("SUM", "COUNT"):
            raise ValueError("the histogram estimator supports SUM and COUNT")
        pred = query.predicate
        if pred.empty or self.missing_count == 0:
            return 0.0, 0.0
        value_atom = pred.atoms.get(self.attr, Interval())
        f_lo = f_hi = 1.0
        for a, atom in pred.atoms.items():
            if a == self.attr:
                continue
            lo, hi = self._fraction(a, atom)
            f_lo *= lo
            f_hi *= hi
        lower = upper = 0.0
        for b, c in zip(self.buckets, self.counts):
            if c == 0:
                continue
            part = value_atom.intersect(b)
            if part.empty:
                continue
            n_lo = math.floor(c * f_lo + 1e-9) if value_atom.covers(b) else 0
            n_hi = min(int(c), math.ceil(c * f_hi - 1e-9))
            if agg == "COUNT":
                l = h = 1.0
            else:
                l, h = part.lo, part.hi
            upper += n_hi * h if h >= 0 else n_lo * h
            lower += n_lo * l if l >= 0 else n_hi * l
        return lower, upper

    def as_pcset(self) -> PCSet:
        """One PC per bucket: predicate and value range both the bucket, count exact."""
        schema = Schema.of(AttributeDomain.numeric(self.attr, float(self.edges[0]), float(self.edges[-1])))
        pcs = []
        for k, (b, c) in enumerate(zip(self.buckets, self.counts)):
            pcs.append(PredicateConstraint.make(f"b{k}", Predicate({self.attr: b}), {self.attr: (b.lo, b.hi)},
                                                int(c), int(c)))
        return PCSet(schema, tuple(pcs))


def histogram_bound(synopsis: HistogramSynopsis, query: QuerySpec) -> tuple[float, float]:
    return synopsis.bound(query)
