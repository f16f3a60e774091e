"""Datasets, missing-data scenarios, PC generators and the experiment runner."""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from statistics import median
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .baselines import NONPARAMETRIC, PARAMETRIC, HistogramSynopsis, SampleEstimator
from .bounds import bound_query
from .pcs import FrequencyConstraint, PCSet, PredicateConstraint
from .predicates import TRUE, Interval, Predicate, ValueConstraint, mask
from .query import ParseError, QuerySpec, format_query, parse_timestamp
from .schema import AttributeDomain, Relation, Schema, SchemaError

BASELINES = ("corr-pc", "rand-pc", "us-1p", "us-10p", "us-1n", "us-10n", "st-1n", "st-10n", "hist")
CSV_COLUMNS = ("query_id", "sql", "truth", "baseline", "lo", "hi", "failed", "overest", "micros")


class ConfigError(ValueError):
    pass


class IngestError(ValueError):
    def __init__(self, line: int, message: str) -> None:
        super().__init__(f"line {line}: {message}")
        self.line = line


# ---------------------------------------------------------------------------
# data


def ingest_csv(path: str | Path, schema: Schema, strict: bool = True) -> tuple[Relation, int]:
    """Read a headed CSV into a relation; returns the relation and the skipped-row count.

    Numeric fields that are not numbers are read as ISO timestamps.  In
    strict mode the first bad row raises :class:`IngestError`.
    """
    rows = []
    skipped = 0
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return Relation(schema, ()), 0
        header = [h.strip() for h in header]
        missing = [n for n in schema.names if n not in header]
        if missing:
            raise IngestError(1, f"header lacks attributes {missing}")
        pos = [header.index(n) for n in schema.names]
        for rec in reader:
            line = reader.line_num
            if not rec or all(not f.strip() for f in rec):
                continue
            try:
                if len(rec) != len(header):
                    raise ValueError(f"expected {len(header)} fields, found {len(rec)}")
                tup = tuple(_convert(dom, rec[p].strip()) for dom, p in zip(schema.attributes, pos))
                for dom, v in zip(schema.attributes, tup):
                    if not dom.contains(v):
                        raise ValueError(f"{dom.name}={v!r} lies outside its domain")
            except ValueError as e:
                if strict:
                    raise IngestError(line, str(e)) from None
                skipped += 1
                continue
            rows.append(tup)
    return Relation(schema, tuple(rows), validate=False), skipped


def _convert(dom: AttributeDomain, text: str):
    if not dom.is_numeric:
        return text
    try:
        return float(text)
    except ValueError:
        pass
    try:
        return parse_timestamp(text)
    except ValueError:
        raise ValueError(f"{dom.name}: cannot read {text!r} as a number or timestamp") from None


DEVICES = tuple(f"d{k:02d}" for k in range(16))
KINDS = ("a", "b", "c")
T0 = 1_546_300_800.0  # 2019-01-01 00:00 UTC
YEAR = 365 * 86_400.0


def synthetic_dataset(rows: int = 100_000, seed: int = 7) -> Relation:
    """Skewed log-normal ``value`` correlated with device and time of year."""
    rng = np.random.default_rng(seed)
    utc = np.sort(rng.uniform(T0, T0 + YEAR, rows)).round()
    dev = rng.integers(0, len(DEVICES), rows)
    kind = rng.choice(len(KINDS), size=rows, p=[0.6, 0.3, 0.1])
    season = np.sin(2 * math.pi * (utc - T0) / YEAR)
    mu = 2.0 + 0.08 * dev + 0.5 * season + 0.4 * kind
    value = np.round(rng.lognormal(mu, 0.6), 2)
    schema = Schema.of(
        AttributeDomain.numeric("value", 0.0, float(math.ceil(value.max()))),
        AttributeDomain.numeric("utc", T0, T0 + YEAR),
        AttributeDomain.categorical("device", DEVICES),
        AttributeDomain.categorical("kind", KINDS),
    )
    cols = {
        "value": value,
        "utc": utc,
        "device": np.array(DEVICES, dtype=object)[dev],
        "kind": np.array(KINDS, dtype=object)[kind],
    }
    return Relation.from_columns(schema, cols, validate=False)


@dataclass
class Scenario:
    dataset: Relation
    missing: np.ndarray  # sorted row indices
    fraction: float
    mode: str
    seed: int

    @property
    def missing_relation(self) -> Relation:
        return self.dataset.take(self.missing)

    @property
    def observed_relation(self) -> Relation:
        keep = np.ones(len(self.dataset), dtype=bool)
        keep[self.missing] = False
        return self.dataset.take(np.nonzero(keep)[0])


def make_scenario(dataset: Relation, fraction: float, mode: str = "correlated-top", seed: int = 0,
                  attr: str | None = None) -> Scenario:
    if not 0 <= fraction < 1:
        raise ValueError("missing fraction must lie in [0, 1)")
    n = len(dataset)
    k = int(round(fraction * n))
    if mode == "correlated-top":
        name = attr or next(a.name for a in dataset.schema.attributes if a.is_numeric)
        v = dataset.columns[name]
        order = np.lexsort((np.arange(n), -v))  # largest values first, ties by row index
        idx = np.sort(order[:k])
    elif mode == "random":
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(n, size=k, replace=False)) if k else np.zeros(0, dtype=int)
    else:
        raise ValueError(f"unknown removal mode {mode!r}")
    return Scenario(dataset, idx.astype(int), fraction, mode, seed)


# ---------------------------------------------------------------------------
# PC generation


def _truthful(pid: str, psi: Predicate, rel: Relation, agg: str, m: np.ndarray) -> PredicateConstraint:
    vals = rel.columns[agg][m]
    count = int(m.sum())
    nu = {agg: (float(vals.min()), float(vals.max()))} if count else {}
    return PredicateConstraint(pid, psi, ValueConstraint(nu), FrequencyConstraint(count, count))


def gen_corr_pc(missing: Relation, attrs: Sequence[str], n: int, agg: str = "value") -> PCSet:
    """Equi-depth partition of the schema domain over ``attrs`` into about ``n`` boxes.

    Splits are made recursively at empirical quantiles, cycling through the
    attributes; halves are ``[lo, cut)`` and ``[cut, hi]`` so the boxes tile
    the domain.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    schema = missing.schema
    for a in attrs:
        if not schema[a].is_numeric:
            raise SchemaError(f"partition attribute {a!r} must be numeric")
    cols = missing.columns
    leaves: list[dict[str, Interval]] = []
    root = {a: Interval.closed(schema[a].lo, schema[a].hi) for a in attrs}
    stack = [(root, np.arange(len(missing)), n, 0)]
    while stack:
        box, idx, parts, depth = stack.pop()
        if parts == 1 or idx.size == 0:
            leaves.append(box)
            continue
        left_parts = parts // 2
        done = False
        for shift in range(len(attrs)):
            a = attrs[(depth + shift) % len(attrs)]
            iv = box[a]
            v = np.sort(cols[a][idx])
            cut = float(v[min(len(v) - 1, int(len(v) * left_parts / parts))])
            if not (iv.lo < cut < iv.hi or (cut == iv.hi and iv.lo < cut and not iv.hi_open)):
                continue
            if cut <= iv.lo:
                continue
            lo_box = dict(box)
            hi_box = dict(box)
            lo_box[a] = Interval(iv.lo, cut, iv.lo_open, True)
            hi_box[a] = Interval(cut, iv.hi, False, iv.hi_open)
            col = cols[a][idx]
            stack.append((hi_box, idx[col >= cut], parts - left_parts, depth + 1))
            stack.append((lo_box, idx[col < cut], left_parts, depth + 1))
            done = True
            break
        if not done:
            leaves.append(box)
    pcs = []
    for k, box in enumerate(sorted(leaves, key=lambda b: tuple((b[a].lo, b[a].lo_open) for a in attrs))):
        psi = Predicate(box)
        pcs.append(_truthful(f"corr{k}", psi, missing, agg, mask(psi, cols, len(missing))))
    return PCSet(schema, tuple(pcs))


def gen_rand_pc(missing: Relation, attrs: Sequence[str], n: int, seed: int, agg: str = "value") -> PCSet:
    """``n`` random boxes plus one enclosing PC, all with truthful value ranges and counts."""
    rng = np.random.default_rng(seed)
    schema = missing.schema
    cols = missing.columns
    pcs = []
    for k in range(n):
        atoms: dict[str, Any] = {}
        for a in attrs:
            dom = schema[a]
            if dom.is_numeric:
                lo, hi = np.sort(rng.uniform(dom.lo, dom.hi, 2))
                atoms[a] = Interval.closed(float(lo), float(hi))
            else:
                size = int(rng.integers(1, len(dom.values) + 1))
                atoms[a] = frozenset(rng.choice(np.array(dom.values, dtype=object), size, replace=False))
        psi = Predicate(atoms)
        pcs.append(_truthful(f"rand{k}", psi, missing, agg, mask(psi, cols, len(missing))))
    pcs.append(_truthful("all", TRUE, missing, agg, np.ones(len(missing), dtype=bool)))
    return PCSet(schema, tuple(pcs))


def inject_noise(pcset: PCSet, sigma: float, seed: int) -> PCSet:
    """Perturb every value-range endpoint by Gaussian noise of ``sigma`` times the attribute's range."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if sigma == 0:
        return pcset
    rng = np.random.default_rng(seed)
    schema = pcset.schema
    out = []
    for pc in pcset:
        ranges = {}
        for name, (l, h) in pc.nu.ranges.items():
            dom = schema[name]
            scale = sigma * (dom.hi - dom.lo)
            l2, h2 = (float(np.clip(x + rng.normal(0.0, 1.0) * scale, dom.lo, dom.hi)) for x in (l, h))
            ranges[name] = (min(l2, h2), max(l2, h2))
        out.append(PredicateConstraint(pc.id, pc.psi, ValueConstraint(ranges), pc.kappa))
    return PCSet(schema, tuple(out))


# ---------------------------------------------------------------------------
# queries and metrics


def random_queries(schema: Schema, count: int, aggregates: Sequence[str], attrs: Sequence[str],
                   seed: int, target: str = "value", relation: str = "data") -> list[QuerySpec]:
    """Random conjunctive range queries; each attribute is constrained with probability 0.6, and at least one always is."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        agg = str(aggregates[int(rng.integers(len(aggregates)))])
        atoms: dict[str, Any] = {}
        chosen = [a for a in attrs if rng.random() < 0.6] or [attrs[int(rng.integers(len(attrs)))]]
        for a in chosen:
            dom = schema[a]
            if dom.is_numeric:
                lo, hi = np.sort(rng.uniform(dom.lo, dom.hi, 2))
                atoms[a] = Interval.closed(float(np.round(lo, 2)), float(np.round(hi, 2)))
            else:
                atoms[a] = frozenset([str(dom.values[int(rng.integers(len(dom.values)))])])
        out.append(QuerySpec(agg, "*" if agg == "COUNT" else target, (relation,), Predicate(atoms)))
    return out


def true_value(rel: Relation, spec: QuerySpec) -> float:
    m = mask(spec.predicate, rel.columns, len(rel))
    if spec.aggregate == "COUNT":
        return float(m.sum())
    if spec.aggregate == "SUM":
        return float(rel.columns[spec.target][m].sum())
    raise ValueError("metrics are computed for SUM and COUNT")


def failed(truth: float, lo: float, hi: float) -> bool:
    if math.isnan(lo) or math.isnan(hi):
        return True
    tol = 1e-9 * max(1.0, abs(truth))
    return not (lo - tol <= truth <= hi + tol)


@dataclass
class BaselineMetrics:
    failure_rate: float
    median_overestimation: float | None
    queries: int
    mean_micros: float
    median_micros: float

    def to_json(self) -> dict:
        return {
            "failure_rate": self.failure_rate,
            "median_overestimation": self.median_overestimation,
            "queries": self.queries,
            "mean_micros": self.mean_micros,
            "median_micros": self.median_micros,
        }


@dataclass
class MetricsReport:
    baselines: dict[str, BaselineMetrics]
    rows: list[dict] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"baselines": {k: v.to_json() for k, v in self.baselines.items()},
                "queries": len({r["query_id"] for r in self.rows})}

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
            w.writeheader()
            for r in self.rows:
                w.writerow({k: _csv_cell(r[k]) for k in CSV_COLUMNS})


def _csv_cell(v):
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    if isinstance(v, bool):
        return int(v)
    return v


# ---------------------------------------------------------------------------
# experiment runner

DEFAULT_CONFIG: dict[str, Any] = {
    "dataset": {"kind": "synthetic", "rows": 100_000, "seed": 7},
    "scenario": {"fraction": 0.1, "mode": "correlated-top", "seed": 0, "attr": "value"},
    "baselines": ["corr-pc", "rand-pc", "us-1p", "us-10p", "us-1n", "us-10n", "st-1n", "st-10n", "hist"],
    "queries": {"count": 1000, "aggregates": ["SUM", "COUNT"], "attributes": ["utc", "device"], "seed": 3},
    "pc": {"agg": "value", "corr_attrs": ["utc"], "corr_n": 64, "rand_attrs": ["utc"], "rand_n": 8, "seed": 11},
    "histogram": {"buckets": 64},
    "sampling": {"seed": 5, "confidence": 0.99},
    "noise": {"sigma": 0.0, "seed": 13},
    "record_timing": True,
}


def _merge(base: Mapping, override: Mapping) -> dict:
    out = dict(base)
    for k, v in override.items():
        if isinstance(v, Mapping) and isinstance(out.get(k), Mapping):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(obj: Mapping[str, Any] | str | Path) -> dict:
    if not isinstance(obj, Mapping):
        obj = json.loads(Path(obj).read_text())
    cfg = _merge(DEFAULT_CONFIG, obj)
    unknown = [b for b in cfg["baselines"] if b not in BASELINES]
    if unknown:
        raise ConfigError(f"unknown baselines {unknown}; choose from {list(BASELINES)}")
    if not 0 <= cfg["scenario"]["fraction"] < 1:
        raise ConfigError("scenario.fraction must lie in [0, 1)")
    if cfg["queries"]["count"] < 0:
        raise ConfigError("queries.count must be nonnegative")
    bad = [a for a in cfg["queries"]["aggregates"] if a not in ("SUM", "COUNT")]
    if bad:
        raise ConfigError(f"experiments compare SUM and COUNT only, got {bad}")
    return cfg


def _dataset(cfg: Mapping) -> Relation:
    d = cfg["dataset"]
    if d.get("kind", "synthetic") == "synthetic":
        return synthetic_dataset(int(d.get("rows", 100_000)), int(d.get("seed", 7)))
    if "csv" in d:
        schema = Schema.from_json(d["schema"])
        rel, _ = ingest_csv(d["csv"], schema, strict=bool(d.get("strict", True)))
        return rel
    raise ConfigError("dataset needs kind=synthetic or a csv path with a schema")


class _Estimators:
    """Per-scenario estimator objects, built lazily per baseline."""

    def __init__(self, cfg: Mapping, scenario: Scenario) -> None:
        self.cfg = cfg
        self.missing = scenario.missing_relation
        self.observed = scenario.observed_relation
        self._cache: dict[str, Any] = {}

    def get(self, name: str):
        if name in self._cache:
            return self._cache[name]
        cfg, missing = self.cfg, self.missing
        pc = cfg["pc"]
        samp = cfg["sampling"]
        M = len(missing)
        if name == "corr-pc":
            obj = gen_corr_pc(missing, pc["corr_attrs"], int(pc["corr_n"]), pc["agg"])
        elif name == "rand-pc":
            obj = gen_rand_pc(missing, pc["rand_attrs"], int(pc["rand_n"]), int(pc["seed"]), pc["agg"])
        elif name == "hist":
            obj = HistogramSynopsis.build(missing, pc["agg"], int(cfg["histogram"]["buckets"]),
                                          cfg["queries"]["attributes"])
        else:
            scheme, size = name.split("-")
            frac = 0.01 if size.startswith("1") and not size.startswith("10") else 0.10
            kind = PARAMETRIC if size.endswith("p") else NONPARAMETRIC
            n = max(1, int(round(frac * M)))
            if scheme == "us":
                obj = SampleEstimator.uniform(missing, n, int(samp["seed"]), kind, float(samp["confidence"]))
            else:
                strata_pcs = gen_corr_pc(missing, pc["corr_attrs"], int(pc["corr_n"]), pc["agg"])
                obj = SampleEstimator.stratified(missing, [c.psi for c in strata_pcs], n, int(samp["seed"]),
                                                 kind, float(samp["confidence"]))
        if name in ("corr-pc", "rand-pc") and cfg["noise"]["sigma"] > 0:
            obj = inject_noise(obj, float(cfg["noise"]["sigma"]), int(cfg["noise"]["seed"]))
        self._cache[name] = obj
        return obj

    def interval(self, name: str, spec: QuerySpec) -> tuple[float, float]:
        """Interval for the full-table answer: exact observed part plus the missing part's range."""
        est = self.get(name)
        if name in ("corr-pc", "rand-pc"):
            res = bound_query(spec, est, self.observed)
            if not res.ok:
                return math.nan, math.nan
            return float(res.lower), float(res.upper)
        base = true_value(self.observed, spec)
        if name == "hist":
            lo, hi = est.bound(spec)
        else:
            iv = est.interval_for(spec)
            lo, hi = iv.lower, iv.upper
        return base + lo, base + hi


def run_experiment(config: Mapping[str, Any] | str | Path, csv_path: str | Path | None = None) -> MetricsReport:
    cfg = load_config(config)
    data = _dataset(cfg)
    sc = cfg["scenario"]
    scenario = make_scenario(data, float(sc["fraction"]), sc["mode"], int(sc["seed"]), sc.get("attr"))
    est = _Estimators(cfg, scenario)
    qc = cfg["queries"]
    queries = random_queries(data.schema, int(qc["count"]), qc["aggregates"], qc["attributes"],
                             int(qc["seed"]), cfg["pc"]["agg"])
    timing = bool(cfg.get("record_timing", True))
    rows: list[dict] = []
    per: dict[str, list[dict]] = {b: [] for b in cfg["baselines"]}
    for qid, spec in enumerate(queries):
        truth = true_value(data, spec)
        sql = format_query(spec)
        for b in cfg["baselines"]:
            t0 = time.perf_counter()
            lo, hi = est.interval(b, spec)
            micros = int((time.perf_counter() - t0) * 1e6) if timing else 0
            fail = failed(truth, lo, hi)
            over = hi / truth if truth > 0 and not math.isnan(hi) else math.nan
            row = {"query_id": qid, "sql": sql, "truth": truth, "baseline": b, "lo": lo, "hi": hi,
                   "failed": fail, "overest": over, "micros": micros}
            rows.append(row)
            per[b].append(row)
    metrics = {}
    for b, rs in per.items():
        overs = [r["overest"] for r in rs if not math.isnan(r["overest"])]
        micros = [r["micros"] for r in rs]
        metrics[b] = BaselineMetrics(
            failure_rate=sum(r["failed"] for r in rs) / len(rs) if rs else 0.0,
            median_overestimation=float(median(overs)) if overs else None,
            queries=len(rs),
            mean_micros=float(np.mean(micros)) if micros else 0.0,
            median_micros=float(median(micros)) if micros else 0.0,
        )
    report = MetricsReport(metrics, rows, cfg)
    if csv_path is not None:
        report.write_csv(csv_path)
    return report
