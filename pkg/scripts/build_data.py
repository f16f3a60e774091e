"""Regenerate the small instances shipped under data/.

    python3 scripts/build_data.py [--out data]
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

import numpy as np

from rangebound.pcs import PCSet, PredicateConstraint
from rangebound.predicates import Interval, Predicate
from rangebound.query import parse_timestamp
from rangebound.schema import AttributeDomain, Schema

NOV11 = parse_timestamp("2019-11-11T00:00:00Z")
NOV12 = parse_timestamp("2019-11-12T00:00:00Z")
NOV13 = parse_timestamp("2019-11-13T00:00:00Z")
BRANCHES = ("New York", "Chicago", "Trenton")


def sales_schema(hi: float = NOV13 - 1) -> Schema:
    return Schema.of(
        AttributeDomain.numeric("utc", NOV11, hi),
        AttributeDomain.categorical("branch", BRANCHES),
        AttributeDomain.numeric("price", 0.0, 1000.0),
    )


def day(lo: float, hi: float) -> Predicate:
    return Predicate({"utc": Interval(lo, hi, False, True)})


def sales_disjoint() -> PCSet:
    return PCSet(sales_schema(), (
        PredicateConstraint.make("t1", day(NOV11, NOV12), {"price": (0.99, 129.99)}, 50, 100),
        PredicateConstraint.make("t2", day(NOV12, NOV13), {"price": (0.99, 149.99)}, 50, 100),
    ))


def sales_overlap() -> PCSet:
    return PCSet(sales_schema(), (
        PredicateConstraint.make("t1", day(NOV11, NOV12), {"price": (0.99, 129.99)}, 50, 100),
        PredicateConstraint.make("t2", day(NOV11, NOV13), {"price": (0.99, 149.99)}, 75, 125),
    ))


def nonclosed() -> PCSet:
    """Only the first day is constrained, so the second day's tuples are uncovered."""
    return PCSet(sales_schema(), (
        PredicateConstraint.make("t1", day(NOV11, NOV12), {"price": (0.99, 129.99)}, 50, 100),
    ))


def grid20(seed: int = 20, n: int = 20, points: int = 60) -> PCSet:
    """Overlapping 2-D boxes on the integer grid 0..8; the first PC covers everything.

    Windows and value ranges are loosened from a hidden point set, so the
    instance is feasible by construction.
    """
    rng = np.random.default_rng(seed)
    schema = Schema.of(
        AttributeDomain.numeric("x", 0.0, 8.0),
        AttributeDomain.numeric("y", 0.0, 8.0),
        AttributeDomain.numeric("v", 0.0, 100.0),
    )
    xy = rng.integers(0, 9, size=(points, 2)).astype(float)
    v = rng.integers(10, 91, size=points).astype(float)
    pcs = [PredicateConstraint.make("p00", None, {"v": (0.0, 100.0)}, points // 2, 2 * points)]
    for k in range(1, n):
        atoms = {}
        inside = np.ones(points, dtype=bool)
        for j, a in enumerate(("x", "y")):
            lo, hi = sorted(int(t) for t in rng.choice(9, size=2, replace=False))
            atoms[a] = Interval.closed(float(lo), float(hi))
            inside &= (xy[:, j] >= lo) & (xy[:, j] <= hi)
        c = int(inside.sum())
        vals = v[inside]
        vlo = float(vals.min() - rng.integers(0, 10)) if c else 0.0
        vhi = float(vals.max() + rng.integers(0, 10)) if c else 100.0
        kl = int(rng.integers(0, c + 1)) if rng.random() < 0.4 else 0
        ku = c + int(rng.integers(0, 4))
        pcs.append(PredicateConstraint.make(f"p{k:02d}", Predicate(atoms), {"v": (vlo, vhi)}, kl, ku))
    return PCSet(schema, tuple(pcs))


def _rel(name: str, attrs: list[str], ku: int, n: int) -> dict:
    schema = Schema.of(*(AttributeDomain.numeric(a, 0.0, float(n)) for a in attrs))
    pcs = PCSet(schema, (PredicateConstraint.make(f"{name}-all", None, None, 0, ku),))
    return {"name": name, "pcs": pcs.to_json()}


def triangle(ku: int = 100) -> dict:
    return {"relations": [_rel("R", ["a", "b"], ku, 1000), _rel("S", ["b", "c"], ku, 1000),
                          _rel("T", ["a", "c"], ku, 1000)]}


def chain(length: int = 5, ku: int = 10) -> dict:
    return {"relations": [_rel(f"R{i}", [f"x{i}", f"x{i + 1}"], ku, 1000) for i in range(length)]}


EXPERIMENT = {
    "dataset": {"kind": "synthetic", "rows": 100000, "seed": 7},
    "scenario": {"fraction": 0.1, "mode": "correlated-top", "seed": 0, "attr": "value"},
    "baselines": ["corr-pc", "rand-pc", "us-1p", "us-10p", "us-1n", "us-10n", "st-1n", "st-10n", "hist"],
    "queries": {"count": 200, "aggregates": ["SUM", "COUNT"], "attributes": ["utc", "device"], "seed": 3},
    "pc": {"agg": "value", "corr_attrs": ["utc"], "corr_n": 64, "rand_attrs": ["utc"], "rand_n": 8, "seed": 11},
    "histogram": {"buckets": 64},
    "sampling": {"seed": 5, "confidence": 0.99},
    "noise": {"sigma": 0.0, "seed": 13},
    "record_timing": False,
}

SALES_CSV = """utc,branch,price
2019-11-01T10:20:00Z,New York,3.02
2019-11-01T10:21:00Z,Chicago,6.71
2019-11-16T06:42:00Z,Trenton,18.99
"""


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "data"))
    args = ap.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def dump(name: str, obj) -> None:
        (out / name).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")

    dump("sales_disjoint.json", sales_disjoint().to_json())
    dump("sales_overlap.json", sales_overlap().to_json())
    dump("nonclosed.json", nonclosed().to_json())
    dump("grid20.json", grid20().to_json())
    dump("triangle.json", triangle())
    dump("chain5.json", chain())
    dump("experiment.json", EXPERIMENT)
    wide = sales_schema(parse_timestamp("2019-11-30T23:59:59Z")).to_json()
    wide["attributes"][0]["lo"] = parse_timestamp("2019-11-01T00:00:00Z")
    dump("sales_schema.json", wide)
    (out / "sales.csv").write_text(SALES_CSV)
    print(f"wrote data files to {out}")


if __name__ == "__main__":
    main()
