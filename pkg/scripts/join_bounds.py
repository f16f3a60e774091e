"""Cover-weighted against naive join bounds for triangles and chains of growing size.

    python3 scripts/join_bounds.py
"""

from __future__ import annotations

import argparse

from rangebound.joins import JoinGraph, join_bound, naive_join_bound
from rangebound.query import parse_query

from build_data import chain, triangle


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--counts", type=int, nargs="+", default=[10, 100, 1000])
    args = ap.parse_args(argv)
    print(f"{'graph':<10} {'count':>6} {'cover':>14} {'naive':>14}")
    for n in args.counts:
        g = JoinGraph.from_json(triangle(n))
        q = parse_query("SELECT COUNT(*) FROM R, S, T")
        print(f"{'triangle':<10} {n:>6} {join_bound(g, q).upper:>14.6g} {naive_join_bound(g, q).upper:>14.6g}")
    for length in (3, 5, 7):
        g = JoinGraph.from_json(chain(length, 10))
        q = parse_query("SELECT COUNT(*) FROM " + ", ".join(r.name for r in g.relations))
        print(f"{'chain-' + str(length):<10} {10:>6} {join_bound(g, q).upper:>14.6g} "
              f"{naive_join_bound(g, q).upper:>14.6g}")


if __name__ == "__main__":
    main()
