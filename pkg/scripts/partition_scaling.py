"""Query latency on disjoint Corr-PC partitions of growing size, greedy path against the MILP.

    python3 scripts/partition_scaling.py --sizes 100 500 2000
"""

from __future__ import annotations

import argparse
import time

from rangebound.bounds import bound_query
from rangebound.harness import gen_corr_pc, make_scenario, random_queries, synthetic_dataset


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[100, 500, 2000])
    ap.add_argument("--queries", type=int, default=20)
    ap.add_argument("--milp-up-to", type=int, default=200, help="largest size also timed on the MILP path")
    args = ap.parse_args(argv)
    data = synthetic_dataset()
    sc = make_scenario(data, 0.1)
    missing = sc.missing_relation
    queries = random_queries(data.schema, args.queries, ["SUM", "COUNT"], ["utc"], seed=1)
    print(f"{'n':>6} {'greedy ms':>10} {'milp ms':>10}")
    for n in args.sizes:
        pcs = gen_corr_pc(missing, ["utc"], n)
        t0 = time.perf_counter()
        for q in queries:
            bound_query(q, pcs)
        greedy = (time.perf_counter() - t0) * 1e3 / len(queries)
        milp = "-"
        if n <= args.milp_up_to:
            t0 = time.perf_counter()
            for q in queries:
                bound_query(q, pcs, greedy=False)
            milp = f"{(time.perf_counter() - t0) * 1e3 / len(queries):.1f}"
        print(f"{n:>6} {greedy:>10.2f} {milp:>10}")


if __name__ == "__main__":
    main()
