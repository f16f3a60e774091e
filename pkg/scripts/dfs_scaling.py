"""Cells and satisfiability calls of the pruned search against naive 2^n enumeration.

    python3 scripts/dfs_scaling.py --max-n 20
"""

from __future__ import annotations

import argparse
import time

from rangebound.decomposition import decompose
from rangebound.pcs import PCSet

from build_data import grid20


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--max-n", type=int, default=20)
    ap.add_argument("--seed", type=int, default=20)
    args = ap.parse_args(argv)
    full = grid20(seed=args.seed, n=args.max_n)
    print(f"{'n':>3} {'2^n':>9} {'cells':>6} {'sat calls':>10} {'ratio':>9} {'ms':>8}")
    for n in range(2, args.max_n + 1, 2):
        pcs = PCSet(full.schema, full.constraints[:n])
        t0 = time.perf_counter()
        dec = decompose(pcs)
        ms = (time.perf_counter() - t0) * 1e3
        print(f"{n:>3} {2 ** n:>9} {len(dec.cells):>6} {dec.stats.sat_calls:>10} "
              f"{2 ** n / max(1, len(dec.cells)):>9.1f} {ms:>8.1f}")


if __name__ == "__main__":
    main()
