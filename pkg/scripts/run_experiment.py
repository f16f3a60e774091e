"""Run the baseline comparison over several seeds and print a failure/over-estimation table.

    python3 scripts/run_experiment.py --config data/experiment.json --seeds 3 --out results/
"""

from __future__ import annotations

import argparse
import copy
import json
from pathlib import Path
from statistics import median

from rangebound.harness import load_config, run_experiment


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="data/experiment.json")
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--queries", type=int)
    ap.add_argument("--sigma", type=float, help="value-range noise for the PC baselines")
    ap.add_argument("--out", help="directory for per-seed CSV and metrics JSON")
    args = ap.parse_args(argv)

    base = load_config(args.config)
    if args.queries is not None:
        base["queries"]["count"] = args.queries
    if args.sigma is not None:
        base["noise"]["sigma"] = args.sigma
    out = Path(args.out) if args.out else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    table: dict[str, list] = {}
    for s in range(args.seeds):
        cfg = copy.deepcopy(base)
        for section in ("scenario", "queries", "pc", "sampling", "noise"):
            cfg[section]["seed"] += s
        report = run_experiment(cfg, out / f"queries_seed{s}.csv" if out else None)
        if out:
            (out / f"metrics_seed{s}.json").write_text(json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n")
        for name, m in report.baselines.items():
            table.setdefault(name, []).append(m)
    print(f"{'baseline':<10} {'failure(mean)':>14} {'overest(median)':>16}")
    for name, ms in table.items():
        fail = sum(m.failure_rate for m in ms) / len(ms)
        overs = [m.median_overestimation for m in ms if m.median_overestimation is not None]
        over = f"{median(overs):.3f}" if overs else "-"
        print(f"{name:<10} {fail:>14.4f} {over:>16}")


if __name__ == "__main__":
    main()
