"""Utility vs deadline on scenario 1 for both utility kinds.

Runs the two sweep configs (or loads existing summaries with --reuse),
prints the mean-over-seeds table and checks relaxed >= index >= random with
curves nondecreasing in D up to one dip.

    python scripts/reproduce_ordering.py [--reuse] [--workers N]
"""

import argparse
import logging
import sys
from pathlib import Path

from dsrcast.experiment import ExperimentConfig, ordering_report, read_summary, run_experiment, utility_table

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
RANKING = ["dsr-relaxed", "index-dsr", "random"]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--reuse", action="store_true", help="read existing summary.csv files")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    table = {}
    deadlines = None
    for kind in ("linear", "log"):
        cfg = ExperimentConfig.from_file(CONFIGS / f"scenario1_{kind}.json")
        cfg.workers = args.workers
        deadlines = cfg.deadlines
        summary = Path(cfg.output) / "summary.csv"
        if not (args.reuse and summary.exists()):
            summary, _ = run_experiment(cfg)
        table.update(utility_table(read_summary(summary)))

    print("kind    policy       " + " ".join(f"  D={d:<4d}" for d in deadlines))
    for kind in ("linear", "log"):
        for p in RANKING:
            print(f"{kind:7s} {p:12s} " + " ".join(f"{table[(p, kind, d)]:7.3f}" for d in deadlines))
    problems = ordering_report(table, RANKING, ["linear", "log"], deadlines)
    for msg in problems:
        print("violation:", msg)
    print("ordering holds" if not problems else f"{len(problems)} violations")
    return 1 if problems else 0


if __name__ == "__main__":
    sys.exit(main())
