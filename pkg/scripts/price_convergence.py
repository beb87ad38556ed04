"""Price and utility traces of the dual loop on scenario 1.

Writes one CSV row per epoch (epoch, utility, lagrangian, max usage/T, prices)
so step-size choices can be compared.

    python scripts/price_convergence.py --epochs 200 --beta0 2 --out trace.csv
"""

import argparse
import csv
import sys

import numpy as np

from dsrcast import dual, scenario
from dsrcast.model import UtilityKind


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--scenario", default="scenario1")
    ap.add_argument("--epochs", type=int, default=200)
    ap.add_argument("--epoch-len", type=int, default=2000)
    ap.add_argument("--beta0", type=float, default=0.5)
    ap.add_argument("--variant", choices=["relaxed", "index"], default="relaxed")
    ap.add_argument("--utility", default="linear")
    ap.add_argument("--deadline", type=int, default=None)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="-")
    args = ap.parse_args()

    topo = scenario.load_scenario(scenario.resolve(args.scenario)).with_utility(UtilityKind.parse(args.utility))
    if args.deadline:
        topo = topo.with_deadline(args.deadline)
    caps = np.array([l.capacity for l in topo.links], dtype=float)
    fh = sys.stdout if args.out == "-" else open(args.out, "w", newline="")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["epoch", "utility", "lagrangian", "max_usage_ratio"] + [f"lambda_l{l.id}" for l in topo.links])

    def on_epoch(k, state, metrics):
        ratio = (state.eps.sum(axis=1) / caps).max()
        w.writerow([k, f"{dual.total_utility(topo, state.mu):.6f}",
                    f"{dual.lagrangian(topo, state.mu, state.eps, state.lam):.6f}", f"{ratio:.4f}"]
                   + [f"{x:.6f}" for x in state.lam])

    dual.optimize(topo, args.epochs, args.epoch_len, args.beta0, args.seed, args.variant, on_epoch=on_epoch)
    if fh is not sys.stdout:
        fh.close()


if __name__ == "__main__":
    main()
