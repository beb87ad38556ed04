"""Regenerate the bundled scenario files.

The adjacency lists are reconstructions of the two IAB layouts (11 nodes with
2 fiber gateways, 18 nodes with 9); only node/gateway counts and parameter
ranges are given, so edge lists are a plausible reading, not a copy.
Per-link reliability is drawn from U[0.5, 1.0] and capacity from {1..5} with
a fixed seed, once per direction.
"""

import argparse
from pathlib import Path

import numpy as np

from dsrcast.model import Flow, Link, Topology, mask_of
from dsrcast.scenario import GATEWAY_CAPACITY, dump_scenario

SEED = 20190601

# undirected wireless edges
SCENARIO1 = dict(
    n=11,
    gateways=[0, 1],
    edges=[(0, 2), (0, 3), (2, 4), (3, 4), (3, 5), (4, 6), (5, 7), (6, 8),
           (7, 8), (1, 7), (1, 9), (8, 10), (9, 10), (6, 9)],
    flows=[(0, 1.5), (10, 2.0)],
)

SCENARIO2 = dict(
    n=18,
    gateways=[0, 1, 2, 3, 4, 5, 6, 7, 8],
    edges=[(0, 9), (1, 9), (1, 10), (2, 10), (2, 11), (3, 11), (3, 12), (4, 12),
           (4, 13), (5, 13), (5, 14), (6, 14), (6, 15), (7, 15), (7, 16), (8, 16),
           (8, 17), (0, 17), (9, 10), (11, 12), (13, 14), (15, 16), (12, 13), (16, 17)],
    flows=[(0, 1.5), (12, 2.0)],
)


def build(layout, rng, deadline=10):
    links = []
    for a, b in layout["edges"]:
        for tx, rx in ((a, b), (b, a)):
            p = round(float(rng.uniform(0.5, 1.0)), 3)
            t = int(rng.integers(1, 6))
            links.append(Link(len(links), tx, rx, t, p))
    gws = layout["gateways"]
    for a in gws:
        for b in gws:
            if a != b:
                links.append(Link(len(links), a, b, GATEWAY_CAPACITY, 1.0))
    flows = [Flow(i, s, r, deadline) for i, (s, r) in enumerate(layout["flows"])]
    return Topology(layout["n"], links, flows, mask_of(gws))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "src/dsrcast/scenarios"))
    args = ap.parse_args()
    rng = np.random.default_rng(SEED)
    for name, layout in (("scenario1", SCENARIO1), ("scenario2", SCENARIO2)):
        topo = build(layout, rng)
        header = (
            f"# {name}: reconstructed {layout['n']}-node IAB layout, "
            f"{len(layout['gateways'])} gateways (directed clique, P=1, T={GATEWAY_CAPACITY}).\n"
            f"# Wireless links drawn with seed {SEED}: P ~ U[0.5, 1.0], T ~ U{{1..5}}.\n"
        )
        path = Path(args.out) / f"{name}.txt"
        path.write_text(header + dump_scenario(topo))
        print(path)


if __name__ == "__main__":
    main()
