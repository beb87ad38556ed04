"""Command line: validate, verify, run, dump-policy, simulate."""

from __future__ import annotations

import argparse
import csv
import logging
import sys

import numpy as np

from . import dp, scenario
from .experiment import ExperimentConfig, run_experiment
from .model import validate_topology
from .sim import POLICIES, Simulator, write_events


def read_prices(path, n_links: int) -> np.ndarray:
    """Link prices from ``link,lambda`` rows or from the last row of a trace.csv."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no price rows")
    cols = rows[0].keys()
    if "link" in cols and "lambda" in cols:
        lam = np.zeros(n_links)
        for r in rows:
            lid = int(r["link"])
            if not 0 <= lid < n_links:
                raise ValueError(f"{path}: link {lid} out of range")
            lam[lid] = float(r["lambda"])
        return lam
    keys = [f"lambda_l{l}" for l in range(n_links)]
    if all(k in cols for k in keys):
        return np.array([float(rows[-1][k]) for k in keys])
    raise ValueError(f"{path}: expected columns link,lambda or lambda_l0..lambda_l{n_links - 1}")


def _load(path):
    return scenario.load_scenario(scenario.resolve(path))


def cmd_validate(args) -> int:
    try:
        topo = scenario.parse_scenario(scenario.resolve(args.file).read_text(), validate=False)
    except (OSError, scenario.ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    diags = validate_topology(topo)
    for d in diags:
        print(d)
    if diags:
        return 1
    print(f"ok: {topo.n_nodes} nodes, {len(topo.links)} links, {len(topo.flows)} flows")
    return 0


def cmd_verify(args) -> int:
    from .verify import run_verify

    report = run_verify(args.max_nodes, args.max_horizon, args.instances, args.seed)
    return 0 if report.passed else 1


def cmd_run(args) -> int:
    cfg = ExperimentConfig.from_file(args.config)
    if args.workers is not None:
        cfg.workers = args.workers
    summary, trace = run_experiment(cfg)
    print(summary)
    print(trace)
    return 0


def cmd_dump_policy(args) -> int:
    topo = _load(args.scenario)
    if not 0 <= args.flow < len(topo.flows):
        print(f"error: flow {args.flow} out of range", file=sys.stderr)
        return 1
    flow = topo.flows[args.flow]
    prices = read_prices(args.lambda_file, len(topo.links)) if args.lambda_file else np.zeros(len(topo.links))
    # marginal utility at zero throughput is 1 for both utility kinds
    rewards = np.ones(topo.n_nodes)
    table = dp.solve(topo, rewards, prices, args.deadline or flow.deadline, args.variant)
    table.dump(sys.stdout, flow.source, all_states=args.all)
    return 0


def cmd_simulate(args) -> int:
    topo = _load(args.scenario)
    tables = None
    if args.policy in dp.VARIANTS:
        prices = read_prices(args.lambda_file, len(topo.links)) if args.lambda_file else np.zeros(len(topo.links))
        tables = [dp.solve(topo, np.ones(topo.n_nodes), prices, f.deadline, args.policy) for f in topo.flows]
    sim = Simulator(topo, args.seed, log_events=args.events is not None)
    m = sim.run(args.slots, args.policy, tables)
    if args.events is not None:
        write_events(sim.events, sys.stdout if args.events == "-" else args.events)
    out = sys.stderr if args.events == "-" else sys.stdout
    mu = m.mu()
    for f in topo.flows:
        print(f"flow {f.id}: arrivals {m.arrivals[f.id]}, mu " + " ".join(f"{x:.4f}" for x in mu[:, f.id]), file=out)
    print("link usage " + " ".join(f"{x:.4f}" for x in m.link_usage()), file=out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dsrcast", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("validate", help="parse and check a scenario file")
    p.add_argument("file")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("verify", help="oracle, dual and invariant self-checks")
    p.add_argument("--max-nodes", type=int, default=4)
    p.add_argument("--max-horizon", type=int, default=3)
    p.add_argument("--instances", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("run", help="run an experiment config (JSON)")
    p.add_argument("config")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("dump-policy", help="print a flow's DP table at given prices")
    p.add_argument("scenario")
    p.add_argument("--flow", type=int, required=True)
    p.add_argument("--lambda-file", default=None, help="link,lambda CSV or a trace.csv (last row)")
    p.add_argument("--deadline", type=int, default=None)
    p.add_argument("--variant", choices=dp.VARIANTS, default=dp.RELAXED)
    p.add_argument("--all", action="store_true", help="every state, not just those reachable from the root")
    p.set_defaults(func=cmd_dump_policy)

    p = sub.add_parser("simulate", help="run one policy at fixed prices")
    p.add_argument("scenario")
    p.add_argument("--policy", choices=POLICIES, default="relaxed")
    p.add_argument("--slots", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lambda-file", default=None)
    p.add_argument("--events", default=None, metavar="PATH", help="write the event log ('-' for stdout)")
    p.set_defaults(func=cmd_simulate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
