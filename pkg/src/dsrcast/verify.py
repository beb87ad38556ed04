"""Self-check suites behind ``dsrcast verify``.

Three families, each over seeded random tiny instances:

* oracle agreement: DP root values against the brute-force optimizer;
* dual: the subgradient inequality for the closed-form dual, plus the
  direction of a single price step;
* invariants: delegated-set partition and link caps in short simulations,
  and agreement of the two simulation engines.

A failing property prints the offending instance in scenario syntax so it can
be replayed.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field

import numpy as np

from . import dp, dual, oracle
from .model import Flow, Link, Topology
from .scenario import dump_scenario
from .sim import InvariantError, Simulator

TOL = 1e-9


@dataclass
class CheckResult:
    name: str
    cases: int = 0
    failures: int = 0
    counterexample: str = ""

    @property
    def passed(self) -> bool:
        return self.failures == 0

    def fail(self, text: str):
        self.failures += 1
        if not self.counterexample:
            self.counterexample = text

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name}: {self.cases - self.failures}/{self.cases}"


@dataclass
class VerifyReport:
    results: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def write(self, out=None):
        out = out or sys.stdout
        for r in self.results:
            out.write(r.line() + "\n")
            if not r.passed:
                out.write("  counterexample:\n")
                for ln in r.counterexample.rstrip().splitlines():
                    out.write(f"    {ln}\n")


def random_instance(rng: np.random.Generator, max_nodes: int, max_horizon: int, n_flows: int = 1):
    """Tiny random topology with P in [0.5, 1] and small capacities."""
    n = int(rng.integers(1, max_nodes + 1))
    links = []
    for a in range(n):
        for b in range(n):
            if a != b and rng.random() < 0.6:
                p = float(np.round(rng.uniform(0.5, 1.0), 3))
                links.append(Link(len(links), a, b, int(rng.integers(1, 4)), p))
    deadline = int(rng.integers(1, max_horizon + 1))
    flows = [
        Flow(f, int(rng.integers(n)), float(np.round(rng.uniform(0.1, 2.0), 3)), deadline)
        for f in range(n_flows)
    ]
    return Topology(n, tuple(links), tuple(flows))


def _describe(topo, **extra) -> str:
    text = dump_scenario(topo)
    for k, v in extra.items():
        if isinstance(v, np.ndarray):
            v = np.array2string(v, precision=6, separator=", ")
        text += f"# {k} = {v}\n"
    return text


def check_oracle(instances, max_nodes, max_horizon, seed=0) -> CheckResult:
    res = CheckResult("oracle agreement (relaxed and index root values)")
    rng = np.random.default_rng(seed)
    for _ in range(instances):
        topo = random_instance(rng, max_nodes, max_horizon)
        rewards = np.round(rng.uniform(0, 1, topo.n_nodes), 3)
        prices = np.round(rng.uniform(0, 2, len(topo.links)), 3)
        horizon = topo.flows[0].deadline
        for variant in dp.VARIANTS:
            res.cases += 1
            table = dp.solve(topo, rewards, prices, horizon, variant)
            got = table.root_value(topo.flows[0].source)
            want = oracle.enumerate_exact(
                topo, 0, rewards, prices, horizon, variant, max_nodes, max_horizon
            )
            if abs(got - want) > TOL:
                res.fail(_describe(topo, variant=variant, rewards=rewards, prices=prices,
                                   dp_value=got, oracle_value=want))
    return res


def _usage_total(topo, prices, max_nodes, max_horizon) -> np.ndarray:
    """sum_f A_f E[transmissions on each link] for the optimal single-packet strategy."""
    total = np.zeros(len(topo.links))
    ones = np.ones(topo.n_nodes)
    for f in topo.flows:
        use = oracle.expected_usage(topo, f.id, ones, prices, f.deadline, "relaxed",
                                    max_nodes, max_horizon)
        total += f.arrival_rate * np.asarray(use)
    return total


def check_subgradient(instances, pairs, max_nodes, max_horizon, seed=1) -> tuple[CheckResult, CheckResult]:
    """D(l') >= D(l) + g(l).(l' - l) with g = T - expected usage; and price steps oppose g."""
    ineq = CheckResult("subgradient inequality of the dual")
    step = CheckResult("price step moves against the subgradient")
    rng = np.random.default_rng(seed)
    for _ in range(instances):
        topo = random_instance(rng, max_nodes, max_horizon, n_flows=int(rng.integers(1, 3)))
        while not topo.links:  # prices need at least one link
            topo = random_instance(rng, max_nodes, max_horizon, n_flows=int(rng.integers(1, 3)))
        caps = np.array([l.capacity for l in topo.links], dtype=float)
        for _ in range(pairs):
            lam = np.round(rng.uniform(0, 2, len(topo.links)), 3)
            lam2 = np.round(rng.uniform(0, 2, len(topo.links)), 3)
            g = caps - _usage_total(topo, lam, max_nodes, max_horizon)
            d1 = dual.dual_value_exact(topo, lam)
            d2 = dual.dual_value_exact(topo, lam2)
            ineq.cases += 1
            if d2 < d1 + float(g @ (lam2 - lam)) - TOL:
                ineq.fail(_describe(topo, lam=lam, lam_prime=lam2, D_lam=d1, D_lam_prime=d2,
                                    subgradient=g))
            # usage = T - g, so the update sees exactly this subgradient
            new = dual.update_prices(lam, caps - g, caps, 0.1)
            move = float((new - lam) @ g)
            step.cases += 1
            if move > TOL:
                step.fail(_describe(topo, lam=lam, subgradient=g, updated=new))
    return ineq, step


def check_invariants(instances, max_nodes, slots=300, seed=2) -> tuple[CheckResult, CheckResult]:
    inv = CheckResult("partition and capacity invariants in simulation")
    eng = CheckResult("python and compiled engines agree")
    rng = np.random.default_rng(seed)
    for i in range(instances):
        topo = random_instance(rng, max_nodes, 3, n_flows=int(rng.integers(1, 3)))
        state = dual.EpochState.initial(topo)
        state.lam = np.round(rng.uniform(0, 0.5, len(topo.links)), 3)
        for policy in ("relaxed", "index", "flood", "random"):
            tables = None
            if policy in dp.VARIANTS:
                tables = dual.build_tables(topo, state, policy)
            inv.cases += 1
            try:
                m = Simulator(topo, i, engine="python").run(slots, policy, tables)
            except InvariantError as exc:
                inv.fail(_describe(topo, policy=policy, seed=i, error=exc))
                continue
            if tables is not None:
                eng.cases += 1
                try:
                    c = Simulator(topo, i, engine="compiled").run(slots, policy, tables)
                except InvariantError as exc:
                    eng.fail(_describe(topo, policy=policy, seed=i, error=exc))
                    continue
                same = all(
                    np.array_equal(getattr(m, k), getattr(c, k))
                    for k in ("delivered", "transmissions", "demand", "arrivals", "max_usage")
                )
                if not same or m.usage_hist != c.usage_hist:
                    eng.fail(_describe(topo, policy=policy, seed=i))
    return inv, eng


def run_verify(max_nodes=oracle.MAX_NODES, max_horizon=oracle.MAX_HORIZON, instances=200,
               seed=0, quiet=False) -> VerifyReport:
    report = VerifyReport()
    report.results.append(check_oracle(instances, max_nodes, max_horizon, seed))
    ineq, step = check_subgradient(max(instances // 4, 1), 20, max_nodes, max_horizon, seed + 1)
    report.results += [ineq, step]
    inv, eng = check_invariants(max(instances // 10, 1), max_nodes, seed=seed + 2)
    report.results += [inv, eng]
    if not quiet:
        report.write()
    return report
