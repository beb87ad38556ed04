"""Epoch-wise primal/dual loop.

Each epoch the current marginal utilities (taken at the running-average
throughputs) and link prices define one DP table per flow; the network runs
that stationary policy for one epoch; the measurements fold into running
averages with weight 1/k; then every link moves its own price by a projected
subgradient step ``lam <- max(0, lam - beta_k * (T - usage))`` with
``beta_k = beta0 / k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import dp
from .model import Topology, UtilityKind
from .sim import Metrics, Simulator


@dataclass
class EpochState:
    mu: np.ndarray  # (N, F) running-average timely-throughput
    eps: np.ndarray  # (L, F) running-average transmissions per slot
    lam: np.ndarray  # (L,)
    k: int = 1
    beta0: float = 0.5
    epoch_len: int = 2000

    @classmethod
    def initial(cls, topology: Topology, beta0=0.5, epoch_len=2000) -> "EpochState":
        n, l, f = topology.n_nodes, len(topology.links), len(topology.flows)
        return cls(np.zeros((n, f)), np.zeros((l, f)), np.zeros(l), 1, beta0, epoch_len)

    @property
    def step(self) -> float:
        return self.beta0 / self.k

    def fold(self, mu: np.ndarray, eps: np.ndarray):
        """Round-robin mixture: the newest epoch enters with weight 1/k."""
        w = 1.0 / self.k
        self.mu = np.maximum(self.mu + w * (mu - self.mu), 0.0)
        self.eps = np.maximum(self.eps + w * (eps - self.eps), 0.0)


@dataclass
class DualReport:
    lagrangian_trace: list = field(default_factory=list)
    lambda_trace: list = field(default_factory=list)
    utility_trace: list = field(default_factory=list)
    mu: np.ndarray | None = None
    eps: np.ndarray | None = None
    lam: np.ndarray | None = None
    metrics: Metrics | None = None

    @property
    def epochs(self) -> int:
        return len(self.utility_trace)

    def link_usage(self) -> np.ndarray:
        return self.eps.sum(axis=1)


def total_utility(topology: Topology, mu: np.ndarray) -> float:
    return float(
        sum(f.utility.evaluate(mu[n, f.id]) for f in topology.flows for n in range(topology.n_nodes))
    )


def lagrangian(topology: Topology, mu, eps, lam) -> float:
    caps = np.array([l.capacity for l in topology.links], dtype=float)
    return total_utility(topology, mu) - float(np.dot(lam, eps.sum(axis=1) - caps))


def gradient_rewards(state: EpochState, flow) -> np.ndarray:
    return np.array([flow.utility.derivative(m) for m in state.mu[:, flow.id]])


def update_prices(lam, usage, capacities, step: float) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    g = np.asarray(capacities, dtype=float) - np.asarray(usage, dtype=float)
    return np.maximum(0.0, lam - step * g)


def build_tables(topology: Topology, state: EpochState, variant: str = dp.RELAXED, **kw):
    return [
        dp.solve(topology, gradient_rewards(state, f), state.lam, f.deadline, variant, **kw)
        for f in topology.flows
    ]


def run_epoch(topology: Topology, state: EpochState, tables, sim, variant: str = dp.RELAXED) -> Metrics:
    """Run one epoch of ``state.epoch_len`` slots.

    ``sim`` is a live ``Simulator`` (packets carry across epochs) or an int
    seed for a standalone epoch from an empty network.
    """
    if not isinstance(sim, Simulator):
        sim = Simulator(topology, int(sim))
    return sim.run(state.epoch_len, variant, tables)


def _price_usage(metrics: Metrics, variant: str) -> np.ndarray:
    # index-DSR prices react to positive-value demand, not to capped sends
    return metrics.link_demand() if variant == dp.INDEX else metrics.link_usage()


def validate_epoch_len(topology: Topology, epoch_len: int):
    need = 50 * topology.max_deadline
    if epoch_len < need:
        raise ValueError(f"epoch_len {epoch_len} < 50 x max deadline ({need})")


def optimize(
    topology: Topology,
    epochs: int,
    epoch_len: int = 2000,
    beta0: float = 0.5,
    seed: int = 0,
    variant: str = dp.RELAXED,
    inner_epochs: int = 1,
    check_invariants: bool = True,
    count_source: bool = True,
    strict_epoch_len: bool = True,
    on_epoch=None,
) -> DualReport:
    """Primal/dual loop; one price step per ``inner_epochs`` epochs.

    With ``inner_epochs == 1`` prices move every epoch. Larger values run a
    fresh steepest-ascent mixture of that many epochs at fixed prices before
    each price step.
    """
    if strict_epoch_len:
        validate_epoch_len(topology, epoch_len)
    caps = np.array([l.capacity for l in topology.links], dtype=float)
    state = EpochState.initial(topology, beta0, epoch_len)
    sim = Simulator(topology, seed, check_invariants=check_invariants, count_source=count_source)
    report = DualReport()
    total = None
    inner = EpochState.initial(topology, beta0, epoch_len)
    for epoch in range(1, epochs + 1):
        if inner_epochs > 1:
            inner.lam = state.lam
            tables = build_tables(topology, inner, variant)
        else:
            tables = build_tables(topology, state, variant)
        metrics = run_epoch(topology, state, tables, sim, variant)
        total = metrics if total is None else total.merge(metrics)
        lam_used = state.lam.copy()
        state.fold(metrics.mu(), metrics.eps())
        report.lagrangian_trace.append(lagrangian(topology, state.mu, state.eps, lam_used))
        report.utility_trace.append(total_utility(topology, state.mu))
        if inner_epochs > 1:
            inner.fold(metrics.mu(), metrics.eps())
            inner.k += 1
            if epoch % inner_epochs == 0:
                usage = inner.eps.sum(axis=1) if variant == dp.RELAXED else _price_usage(metrics, variant)
                state.lam = update_prices(state.lam, usage, caps, beta0 / (epoch // inner_epochs))
                inner = EpochState.initial(topology, beta0, epoch_len)
        else:
            state.lam = update_prices(state.lam, _price_usage(metrics, variant), caps, state.step)
        report.lambda_trace.append(state.lam.copy())
        state.k += 1
        if on_epoch is not None:
            on_epoch(epoch, state, metrics)
    report.mu, report.eps, report.lam = state.mu, state.eps, state.lam
    report.metrics = total
    return report


def dual_value_exact(topology: Topology, prices, rewards=None, **kw) -> float:
    """Dual objective when every marginal utility is a constant.

    ``sum_f A_f W_f(source, all nodes, D_f) + sum_l lam_l T_l``. ``rewards`` is
    an (F, N) array of per-packet rewards; by default all ones, which requires
    linear utilities.
    """
    n = topology.n_nodes
    if rewards is None:
        if any(f.utility is not UtilityKind.LINEAR for f in topology.flows):
            raise ValueError("closed-form dual needs constant marginal utilities (linear)")
        rewards = np.ones((len(topology.flows), n))
    prices = np.asarray(prices, dtype=float)
    caps = np.array([l.capacity for l in topology.links], dtype=float)
    value = float(np.dot(prices, caps))
    for f in topology.flows:
        if f.arrival_rate == 0:
            continue
        table = dp.solve_relaxed(topology, rewards[f.id], prices, f.deadline, **kw)
        value += f.arrival_rate * table.root_value(f.source)
    return value


def mixture_schedule(a: float, epochs: int) -> list[tuple[int, int]]:
    """Which policy each epoch uses when time-sharing two epoch-wise policies.

    Epoch ``i`` (1-based) takes policy 1's ``floor(a i)``-th stationary policy
    when ``floor(a i)`` just ticked over, otherwise policy 2's
    ``(i - floor(a i))``-th. Returns ``[(policy, index), ...]``.
    """
    out = []
    for i in range(1, epochs + 1):
        hi, lo = math.floor(a * i), math.floor(a * (i - 1))
        out.append((1, hi) if hi > lo else (2, i - hi))
    return out


def run_mixture(topology, tables_a, tables_b, a, epochs, epoch_len, seed, variant=dp.RELAXED):
    """Time-share two fixed policies; returns (mu, eps, per-epoch (which, mu, eps) samples)."""
    sim = Simulator(topology, seed)
    samples = []
    total = None
    for which, _ in mixture_schedule(a, epochs):
        m = sim.run(epoch_len, variant, tables_a if which == 1 else tables_b)
        total = m if total is None else total.merge(m)
        samples.append((which, m.mu(), m.eps()))
    return total.mu(), total.eps(), samples
