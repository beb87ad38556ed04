"""Per-packet value function W(n, pi, tau) and its argmax actions.

Two variants share one kernel:

* ``relaxed``: holder may always stay idle (average-capacity regime).
* ``index``: holder must transmit whenever it has a link into its delegated
  set; values can go negative and are used to rank packets per link.

Tables are dense arrays indexed ``[tau, holder, mask]``, filled bottom-up
from ``tau = 0`` where the holder collects its own reward.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from typing import NamedTuple

import numba
import numpy as np

from .model import PacketReplica, Topology, members, popcount

RELAXED = "relaxed"
INDEX = "index"
VARIANTS = (RELAXED, INDEX)

TIE_TOL = 1e-12
DEFAULT_MAX_STATES = 20_000_000


class StateSpaceError(RuntimeError):
    """Dense table would exceed the configured memory budget."""


class Expired(Exception):
    """Packet has no slots left; the caller drops it."""


class Action(NamedTuple):
    receiver: int  # -1 means stay idle
    subset: int

    @property
    def transmit(self) -> bool:
        return self.receiver >= 0

    def __str__(self):
        if not self.transmit:
            return "idle"
        return f"->{self.receiver} {{{','.join(map(str, members(self.subset)))}}}"


NO_TRANSMIT = Action(-1, 0)


@numba.njit(cache=True)
def _reach_table(n_nodes, adj):
    """ok[m, mask] is True iff every member of mask is reachable from m inside mask."""
    size = 1 << n_nodes
    ok = np.zeros((n_nodes, size), dtype=np.bool_)
    for mask in range(1, size):
        for m in range(n_nodes):
            if not (mask >> m) & 1:
                continue
            reach = 1 << m
            while True:
                grown = reach
                r = reach
                k = 0
                while r:
                    if r & 1:
                        grown |= adj[k] & mask
                    r >>= 1
                    k += 1
                if grown == reach:
                    break
                reach = grown
            ok[m, mask] = reach == mask
    return ok


@numba.njit(cache=True)
def _fill(value, recv, sub, out_start, out_rx, out_p, out_lam, forced, prune, reach_ok, tol):
    horizon = value.shape[0] - 1
    n_nodes = value.shape[1]
    size = value.shape[2]
    for tau in range(1, horizon + 1):
        prev = value[tau - 1]
        for mask in range(1, size):
            for n in range(n_nodes):
                if not (mask >> n) & 1:
                    continue
                stay = prev[n, mask]
                if forced:
                    best = -np.inf
                else:
                    best = stay
                best_m = -1
                best_s = 0
                best_pc = 0
                rest = mask & ~(1 << n)
                for j in range(out_start[n], out_start[n + 1]):
                    m = out_rx[j]
                    if not (rest >> m) & 1:
                        continue
                    p = out_p[j]
                    lam = out_lam[j]
                    others = rest & ~(1 << m)
                    s = others
                    while True:
                        pm = s | (1 << m)
                        if (not prune) or reach_ok[m, pm]:
                            val = p * (prev[n, mask & ~pm] + prev[m, pm]) + (1.0 - p) * stay - lam
                            take = False
                            if val > best + tol:
                                take = True
                            elif val >= best - tol and best_m >= 0:
                                # tie among transmissions: lower receiver, then
                                # fewer members, then lower mask
                                pc = 0
                                x = pm
                                while x:
                                    x &= x - 1
                                    pc += 1
                                if m < best_m or (
                                    m == best_m and (pc < best_pc or (pc == best_pc and pm < best_s))
                                ):
                                    take = True
                            if take:
                                best = val
                                best_m = m
                                best_s = pm
                                pc = 0
                                x = pm
                                while x:
                                    x &= x - 1
                                    pc += 1
                                best_pc = pc
                        if s == 0:
                            break
                        s = (s - 1) & others
                if best_m < 0:
                    best = stay
                value[tau, n, mask] = best
                recv[tau, n, mask] = best_m
                sub[tau, n, mask] = best_s


def _boundary_values(rewards: np.ndarray, n_nodes: int) -> np.ndarray:
    """W at tau = 0: the holder's own reward, whatever else it was delegated."""
    return np.repeat(rewards[:, None], 1 << n_nodes, axis=1)


@dataclass(frozen=True)
class PolicyTable:
    variant: str
    n_nodes: int
    horizon: int
    value: np.ndarray
    receiver: np.ndarray
    subset: np.ndarray

    def value_at(self, holder: int, mask: int, tau: int) -> float:
        return float(self.value[tau, holder, mask])

    def action_at(self, holder: int, mask: int, tau: int) -> Action:
        if tau == 0:
            return NO_TRANSMIT
        m = int(self.receiver[tau, holder, mask])
        return Action(m, int(self.subset[tau, holder, mask])) if m >= 0 else NO_TRANSMIT

    def root_value(self, source: int) -> float:
        return self.value_at(source, (1 << self.n_nodes) - 1, self.horizon)

    def flat(self):
        """(value, receiver, subset) as flat Python lists for fast scalar lookup.

        Index with ``(tau * n_nodes + holder) << n_nodes | mask``.
        """
        cached = self.__dict__.get("_flat")
        if cached is None:
            cached = (
                self.value.ravel().tolist(),
                self.receiver.ravel().tolist(),
                self.subset.ravel().tolist(),
            )
            object.__setattr__(self, "_flat", cached)
        return cached

    def dump(self, out=None, source: int | None = None, all_states: bool = False):
        """Write one ``holder<TAB>members<TAB>tau<TAB>value<TAB>action`` line per state.

        By default only states reachable from ``(source, full, horizon)`` under
        the stored actions (both success and failure branches) are written.
        """
        out = out or sys.stdout
        full = (1 << self.n_nodes) - 1
        if all_states:
            states = [
                (n, mask, tau)
                for tau in range(self.horizon, -1, -1)
                for mask in range(1, full + 1)
                for n in members(mask)
            ]
        else:
            if source is None:
                raise ValueError("source required unless all_states")
            seen = set()
            frontier = [(source, full, self.horizon)]
            while frontier:
                state = frontier.pop()
                if state in seen:
                    continue
                seen.add(state)
                n, mask, tau = state
                if tau == 0:
                    continue
                act = self.action_at(n, mask, tau)
                frontier.append((n, mask, tau - 1))
                if act.transmit:
                    frontier.append((n, mask & ~act.subset, tau - 1))
                    frontier.append((act.receiver, act.subset, tau - 1))
            states = sorted(seen, key=lambda s: (-s[2], s[0], popcount(s[1]), s[1]))
        for n, mask, tau in states:
            nodes = ",".join(map(str, members(mask)))
            out.write(f"{n}\t{{{nodes}}}\t{tau}\t{self.value_at(n, mask, tau):.12g}\t{self.action_at(n, mask, tau)}\n")


def _adjacency(topology: Topology, prices):
    n = topology.n_nodes
    start = np.zeros(n + 1, dtype=np.int64)
    rx, p, lam = [], [], []
    for node in range(n):
        for link in topology.out_links[node]:
            rx.append(link.rx)
            p.append(link.reliability)
            lam.append(float(prices[link.id]))
        start[node + 1] = len(rx)
    return (
        start,
        np.asarray(rx, dtype=np.int64),
        np.asarray(p, dtype=np.float64),
        np.asarray(lam, dtype=np.float64),
    )


_reach_cache: dict = {}


def reach_table(topology: Topology) -> np.ndarray:
    key = (topology.n_nodes, tuple((l.tx, l.rx) for l in topology.links))
    ok = _reach_cache.get(key)
    if ok is None:
        adj = np.zeros(topology.n_nodes, dtype=np.int64)
        for link in topology.links:
            adj[link.tx] |= 1 << link.rx
        ok = _reach_table(topology.n_nodes, adj)
        if len(_reach_cache) > 32:
            _reach_cache.clear()
        _reach_cache[key] = ok
    return ok


def solve(
    topology: Topology,
    rewards,
    prices,
    horizon: int,
    variant: str = RELAXED,
    prune: bool | None = None,
    max_states: int = DEFAULT_MAX_STATES,
) -> PolicyTable:
    """Fill the table for one flow's reward vector.

    ``prune`` restricts delegated subsets to those the receiver can reach
    internally. It never changes a relaxed value; for the index variant it
    can, so it defaults to on for relaxed and off for index.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    n = topology.n_nodes
    rewards = np.asarray(rewards, dtype=np.float64)
    prices = np.asarray(prices, dtype=np.float64)
    if rewards.shape != (n,) or np.any(rewards < 0):
        raise ValueError("rewards must be a nonnegative vector of length n_nodes")
    if prices.shape != (len(topology.links),) or np.any(prices < 0):
        raise ValueError("prices must be a nonnegative vector of length n_links")
    states = (horizon + 1) * n * (1 << n)
    if states > max_states:
        raise StateSpaceError(
            f"table for {n} nodes, horizon {horizon} needs {states:,} states "
            f"(~{states * 17 / 2**20:,.0f} MiB); cap is {max_states:,}"
        )
    if prune is None:
        prune = variant == RELAXED
    value = np.full((horizon + 1, n, 1 << n), np.nan)  # holder-not-in-set entries stay NaN
    value[0] = _boundary_values(rewards, n)
    recv = np.full((horizon + 1, n, 1 << n), -1, dtype=np.int8)
    sub = np.zeros((horizon + 1, n, 1 << n), dtype=np.int64)
    reach = reach_table(topology) if prune else np.zeros((1, 1), dtype=np.bool_)
    _fill(value, recv, sub, *_adjacency(topology, prices), variant == INDEX, prune, reach, TIE_TOL)
    return PolicyTable(variant, n, horizon, value, recv, sub)


def solve_relaxed(topology, rewards, prices, horizon, **kw) -> PolicyTable:
    return solve(topology, rewards, prices, horizon, RELAXED, **kw)


def solve_index(topology, rewards, prices, horizon, **kw) -> PolicyTable:
    return solve(topology, rewards, prices, horizon, INDEX, **kw)


def best_action(table: PolicyTable, replica: PacketReplica) -> tuple[Action, float]:
    if replica.remaining <= 0:
        raise Expired(replica.packet_uid)
    tau = replica.remaining
    if tau > table.horizon:
        raise ValueError(f"remaining {tau} exceeds table horizon {table.horizon}")
    h, mask = replica.holder, replica.delegated
    return table.action_at(h, mask, tau), table.value_at(h, mask, tau)
