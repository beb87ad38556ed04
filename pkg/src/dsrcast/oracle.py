"""Brute-force single-packet optimizer for tiny instances.

Unlike the DP, this never assumes the holders' sub-problems separate: the
state is the whole partition ``((holder, delegated), ...)`` and every slot
all holders choose jointly, with every success/failure combination of the
chosen transmissions expanded. Used only to check ``dp`` and the dual.
"""

from __future__ import annotations

import itertools
from functools import lru_cache

from .model import Topology

MAX_NODES = 4
MAX_HORIZON = 3


class OracleLimitError(ValueError):
    pass


def _holder_options(topology, holder, delegated, forced):
    """Candidate actions for one holder, in tie-break order. ``None`` means idle."""
    others = [k for k in range(topology.n_nodes) if delegated >> k & 1 and k != holder]
    sends = []
    for rx in sorted(others):
        link = topology.link_index.get((holder, rx))
        if link is None:
            continue
        rest = [k for k in others if k != rx]
        for r in range(len(rest) + 1):
            for extra in itertools.combinations(rest, r):
                subset = 1 << rx
                for k in extra:
                    subset |= 1 << k
                sends.append((rx, r + 1, subset, link))
    sends.sort(key=lambda s: (s[0], s[1], s[2]))
    opts = [(rx, subset, link) for rx, _, subset, link in sends]
    if not forced or not opts:
        opts.insert(0, None)
    return opts


def _solve(topology: Topology, rewards, prices, horizon, forced):
    n_links = len(topology.links)
    rewards = tuple(float(r) for r in rewards)
    prices = tuple(float(p) for p in prices)

    @lru_cache(maxsize=None)
    def best(state, tau):
        if tau == 0:
            return sum(rewards[h] for h, _ in state), (0.0,) * n_links
        per_holder = [_holder_options(topology, h, d, forced) for h, d in state]
        best_val = None
        best_use = None
        for joint in itertools.product(*per_holder):
            sends = [(i, a) for i, a in enumerate(joint) if a is not None]
            cost = sum(prices[a[2].id] for _, a in sends)
            val = -cost
            use = [0.0] * n_links
            for _, a in sends:
                use[a[2].id] += 1.0
            for outcome in itertools.product((True, False), repeat=len(sends)):
                prob = 1.0
                holders = dict(state)
                for (i, (rx, subset, link)), ok in zip(sends, outcome):
                    if ok:
                        prob *= link.reliability
                        h = state[i][0]
                        holders[h] &= ~subset
                        holders[rx] = subset
                    else:
                        prob *= 1.0 - link.reliability
                if prob == 0.0:
                    continue
                nxt = tuple(sorted(holders.items()))
                v, u = best(nxt, tau - 1)
                val += prob * v
                for j in range(n_links):
                    use[j] += prob * u[j]
            if best_val is None or val > best_val + 1e-12:
                best_val, best_use = val, tuple(use)
        return best_val, best_use

    return best


def _check(topology, horizon, max_nodes, max_horizon):
    if topology.n_nodes > max_nodes or horizon > max_horizon:
        raise OracleLimitError(
            f"oracle limited to <= {max_nodes} nodes and horizon <= {max_horizon} "
            f"(got {topology.n_nodes} nodes, horizon {horizon})"
        )


def _root(topology, flow):
    src = topology.flows[flow].source if isinstance(flow, int) else flow.source
    return ((src, topology.full),)


def enumerate_exact(
    topology: Topology,
    flow,
    rewards,
    prices,
    horizon: int,
    variant: str = "relaxed",
    max_nodes: int = MAX_NODES,
    max_horizon: int = MAX_HORIZON,
) -> float:
    """Exact optimal expected ``sum reward * P(delivered) - sum price * E[tx]`` for one packet."""
    _check(topology, horizon, max_nodes, max_horizon)
    best = _solve(topology, rewards, prices, horizon, variant == "index")
    return best(_root(topology, flow), horizon)[0]


def expected_usage(
    topology: Topology,
    flow,
    rewards,
    prices,
    horizon: int,
    variant: str = "relaxed",
    max_nodes: int = MAX_NODES,
    max_horizon: int = MAX_HORIZON,
) -> list[float]:
    """Expected transmissions per link (indexed by link id) under the optimal strategy."""
    _check(topology, horizon, max_nodes, max_horizon)
    best = _solve(topology, rewards, prices, horizon, variant == "index")
    return list(best(_root(topology, flow), horizon)[1])
