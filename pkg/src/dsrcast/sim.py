"""Slotted-time simulation of broadcast flows under a transmission policy.

Per slot: Poisson arrivals at each source, one decision per live replica,
independent Bernoulli link outcomes, then every packet ages one slot and
expired packets leave the network. ACKs arrive at the end of the slot, so a
sender sees its shrunken delegated set from the next slot on.

Policies:

* ``relaxed``  DP actions executed as-is, no per-slot link cap.
* ``index``    DP (index variant) actions, per link the top ``T_l``
               positive-value packets by W; demand counts all positive ones.
* ``flood``    every holder pushes to each neighbour in its set, handing over
               that neighbour's BFS subtree; capped per link.
* ``random``   every holder sends to one uniformly chosen neighbour in its set,
               delegating only that neighbour; capped per link.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .model import ContractError, Topology

POLICIES = ("relaxed", "index", "flood", "random")

ARRIVAL = "Arrival"
ATTEMPT = "TransmitAttempt"
SUCCESS = "DeliverySuccess"
FAILURE = "DeliveryFailure"
EXPIRY = "Expiry"


class InvariantError(AssertionError):
    pass


@dataclass(frozen=True)
class SlotEvent:
    slot: int
    kind: str
    packet_uid: int
    link: int = -1
    subset: int = 0

    def to_line(self) -> str:
        return f"{self.slot}\t{self.kind}\t{self.packet_uid}\t{self.link}\t{self.subset}"


@dataclass
class Metrics:
    delivered: np.ndarray
    transmissions: np.ndarray
    demand: np.ndarray
    arrivals: np.ndarray
    slots: int = 0
    max_usage: np.ndarray = None
    usage_hist: list = None

    @classmethod
    def empty(cls, topology: Topology, as_lists: bool = False) -> "Metrics":
        n, l, f = topology.n_nodes, len(topology.links), len(topology.flows)
        m = cls(
            delivered=[[0] * f for _ in range(n)],
            transmissions=[[0] * f for _ in range(l)],
            demand=[[0] * f for _ in range(l)],
            arrivals=[0] * f,
            max_usage=[0] * l,
            usage_hist=[Counter() for _ in range(l)],
        )
        return m if as_lists else m.frozen()

    def frozen(self) -> "Metrics":
        """Convert list accumulators (used inside the slot loop) to arrays."""
        n_flows = len(self.arrivals)

        def arr(rows):
            return np.asarray(rows, dtype=np.int64).reshape(len(rows), n_flows)

        return Metrics(
            arr(self.delivered),
            arr(self.transmissions),
            arr(self.demand),
            np.asarray(self.arrivals, dtype=np.int64),
            self.slots,
            np.asarray(self.max_usage, dtype=np.int64),
            self.usage_hist,
        )

    def mu(self) -> np.ndarray:
        """Timely-throughput per (node, flow), packets/slot."""
        return self.delivered / max(self.slots, 1)

    def eps(self) -> np.ndarray:
        """Transmissions per (link, flow) per slot."""
        return self.transmissions / max(self.slots, 1)

    def link_usage(self) -> np.ndarray:
        return self.transmissions.sum(axis=1) / max(self.slots, 1)

    def link_demand(self) -> np.ndarray:
        return self.demand.sum(axis=1) / max(self.slots, 1)

    def merge(self, other: "Metrics") -> "Metrics":
        hist = [a + b for a, b in zip(self.usage_hist, other.usage_hist)]
        return Metrics(
            self.delivered + other.delivered,
            self.transmissions + other.transmissions,
            self.demand + other.demand,
            self.arrivals + other.arrivals,
            self.slots + other.slots,
            np.maximum(self.max_usage, other.max_usage),
            hist,
        )


class _Packet:
    """Live packet. ``holders`` lists replicas that still have someone to
    delegate to; replicas left holding only themselves can never act again
    and are folded into the ``settled`` mask."""

    __slots__ = ("uid", "flow", "born", "remaining", "holders", "settled", "received")

    def __init__(self, uid, flow, born, remaining, source, full):
        self.uid = uid
        self.flow = flow
        self.born = born
        self.remaining = remaining
        self.received = 1 << source
        if full == 1 << source:
            self.holders = []
            self.settled = full
        else:
            self.holders = [[source, full]]
            self.settled = 0

    def compact(self):
        keep = []
        for rep in self.holders:
            if rep[1] == 1 << rep[0]:
                self.settled |= rep[1]
            else:
                keep.append(rep)
        self.holders = keep

    def replicas(self):
        """All (holder, delegated) pairs including settled singletons."""
        out = [tuple(r) for r in self.holders]
        s, k = self.settled, 0
        while s:
            if s & 1:
                out.append((k, 1 << k))
            s >>= 1
            k += 1
        return sorted(out)


def poisson_inversion(uniform: float, lam: float) -> int:
    """Poisson(lam) sample by CDF inversion of a single uniform draw."""
    if lam <= 0.0:
        return 0
    p = math.exp(-lam)
    cdf = p
    k = 0
    while uniform > cdf and p > 0.0:
        k += 1
        p *= lam / k
        cdf += p
    return k


def _bfs_split(topology: Topology, holder: int, mask: int) -> list[tuple[int, int]]:
    """Partition ``mask - {holder}`` by first hop on a BFS tree rooted at ``holder``.

    Returns ``[(first_hop, subtree_mask)]`` for first hops in ``mask``;
    members unreachable inside ``mask`` stay with the holder.
    """
    owner = {}
    frontier = []
    for link in topology.out_links[holder]:
        if mask >> link.rx & 1 and link.rx != holder and link.rx not in owner:
            owner[link.rx] = link.rx
            frontier.append(link.rx)
    while frontier:
        nxt = []
        for k in frontier:
            for link in topology.out_links[k]:
                r = link.rx
                if mask >> r & 1 and r != holder and r not in owner:
                    owner[r] = owner[k]
                    nxt.append(r)
        frontier = nxt
    subtrees = {}
    for node, hop in owner.items():
        subtrees[hop] = subtrees.get(hop, 0) | (1 << node)
    return sorted(subtrees.items())


ENGINES = ("auto", "python", "compiled")
HIST_WIDTH = 4096  # compiled engine clips per-slot link usage in the histogram here


class Simulator:
    """Owns the live packets and RNG stream; ``run`` may be called repeatedly.

    Packets in flight carry over between calls and continue under whatever
    tables the next call supplies.

    ``engine`` picks the slot loop. ``compiled`` (numba) handles the DP
    policies without event logging and gives the same metrics as ``python``
    for the same seed. ``auto`` takes the compiled loop when it can. The
    choice is fixed at the first ``run`` since each loop keeps its own
    packet store.
    """

    def __init__(
        self,
        topology: Topology,
        seed: int,
        check_invariants: bool = True,
        count_source: bool = True,
        log_events: bool = False,
        engine: str = "auto",
    ):
        if engine not in ENGINES:
            raise ValueError(f"unknown engine {engine!r}; choose from {ENGINES}")
        if engine == "compiled" and log_events:
            raise ValueError("the compiled engine does not log events")
        self.engine = engine
        self._fast = None
        self.topology = topology
        self.rng = np.random.default_rng(seed)
        self.check_invariants = check_invariants
        self.count_source = count_source
        self.events: list[SlotEvent] | None = [] if log_events else None
        self.slot = 0
        self.packets: list[_Packet] = []
        self._next_uid = 0
        n = topology.n_nodes
        self._link_id = [[-1] * n for _ in range(n)]
        for link in topology.links:
            self._link_id[link.tx][link.rx] = link.id
        self._rel = [l.reliability for l in topology.links]
        self._cap = [l.capacity for l in topology.links]
        self._rx = [l.rx for l in topology.links]
        self._tx = [l.tx for l in topology.links]
        self._nbr = [[l.rx for l in topology.out_links[k]] for k in range(n)]
        self._bfs_cache: dict = {}

    def run(self, slots: int, policy: str = "relaxed", tables=None) -> Metrics:
        if policy not in POLICIES:
            raise ValueError(f"unknown policy {policy!r}")
        topo = self.topology
        if policy in ("relaxed", "index"):
            if tables is None or len(tables) != len(topo.flows):
                raise ContractError("one policy table per flow is required")
            for f, tab in zip(topo.flows, tables):
                if tab.n_nodes != topo.n_nodes or tab.horizon < f.deadline:
                    raise ContractError(f"table for flow {f.id} does not cover its state space")
        if self._use_compiled(policy):
            return self._run_compiled(slots, policy, tables)
        acc = Metrics.empty(topo, as_lists=True)
        for _ in range(slots):
            self._step(policy, tables, acc)
        return acc.frozen()

    def _use_compiled(self, policy) -> bool:
        dp_policy = policy in ("relaxed", "index")
        if self.engine == "auto":
            if self.events is not None or (not dp_policy and self.slot == 0):
                self.engine = "python"
            elif dp_policy:
                self.engine = "compiled"
        if self.engine == "compiled" and not dp_policy:
            raise ContractError(f"policy {policy!r} needs the python engine")
        return self.engine == "compiled"

    def _run_compiled(self, slots, policy, tables) -> Metrics:
        from . import _fastsim

        topo = self.topology
        n, n_links, n_flows = topo.n_nodes, len(topo.links), len(topo.flows)
        st = self._fast
        if st is None:
            link_id = np.full((n, n), -1, dtype=np.int64)
            for link in topo.links:
                link_id[link.tx, link.rx] = link.id
            cap = 64
            st = self._fast = {
                "f_src": np.array([f.source for f in topo.flows], dtype=np.int64),
                "f_rate": np.array([f.arrival_rate for f in topo.flows], dtype=float),
                "f_deadline": np.array([f.deadline for f in topo.flows], dtype=np.int64),
                "link_id": link_id,
                "l_rel": np.array(self._rel, dtype=float),
                "l_cap": np.array(self._cap, dtype=np.int64),
                "pk": _packet_store(cap, n),
                "counters": np.zeros(3, dtype=np.int64),
                "u": np.empty(0),
            }
        val, recv, sub = _stack_tables(tables, n)
        acc = {
            "delivered": np.zeros((n, n_flows), dtype=np.int64),
            "sent": np.zeros((n_links, n_flows), dtype=np.int64),
            "demand": np.zeros((n_links, n_flows), dtype=np.int64),
            "hist": np.zeros((n_links, HIST_WIDTH), dtype=np.int64),
            "max_usage": np.zeros(n_links, dtype=np.int64),
            "arrivals": np.zeros(n_flows, dtype=np.int64),
        }
        info = np.zeros(2, dtype=np.int64)
        left = slots
        chunk = max(4096, 64 * n_flows)
        while left > 0:
            pk, counters = st["pk"], st["counters"]
            done, status = _fastsim.run_slots(
                left, self.slot, policy == "index", self.count_source, self.check_invariants,
                n, st["f_src"], st["f_rate"], st["f_deadline"], st["link_id"], st["l_rel"], st["l_cap"],
                val, recv, sub,
                *pk, counters, st["u"],
                acc["delivered"], acc["sent"], acc["demand"], acc["hist"], acc["max_usage"],
                acc["arrivals"], info,
            )
            self.slot += done
            left -= done
            if status == _fastsim.NEED_UNIFORMS:
                rest = st["u"][counters[2]:]
                need = n_flows + (counters[0] + 8) * n
                st["u"] = np.concatenate([rest, self.rng.random(max(chunk, need))])
                counters[2] = 0
            elif status == _fastsim.NEED_SPACE:
                st["pk"] = _grow_store(pk, max(2 * pk[0].shape[0], int(info[0]) + 16))
            elif status == _fastsim.CAP_VIOLATION:
                raise InvariantError(f"slot {info[0]}: link {info[1]} over capacity")
            elif status == _fastsim.PARTITION_VIOLATION:
                raise InvariantError(
                    f"slot {info[0]}: packet {info[1]} delegated sets do not partition the nodes"
                )
        hist = [Counter({c: int(k) for c, k in enumerate(row) if k}) for row in acc["hist"]]
        return Metrics(
            acc["delivered"], acc["sent"], acc["demand"], acc["arrivals"], slots,
            acc["max_usage"], hist,
        )

    def live_packets(self) -> int:
        if self._fast is not None:
            return int(self._fast["counters"][0])
        return len(self.packets)

    def _step(self, policy, tables, metrics):
        topo = self.topology
        n_nodes = topo.n_nodes
        full = topo.full
        rng = self.rng
        slot = self.slot
        events = self.events
        delivered = metrics.delivered
        sent = metrics.transmissions

        for f in topo.flows:
            k = poisson_inversion(rng.random(), f.arrival_rate)
            metrics.arrivals[f.id] += k
            for _ in range(k):
                pkt = _Packet(self._next_uid, f.id, slot, f.deadline, f.source, full)
                self._next_uid += 1
                self.packets.append(pkt)
                if self.count_source:
                    delivered[f.source][f.id] += 1
                if events is not None:
                    events.append(SlotEvent(slot, ARRIVAL, pkt.uid))

        # attempts: (link, uid, packet, replica index, receiver, subset)
        if policy == "relaxed":
            attempts = self._decide_relaxed(tables)
        else:
            attempts = self._decide_capped(policy, tables, metrics)

        attempts.sort(key=lambda a: (a[0], a[1]))
        usage = [0] * len(topo.links)
        if attempts:
            rel = self._rel
            demand = metrics.demand if policy == "relaxed" else None
            touched = []
            draws = rng.random(len(attempts)).tolist()
            for (lid, uid, pkt, ri, rx, subset), u in zip(attempts, draws):
                f = pkt.flow
                sent[lid][f] += 1
                if demand is not None:
                    demand[lid][f] += 1
                usage[lid] += 1
                ok = u < rel[lid]
                if ok:
                    # split_delegation on raw masks: sender keeps pi - subset
                    pkt.holders[ri][1] &= ~subset
                    pkt.holders.append([rx, subset])
                    touched.append(pkt)
                    if not pkt.received >> rx & 1:
                        pkt.received |= 1 << rx
                        delivered[rx][f] += 1
                if events is not None:
                    events.append(SlotEvent(slot, ATTEMPT, uid, lid, subset))
                    events.append(SlotEvent(slot, SUCCESS if ok else FAILURE, uid, lid, subset))
            for pkt in touched:
                pkt.compact()
        cap = self._cap
        hist = metrics.usage_hist
        peak = metrics.max_usage
        for lid, c in enumerate(usage):
            hist[lid][c] += 1
            if c > peak[lid]:
                peak[lid] = c
            if policy != "relaxed" and c > cap[lid]:
                raise InvariantError(f"slot {slot}: link {lid} used {c} > capacity {cap[lid]}")

        live = []
        for pkt in self.packets:
            pkt.remaining -= 1
            if pkt.remaining <= 0:
                if events is not None:
                    events.append(SlotEvent(slot, EXPIRY, pkt.uid))
            else:
                live.append(pkt)
        self.packets = live

        if self.check_invariants:
            for pkt in live:
                union = pkt.settled
                size = union.bit_count()
                for h, mask in pkt.holders:
                    if not mask >> h & 1:
                        raise InvariantError(f"packet {pkt.uid}: holder {h} not in its delegated set")
                    union |= mask
                    size += mask.bit_count()
                if union != full or size != n_nodes:
                    raise InvariantError(
                        f"slot {slot}: packet {pkt.uid} delegated sets do not partition the nodes"
                    )
        metrics.slots += 1
        self.slot += 1

    def _decide_relaxed(self, tables):
        n = self.topology.n_nodes
        link_id = self._link_id
        flat = [t.flat() for t in tables]
        attempts = []
        for pkt in self.packets:
            _, recv, sub = flat[pkt.flow]
            tau = pkt.remaining
            for ri, (h, mask) in enumerate(pkt.holders):
                idx = ((tau * n + h) << n) | mask
                m = recv[idx]
                if m >= 0:
                    attempts.append((link_id[h][m], pkt.uid, pkt, ri, m, sub[idx]))
        return attempts

    def _decide_capped(self, policy, tables, metrics):
        n = self.topology.n_nodes
        link_id = self._link_id
        per_link: dict[int, list] = {}
        if policy == "index":
            flat = [t.flat() for t in tables]
            for pkt in self.packets:
                value, recv, sub = flat[pkt.flow]
                tau = pkt.remaining
                for ri, (h, mask) in enumerate(pkt.holders):
                    idx = ((tau * n + h) << n) | mask
                    m = recv[idx]
                    if m < 0:
                        continue
                    w = value[idx]
                    lid = link_id[h][m]
                    if w > 0.0:
                        metrics.demand[lid][pkt.flow] += 1
                        per_link.setdefault(lid, []).append(
                            (-w, pkt.born, pkt.uid, pkt, ri, m, sub[idx])
                        )
            attempts = []
            for lid, cands in per_link.items():
                cands.sort(key=lambda c: (c[0], c[1], c[2]))
                for c in cands[: self._cap[lid]]:
                    attempts.append((lid, c[2], c[3], c[4], c[5], c[6]))
            return attempts

        rng = self.rng
        for pkt in self.packets:
            for ri, (h, mask) in enumerate(pkt.holders):
                if policy == "flood":
                    key = (h, mask)
                    split = self._bfs_cache.get(key)
                    if split is None:
                        split = _bfs_split(self.topology, h, mask)
                        self._bfs_cache[key] = split
                    for m, subtree in split:
                        lid = link_id[h][m]
                        per_link.setdefault(lid, []).append((pkt.born, pkt.uid, pkt, ri, m, subtree))
                else:
                    choices = [m for m in self._nbr[h] if mask >> m & 1]
                    if not choices:
                        continue
                    m = choices[int(rng.integers(len(choices)))]
                    lid = link_id[h][m]
                    per_link.setdefault(lid, []).append((pkt.born, pkt.uid, pkt, ri, m, 1 << m))
        attempts = []
        for lid, cands in per_link.items():
            cands.sort(key=lambda c: (c[0], c[1]))
            for born, uid, pkt, ri, m, subset in cands[: self._cap[lid]]:
                metrics.demand[lid][pkt.flow] += 1
                attempts.append((lid, uid, pkt, ri, m, subset))
        return attempts


def _packet_store(cap, n_nodes):
    """uid, flow, born, remaining, n_holders, holders, masks, settled, received."""
    i = lambda: np.zeros(cap, dtype=np.int64)
    return [i(), i(), i(), i(), i(),
            np.zeros((cap, n_nodes), dtype=np.int64), np.zeros((cap, n_nodes), dtype=np.int64),
            i(), i()]


def _grow_store(store, cap):
    out = _packet_store(cap, store[5].shape[1])
    for old, new in zip(store, out):
        new[: old.shape[0]] = old
    return out


def _stack_tables(tables, n_nodes):
    """Stack per-flow tables into (F, H + 1, N, 2^N) arrays, padding short horizons."""
    hmax = max(t.horizon for t in tables)
    shape = (len(tables), hmax + 1, n_nodes, 1 << n_nodes)
    val = np.zeros(shape)
    recv = np.full(shape, -1, dtype=np.int8)
    sub = np.zeros(shape, dtype=np.int64)
    for f, t in enumerate(tables):
        val[f, : t.horizon + 1] = t.value
        recv[f, : t.horizon + 1] = t.receiver
        sub[f, : t.horizon + 1] = t.subset
    return val, recv, sub


def simulate(topology, tables, slots, seed, policy="relaxed", log_events=False, **kw):
    """One-shot run from an empty network. Returns ``(metrics, events or None)``."""
    sim = Simulator(topology, seed, log_events=log_events, **kw)
    metrics = sim.run(slots, policy, tables)
    return metrics, sim.events


def run_baseline(topology, kind, slots, seed, **kw) -> Metrics:
    if kind not in ("flood", "random"):
        raise ValueError(f"unknown baseline {kind!r}")
    return Simulator(topology, seed, **kw).run(slots, kind)


def write_events(events, path_or_stream):
    lines = "".join(e.to_line() + "\n" for e in events)
    if hasattr(path_or_stream, "write"):
        path_or_stream.write(lines)
    else:
        with open(path_or_stream, "w") as fh:
            fh.write(lines)
