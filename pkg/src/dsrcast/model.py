"""Network, flow and packet types plus the delegated-set algebra.

Delegated sets are plain ``int`` bitmasks (bit ``k`` set means node ``k`` is a
member). Everything here is a value type; simulation and optimization live in
other modules.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from functools import cached_property

MAX_NODES = 64

NodeSet = int


def full_mask(n_nodes: int) -> NodeSet:
    return (1 << n_nodes) - 1


def mask_of(nodes) -> NodeSet:
    m = 0
    for k in nodes:
        m |= 1 << k
    return m


def members(mask: NodeSet) -> list[int]:
    out = []
    k = 0
    while mask:
        if mask & 1:
            out.append(k)
        mask >>= 1
        k += 1
    return out


def popcount(mask: NodeSet) -> int:
    return bin(mask).count("1")


def contains(mask: NodeSet, node: int) -> bool:
    return bool(mask >> node & 1)


def is_subset(a: NodeSet, b: NodeSet) -> bool:
    return a & ~b == 0


class UtilityKind(str, enum.Enum):
    LINEAR = "linear"
    LOG = "log"

    def evaluate(self, mu: float) -> float:
        mu = max(mu, 0.0)
        if self is UtilityKind.LINEAR:
            return mu
        return math.log(mu + 1.0)

    def derivative(self, mu: float) -> float:
        if self is UtilityKind.LINEAR:
            return 1.0
        return 1.0 / (max(mu, 0.0) + 1.0)

    @classmethod
    def parse(cls, text: str) -> "UtilityKind":
        aliases = {"linear": cls.LINEAR, "log": cls.LOG, "logarithmic": cls.LOG}
        try:
            return aliases[text.strip().lower()]
        except KeyError:
            raise ValueError(f"unknown utility kind {text!r} (expected linear | log)") from None


@dataclass(frozen=True)
class Link:
    id: int
    tx: int
    rx: int
    capacity: int
    reliability: float


@dataclass(frozen=True)
class Flow:
    id: int
    source: int
    arrival_rate: float
    deadline: int
    utility: UtilityKind = UtilityKind.LINEAR


@dataclass(frozen=True)
class Topology:
    n_nodes: int
    links: tuple[Link, ...]
    flows: tuple[Flow, ...]
    gateways: NodeSet = 0

    def __post_init__(self):
        object.__setattr__(self, "links", tuple(self.links))
        object.__setattr__(self, "flows", tuple(self.flows))

    @property
    def full(self) -> NodeSet:
        return full_mask(self.n_nodes)

    @cached_property
    def out_links(self) -> tuple[tuple[Link, ...], ...]:
        """Outgoing links per node, ordered by receiver id."""
        per = [[] for _ in range(self.n_nodes)]
        for link in self.links:
            if 0 <= link.tx < self.n_nodes:
                per[link.tx].append(link)
        return tuple(tuple(sorted(ls, key=lambda l: (l.rx, l.id))) for ls in per)

    @cached_property
    def link_index(self) -> dict[tuple[int, int], Link]:
        return {(l.tx, l.rx): l for l in self.links}

    def link(self, tx: int, rx: int) -> Link:
        return self.link_index[(tx, rx)]

    def with_deadline(self, deadline: int) -> "Topology":
        return replace(self, flows=tuple(replace(f, deadline=deadline) for f in self.flows))

    def with_utility(self, kind: UtilityKind) -> "Topology":
        return replace(self, flows=tuple(replace(f, utility=kind) for f in self.flows))

    def with_rates(self, rates) -> "Topology":
        return replace(
            self, flows=tuple(replace(f, arrival_rate=float(r)) for f, r in zip(self.flows, rates))
        )

    @property
    def max_deadline(self) -> int:
        return max((f.deadline for f in self.flows), default=0)


@dataclass
class PacketReplica:
    packet_uid: int
    flow: int
    holder: int
    delegated: NodeSet
    remaining: int


class ContractError(AssertionError):
    """A caller broke a documented precondition."""


def split_delegation(
    replica: PacketReplica, receiver: int, subset: NodeSet
) -> tuple[PacketReplica, PacketReplica]:
    """Hand ``subset`` of the holder's delegated set over to ``receiver``.

    Returns ``(sender, receiver)`` replicas. ``remaining`` is copied unchanged;
    the caller advances time.
    """
    pi = replica.delegated
    if not contains(subset, receiver):
        raise ContractError(f"receiver {receiver} not in delegated subset {subset:#x}")
    if not is_subset(subset, pi) or subset == pi:
        raise ContractError(f"subset {subset:#x} is not a proper subset of {pi:#x}")
    if contains(subset, replica.holder):
        raise ContractError(f"holder {replica.holder} may not delegate itself")
    sender = replace(replica, delegated=pi & ~subset)
    rx = PacketReplica(replica.packet_uid, replica.flow, receiver, subset, replica.remaining)
    return sender, rx


def validate_topology(t: Topology) -> list[str]:
    diags = []
    n = t.n_nodes
    if n < 1:
        diags.append(f"topology: n_nodes must be >= 1 (got {n})")
    if n > MAX_NODES:
        diags.append(f"topology: {n} nodes exceeds the {MAX_NODES}-node bitmask limit")
    seen = {}
    for link in t.links:
        tag = f"link {link.id}"
        if not (0 <= link.tx < n) or not (0 <= link.rx < n):
            diags.append(f"{tag}: endpoint out of range")
        if link.tx == link.rx:
            diags.append(f"{tag}: self-loop")
        if (link.tx, link.rx) in seen:
            diags.append(f"{tag}: duplicate of link {seen[link.tx, link.rx]}")
        else:
            seen[link.tx, link.rx] = link.id
        if not (isinstance(link.capacity, int) and link.capacity >= 1):
            diags.append(f"{tag}: capacity must be a positive integer")
        if not (0.0 < link.reliability <= 1.0):
            diags.append(f"{tag}: reliability must be in (0, 1]")
    if [l.id for l in t.links] != list(range(len(t.links))):
        diags.append("topology: link ids must be 0..L-1 in order")
    for flow in t.flows:
        tag = f"flow {flow.id}"
        if not (0 <= flow.source < n):
            diags.append(f"{tag}: source out of range")
        if flow.deadline < 1:
            diags.append(f"{tag}: deadline must be >= 1")
        if not flow.arrival_rate >= 0:
            diags.append(f"{tag}: arrival rate must be >= 0")
    if [f.id for f in t.flows] != list(range(len(t.flows))):
        diags.append("topology: flow ids must be 0..F-1 in order")
    if t.gateways & ~full_mask(max(n, 0)):
        diags.append("topology: gateway index out of range")
    return diags
