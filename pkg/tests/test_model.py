import pytest
from hypothesis import given, strategies as st

from dsrcast.model import (
    ContractError, Flow, Link, PacketReplica, Topology, UtilityKind,
    full_mask, mask_of, members, popcount, split_delegation, validate_topology,
)

# source s=0 with neighbours A=1, B=2; C=3, D=4 behind A and E=5 behind B
S, A, B, C, D, E = range(6)


def test_split_six_node_example():
    rep = PacketReplica(0, 0, S, mask_of([S, A, B, C, D, E]), 5)
    snd, rcv = split_delegation(rep, A, mask_of([A, C, D]))
    assert snd.delegated == mask_of([S, B, E])
    assert rcv.holder == A and rcv.delegated == mask_of([A, C, D])
    assert rcv.packet_uid == rep.packet_uid and rcv.remaining == rep.remaining


def test_two_node_forced_split():
    rep = PacketReplica(3, 0, 0, 0b11, 2)
    snd, rcv = split_delegation(rep, 1, 0b10)
    assert (snd.delegated, rcv.delegated) == (0b01, 0b10)


@pytest.mark.parametrize("subset", [0b01, 0b10, 0b11])
def test_singleton_cannot_split(subset):
    rep = PacketReplica(0, 0, 0, 0b01, 1)
    with pytest.raises(ContractError):
        split_delegation(rep, 1, subset)


def test_split_rejects_bad_subsets():
    rep = PacketReplica(0, 0, 0, 0b111, 1)
    with pytest.raises(ContractError):
        split_delegation(rep, 1, 0b100)  # receiver missing
    with pytest.raises(ContractError):
        split_delegation(rep, 1, 0b1010)  # outside pi
    with pytest.raises(ContractError):
        split_delegation(rep, 1, 0b011)  # holder delegated away


@st.composite
def split_case(draw):
    n = draw(st.integers(2, 12))
    full = full_mask(n)
    holder = draw(st.integers(0, n - 1))
    pi = draw(st.integers(1, full)) | (1 << holder)
    others = [k for k in members(pi) if k != holder]
    if not others:
        pi |= 1 << ((holder + 1) % n)
        others = [(holder + 1) % n]
    rx = draw(st.sampled_from(others))
    extra = draw(st.lists(st.sampled_from(others), max_size=len(others)))
    return PacketReplica(0, 0, holder, pi, 3), rx, mask_of([rx, *extra])


@given(split_case())
def test_split_preserves_partition(case):
    rep, rx, subset = case
    snd, rcv = split_delegation(rep, rx, subset)
    assert snd.delegated & rcv.delegated == 0
    assert snd.delegated | rcv.delegated == rep.delegated
    assert popcount(snd.delegated) + popcount(rcv.delegated) == popcount(rep.delegated)
    assert snd.holder in members(snd.delegated) and rcv.holder in members(rcv.delegated)


@given(st.lists(st.integers(0, 63), unique=True))
def test_mask_roundtrip(nodes):
    assert members(mask_of(nodes)) == sorted(nodes)
    assert popcount(mask_of(nodes)) == len(nodes)


def _topo(links=(), flows=(), n=4):
    return Topology(n, tuple(links), tuple(flows))


def test_validate_clean(scenario1):
    assert validate_topology(scenario1) == []


def test_validate_self_loop():
    links = [Link(i, i, i + 1, 1, 0.9) for i in range(3)] + [Link(3, 2, 2, 1, 0.9)]
    assert validate_topology(_topo(links)) == ["link 3: self-loop"]


def test_validate_source_out_of_range():
    assert validate_topology(_topo(flows=[Flow(0, 4, 1.0, 2)])) == ["flow 0: source out of range"]


@pytest.mark.parametrize(
    "link, word",
    [
        (Link(0, 0, 1, 0, 0.5), "capacity"),
        (Link(0, 0, 1, 1, 0.0), "reliability"),
        (Link(0, 0, 1, 1, 1.5), "reliability"),
        (Link(0, 0, 9, 1, 0.5), "out of range"),
    ],
)
def test_validate_link_fields(link, word):
    diags = validate_topology(_topo([link]))
    assert len(diags) == 1 and diags[0].startswith("link 0") and word in diags[0]


def test_validate_duplicates_and_sizes():
    diags = validate_topology(_topo([Link(0, 0, 1, 1, 0.5), Link(1, 0, 1, 1, 0.5)]))
    assert diags == ["link 1: duplicate of link 0"]
    assert any("64" in d for d in validate_topology(Topology(65, (), ())))
    bad_flow = validate_topology(_topo(flows=[Flow(0, 0, -1.0, 0)]))
    assert len(bad_flow) == 2


def test_utility_kinds():
    assert UtilityKind.LINEAR.derivative(7.0) == 1.0
    assert UtilityKind.LOG.derivative(0.0) == 1.0
    assert UtilityKind.LOG.derivative(1.5) == pytest.approx(0.4)
    assert UtilityKind.parse("logarithmic") is UtilityKind.LOG
    with pytest.raises(ValueError):
        UtilityKind.parse("sqrt")


@given(st.floats(0, 1e6), st.floats(0, 1e6))
def test_log_derivative_nonincreasing(a, b):
    lo, hi = sorted((a, b))
    d = UtilityKind.LOG.derivative
    assert 0 < d(hi) <= d(lo) <= 1
