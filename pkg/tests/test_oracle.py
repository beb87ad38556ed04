import numpy as np
import pytest
from hypothesis import given, strategies as st

from dsrcast import dp, oracle
from dsrcast.model import Flow, Link, Topology
from dsrcast.verify import random_instance

from conftest import two_node

# values below were produced once by the oracle and frozen
LINE3 = Topology(
    3,
    (Link(0, 0, 1, 1, 0.8), Link(1, 1, 2, 1, 0.9), Link(2, 0, 2, 1, 0.5)),
    (Flow(0, 0, 1.0, 3),),
)
LINE3_PRICES = [0.1, 0.2, 0.3]


def relays(prices):
    # 0 -> {1, 2} -> 3, symmetric apart from the prices
    edges = [(0, 1), (0, 2), (1, 3), (2, 3)]
    topo = Topology(4, tuple(Link(i, a, b, 1, 0.9) for i, (a, b) in enumerate(edges)), (Flow(0, 0, 1.0, 2),))
    return oracle.expected_usage(topo, 0, [0, 0, 0, 1], prices, 2)


def test_singleton_network():
    topo = Topology(1, (), (Flow(0, 0, 1.0, 3),))
    assert oracle.enumerate_exact(topo, 0, [0.6], [], 3) == 0.6
    assert oracle.expected_usage(topo, 0, [0.6], [], 3) == []


def test_two_node_example():
    assert oracle.enumerate_exact(two_node(0.5), 0, [1, 1], [0.3], 1) == pytest.approx(1.2, abs=1e-12)
    assert oracle.enumerate_exact(two_node(0.5), 0, [1, 1], [2.0], 1, "index") == pytest.approx(-0.5, abs=1e-12)


def test_frozen_line_values():
    for variant in dp.VARIANTS:
        assert oracle.enumerate_exact(LINE3, 0, [1, 1, 1], LINE3_PRICES, 3, variant) == pytest.approx(2.596, abs=1e-12)
    assert oracle.expected_usage(LINE3, 0, [1, 1, 1], LINE3_PRICES, 3) == pytest.approx([1.24, 1.04, 0.0], abs=1e-12)


def test_usage_simple_cases():
    assert oracle.expected_usage(two_node(1.0), 0, [1, 1], [0.0], 1) == [1.0]
    assert oracle.expected_usage(LINE3, 0, [1, 1, 1], [50.0] * 3, 3) == [0.0, 0.0, 0.0]


def test_parallel_relays_pick_cheaper():
    assert relays([0.1, 0.3, 0.1, 0.1]) == pytest.approx([1.0, 0.0, 0.9, 0.0], abs=1e-12)
    assert relays([0.3, 0.1, 0.1, 0.1]) == pytest.approx([0.0, 1.0, 0.0, 0.9], abs=1e-12)


def test_size_guard():
    big = Topology(5, (), (Flow(0, 0, 1.0, 2),))
    with pytest.raises(oracle.OracleLimitError, match="<= 4 nodes"):
        oracle.enumerate_exact(big, 0, np.ones(5), [], 2)
    with pytest.raises(oracle.OracleLimitError):
        oracle.enumerate_exact(two_node(), 0, [1, 1], [0.0], 4)


def _permute(topo, perm):
    links = tuple(Link(l.id, perm[l.tx], perm[l.rx], l.capacity, l.reliability) for l in topo.links)
    flows = tuple(Flow(f.id, perm[f.source], f.arrival_rate, f.deadline) for f in topo.flows)
    return Topology(topo.n_nodes, links, flows)


@given(st.integers(0, 2**32 - 1), st.randoms(use_true_random=False))
def test_permutation_invariance(seed, rnd):
    rng = np.random.default_rng(seed)
    topo = random_instance(rng, 4, 3)
    rewards = rng.uniform(0, 1, topo.n_nodes)
    prices = rng.uniform(0, 2, len(topo.links))
    perm = list(range(topo.n_nodes))
    rnd.shuffle(perm)
    moved = np.empty_like(rewards)
    moved[perm] = rewards
    h = topo.flows[0].deadline
    for variant in dp.VARIANTS:
        a = oracle.enumerate_exact(topo, 0, rewards, prices, h, variant)
        b = oracle.enumerate_exact(_permute(topo, perm), 0, moved, prices, h, variant)
        assert a == pytest.approx(b, abs=1e-9)


@given(st.integers(0, 2**32 - 1))
def test_matches_dp(seed):
    rng = np.random.default_rng(seed)
    topo = random_instance(rng, 4, 3)
    rewards = rng.uniform(0, 1, topo.n_nodes)
    prices = rng.uniform(0, 2, len(topo.links))
    h = topo.flows[0].deadline
    for variant in dp.VARIANTS:
        want = oracle.enumerate_exact(topo, 0, rewards, prices, h, variant)
        got = dp.solve(topo, rewards, prices, h, variant).root_value(topo.flows[0].source)
        assert got == pytest.approx(want, abs=1e-9)


def test_index_prune_is_unsound():
    # the reachability prune may only be used for the relaxed recursion
    rng = np.random.default_rng(7)
    diffs = 0
    for _ in range(300):
        topo = random_instance(rng, 4, 3)
        rewards = rng.uniform(0, 1, topo.n_nodes)
        prices = rng.uniform(0, 2, len(topo.links))
        h = topo.flows[0].deadline
        src = topo.flows[0].source
        want = oracle.enumerate_exact(topo, 0, rewards, prices, h, "index")
        pruned = dp.solve_index(topo, rewards, prices, h, prune=True).root_value(src)
        diffs += abs(pruned - want) > 1e-9
        assert dp.solve_index(topo, rewards, prices, h).root_value(src) == pytest.approx(want, abs=1e-9)
    assert diffs > 0
