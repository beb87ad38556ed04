import math

import numpy as np
import pytest

from dsrcast import dp, dual, oracle
from dsrcast.model import Flow, Link, Topology, UtilityKind
from dsrcast.sim import Simulator

from conftest import two_node


def state_for(topo, mu=None, lam=None):
    st = dual.EpochState.initial(topo)
    if mu is not None:
        st.mu[:] = mu
    if lam is not None:
        st.lam[:] = lam
    return st


def test_gradient_rewards():
    topo = two_node()
    assert list(dual.gradient_rewards(state_for(topo, 3.0), topo.flows[0])) == [1.0, 1.0]
    log = topo.with_utility(UtilityKind.LOG)
    assert list(dual.gradient_rewards(state_for(log, 0.0), log.flows[0])) == [1.0, 1.0]
    assert dual.gradient_rewards(state_for(log, 1.5), log.flows[0]) == pytest.approx([0.4, 0.4])


def test_update_prices_examples():
    assert dual.update_prices([0.7], [2.0], [2], 0.3) == pytest.approx([0.7])
    assert dual.update_prices([0.0], [1.0], [2], 0.3) == pytest.approx([0.0])
    assert dual.update_prices([1.0], [3.0], [2], 0.1) == pytest.approx([1.1])


def test_step_schedule():
    st = dual.EpochState.initial(two_node(), beta0=0.5)
    steps = []
    for _ in range(4):
        steps.append(st.step)
        st.k += 1
    assert steps == pytest.approx([0.5, 0.25, 0.5 / 3, 0.125])


def test_fold_is_running_mean():
    st = dual.EpochState.initial(two_node())
    samples = [np.full((2, 1), x) for x in (1.0, 2.0, 6.0)]
    for s in samples:
        st.fold(s, np.zeros((1, 1)))
        st.k += 1
    assert st.mu == pytest.approx(np.full((2, 1), 3.0))


def _epoch(topo, epoch_len, seed, lam=0.0):
    st = state_for(topo, lam=lam)
    st.epoch_len = epoch_len
    tables = dual.build_tables(topo, st)
    m = dual.run_epoch(topo, st, tables, seed)
    return m.mu(), m.eps()


def test_run_epoch_zero_arrivals():
    mu, eps = _epoch(two_node(rate=0.0), 500, 0)
    assert not mu.any() and not eps.any()


@pytest.mark.parametrize("p, deadline", [(1.0, 3), (0.5, 1)])
def test_run_epoch_single_link_throughput(p, deadline):
    rate, slots = 1.0, 4000
    mu, eps = _epoch(two_node(p, cap=10, rate=rate, deadline=deadline), slots, 3)
    sigma = math.sqrt(p * rate / slots)
    assert abs(mu[1, 0] - p * rate) < 3 * sigma
    assert abs(eps[0, 0] - rate) < 3 * math.sqrt(rate / slots)


def test_dual_value_examples():
    assert dual.dual_value_exact(two_node(1.0), [0.0]) == 2.0
    assert dual.dual_value_exact(two_node(0.5, cap=3, rate=0.0), [0.4]) == pytest.approx(1.2)
    with pytest.raises(ValueError):
        dual.dual_value_exact(two_node().with_utility(UtilityKind.LOG), [0.0])


def test_dual_value_matches_oracle():
    edges = [(0, 1), (1, 2), (2, 3), (0, 2), (3, 1)]
    links = tuple(Link(i, a, b, 2, 0.5 + 0.1 * i) for i, (a, b) in enumerate(edges))
    topo = Topology(4, links, (Flow(0, 0, 1.3, 3), Flow(1, 2, 0.4, 2)))
    lam = np.array([0.2, 0.0, 0.5, 1.1, 0.3])
    want = sum(f.arrival_rate * oracle.enumerate_exact(topo, f.id, np.ones(4), lam, f.deadline)
               for f in topo.flows) + 2 * lam.sum()
    assert dual.dual_value_exact(topo, lam) == pytest.approx(want, abs=1e-9)


def test_mixture_schedule():
    sched = dual.mixture_schedule(0.3, 10)
    assert [w for w, _ in sched].count(1) == 3
    assert [i for w, i in sched if w == 1] == [1, 2, 3]
    assert [i for w, i in sched if w == 2] == list(range(1, 8))
    assert all(w == 2 for w, _ in dual.mixture_schedule(0.0, 5))


def test_uncongested_prices_stay_zero():
    topo = two_node(0.8, cap=100, rate=1.0, deadline=3)
    rep = dual.optimize(topo, 20, 400, seed=1, strict_epoch_len=False)
    assert all(not lam.any() for lam in rep.lambda_trace)
    assert len(rep.lambda_trace) == len(rep.utility_trace) == len(rep.lagrangian_trace) == 20
    best = dual.dual_value_exact(topo, [0.0])
    assert rep.utility_trace[-1] == pytest.approx(best, rel=0.02)


def test_symmetric_branches():
    # mirror image under 0 <-> 3, 1 <-> 2; one flow enters at each end
    edges = [(0, 1), (3, 2), (1, 2), (2, 1)]
    links = tuple(Link(i, a, b, 1, 0.7) for i, (a, b) in enumerate(edges))
    topo = Topology(4, links, (Flow(0, 0, 0.6, 3), Flow(1, 3, 0.6, 3)))
    rep = dual.optimize(topo, 20, 500, seed=2, strict_epoch_len=False)
    sigma = math.sqrt(2 * 0.6 / rep.metrics.slots)
    assert abs(rep.mu[1, 0] - rep.mu[2, 1]) < 3 * sigma
    assert abs(rep.mu[2, 0] - rep.mu[1, 1]) < 3 * sigma


def test_congested_link_prices_and_slackness():
    # A = 2 packets/slot over a T = 1 link: price settles where the link is used half the time
    topo = two_node(1.0, cap=1, rate=2.0, deadline=1)
    rep = dual.optimize(topo, 200, 100, seed=0, strict_epoch_len=False)
    assert all((lam >= 0).all() for lam in rep.lambda_trace)
    usage = rep.link_usage()
    assert abs(rep.lam[0] * (1 - usage[0])) <= 0.1 * rep.lam[0] * 1
    assert rep.lam[0] == pytest.approx(1.0, abs=0.05)


def test_nested_variant_runs():
    topo = two_node(1.0, cap=1, rate=2.0, deadline=1)
    rep = dual.optimize(topo, 40, 100, seed=0, inner_epochs=4, strict_epoch_len=False)
    # prices only move every fourth epoch
    lams = [float(l[0]) for l in rep.lambda_trace]
    assert lams[0] == lams[1] == lams[2] == 0.0 and lams[3] > 0
    assert rep.epochs == 40


def test_epoch_len_guard():
    with pytest.raises(ValueError, match="50 x max deadline"):
        dual.optimize(two_node(deadline=4), 1, 100)


def test_weak_duality():
    # index-DSR respects every cap in every slot, so it is feasible
    edges = [(0, 1), (1, 2), (0, 2)]
    topo = Topology(3, tuple(Link(i, a, b, 1, 0.8) for i, (a, b) in enumerate(edges)), (Flow(0, 0, 1.5, 3),))
    st = dual.EpochState.initial(topo)
    m = Simulator(topo, 4).run(6000, "index", dual.build_tables(topo, st, dp.INDEX))
    achieved = dual.total_utility(topo, m.mu())
    sigma = math.sqrt(3 * 1.5 / m.slots)
    for lam in ([0.0] * 3, [0.5, 0.5, 0.5], [0.2, 1.0, 0.1]):
        assert dual.dual_value_exact(topo, lam) >= achieved - 3 * sigma


def test_scenario1_utility_trend(scenario1):
    rep = dual.optimize(scenario1, 30, 1000, seed=0)
    trace = np.array(rep.utility_trace)
    smooth = np.convolve(trace, np.ones(10) / 10, mode="valid")
    assert (smooth[1:] >= 0.95 * np.maximum.accumulate(smooth)[:-1]).all()
