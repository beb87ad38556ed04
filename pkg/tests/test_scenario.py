import pytest
from hypothesis import given, strategies as st

from dsrcast import scenario
from dsrcast.model import members
from dsrcast.scenario import ScenarioError, dump_scenario, parse_scenario


@pytest.mark.parametrize("name, n, gws, rates", [
    ("scenario1", 11, 2, [1.5, 2.0]),
    ("scenario2", 18, 9, None),
])
def test_bundled(name, n, gws, rates):
    topo = scenario.load_scenario(scenario.bundled(name))
    assert topo.n_nodes == n and len(members(topo.gateways)) == gws
    if rates:
        assert [f.arrival_rate for f in topo.flows] == rates
    g = members(topo.gateways)
    for a in g:
        for b in g:
            if a != b:
                link = topo.link(a, b)
                assert link.reliability == 1.0 and link.capacity == scenario.GATEWAY_CAPACITY


@pytest.mark.parametrize("name", ["scenario1", "scenario2"])
def test_bundled_roundtrip(name):
    topo = scenario.load_scenario(scenario.bundled(name))
    assert parse_scenario(dump_scenario(topo)) == topo


def test_empty_file_is_an_error():
    with pytest.raises(ScenarioError, match="nodes N"):
        parse_scenario("")
    with pytest.raises(ScenarioError):
        parse_scenario("# only a comment\n")


@pytest.mark.parametrize("text, lineno", [
    ("nodes 2\nlink 0 1 1\n", 2),
    ("nodes 2\nlink 0 1 one 0.5\n", 2),
    ("nodes 2\nnodes 3\n", 2),
    ("nodes 3\n\nflow 0 1.0 2 cubic\n", 3),
    ("nodes 2\nroute 0 1\n", 2),
])
def test_malformed_line_named(text, lineno):
    with pytest.raises(ScenarioError) as exc:
        parse_scenario(text)
    msg = str(exc.value)
    assert f"line {lineno}" in msg and "link FROM TO T P" in msg


def test_validation_runs_on_parse():
    with pytest.raises(ScenarioError, match="self-loop"):
        parse_scenario("nodes 2\nlink 1 1 1 0.5\n")
    topo = parse_scenario("nodes 2\nlink 1 1 1 0.5\n", validate=False)
    assert topo.links[0].tx == topo.links[0].rx == 1


def test_comments_and_defaults():
    topo = parse_scenario("nodes 3  # three\nlink 0 1 2 0.75\nflow 0 1.5 4\nflow 1 0.5 2 log\n")
    assert topo.flows[0].utility.value == "linear" and topo.flows[1].utility.value == "log"
    assert topo.links[0].capacity == 2


@given(st.integers(1, 8), st.data())
def test_roundtrip_random(n, data):
    lines = [f"nodes {n}"]
    pairs = data.draw(st.sets(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1))
                              .filter(lambda p: p[0] != p[1]), max_size=12))
    for a, b in sorted(pairs):
        p = data.draw(st.floats(0.01, 1.0))
        lines.append(f"link {a} {b} {data.draw(st.integers(1, 9))} {p!r}")
    lines.append(f"flow 0 {data.draw(st.floats(0, 5))!r} {data.draw(st.integers(1, 12))}")
    topo = parse_scenario("\n".join(lines))
    assert parse_scenario(dump_scenario(topo)) == topo
