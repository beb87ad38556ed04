"""Line-oriented scenario files.

::

    nodes N
    gateways i j k ...          (optional)
    link FROM TO T P
    flow SRC RATE DEADLINE [linear|log]

``#`` starts a comment. Link and flow ids follow file order. Gateways are
joined by a directed clique of reliable wide links; any clique link missing
from the file is appended after the listed ones.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from .model import Flow, Link, Topology, UtilityKind, mask_of, members, validate_topology

GATEWAY_CAPACITY = 32

GRAMMAR = "nodes N | gateways I J ... | link FROM TO T P | flow SRC RATE DEADLINE [linear|log]"


class ScenarioError(ValueError):
    pass


def _err(lineno, line, why):
    return ScenarioError(f"line {lineno}: {why}: {line.strip()!r} (expected {GRAMMAR})")


def parse_scenario(text: str, validate: bool = True) -> Topology:
    n_nodes = None
    gateways = []
    links = []
    flows = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, *args = line.split()
        try:
            if head == "nodes" and len(args) == 1:
                if n_nodes is not None:
                    raise _err(lineno, raw, "duplicate nodes line")
                n_nodes = int(args[0])
            elif head == "gateways":
                gateways.extend(int(a) for a in args)
            elif head == "link" and len(args) == 4:
                tx, rx, cap = (int(a) for a in args[:3])
                links.append(Link(len(links), tx, rx, cap, float(args[3])))
            elif head == "flow" and len(args) in (3, 4):
                kind = UtilityKind.parse(args[3]) if len(args) == 4 else UtilityKind.LINEAR
                flows.append(Flow(len(flows), int(args[0]), float(args[1]), int(args[2]), kind))
            else:
                raise _err(lineno, raw, "unrecognised line")
        except ValueError as exc:
            if isinstance(exc, ScenarioError):
                raise
            raise _err(lineno, raw, str(exc)) from None
    if n_nodes is None:
        raise ScenarioError(f"missing 'nodes N' header (expected {GRAMMAR})")
    present = {(l.tx, l.rx) for l in links}
    for a in gateways:
        for b in gateways:
            if a != b and (a, b) not in present:
                links.append(Link(len(links), a, b, GATEWAY_CAPACITY, 1.0))
    topo = Topology(n_nodes, links, flows, mask_of(gateways))
    if validate:
        diags = validate_topology(topo)
        if diags:
            raise ScenarioError("; ".join(diags))
    return topo


def load_scenario(path, validate: bool = True) -> Topology:
    return parse_scenario(Path(path).read_text(), validate=validate)


def dump_scenario(topo: Topology) -> str:
    out = [f"nodes {topo.n_nodes}"]
    if topo.gateways:
        out.append("gateways " + " ".join(map(str, members(topo.gateways))))
    for l in topo.links:
        out.append(f"link {l.tx} {l.rx} {l.capacity} {l.reliability!r}")
    for f in topo.flows:
        out.append(f"flow {f.source} {f.arrival_rate!r} {f.deadline} {f.utility.value}")
    return "\n".join(out) + "\n"


def bundled(name: str) -> Path:
    """Path of a scenario shipped with the package, e.g. ``bundled("scenario1")``."""
    if not name.endswith(".txt"):
        name += ".txt"
    return Path(str(resources.files("dsrcast") / "scenarios" / name))


def resolve(path_or_name) -> Path:
    p = Path(path_or_name)
    if p.exists():
        return p
    return bundled(str(path_or_name))
