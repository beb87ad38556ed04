"""Experiment configs, per-cell runs, and CSV output."""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import dual, scenario
from .model import Topology, UtilityKind
from .sim import run_baseline

log = logging.getLogger(__name__)

POLICY_VARIANT = {"dsr-relaxed": "relaxed", "index-dsr": "index"}
BASELINES = ("flood", "random")
POLICIES = tuple(POLICY_VARIANT) + BASELINES


@dataclass
class ExperimentConfig:
    topology: str
    policies: list = field(default_factory=lambda: ["dsr-relaxed", "index-dsr"])
    utility: str = "linear"
    deadlines: list | None = None
    epochs: int = 50
    epoch_len: int = 2000
    beta0: float = 0.5
    seeds: list = field(default_factory=lambda: [0])
    output: str = "results"
    inner_epochs: int = 1
    count_source: bool = True
    workers: int = 1

    def __post_init__(self):
        if isinstance(self.policies, str):
            self.policies = [self.policies]
        if isinstance(self.deadlines, int):
            self.deadlines = [self.deadlines]
        if isinstance(self.seeds, int):
            self.seeds = [self.seeds]

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        data = json.loads(Path(path).read_text())
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**data)
        # relative paths resolve against the config file
        base = Path(path).resolve().parent
        if not Path(cfg.topology).is_absolute() and (base / cfg.topology).exists():
            cfg.topology = str(base / cfg.topology)
        if not Path(cfg.output).is_absolute():
            cfg.output = str((base / cfg.output).resolve())
        return cfg

    def load_topology(self) -> Topology:
        topo = scenario.load_scenario(scenario.resolve(self.topology))
        return topo.with_utility(UtilityKind.parse(self.utility))

    def deadline_list(self, topo: Topology) -> list[int]:
        return list(self.deadlines) if self.deadlines else [topo.max_deadline]

    def validate(self, topo: Topology):
        bad = [p for p in self.policies if p not in POLICIES]
        if bad:
            raise ValueError(f"unknown policies {bad}; choose from {list(POLICIES)}")
        if not self.seeds:
            raise ValueError("seeds must be nonempty")
        need = 50 * max(self.deadline_list(topo))
        if self.epoch_len < need:
            raise ValueError(f"epoch_len {self.epoch_len} < 50 x max deadline ({need})")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


def summary_header(topo: Topology) -> list[str]:
    cols = ["policy", "utility_kind", "deadline", "seed", "total_utility"]
    cols += [f"mu_n{n}_f{f}" for f in range(len(topo.flows)) for n in range(topo.n_nodes)]
    cols += [f"usage_l{l.id}" for l in topo.links]
    return cols


def trace_header(topo: Topology) -> list[str]:
    cols = ["policy", "utility_kind", "deadline", "seed", "epoch", "lagrangian", "utility"]
    return cols + [f"lambda_l{l.id}" for l in topo.links]


def _fmt(x: float) -> str:
    return f"{float(x):.12g}"


def run_cell(cfg: ExperimentConfig, policy: str, deadline: int, seed: int):
    """One (policy, deadline, seed) run. Returns (summary row, trace rows)."""
    topo = cfg.load_topology().with_deadline(deadline)
    key = [policy, cfg.utility, deadline, seed]
    trace = []
    if policy in POLICY_VARIANT:
        rep = dual.optimize(
            topo,
            cfg.epochs,
            cfg.epoch_len,
            cfg.beta0,
            seed,
            variant=POLICY_VARIANT[policy],
            inner_epochs=cfg.inner_epochs,
            count_source=cfg.count_source,
        )
        mu, usage = rep.mu, rep.metrics.link_usage()
        for i, (lg, ut, lam) in enumerate(zip(rep.lagrangian_trace, rep.utility_trace, rep.lambda_trace), 1):
            trace.append(key + [i, _fmt(lg), _fmt(ut)] + [_fmt(x) for x in lam])
    else:
        m = run_baseline(topo, policy, cfg.epochs * cfg.epoch_len, seed, count_source=cfg.count_source)
        mu, usage = m.mu(), m.link_usage()
    row = key + [_fmt(dual.total_utility(topo, mu))]
    row += [_fmt(mu[n, f]) for f in range(len(topo.flows)) for n in range(topo.n_nodes)]
    row += [_fmt(u) for u in usage]
    return row, trace


def _run_cell_args(args):
    return run_cell(*args)


def _check_writable(out: Path):
    out.mkdir(parents=True, exist_ok=True)
    probe = out / ".write-probe"
    probe.write_text("")
    probe.unlink()


def run_experiment(cfg: ExperimentConfig) -> tuple[Path, Path]:
    topo = cfg.load_topology()
    cfg.validate(topo)
    out = Path(cfg.output)
    try:
        _check_writable(out)
    except OSError as exc:
        raise OSError(f"output directory {out} is not writable: {exc}") from exc

    cells = []
    if cfg.epochs > 0:
        cells = [
            (cfg, p, d, s) for p in cfg.policies for d in cfg.deadline_list(topo) for s in cfg.seeds
        ]
    if cfg.workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(_run_cell_args, cells))
    else:
        results = []
        for i, c in enumerate(cells, 1):
            log.info("cell %d/%d: %s D=%d seed=%d", i, len(cells), c[1], c[2], c[3])
            results.append(run_cell(*c))

    summary_path, trace_path = out / "summary.csv", out / "trace.csv"
    _write_csv(summary_path, summary_header(topo), [r for r, _ in results])
    _write_csv(trace_path, trace_header(topo), [row for _, t in results for row in t])
    (out / "config.json").write_text(json.dumps(asdict(cfg), indent=2, sort_keys=True) + "\n")
    return summary_path, trace_path


def _write_csv(path: Path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue())


def read_summary(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def utility_table(rows) -> dict:
    """Mean total utility keyed by (policy, utility_kind, deadline)."""
    acc: dict = {}
    for r in rows:
        k = (r["policy"], r["utility_kind"], int(r["deadline"]))
        acc.setdefault(k, []).append(float(r["total_utility"]))
    return {k: sum(v) / len(v) for k, v in sorted(acc.items())}


def inversions(values) -> int:
    """Number of adjacent decreases in a curve."""
    return sum(b < a for a, b in zip(values, values[1:]))


def ordering_report(table: dict, ranking, kinds, deadlines, max_inversions: int = 1) -> list[str]:
    """Check ``ranking[0] >= ranking[1] >= ...`` at every deadline and that each
    curve is nondecreasing in the deadline up to ``max_inversions`` dips.

    ``table`` is the output of ``utility_table``. Returns the violations.
    """
    problems = []
    for kind in kinds:
        for d in deadlines:
            vals = [table[(p, kind, d)] for p in ranking]
            for (p, a), (q, b) in zip(zip(ranking, vals), zip(ranking[1:], vals[1:])):
                if a < b:
                    problems.append(f"{kind} D={d}: {p} {a:.4f} < {q} {b:.4f}")
        for p in ranking:
            curve = [table[(p, kind, d)] for d in deadlines]
            k = inversions(curve)
            if k > max_inversions:
                problems.append(f"{kind} {p}: {k} inversions in D")
    return problems
