"""Delegated-set routing for deadline-constrained broadcast flows.

Single-packet DP tables, an epoch-wise primal/dual price loop, a slotted
network simulator, a brute-force checker for tiny instances, and the
experiment runner behind the ``dsrcast`` command.
"""

from .dp import PolicyTable, solve, solve_index, solve_relaxed
from .dual import dual_value_exact, optimize
from .model import Flow, Link, Topology, UtilityKind, split_delegation, validate_topology
from .scenario import load_scenario, parse_scenario
from .sim import Metrics, Simulator, run_baseline, simulate

__version__ = "0.1.0"
