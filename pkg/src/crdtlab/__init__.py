"""crdtlab: a workbench for the four CRDT replication approaches.

Op-based (prepare/effect over causal broadcast), pure op-based (PO-Log
over tagged causal broadcast with causal stability), state-based
(join-semilattice states), and delta-state (delta mutators with naive
and improved anti-entropy), plus a deterministic simulated network and a
scenario-file CLI for convergence checks and size metrics.
"""

from . import causal, cli, delta, lattice, opbased, purelog, scenario, sim, statebased
from .lattice import LatticeValue, bottom, decompose, difference, join, leq
from .scenario import Scenario, ScenarioError, parse_scenario
from .sim import RunResult, Simulator, run_scenario

__version__ = "0.1.0"

__all__ = [
    "LatticeValue",
    "RunResult",
    "Scenario",
    "ScenarioError",
    "Simulator",
    "bottom",
    "causal",
    "cli",
    "decompose",
    "delta",
    "difference",
    "join",
    "lattice",
    "leq",
    "opbased",
    "parse_scenario",
    "purelog",
    "run_scenario",
    "scenario",
    "sim",
    "statebased",
]
