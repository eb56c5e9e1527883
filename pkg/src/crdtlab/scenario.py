"""Scenario files: a line-oriented format for replication runs.

A scenario is a header (key/value lines) followed by timestamped
commands, one per line, ``#`` starting a comment. Example::

    nodes 3
    datatype orset
    approach delta-improved
    topology full
    seed 42

    at 1 node 0 add x
    at 3 partition 0,1 | 2
    at 5 node 2 add y
    at 8 heal
    at 12 flush
    at 13 query-all elements
    at 14 assert-converged

Header keys (defaults in parentheses): ``nodes``, ``datatype``,
``approach``, ``topology`` (full), ``seed`` (0), ``drop`` (0.0),
``dup`` (0.0), ``reorder`` (0), ``sync_every`` (5), ``fullstate_every``
(0 = never), ``admin`` (0). Command ticks must be nondecreasing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from .delta import DELTA_DATATYPES
from .opbased import OP_DATATYPES
from .purelog import PURE_DATATYPES
from .statebased import STATE_DATATYPES


class ScenarioError(Exception):
    """Malformed scenario text; carries the offending line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


APPROACHES = ("op", "pure", "state", "delta-naive", "delta-improved")

SUPPORTED = {
    "op": frozenset(OP_DATATYPES),
    "pure": frozenset(PURE_DATATYPES),
    "state": frozenset(STATE_DATATYPES),
    "delta-naive": frozenset(DELTA_DATATYPES),
    "delta-improved": frozenset(DELTA_DATATYPES),
}

OP_VERBS = {
    "gcounter": {"inc"},
    "pncounter": {"inc", "dec"},
    "gset": {"add"},
    "orset": {"add", "remove"},
    "orset-naive": {"add", "remove"},
    "mvreg": {"write"},
    "advancer": {"advance"},
    "auction": {"bid", "closing", "closed"},
}

QUERY_VERBS = {
    "gcounter": {"value"},
    "pncounter": {"value"},
    "gset": {"elements", "contains"},
    "orset": {"elements", "contains"},
    "orset-naive": {"elements", "contains"},
    "mvreg": {"read"},
    "advancer": {"ahead"},
    "auction": {"winner", "phase", "late", "bids"},
}


@dataclass(frozen=True)
class Command:
    tick: int
    verb: str  # op | partition | heal | flush | query-all | assert-converged
    node: int | None
    args: tuple
    line_no: int


@dataclass
class Scenario:
    nodes: int
    datatype: str
    approach: str
    topology: str = "full"
    seed: int = 0
    drop: float = 0.0
    dup: float = 0.0
    reorder: int = 0
    sync_every: int = 5
    fullstate_every: int = 0
    admin: int = 0
    commands: list[Command] = field(default_factory=list)

    def with_approach(self, approach: str) -> "Scenario":
        """Same run under a different approach (for comparisons)."""
        clone = Scenario(**{**self.__dict__})
        clone.approach = approach
        return clone


_HEADER_KEYS = {
    "nodes": int,
    "datatype": str,
    "approach": str,
    "topology": str,
    "seed": int,
    "drop": float,
    "dup": float,
    "reorder": int,
    "sync_every": int,
    "fullstate_every": int,
    "admin": int,
}


def _parse_op(datatype: str, tokens: list[str], line_no: int) -> tuple:
    verb = tokens[0]
    if verb == "beacon":
        if tokens[1:]:
            raise ScenarioError(line_no, "beacon takes no arguments")
        return ("beacon",)
    if verb not in OP_VERBS.get(datatype, ()):
        raise ScenarioError(line_no, f"datatype {datatype} has no operation {verb!r}")
    if verb in ("inc", "dec", "closing", "closed"):
        if tokens[1:]:
            raise ScenarioError(line_no, f"{verb} takes no arguments")
        return (verb,)
    if verb in ("add", "remove", "write", "advance"):
        if len(tokens) != 2:
            raise ScenarioError(line_no, f"{verb} takes exactly one argument")
        return (verb, tokens[1])
    if verb == "bid":
        if len(tokens) != 3:
            raise ScenarioError(line_no, "bid takes a name and an amount")
        try:
            amount = int(tokens[2])
        except ValueError:
            raise ScenarioError(line_no, f"bid amount must be an integer, got {tokens[2]!r}") from None
        return ("bid", tokens[1], amount)
    raise ScenarioError(line_no, f"unknown operation {verb!r}")


def parse_query(datatype: str, tokens: list[str], line_no: int = 0) -> tuple:
    verb = tokens[0]
    if verb not in QUERY_VERBS.get(datatype, ()):
        raise ScenarioError(line_no, f"datatype {datatype} has no query {verb!r}")
    if verb == "contains":
        if len(tokens) != 2:
            raise ScenarioError(line_no, "contains takes exactly one argument")
        return ("contains", tokens[1])
    if tokens[1:]:
        raise ScenarioError(line_no, f"{verb} takes no arguments")
    return (verb,)


def _parse_partition(nodes: int, rest: str, line_no: int) -> tuple:
    groups = []
    seen = set()
    for part in rest.split("|"):
        part = part.strip()
        if not part:
            raise ScenarioError(line_no, "empty partition group")
        group = set()
        for tok in part.replace(",", " ").split():
            try:
                n = int(tok)
            except ValueError:
                raise ScenarioError(line_no, f"bad node index {tok!r}") from None
            if not 0 <= n < nodes:
                raise ScenarioError(line_no, f"node index {n} out of range")
            if n in seen:
                raise ScenarioError(line_no, f"node {n} listed twice in partition")
            seen.add(n)
            group.add(n)
        groups.append(frozenset(group))
    return tuple(groups)


def parse_scenario(text: str) -> Scenario:
    """Parse scenario text; raises ScenarioError with a line number."""
    header: dict[str, Any] = {}
    commands: list[Command] = []
    last_tick = -1
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if tokens[0] != "at":
            key = tokens[0]
            if key not in _HEADER_KEYS:
                raise ScenarioError(line_no, f"unknown header key {key!r}")
            if len(tokens) != 2:
                raise ScenarioError(line_no, f"header {key} takes exactly one value")
            try:
                header[key] = _HEADER_KEYS[key](tokens[1])
            except ValueError:
                raise ScenarioError(line_no, f"bad value for {key}: {tokens[1]!r}") from None
            continue
        # command line: at <tick> <verb> ...
        for required in ("nodes", "datatype", "approach"):
            if required not in header:
                raise ScenarioError(line_no, f"header {required} must come before commands")
        if len(tokens) < 3:
            raise ScenarioError(line_no, "expected: at <tick> <command> ...")
        try:
            tick = int(tokens[1])
        except ValueError:
            raise ScenarioError(line_no, f"bad tick {tokens[1]!r}") from None
        if tick < last_tick:
            raise ScenarioError(line_no, f"tick {tick} is before previous tick {last_tick}")
        last_tick = tick
        verb = tokens[2]
        rest = tokens[3:]
        nodes = header["nodes"]
        datatype = header["datatype"]
        if verb == "node":
            if len(rest) < 2:
                raise ScenarioError(line_no, "expected: at <tick> node <i> <op> [args]")
            try:
                node = int(rest[0])
            except ValueError:
                raise ScenarioError(line_no, f"bad node index {rest[0]!r}") from None
            if not 0 <= node < nodes:
                raise ScenarioError(line_no, f"node index {node} out of range")
            op = _parse_op(datatype, rest[1:], line_no)
            if op == ("beacon",) and header["approach"] != "pure":
                raise ScenarioError(line_no, "beacon is only meaningful for approach pure")
            if op == ("closed",) and node != header.get("admin", 0):
                raise ScenarioError(line_no, f"closed may only be invoked by the admin node {header.get('admin', 0)}")
            commands.append(Command(tick, "op", node, op, line_no))
        elif verb == "partition":
            groups = _parse_partition(nodes, " ".join(rest), line_no)
            commands.append(Command(tick, "partition", None, groups, line_no))
        elif verb in ("heal", "flush", "assert-converged"):
            if rest:
                raise ScenarioError(line_no, f"{verb} takes no arguments")
            commands.append(Command(tick, verb, None, (), line_no))
        elif verb == "query-all":
            if not rest:
                raise ScenarioError(line_no, "query-all needs a query")
            q = parse_query(datatype, rest, line_no)
            commands.append(Command(tick, "query-all", None, q, line_no))
        else:
            raise ScenarioError(line_no, f"unknown command {verb!r}")

    for required in ("nodes", "datatype", "approach"):
        if required not in header:
            raise ScenarioError(0, f"missing header key {required}")
    scenario = Scenario(**header, commands=commands)
    validate_scenario(scenario)
    return scenario


def validate_scenario(sc: Scenario) -> None:
    if sc.nodes < 1:
        raise ScenarioError(0, "nodes must be >= 1")
    if sc.approach not in APPROACHES:
        raise ScenarioError(0, f"unknown approach {sc.approach!r} (choose from {', '.join(APPROACHES)})")
    if sc.topology not in ("full", "line", "ring"):
        raise ScenarioError(0, f"unknown topology {sc.topology!r}")
    if sc.datatype not in SUPPORTED[sc.approach]:
        raise ScenarioError(
            0,
            f"approach {sc.approach} does not support datatype {sc.datatype} "
            f"(supported: {', '.join(sorted(SUPPORTED[sc.approach]))})",
        )
    if not 0 <= sc.admin < sc.nodes:
        raise ScenarioError(0, "admin node out of range")
    if sc.sync_every < 1:
        raise ScenarioError(0, "sync_every must be >= 1")


def neighbors_of(sc: Scenario, node: int) -> list[int]:
    """Neighbor list under the scenario topology, in ascending order."""
    if sc.topology == "full":
        return [j for j in range(sc.nodes) if j != node]
    if sc.topology == "line":
        out = [j for j in (node - 1, node + 1) if 0 <= j < sc.nodes]
        return out
    # ring
    if sc.nodes == 1:
        return []
    out = {(node - 1) % sc.nodes, (node + 1) % sc.nodes} - {node}
    return sorted(out)
