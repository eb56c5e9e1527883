"""Pure op-based CRDTs over a partially ordered log of operations.

Prepare is the identity on the operation; all semantics live in queries
over the log. The middleware (tagged causal broadcast) supplies a
partially ordered timestamp with each delivery and later reports when a
timestamp has become causally stable, i.e. when no message concurrent
with it can still arrive.

Two replica flavors are provided. ``UncompactedReplica`` keeps every
delivered (timestamp, operation) pair and answers queries by evaluating
the datatype's specification over the full history; it is the ground
truth the compacted form is tested against. ``PureReplica`` compacts the
log on every delivery using the datatype's obsolete relation and, on
stability, strips timestamps by folding entries into a condensed core
(a set of elements for sets, integer tallies for counters, a bid ledger
plus phase flag for the auction). Queries never change across
compaction or stabilization.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Iterable, Mapping

from .lattice import sorted_atoms


class MiddlewareViolation(Exception):
    """The broadcast layer broke a contract (duplicate timestamp, ...)."""


class AuctionNotClosed(Exception):
    """winner() was asked before a close was visible."""


@dataclass(frozen=True)
class Timestamp:
    """Version-vector logical clock tagged with the originating replica."""

    origin: Any
    vector: tuple[tuple[Any, int], ...]

    def entry(self, replica: Any) -> int:
        for r, n in self.vector:
            if r == replica:
                return n
        return 0

    @property
    def counter(self) -> int:
        return self.entry(self.origin)

    def leq(self, other: "Timestamp") -> bool:
        return all(n <= other.entry(r) for r, n in self.vector)

    def lt(self, other: "Timestamp") -> bool:
        return self != other and self.leq(other)

    def concurrent(self, other: "Timestamp") -> bool:
        return not self.leq(other) and not other.leq(self)

    def sort_key(self):
        return (type(self.origin).__name__, repr(self.origin), self.counter, self.vector)

    def render(self) -> str:
        vv = ", ".join(f"{r}:{n}" for r, n in self.vector)
        return f"t[{self.origin}|{vv}]"

    def __repr__(self) -> str:
        return self.render()


def make_timestamp(origin: Any, vector: Mapping[Any, int]) -> Timestamp:
    entries = {r: n for r, n in vector.items() if n > 0}
    return Timestamp(origin, tuple((r, entries[r]) for r in sorted_atoms(entries)))


def timestamp_leaves(t: Timestamp) -> int:
    return 1 + 2 * len(t.vector)


def _prune_pairwise(log: dict[Timestamp, tuple], t: Timestamp, op: tuple, obsolete) -> bool:
    """Apply the obsolete relation for one arrival.

    Returns whether the new pair should be kept; existence checks run
    against the log as it was before any pruning, then every old pair
    the new one obsoletes is dropped.
    """
    new = (t, op)
    keep_new = not any(obsolete(new, (t2, o2)) for t2, o2 in log.items())
    for t2 in [t2 for t2, o2 in log.items() if obsolete((t2, o2), new)]:
        del log[t2]
    return keep_new


class PureDatatype:
    """Datatype plug-in: compaction rules, stable core, and queries."""

    name = ""
    snapshot_queries: tuple[tuple, ...] = ()

    def initial_core(self) -> Any:
        raise NotImplementedError

    def insert(self, log: dict, core: Any, t: Timestamp, op: tuple) -> None:
        raise NotImplementedError

    def stabilize(self, log: dict, core: Any, t: Timestamp) -> None:
        raise NotImplementedError

    def query(self, log: dict, core: Any, q: tuple) -> Any:
        raise NotImplementedError

    def eval_full(self, log: dict, q: tuple) -> Any:
        """Specification semantics over the full, uncompacted history."""
        raise NotImplementedError

    def core_leaves(self, core: Any) -> int:
        raise NotImplementedError

    def validate_op(self, op: tuple) -> None:
        raise NotImplementedError


class PureORSet(PureDatatype):
    """Add-wins set: an element is in iff some add of it has no later remove."""

    name = "orset"
    snapshot_queries = (("elements",),)

    def initial_core(self):
        return set()

    def validate_op(self, op: tuple) -> None:
        if len(op) != 2 or op[0] not in ("add", "remove"):
            raise ValueError(f"orset does not support operation {op!r}")

    def obsolete(self, a: tuple, b: tuple) -> bool:
        (ta, oa), (tb, ob) = a, b
        if oa[0] == "add" and ob[0] in ("add", "remove"):
            return ta.lt(tb) and oa[1] == ob[1]
        if oa[0] == "remove":
            return True
        return False

    def insert(self, log, core, t, op):
        keep = _prune_pairwise(log, t, op, self.obsolete)
        if op[0] == "remove":
            # stabilized adds are causally in the past of any new remove
            if core:
                keep = False
            core.discard(op[1])
        if keep:
            log[t] = op

    def stabilize(self, log, core, t):
        op = log.pop(t, None)
        if op is not None and op[0] == "add":
            core.add(op[1])

    def query(self, log, core, q):
        live = set(core) | {op[1] for op in log.values() if op[0] == "add"}
        if q == ("elements",):
            return frozenset(live)
        if len(q) == 2 and q[0] == "contains":
            return q[1] in live
        raise ValueError(f"orset does not support query {q!r}")

    def eval_full(self, log, q):
        live = {
            op[1]
            for t, op in log.items()
            if op[0] == "add"
            and not any(o2[0] == "remove" and o2[1] == op[1] and t.lt(t2) for t2, o2 in log.items())
        }
        if q == ("elements",):
            return frozenset(live)
        if len(q) == 2 and q[0] == "contains":
            return q[1] in live
        raise ValueError(f"orset does not support query {q!r}")

    def core_leaves(self, core):
        return len(core)


class PureGSet(PureDatatype):
    """Grow-only set over the log; later adds of a value obsolete earlier ones."""

    name = "gset"
    snapshot_queries = (("elements",),)

    def initial_core(self):
        return set()

    def validate_op(self, op: tuple) -> None:
        if len(op) != 2 or op[0] != "add":
            raise ValueError(f"gset does not support operation {op!r}")

    def obsolete(self, a, b):
        (ta, oa), (tb, ob) = a, b
        return ta.lt(tb) and oa[1] == ob[1]

    def insert(self, log, core, t, op):
        if op[1] in core:
            return
        if _prune_pairwise(log, t, op, self.obsolete):
            log[t] = op

    def stabilize(self, log, core, t):
        op = log.pop(t, None)
        if op is not None:
            core.add(op[1])

    def query(self, log, core, q):
        live = set(core) | {op[1] for op in log.values()}
        if q == ("elements",):
            return frozenset(live)
        if len(q) == 2 and q[0] == "contains":
            return q[1] in live
        raise ValueError(f"gset does not support query {q!r}")

    def eval_full(self, log, q):
        live = {op[1] for op in log.values()}
        if q == ("elements",):
            return frozenset(live)
        if len(q) == 2 and q[0] == "contains":
            return q[1] in live
        raise ValueError(f"gset does not support query {q!r}")

    def core_leaves(self, core):
        return len(core)


class PureGCounter(PureDatatype):
    """Increment-only counter; increments commute so nothing is ever obsolete."""

    name = "gcounter"
    snapshot_queries = (("value",),)

    def initial_core(self):
        return [0]

    def validate_op(self, op: tuple) -> None:
        if op != ("inc",):
            raise ValueError(f"gcounter does not support operation {op!r}")

    def insert(self, log, core, t, op):
        log[t] = op

    def stabilize(self, log, core, t):
        if log.pop(t, None) is not None:
            core[0] += 1

    def query(self, log, core, q):
        if q == ("value",):
            return core[0] + len(log)
        raise ValueError(f"gcounter does not support query {q!r}")

    def eval_full(self, log, q):
        if q == ("value",):
            return len(log)
        raise ValueError(f"gcounter does not support query {q!r}")

    def core_leaves(self, core):
        return 1


class PurePNCounter(PureDatatype):
    """Counter with increments and decrements tallied separately."""

    name = "pncounter"
    snapshot_queries = (("value",),)

    def initial_core(self):
        return [0, 0]

    def validate_op(self, op: tuple) -> None:
        if op not in (("inc",), ("dec",)):
            raise ValueError(f"pncounter does not support operation {op!r}")

    def insert(self, log, core, t, op):
        log[t] = op

    def stabilize(self, log, core, t):
        op = log.pop(t, None)
        if op == ("inc",):
            core[0] += 1
        elif op == ("dec",):
            core[1] += 1

    def query(self, log, core, q):
        if q == ("value",):
            incs = sum(1 for op in log.values() if op == ("inc",))
            return core[0] - core[1] + incs - (len(log) - incs)
        raise ValueError(f"pncounter does not support query {q!r}")

    def eval_full(self, log, q):
        if q == ("value",):
            incs = sum(1 for op in log.values() if op == ("inc",))
            return incs - (len(log) - incs)
        raise ValueError(f"pncounter does not support query {q!r}")

    def core_leaves(self, core):
        return 2


def _bid_record(t: Timestamp, op: tuple) -> tuple:
    # (name, amount, origin replica, origin counter)
    return (op[1], op[2], t.origin, t.counter)


def _winner_key(record: tuple):
    name, amount, origin, counter = record
    return (-amount, type(origin).__name__, repr(origin), counter)


class PureAuction(PureDatatype):
    """Auction with a two-step close.

    ``closing`` stops new bids: a bid causally after any visible closing
    is rejected as late (kept for reporting); bids concurrent with a
    closing are accepted. ``closed`` (issued by a single administrator,
    normally once closing is causally stable) makes ``winner`` answer:
    the highest accepted bid, ties broken by smaller replica id then
    lower origin counter. ``winner`` before a visible closed raises
    AuctionNotClosed.
    """

    name = "auction"
    snapshot_queries = (("phase",), ("bids",), ("late",))

    def initial_core(self):
        return {"phase": 0, "closing_stable": False, "accepted": set(), "late": set()}

    def validate_op(self, op: tuple) -> None:
        ok = (len(op) == 3 and op[0] == "bid") or op in (("closing",), ("closed",))
        if not ok:
            raise ValueError(f"auction does not support operation {op!r}")

    def insert(self, log, core, t, op):
        # lateness is judged against closings only; a stabilized closing
        # is causally before every subsequent delivery, so the flag alone
        # decides once it is set
        if op[0] == "bid":
            closings = [t2 for t2, o2 in log.items() if o2 == ("closing",)]
            if core["closing_stable"] or any(tc.lt(t) for tc in closings):
                core["late"].add(_bid_record(t, op))
            else:
                log[t] = op
            return
        if op == ("closing",):
            closings = [t2 for t2, o2 in log.items() if o2 == ("closing",)]
            if core["closing_stable"] or any(tc.lt(t) for tc in closings):
                return  # an earlier closing already rejects every later bid
            log[t] = op
            return
        log[t] = op  # closed

    def stabilize(self, log, core, t):
        op = log.pop(t, None)
        if op is None:
            return
        if op[0] == "bid":
            core["accepted"].add(_bid_record(t, op))
        elif op == ("closing",):
            core["phase"] = max(core["phase"], 1)
            core["closing_stable"] = True
        else:
            core["phase"] = 2

    def _view(self, log, core):
        accepted = set(core["accepted"]) | {_bid_record(t, op) for t, op in log.items() if op[0] == "bid"}
        phase = core["phase"]
        for op in log.values():
            if op == ("closing",):
                phase = max(phase, 1)
            elif op == ("closed",):
                phase = 2
        return phase, accepted, set(core["late"])

    def _answer(self, phase: int, accepted: set, late: set, q: tuple):
        if q == ("phase",):
            return ("open", "closing", "closed")[phase]
        if q == ("bids",):
            return tuple(sorted(accepted, key=_winner_key))
        if q == ("late",):
            return tuple(sorted(late, key=_winner_key))
        if q == ("winner",):
            if phase < 2:
                raise AuctionNotClosed("auction not closed")
            if not accepted:
                return None
            best = min(accepted, key=_winner_key)
            return (best[0], best[1])
        raise ValueError(f"auction does not support query {q!r}")

    def query(self, log, core, q):
        phase, accepted, late = self._view(log, core)
        return self._answer(phase, accepted, late, q)

    def eval_full(self, log, q):
        closings = [t for t, op in log.items() if op == ("closing",)]
        accepted, late = set(), set()
        for t, op in log.items():
            if op[0] != "bid":
                continue
            record = _bid_record(t, op)
            if any(tc.lt(t) for tc in closings):
                late.add(record)
            else:
                accepted.add(record)
        phase = 2 if any(op == ("closed",) for op in log.values()) else (1 if closings else 0)
        return self._answer(phase, accepted, late, q)

    def core_leaves(self, core):
        return 2 + 4 * len(core["accepted"]) + 4 * len(core["late"])


PURE_DATATYPES = {
    cls.name: cls for cls in (PureORSet, PureGSet, PureGCounter, PurePNCounter, PureAuction)
}

BEACON = ("beacon",)


class PureReplica:
    """Compacting replica: log plus timestamp-free stable core."""

    def __init__(self, replica_id: Any, datatype: PureDatatype):
        self.replica_id = replica_id
        self.datatype = datatype
        self.log: dict[Timestamp, tuple] = {}
        self.core = datatype.initial_core()
        self._seen: set[Timestamp] = set()

    def prepare(self, op: tuple) -> tuple:
        """Identity: pure op-based messages are the operations themselves."""
        if op != BEACON:
            self.datatype.validate_op(op)
        return op

    def effect(self, op: tuple, t: Timestamp) -> None:
        if t in self._seen:
            raise MiddlewareViolation(f"duplicate timestamp {t!r}")
        self._seen.add(t)
        if op == BEACON:
            return
        self.datatype.insert(self.log, self.core, t, op)

    def stable(self, t: Timestamp) -> None:
        self.datatype.stabilize(self.log, self.core, t)

    def query(self, q: tuple) -> Any:
        return self.datatype.query(self.log, self.core, q)

    def state_leaves(self) -> int:
        entries = sum(timestamp_leaves(t) + _op_leaves(op) for t, op in self.log.items())
        return entries + self.datatype.core_leaves(self.core)


class UncompactedReplica:
    """Reference replica keeping the full history; queries evaluate the spec."""

    def __init__(self, replica_id: Any, datatype: PureDatatype):
        self.replica_id = replica_id
        self.datatype = datatype
        self.log: dict[Timestamp, tuple] = {}

    def prepare(self, op: tuple) -> tuple:
        if op != BEACON:
            self.datatype.validate_op(op)
        return op

    def effect(self, op: tuple, t: Timestamp) -> None:
        if t in self.log:
            raise MiddlewareViolation(f"duplicate timestamp {t!r}")
        if op == BEACON:
            return
        self.log[t] = op

    def stable(self, t: Timestamp) -> None:
        pass

    def query(self, q: tuple) -> Any:
        return self.datatype.eval_full(self.log, q)

    def state_leaves(self) -> int:
        return sum(timestamp_leaves(t) + _op_leaves(op) for t, op in self.log.items())


def _op_leaves(op: tuple) -> int:
    return sum(1 for _ in op)


def make_pure_replica(datatype: str, replica_id: Any, compacted: bool = True):
    try:
        dt = PURE_DATATYPES[datatype]()
    except KeyError:
        raise ValueError(f"no pure datatype named {datatype!r}") from None
    return PureReplica(replica_id, dt) if compacted else UncompactedReplica(replica_id, dt)
