"""Op-based CRDTs under the prepare/effect execution model.

``prepare`` runs at the origin replica against local state and builds a
self-contained message; ``effect`` applies a delivered message at every
replica (including the origin, via immediate self-delivery). Effects of
concurrently prepared messages commute; delivery must be exactly-once
and in causal order, which the simulator's broadcast layer provides.

Unique ids are dots (replica id, per-replica counter). The counters are
auxiliary state: prepare may bump them, but queries and effect never
read them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

from .causal import Dot
from .lattice import sorted_atoms


@dataclass(frozen=True)
class PreparedMessage:
    """Immutable broadcast payload built by prepare at ``origin``."""

    origin: Any
    payload: tuple


class OpBasedReplica:
    """Base class: one replica of an op-based datatype."""

    name = ""
    snapshot_queries: tuple[tuple, ...] = ()

    def __init__(self, replica_id: Any):
        self.replica_id = replica_id

    def prepare(self, op: tuple) -> PreparedMessage:
        raise NotImplementedError

    def effect(self, msg: PreparedMessage) -> None:
        raise NotImplementedError

    def query(self, q: tuple) -> Any:
        raise NotImplementedError

    def state(self) -> Any:
        """Canonical immutable snapshot of the converging state (aux excluded)."""
        raise NotImplementedError

    def state_leaves(self) -> int:
        raise NotImplementedError

    def _bad_op(self, op: tuple) -> Exception:
        return ValueError(f"{self.name} does not support operation {op!r}")


class OpGCounter(OpBasedReplica):
    """Grow-only counter; increment commutes, so state is a plain tally."""

    name = "gcounter"
    snapshot_queries = (("value",),)

    def __init__(self, replica_id: Any):
        super().__init__(replica_id)
        self.count = 0

    def prepare(self, op: tuple) -> PreparedMessage:
        if op != ("inc",):
            raise self._bad_op(op)
        return PreparedMessage(self.replica_id, ("inc",))

    def effect(self, msg: PreparedMessage) -> None:
        self.count += 1

    def query(self, q: tuple) -> Any:
        if q == ("value",):
            return self.count
        raise self._bad_op(q)

    def state(self):
        return self.count

    def state_leaves(self) -> int:
        return 1


class OpPNCounter(OpBasedReplica):
    """Counter with increment and decrement; both commute."""

    name = "pncounter"
    snapshot_queries = (("value",),)

    def __init__(self, replica_id: Any):
        super().__init__(replica_id)
        self.value_ = 0

    def prepare(self, op: tuple) -> PreparedMessage:
        if op not in (("inc",), ("dec",)):
            raise self._bad_op(op)
        return PreparedMessage(self.replica_id, op)

    def effect(self, msg: PreparedMessage) -> None:
        self.value_ += 1 if msg.payload == ("inc",) else -1

    def query(self, q: tuple) -> Any:
        if q == ("value",):
            return self.value_
        raise self._bad_op(q)

    def state(self):
        return self.value_

    def state_leaves(self) -> int:
        return 1


class OpGSet(OpBasedReplica):
    """Grow-only set; add commutes with add."""

    name = "gset"
    snapshot_queries = (("elements",),)

    def __init__(self, replica_id: Any):
        super().__init__(replica_id)
        self.elements: set = set()

    def prepare(self, op: tuple) -> PreparedMessage:
        if len(op) != 2 or op[0] != "add":
            raise self._bad_op(op)
        return PreparedMessage(self.replica_id, op)

    def effect(self, msg: PreparedMessage) -> None:
        self.elements.add(msg.payload[1])

    def query(self, q: tuple) -> Any:
        if q == ("elements",):
            return frozenset(self.elements)
        if len(q) == 2 and q[0] == "contains":
            return q[1] in self.elements
        raise self._bad_op(q)

    def state(self):
        return frozenset(self.elements)

    def state_leaves(self) -> int:
        return len(self.elements)


class OpORSetNaive(OpBasedReplica):
    """Observed-remove set: the state is a flat set of (element, id) pairs.

    A remove ships the full pairs it has observed for the element; adds
    just insert a freshly tagged pair, so concurrent adds survive.
    """

    name = "orset-naive"
    snapshot_queries = (("elements",),)

    def __init__(self, replica_id: Any):
        super().__init__(replica_id)
        self.pairs: set[tuple[Any, Dot]] = set()
        self._next = 0  # auxiliary add counter

    def prepare(self, op: tuple) -> PreparedMessage:
        if len(op) != 2 or op[0] not in ("add", "remove"):
            raise self._bad_op(op)
        _, e = op
        if op[0] == "add":
            self._next += 1
            return PreparedMessage(self.replica_id, ("add", e, Dot(self.replica_id, self._next)))
        observed = frozenset(p for p in self.pairs if p[0] == e)
        return PreparedMessage(self.replica_id, ("remove", observed))

    def effect(self, msg: PreparedMessage) -> None:
        if msg.payload[0] == "add":
            _, e, u = msg.payload
            self.pairs.add((e, u))
        else:
            self.pairs -= msg.payload[1]

    def query(self, q: tuple) -> Any:
        if q == ("elements",):
            return frozenset(e for e, _ in self.pairs)
        if len(q) == 2 and q[0] == "contains":
            return any(e == q[1] for e, _ in self.pairs)
        raise self._bad_op(q)

    def state(self):
        return frozenset(self.pairs)

    def state_leaves(self) -> int:
        return 2 * len(self.pairs)


class OpORSet(OpBasedReplica):
    """Observed-remove set keyed by element: element -> set of live dots.

    An add replaces every dot it observed for the element with the fresh
    one; a remove subtracts the observed dots. Only dots generated
    concurrently with the message survive it.
    """

    name = "orset"
    snapshot_queries = (("elements",),)

    def __init__(self, replica_id: Any):
        super().__init__(replica_id)
        self.live: dict[Any, frozenset[Dot]] = {}
        self._next = 0  # auxiliary add counter

    def _observed(self, e: Any) -> frozenset[Dot]:
        return self.live.get(e, frozenset())

    def prepare(self, op: tuple) -> PreparedMessage:
        if len(op) != 2 or op[0] not in ("add", "remove"):
            raise self._bad_op(op)
        _, e = op
        if op[0] == "add":
            self._next += 1
            return PreparedMessage(self.replica_id, ("add", e, Dot(self.replica_id, self._next), self._observed(e)))
        return PreparedMessage(self.replica_id, ("remove", e, self._observed(e)))

    def effect(self, msg: PreparedMessage) -> None:
        if msg.payload[0] == "add":
            _, e, d, r = msg.payload
            self.live[e] = (self._observed(e) - r) | {d}
        else:
            _, e, r = msg.payload
            remaining = self._observed(e) - r
            if remaining:
                self.live[e] = remaining
            else:
                self.live.pop(e, None)

    def query(self, q: tuple) -> Any:
        if q == ("elements",):
            return frozenset(self.live)
        if len(q) == 2 and q[0] == "contains":
            return bool(self.live.get(q[1]))
        raise self._bad_op(q)

    def state(self):
        return tuple((k, self.live[k]) for k in sorted_atoms(self.live))

    def state_leaves(self) -> int:
        return sum(1 + len(dots) for dots in self.live.values())


class OpMVReg(OpBasedReplica):
    """Multi-value register: reads return the set of latest concurrent writes."""

    name = "mvreg"
    snapshot_queries = (("read",),)

    def __init__(self, replica_id: Any):
        super().__init__(replica_id)
        self.versions: set[tuple[Any, Dot]] = set()
        self._next = 0  # auxiliary write counter

    def prepare(self, op: tuple) -> PreparedMessage:
        if len(op) != 2 or op[0] != "write":
            raise self._bad_op(op)
        self._next += 1
        observed = frozenset(d for _, d in self.versions)
        return PreparedMessage(self.replica_id, ("write", (op[1], Dot(self.replica_id, self._next)), observed))

    def effect(self, msg: PreparedMessage) -> None:
        _, version, r = msg.payload
        self.versions = {(e, d) for e, d in self.versions if d not in r} | {version}

    def query(self, q: tuple) -> Any:
        if q == ("read",):
            return frozenset(e for e, _ in self.versions)
        raise self._bad_op(q)

    def state(self):
        return frozenset(self.versions)

    def state_leaves(self) -> int:
        return 2 * len(self.versions)


OP_DATATYPES = {
    cls.name: cls
    for cls in (OpGCounter, OpPNCounter, OpGSet, OpORSetNaive, OpORSet, OpMVReg)
}


def make_op_replica(datatype: str, replica_id: Any) -> OpBasedReplica:
    try:
        return OP_DATATYPES[datatype](replica_id)
    except KeyError:
        raise ValueError(f"no op-based datatype named {datatype!r}") from None
