"""State-based CRDTs: replicas hold lattice or causal states and gossip them.

Mutators are inflations (the new state is always at or above the old
one) and merge is the join, so states evolve monotonically and the
approach shrugs off message loss, duplication and reordering. Mutators
are exposed as pure functions of (state, op, replica id) so the
delta-state machinery can reuse them as the full-mutator reference.
"""

from __future__ import annotations

from typing import Any

from . import lattice as lat
from .causal import CausalState, causal_join, dotmap, dotset, empty_dotmap_state, state_leaf_count, render_state

GCOUNTER_SHAPE = lat.MapShape(lat.NAT)
PNCOUNTER_SHAPE = lat.ProductShape(GCOUNTER_SHAPE, GCOUNTER_SHAPE)
ADVANCER_SHAPE = lat.MapShape(lat.NAT)


def merge_states(a, b):
    """Join two replica states of the same datatype (lattice or causal)."""
    if isinstance(a, lat.LatticeValue) and isinstance(b, lat.LatticeValue):
        return lat.join(a, b)
    if isinstance(a, CausalState) and isinstance(b, CausalState):
        return causal_join(a, b)
    raise lat.ShapeMismatchError(f"cannot merge {type(a).__name__} with {type(b).__name__}")


def state_leq(a, b) -> bool:
    """Replica-state order; for causal states, inclusion after joining."""
    if isinstance(a, lat.LatticeValue):
        return lat.leq(a, b)
    return merge_states(a, b) == b


def state_size(state) -> int:
    if isinstance(state, lat.LatticeValue):
        return lat.leaf_count(state)
    return state_leaf_count(state)


def state_render(state) -> str:
    if isinstance(state, lat.LatticeValue):
        return lat.render(state)
    return render_state(state)


class StateDatatype:
    """Pure functions defining one state-based datatype."""

    name = ""
    snapshot_queries: tuple[tuple, ...] = ()

    @staticmethod
    def bottom():
        raise NotImplementedError

    @staticmethod
    def apply(state, op: tuple, replica_id: Any):
        raise NotImplementedError

    @staticmethod
    def query(state, q: tuple) -> Any:
        raise NotImplementedError


class GCounterState(StateDatatype):
    """Map replica -> own increment count; value is the sum."""

    name = "gcounter"
    snapshot_queries = (("value",),)

    @staticmethod
    def bottom():
        return lat.bottom(GCOUNTER_SHAPE)

    @staticmethod
    def apply(state, op, replica_id):
        if op != ("inc",):
            raise ValueError(f"gcounter does not support operation {op!r}")
        current = lat.map_get(state, replica_id).payload
        return lat.map_set(state, replica_id, lat.nat(current + 1))

    @staticmethod
    def query(state, q):
        if q == ("value",):
            return sum(v.payload for _, v in state.payload)
        raise ValueError(f"gcounter does not support query {q!r}")


class PNCounterState(StateDatatype):
    """Pair of grow-only maps: increments on the left, decrements on the right."""

    name = "pncounter"
    snapshot_queries = (("value",),)

    @staticmethod
    def bottom():
        return lat.bottom(PNCOUNTER_SHAPE)

    @staticmethod
    def apply(state, op, replica_id):
        p, n = state.payload
        if op == ("inc",):
            return lat.pair(GCounterState.apply(p, ("inc",), replica_id), n)
        if op == ("dec",):
            return lat.pair(p, GCounterState.apply(n, ("inc",), replica_id))
        raise ValueError(f"pncounter does not support operation {op!r}")

    @staticmethod
    def query(state, q):
        if q == ("value",):
            p, n = state.payload
            return GCounterState.query(p, ("value",)) - GCounterState.query(n, ("value",))
        raise ValueError(f"pncounter does not support query {q!r}")


class GSetState(StateDatatype):
    """Grow-only set: state is the powerset lattice, merge is union."""

    name = "gset"
    snapshot_queries = (("elements",),)

    @staticmethod
    def bottom():
        return lat.fset()

    @staticmethod
    def apply(state, op, replica_id):
        if len(op) != 2 or op[0] != "add":
            raise ValueError(f"gset does not support operation {op!r}")
        return lat.fset(state.payload | {op[1]})

    @staticmethod
    def query(state, q):
        if q == ("elements",):
            return frozenset(state.payload)
        if len(q) == 2 and q[0] == "contains":
            return q[1] in state.payload
        raise ValueError(f"gset does not support query {q!r}")


class AdvancerState(StateDatatype):
    """Map of keys to levels; advance lifts a key just above all others.

    The update is not commutative, but it is an idempotent inflation, so
    the sequential datatype works as-is with pointwise-max merge.
    """

    name = "advancer"
    snapshot_queries = (("ahead",),)

    @staticmethod
    def bottom():
        return lat.bottom(ADVANCER_SHAPE)

    @staticmethod
    def apply(state, op, replica_id):
        if len(op) != 2 or op[0] != "advance":
            raise ValueError(f"advancer does not support operation {op!r}")
        key = op[1]
        others = [v.payload for k, v in state.payload if k != key]
        target = max(lat.map_get(state, key).payload, 1 + max(others, default=0))
        return lat.map_set(state, key, lat.nat(target))

    @staticmethod
    def query(state, q):
        if q == ("ahead",):
            if not state.payload:
                return frozenset()
            top = max(v.payload for _, v in state.payload)
            return frozenset(k for k, v in state.payload if v.payload == top)
        raise ValueError(f"advancer does not support query {q!r}")


class ORSetState(StateDatatype):
    """Observed-remove set as a causal state: element -> live dots.

    An add replaces the element's dots with one fresh dot; a remove just
    drops the key, leaving the context to testify the dots were seen.
    """

    name = "orset"
    snapshot_queries = (("elements",),)

    @staticmethod
    def bottom():
        return empty_dotmap_state()

    @staticmethod
    def apply(state, op, replica_id):
        if len(op) != 2 or op[0] not in ("add", "remove"):
            raise ValueError(f"orset does not support operation {op!r}")
        _, e = op
        entries = dict(state.store.entries)
        if op[0] == "add":
            d, ctx = state.context.next_dot(replica_id)
            entries[e] = dotset([d])
            return CausalState(dotmap(entries), ctx)
        entries.pop(e, None)
        return CausalState(dotmap(entries), state.context)

    @staticmethod
    def query(state, q):
        keys = frozenset(k for k, _ in state.store.entries)
        if q == ("elements",):
            return keys
        if len(q) == 2 and q[0] == "contains":
            return q[1] in keys
        raise ValueError(f"orset does not support query {q!r}")


STATE_DATATYPES = {
    cls.name: cls for cls in (GCounterState, PNCounterState, GSetState, AdvancerState, ORSetState)
}


class StateReplica:
    """One replica: a datatype's state plus mutate/merge/query."""

    def __init__(self, replica_id: Any, datatype: StateDatatype):
        self.replica_id = replica_id
        self.datatype = datatype
        self.state = datatype.bottom()

    @property
    def name(self) -> str:
        return self.datatype.name

    @property
    def snapshot_queries(self):
        return self.datatype.snapshot_queries

    def mutate(self, op: tuple) -> None:
        self.state = self.datatype.apply(self.state, op, self.replica_id)

    def merge(self, incoming) -> None:
        self.state = merge_states(self.state, incoming)

    def query(self, q: tuple) -> Any:
        return self.datatype.query(self.state, q)

    def state_leaves(self) -> int:
        return state_size(self.state)


def make_state_replica(datatype: str, replica_id: Any) -> StateReplica:
    try:
        return StateReplica(replica_id, STATE_DATATYPES[datatype]())
    except KeyError:
        raise ValueError(f"no state-based datatype named {datatype!r}") from None
