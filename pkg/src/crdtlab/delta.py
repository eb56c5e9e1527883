"""Delta-state CRDTs: small deltas instead of full states on the wire.

A delta-mutator returns a state fragment whose join with the current
state equals what the full mutator would produce. Fragments are joined
into delta-groups and gossiped, so the weak messaging assumptions of the
state-based approach still hold.

Two anti-entropy engines are provided. The naive one keeps a single
delta-buffer that every local delta and every received group is joined
into, broadcast and reset each tick; its buffer tends to grow back into
the full state because received groups are re-propagated wholesale. The
improved one tags each buffered fragment with the replica it came from
(so nothing is echoed straight back to its sender) and strips from every
received group the part already reflected in the local state, using the
lattice difference operator (or the causal-state analogue).
"""

from __future__ import annotations

import logging
from typing import Any, Callable

from . import lattice as lat
from .causal import CausalState, Dot, causal_difference, context_from_dots, dotmap, dotset, state_is_bottom
from .statebased import (
    STATE_DATATYPES,
    AdvancerState,
    GCounterState,
    GSetState,
    ORSetState,
    PNCounterState,
    StateDatatype,
    merge_states,
    state_size,
)

logger = logging.getLogger("crdtlab.delta")


def optimal_delta(mutate: Callable[[lat.LatticeValue], lat.LatticeValue], x: lat.LatticeValue) -> lat.LatticeValue:
    """Smallest delta for one mutator application: difference(m(x), x).

    Requires a decomposable lattice state; below every handwritten delta
    while still reaching the same state when joined with x.
    """
    if not isinstance(x, lat.LatticeValue):
        raise lat.UnsupportedShapeError("optimal deltas need a decomposable lattice state")
    return lat.difference(mutate(x), x)


def state_difference(group, state):
    """New information in ``group`` relative to ``state``."""
    if isinstance(group, lat.LatticeValue) and isinstance(state, lat.LatticeValue):
        return lat.difference(group, state)
    if isinstance(group, CausalState) and isinstance(state, CausalState):
        return causal_difference(group, state)
    raise lat.ShapeMismatchError(f"cannot diff {type(group).__name__} against {type(state).__name__}")


def delta_is_bottom(delta) -> bool:
    if isinstance(delta, lat.LatticeValue):
        return lat.is_bottom(delta)
    return state_is_bottom(delta)


class DeltaDatatype:
    """A state-based datatype plus its handwritten delta-mutators."""

    def __init__(self, base: StateDatatype):
        self.base = base
        self.name = base.name
        self.snapshot_queries = base.snapshot_queries

    def bottom(self):
        return self.base.bottom()

    def full_apply(self, state, op, replica_id):
        return self.base.apply(state, op, replica_id)

    def query(self, state, q):
        return self.base.query(state, q)

    def delta_mutator(self, state, op, replica_id):
        raise NotImplementedError

    supports_difference = True


class GCounterDelta(DeltaDatatype):
    def __init__(self):
        super().__init__(GCounterState())

    def delta_mutator(self, state, op, replica_id):
        if op != ("inc",):
            raise ValueError(f"gcounter does not support operation {op!r}")
        current = lat.map_get(state, replica_id).payload
        return lat.lmap(lat.NAT, {replica_id: lat.nat(current + 1)})


class PNCounterDelta(DeltaDatatype):
    def __init__(self):
        super().__init__(PNCounterState())
        self._inner = GCounterDelta()

    def delta_mutator(self, state, op, replica_id):
        p, n = state.payload
        empty = lat.bottom(lat.MapShape(lat.NAT))
        if op == ("inc",):
            return lat.pair(self._inner.delta_mutator(p, ("inc",), replica_id), empty)
        if op == ("dec",):
            return lat.pair(empty, self._inner.delta_mutator(n, ("inc",), replica_id))
        raise ValueError(f"pncounter does not support operation {op!r}")


class GSetDelta(DeltaDatatype):
    def __init__(self):
        super().__init__(GSetState())

    def delta_mutator(self, state, op, replica_id):
        if len(op) != 2 or op[0] != "add":
            raise ValueError(f"gset does not support operation {op!r}")
        return lat.fset([op[1]])


class AdvancerDelta(DeltaDatatype):
    def __init__(self):
        super().__init__(AdvancerState())

    def delta_mutator(self, state, op, replica_id):
        new = self.base.apply(state, op, replica_id)
        key = op[1]
        return lat.lmap(lat.NAT, {key: lat.map_get(new, key)})


class ORSetDelta(DeltaDatatype):
    """Deltas carry one key's worth of store plus just the relevant dots."""

    def __init__(self):
        super().__init__(ORSetState())

    def delta_mutator(self, state, op, replica_id):
        if len(op) != 2 or op[0] not in ("add", "remove"):
            raise ValueError(f"orset does not support operation {op!r}")
        _, e = op
        observed = dict(state.store.entries).get(e)
        observed_dots = set(observed.dots) if observed is not None else set()
        if op[0] == "add":
            d = Dot(replica_id, state.context.max_counter(replica_id) + 1)
            return CausalState(dotmap({e: dotset([d])}), context_from_dots(observed_dots | {d}))
        return CausalState(dotmap(), context_from_dots(observed_dots))


DELTA_DATATYPES = {
    cls().name: cls for cls in (GCounterDelta, PNCounterDelta, GSetDelta, AdvancerDelta, ORSetDelta)
}


class DeltaReplica:
    """Replica with a delta buffer and one of the two anti-entropy modes."""

    def __init__(self, replica_id: Any, datatype: DeltaDatatype, improved: bool = False,
                 fullstate_every: int | None = None):
        self.replica_id = replica_id
        self.datatype = datatype
        self.improved = improved and datatype.supports_difference
        if improved and not datatype.supports_difference:
            logger.warning("%s does not support difference; falling back to naive anti-entropy",
                           datatype.name)
        self.state = datatype.bottom()
        self.buffer = datatype.bottom()  # naive mode delta-buffer
        self.fragments: list[tuple[Any, Any]] = []  # improved mode: (origin, fragment)
        self.fullstate_every = fullstate_every
        self._ticks = 0

    @property
    def name(self) -> str:
        return self.datatype.name

    @property
    def snapshot_queries(self):
        return self.datatype.snapshot_queries

    def mutate(self, op: tuple):
        """Apply one operation locally; returns the delta it produced."""
        delta = self.datatype.delta_mutator(self.state, op, self.replica_id)
        self.state = merge_states(self.state, delta)
        if self.improved:
            self.fragments.append((self.replica_id, delta))
        else:
            self.buffer = merge_states(self.buffer, delta)
        return delta

    def receive(self, origin: Any, group) -> None:
        """Join a delta-group from ``origin`` into state and buffer."""
        if self.improved:
            effective = state_difference(group, self.state)
            if delta_is_bottom(effective):
                return
            self.state = merge_states(self.state, effective)
            self.fragments.append((origin, effective))
        else:
            self.state = merge_states(self.state, group)
            self.buffer = merge_states(self.buffer, group)

    def tick(self, neighbors: list[Any]) -> list[tuple[Any, Any]]:
        """One anti-entropy round: payloads per neighbor; resets the buffer."""
        self._ticks += 1
        out = []
        if self.improved:
            for j in neighbors:
                payload = self.datatype.bottom()
                for origin, frag in self.fragments:
                    if origin != j:
                        payload = merge_states(payload, frag)
                if not delta_is_bottom(payload):
                    out.append((j, payload))
            self.fragments = []
            return out
        if self.fullstate_every and self._ticks % self.fullstate_every == 0:
            payload = self.state
        else:
            payload = self.buffer
        if not delta_is_bottom(payload):
            out = [(j, payload) for j in neighbors]
        self.buffer = self.datatype.bottom()
        return out

    def query(self, q: tuple) -> Any:
        return self.datatype.query(self.state, q)

    def state_leaves(self) -> int:
        return state_size(self.state)


def make_delta_replica(datatype: str, replica_id: Any, improved: bool = False,
                       fullstate_every: int | None = None) -> DeltaReplica:
    try:
        dt = DELTA_DATATYPES[datatype]()
    except KeyError:
        raise ValueError(f"no delta datatype named {datatype!r}") from None
    return DeltaReplica(replica_id, dt, improved=improved, fullstate_every=fullstate_every)
