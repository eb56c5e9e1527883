"""Dots, causal contexts, dot stores, and joins of causal replica states.

A causal state pairs a dot store (the data) with a causal context (the
set of event ids ever seen). The pair supports removal without
tombstones: a dot covered by the context but absent from the store is
known to have been deleted, and the join keeps exactly the surviving
dots from each side.

Contexts use a two-part encoding: a version vector for the contiguous
prefix per replica, plus a cloud of detached dots. Delta propagation can
produce contexts that are not downward closed, so the cloud is needed;
in plain state-based use it stays empty.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Iterable, Iterator, Mapping, Union

from .lattice import LatticeValue, ShapeMismatchError, UnsupportedShapeError
from .lattice import join as lattice_join
from .lattice import leaf_count as lattice_leaf_count
from .lattice import render as lattice_render
from .lattice import sorted_atoms


@dataclass(frozen=True)
class Dot:
    """Globally unique event id: (replica id, per-replica counter >= 1)."""

    replica: Any
    counter: int

    def __repr__(self) -> str:
        return f"{self.replica}.{self.counter}"


def _dot_key(d: Dot) -> tuple[str, str, int]:
    return (type(d.replica).__name__, repr(d.replica), d.counter)


def sorted_dots(dots: Iterable[Dot]) -> list[Dot]:
    return sorted(dots, key=_dot_key)


@dataclass(frozen=True)
class CausalContext:
    """Set of seen dots: version vector ``compact`` plus detached ``cloud``.

    Always normalized: cloud dots are neither covered by the vector nor
    contiguous with it.
    """

    compact: tuple[tuple[Any, int], ...]
    cloud: frozenset[Dot]

    def compact_of(self, replica: Any) -> int:
        for r, n in self.compact:
            if r == replica:
                return n
        return 0

    def contains(self, d: Dot) -> bool:
        return d.counter <= self.compact_of(d.replica) or d in self.cloud

    def max_counter(self, replica: Any) -> int:
        n = self.compact_of(replica)
        for d in self.cloud:
            if d.replica == replica and d.counter > n:
                n = d.counter
        return n

    def next_dot(self, replica: Any) -> tuple[Dot, "CausalContext"]:
        """Fresh dot for ``replica`` and the context extended with it."""
        d = Dot(replica, self.max_counter(replica) + 1)
        return d, self.add_dots([d])

    def add_dots(self, dots: Iterable[Dot]) -> "CausalContext":
        return make_context(dict(self.compact), set(self.cloud) | set(dots))

    def join(self, other: "CausalContext") -> "CausalContext":
        """Context whose dot set is the union of both contexts'."""
        compact = dict(self.compact)
        for r, n in other.compact:
            compact[r] = max(compact.get(r, 0), n)
        return make_context(compact, set(self.cloud) | set(other.cloud))

    def iter_dots(self) -> Iterator[Dot]:
        for r, n in self.compact:
            for c in range(1, n + 1):
                yield Dot(r, c)
        yield from self.cloud

    def dots(self) -> frozenset[Dot]:
        return frozenset(self.iter_dots())

    def render(self) -> str:
        vv = ", ".join(f"{r}:{n}" for r, n in self.compact)
        if self.cloud:
            cl = ", ".join(repr(d) for d in sorted_dots(self.cloud))
            return f"cc({vv} | {cl})"
        return f"cc({vv})"

    def leaf_count(self) -> int:
        return 2 * len(self.compact) + len(self.cloud)


def make_context(compact: Mapping[Any, int] | None = None, cloud: Iterable[Dot] = ()) -> CausalContext:
    """Normalize and build a context from a version vector and loose dots."""
    vv = {r: n for r, n in (compact or {}).items() if n > 0}
    loose = set(cloud)
    loose = {d for d in loose if d.counter > vv.get(d.replica, 0)}
    changed = True
    while changed:
        changed = False
        for d in list(loose):
            if d.counter == vv.get(d.replica, 0) + 1:
                vv[d.replica] = d.counter
                loose.discard(d)
                changed = True
        loose = {d for d in loose if d.counter > vv.get(d.replica, 0)}
    canonical = tuple((r, vv[r]) for r in sorted_atoms(vv))
    return CausalContext(canonical, frozenset(loose))


def context_from_dots(dots: Iterable[Dot]) -> CausalContext:
    return make_context({}, dots)


EMPTY_CONTEXT = make_context()


@dataclass(frozen=True)
class DotSet:
    """Dot store variant: a plain set of dots."""

    dots: frozenset[Dot]


@dataclass(frozen=True)
class DotFun:
    """Dot store variant: map from dots to lattice values (no bottoms)."""

    entries: tuple[tuple[Dot, LatticeValue], ...]


@dataclass(frozen=True)
class DotMap:
    """Dot store variant: map from keys to child dot stores (no empties)."""

    entries: tuple[tuple[Any, "DotStore"], ...]


DotStore = Union[DotSet, DotFun, DotMap]


def dotset(dots: Iterable[Dot] = ()) -> DotSet:
    return DotSet(frozenset(dots))


def dotfun(entries: Mapping[Dot, LatticeValue] | Iterable[tuple[Dot, LatticeValue]] = ()) -> DotFun:
    if isinstance(entries, Mapping):
        entries = entries.items()
    kept = {d: v for d, v in entries}
    return DotFun(tuple((d, kept[d]) for d in sorted_dots(kept)))


def dotmap(entries: Mapping[Any, DotStore] | Iterable[tuple[Any, DotStore]] = ()) -> DotMap:
    if isinstance(entries, Mapping):
        entries = entries.items()
    kept = {k: s for k, s in entries if not store_is_bottom(s)}
    return DotMap(tuple((k, kept[k]) for k in sorted_atoms(kept)))


def store_is_bottom(store: DotStore) -> bool:
    if isinstance(store, DotSet):
        return not store.dots
    if isinstance(store, (DotFun, DotMap)):
        return not store.entries
    raise ShapeMismatchError(f"not a dot store: {store!r}")


def store_dots(store: DotStore) -> frozenset[Dot]:
    """All dots appearing anywhere in the store."""
    if isinstance(store, DotSet):
        return store.dots
    if isinstance(store, DotFun):
        return frozenset(d for d, _ in store.entries)
    if isinstance(store, DotMap):
        out: set[Dot] = set()
        for _, child in store.entries:
            out |= store_dots(child)
        return frozenset(out)
    raise ShapeMismatchError(f"not a dot store: {store!r}")


def _empty_like(store: DotStore) -> DotStore:
    if isinstance(store, DotSet):
        return DotSet(frozenset())
    if isinstance(store, DotFun):
        return DotFun(())
    if isinstance(store, DotMap):
        return DotMap(())
    raise ShapeMismatchError(f"not a dot store: {store!r}")


@dataclass(frozen=True)
class CausalState:
    """Dot store plus causal context; every store dot is in the context."""

    store: DotStore
    context: CausalContext


def empty_dotmap_state() -> CausalState:
    return CausalState(dotmap(), EMPTY_CONTEXT)


def is_wellformed(state: CausalState) -> bool:
    return all(state.context.contains(d) for d in store_dots(state.store))


def _join_stores(s: DotStore, c: CausalContext, s2: DotStore, c2: CausalContext) -> DotStore:
    if isinstance(s, DotSet) and isinstance(s2, DotSet):
        keep = (s.dots & s2.dots)
        keep |= {d for d in s.dots if not c2.contains(d)}
        keep |= {d for d in s2.dots if not c.contains(d)}
        return DotSet(frozenset(keep))
    if isinstance(s, DotFun) and isinstance(s2, DotFun):
        m = dict(s.entries)
        m2 = dict(s2.entries)
        out = {}
        for d in set(m) & set(m2):
            out[d] = lattice_join(m[d], m2[d])
        for d, v in m.items():
            if d not in m2 and not c2.contains(d):
                out[d] = v
        for d, v in m2.items():
            if d not in m and not c.contains(d):
                out[d] = v
        return dotfun(out)
    if isinstance(s, DotMap) and isinstance(s2, DotMap):
        m = dict(s.entries)
        m2 = dict(s2.entries)
        out = {}
        for k in set(m) | set(m2):
            child = m.get(k)
            child2 = m2.get(k)
            if child is None:
                child = _empty_like(child2)
            if child2 is None:
                child2 = _empty_like(child)
            joined = _join_stores(child, c, child2, c2)
            if not store_is_bottom(joined):
                out[k] = joined
        return dotmap(out)
    raise ShapeMismatchError(f"dot store variants differ: {type(s).__name__} vs {type(s2).__name__}")


def causal_join(a: CausalState, b: CausalState) -> CausalState:
    """Join two causal states: surviving dots are those present in both
    stores, or present in one store and not covered by the other's
    context; the result context is the context union."""
    store = _join_stores(a.store, a.context, b.store, b.context)
    return CausalState(store, a.context.join(b.context))


def _diff_store(gs: DotStore, xs: DotStore, xc: CausalContext, gc: CausalContext) -> tuple[DotStore, set[Dot]]:
    if isinstance(gs, DotSet) and isinstance(xs, DotSet):
        keep = frozenset(d for d in gs.dots if not xc.contains(d))
        kill = {d for d in xs.dots if gc.contains(d) and d not in gs.dots}
        return DotSet(keep), kill
    if isinstance(gs, DotMap) and isinstance(xs, DotMap):
        gm = dict(gs.entries)
        xm = dict(xs.entries)
        out = {}
        kills: set[Dot] = set()
        for k in set(gm) | set(xm):
            child_g = gm.get(k)
            child_x = xm.get(k)
            if child_g is None:
                child_g = _empty_like(child_x)
            if child_x is None:
                child_x = _empty_like(child_g)
            kept, kill = _diff_store(child_g, child_x, xc, gc)
            if not store_is_bottom(kept):
                out[k] = kept
            kills |= kill
        return dotmap(out), kills
    if isinstance(gs, DotFun) or isinstance(xs, DotFun):
        raise UnsupportedShapeError("difference is not defined for DotFun stores")
    raise ShapeMismatchError(f"dot store variants differ: {type(gs).__name__} vs {type(xs).__name__}")


def causal_difference(group: CausalState, state: CausalState) -> CausalState:
    """Fragment of ``group`` not yet reflected in ``state``.

    Joining the fragment into ``state`` has the same outcome as joining
    the whole group; a group already subsumed yields the bottom state.
    The context keeps only the dots that are new to ``state`` plus the
    dots that cover store entries ``group`` has deleted.
    """
    kept, kills = _diff_store(group.store, state.store, state.context, group.context)
    new_dots = set(group.context.dots()) - set(state.context.dots())
    return CausalState(kept, context_from_dots(new_dots | kills))


def state_is_bottom(state: CausalState) -> bool:
    return store_is_bottom(state.store) and state.context == EMPTY_CONTEXT


def render_store(store: DotStore) -> str:
    if isinstance(store, DotSet):
        return "{" + ", ".join(repr(d) for d in sorted_dots(store.dots)) + "}"
    if isinstance(store, DotFun):
        return "{" + ", ".join(f"{d!r}->{lattice_render(v)}" for d, v in store.entries) + "}"
    if isinstance(store, DotMap):
        return "{" + ", ".join(f"{k}: {render_store(s)}" for k, s in store.entries) + "}"
    raise ShapeMismatchError(f"not a dot store: {store!r}")


def render_state(state: CausalState) -> str:
    return f"({render_store(state.store)}, {state.context.render()})"


def store_leaf_count(store: DotStore) -> int:
    if isinstance(store, DotSet):
        return len(store.dots)
    if isinstance(store, DotFun):
        return sum(1 + lattice_leaf_count(v) for _, v in store.entries)
    if isinstance(store, DotMap):
        return sum(1 + store_leaf_count(s) for _, s in store.entries)
    raise ShapeMismatchError(f"not a dot store: {store!r}")


def state_leaf_count(state: CausalState) -> int:
    return store_leaf_count(state.store) + state.context.leaf_count()
