"""Join-semilattice values built from a fixed grammar of compositions.

Supported shapes: max-ordered naturals, booleans, powersets of opaque
elements, cartesian products, lexicographic pairs, and maps from opaque
keys to lattice values (missing key = bottom). Values are immutable and
canonical: maps never store bottom entries, so structural equality is
semantic equality.

Besides order and join, the module provides irredundant join
decompositions and the state-difference operator used to build minimal
delta payloads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Iterable, Iterator, Mapping


class ShapeMismatchError(TypeError):
    """Two values from different lattice constructions were combined."""


class UnsupportedShapeError(ValueError):
    """The requested operation is not defined for this shape."""


@dataclass(frozen=True)
class Shape:
    """Descriptor of one lattice construction."""


@dataclass(frozen=True)
class NatShape(Shape):
    pass


@dataclass(frozen=True)
class BoolShape(Shape):
    pass


@dataclass(frozen=True)
class SetShape(Shape):
    pass


@dataclass(frozen=True)
class ProductShape(Shape):
    left: Shape
    right: Shape


@dataclass(frozen=True)
class LexShape(Shape):
    left: Shape
    right: Shape

    def __post_init__(self) -> None:
        # Lexicographic pairs only form a lattice when the right side has
        # a bottom or the left side is totally ordered.
        if not (has_bottom(self.right) or is_chain(self.left)):
            raise UnsupportedShapeError(f"invalid lexicographic shape {self}")


@dataclass(frozen=True)
class MapShape(Shape):
    value: Shape


NAT = NatShape()
BOOL = BoolShape()
POWERSET = SetShape()


def is_chain(shape: Shape) -> bool:
    """True when every pair of values of this shape is comparable."""
    return isinstance(shape, (NatShape, BoolShape))


def has_bottom(shape: Shape) -> bool:
    """All supported shapes have a least element."""
    return isinstance(shape, (NatShape, BoolShape, SetShape, ProductShape, LexShape, MapShape))


@dataclass(frozen=True)
class LatticeValue:
    """Immutable element of one of the supported lattices.

    ``payload`` depends on the shape: int, bool, frozenset, a pair of
    LatticeValue, or a sorted tuple of (key, LatticeValue) entries.
    """

    shape: Shape
    payload: Any

    def __repr__(self) -> str:
        return f"LatticeValue({render(self)})"


def _sort_key(k: Any) -> tuple[str, str]:
    return (type(k).__name__, repr(k))


def sorted_atoms(items: Iterable[Any]) -> list[Any]:
    """Deterministically sort opaque keys/elements, even mixed types."""
    items = list(items)
    try:
        return sorted(items)
    except TypeError:
        return sorted(items, key=_sort_key)


def nat(n: int) -> LatticeValue:
    if n < 0:
        raise ValueError("naturals only")
    return LatticeValue(NAT, n)


def boolean(b: bool) -> LatticeValue:
    return LatticeValue(BOOL, bool(b))


def fset(elements: Iterable[Any] = ()) -> LatticeValue:
    return LatticeValue(POWERSET, frozenset(elements))


def pair(left: LatticeValue, right: LatticeValue) -> LatticeValue:
    return LatticeValue(ProductShape(left.shape, right.shape), (left, right))


def lexpair(left: LatticeValue, right: LatticeValue) -> LatticeValue:
    return LatticeValue(LexShape(left.shape, right.shape), (left, right))


def lmap(value_shape: Shape, entries: Mapping[Any, LatticeValue] | Iterable[tuple[Any, LatticeValue]] = ()) -> LatticeValue:
    """Build a map value; bottom-valued entries are dropped (canonical form)."""
    if isinstance(entries, Mapping):
        entries = entries.items()
    bot = bottom(value_shape)
    kept = {}
    for k, v in entries:
        if v.shape != value_shape:
            raise ShapeMismatchError(f"map value {v!r} does not have shape {value_shape}")
        if v != bot:
            kept[k] = v
    canonical = tuple((k, kept[k]) for k in sorted_atoms(kept))
    return LatticeValue(MapShape(value_shape), canonical)


def map_entries(x: LatticeValue) -> dict[Any, LatticeValue]:
    """Entries of a map value as a dict (no bottom values present)."""
    if not isinstance(x.shape, MapShape):
        raise ShapeMismatchError(f"not a map value: {x!r}")
    return dict(x.payload)


def map_get(x: LatticeValue, key: Any) -> LatticeValue:
    """Look a key up in a map value; missing keys yield bottom."""
    if not isinstance(x.shape, MapShape):
        raise ShapeMismatchError(f"not a map value: {x!r}")
    for k, v in x.payload:
        if k == key:
            return v
    return bottom(x.shape.value)


def map_set(x: LatticeValue, key: Any, value: LatticeValue) -> LatticeValue:
    """Copy of a map value with one entry replaced."""
    entries = map_entries(x)
    entries[key] = value
    return lmap(x.shape.value, entries)


def bottom(shape: Shape) -> LatticeValue:
    """Least element of the given shape."""
    if isinstance(shape, NatShape):
        return LatticeValue(shape, 0)
    if isinstance(shape, BoolShape):
        return LatticeValue(shape, False)
    if isinstance(shape, SetShape):
        return LatticeValue(shape, frozenset())
    if isinstance(shape, ProductShape):
        return LatticeValue(shape, (bottom(shape.left), bottom(shape.right)))
    if isinstance(shape, LexShape):
        return LatticeValue(shape, (bottom(shape.left), bottom(shape.right)))
    if isinstance(shape, MapShape):
        return LatticeValue(shape, ())
    raise UnsupportedShapeError(f"unknown shape {shape!r}")


def is_bottom(x: LatticeValue) -> bool:
    return x == bottom(x.shape)


def _check_same_shape(a: LatticeValue, b: LatticeValue) -> None:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"shape mismatch: {a.shape} vs {b.shape}")


def leq(a: LatticeValue, b: LatticeValue) -> bool:
    """Partial order test a ⊑ b; both values must share a shape."""
    _check_same_shape(a, b)
    shape = a.shape
    if isinstance(shape, (NatShape, BoolShape)):
        return a.payload <= b.payload
    if isinstance(shape, SetShape):
        return a.payload <= b.payload
    if isinstance(shape, ProductShape):
        return leq(a.payload[0], b.payload[0]) and leq(a.payload[1], b.payload[1])
    if isinstance(shape, LexShape):
        a1, a2 = a.payload
        b1, b2 = b.payload
        return lt(a1, b1) or (a1 == b1 and leq(a2, b2))
    if isinstance(shape, MapShape):
        bm = dict(b.payload)
        vbot = bottom(shape.value)
        return all(leq(v, bm.get(k, vbot)) for k, v in a.payload)
    raise UnsupportedShapeError(f"unknown shape {shape!r}")


def lt(a: LatticeValue, b: LatticeValue) -> bool:
    """Strict order a ⊏ b."""
    return a != b and leq(a, b)


def concurrent(a: LatticeValue, b: LatticeValue) -> bool:
    """Neither value is below the other."""
    return not leq(a, b) and not leq(b, a)


def join(a: LatticeValue, b: LatticeValue) -> LatticeValue:
    """Least upper bound of two values of the same shape."""
    _check_same_shape(a, b)
    shape = a.shape
    if isinstance(shape, (NatShape, BoolShape)):
        return LatticeValue(shape, max(a.payload, b.payload))
    if isinstance(shape, SetShape):
        return LatticeValue(shape, a.payload | b.payload)
    if isinstance(shape, ProductShape):
        return LatticeValue(shape, (join(a.payload[0], b.payload[0]), join(a.payload[1], b.payload[1])))
    if isinstance(shape, LexShape):
        a1, a2 = a.payload
        b1, b2 = b.payload
        if lt(b1, a1):
            return a
        if lt(a1, b1):
            return b
        if a1 == b1:
            return LatticeValue(shape, (a1, join(a2, b2)))
        # concurrent left components: join them, right side resets to bottom
        return LatticeValue(shape, (join(a1, b1), bottom(shape.right)))
    if isinstance(shape, MapShape):
        am = dict(a.payload)
        bm = dict(b.payload)
        merged = {}
        for k in set(am) | set(bm):
            if k in am and k in bm:
                merged[k] = join(am[k], bm[k])
            elif k in am:
                merged[k] = am[k]
            else:
                merged[k] = bm[k]
        return lmap(shape.value, merged)
    raise UnsupportedShapeError(f"unknown shape {shape!r}")


def join_all(shape: Shape, values: Iterable[LatticeValue]) -> LatticeValue:
    acc = bottom(shape)
    for v in values:
        acc = join(acc, v)
    return acc


@dataclass(frozen=True)
class Decomposition:
    """Irredundant set of join-irreducible values joining to ``target``."""

    irreducibles: frozenset[LatticeValue]
    target: LatticeValue


def decompose(x: LatticeValue) -> Decomposition:
    """Unique irredundant join decomposition of ``x``.

    Defined for naturals, booleans, powersets, products and maps (all
    distributive); lexicographic shapes are rejected.
    """
    return Decomposition(frozenset(_irreducibles(x)), x)


def _irreducibles(x: LatticeValue) -> Iterator[LatticeValue]:
    shape = x.shape
    if isinstance(shape, NatShape):
        # every non-zero natural is irreducible in the max-chain
        if x.payload > 0:
            yield x
    elif isinstance(shape, BoolShape):
        if x.payload:
            yield x
    elif isinstance(shape, SetShape):
        for e in x.payload:
            yield LatticeValue(shape, frozenset([e]))
    elif isinstance(shape, ProductShape):
        lbot = bottom(shape.left)
        rbot = bottom(shape.right)
        for r in _irreducibles(x.payload[0]):
            yield LatticeValue(shape, (r, rbot))
        for r in _irreducibles(x.payload[1]):
            yield LatticeValue(shape, (lbot, r))
    elif isinstance(shape, MapShape):
        for k, v in x.payload:
            for r in _irreducibles(v):
                yield lmap(shape.value, [(k, r)])
    elif isinstance(shape, LexShape):
        raise UnsupportedShapeError("decomposition is not defined for lexicographic shapes")
    else:
        raise UnsupportedShapeError(f"unknown shape {shape!r}")


def difference(a: LatticeValue, b: LatticeValue) -> LatticeValue:
    """Join of a's irreducibles that are not below b.

    Satisfies join(b, difference(a, b)) == join(a, b); for powersets this
    is plain set difference.
    """
    _check_same_shape(a, b)
    return join_all(a.shape, (y for y in decompose(a).irreducibles if not leq(y, b)))


def render(x: LatticeValue) -> str:
    """Canonical textual rendering with deterministic ordering."""
    shape = x.shape
    if isinstance(shape, NatShape):
        return str(x.payload)
    if isinstance(shape, BoolShape):
        return "T" if x.payload else "F"
    if isinstance(shape, SetShape):
        return "{" + ", ".join(str(e) for e in sorted_atoms(x.payload)) + "}"
    if isinstance(shape, ProductShape):
        return f"({render(x.payload[0])}, {render(x.payload[1])})"
    if isinstance(shape, LexShape):
        return f"lex({render(x.payload[0])}, {render(x.payload[1])})"
    if isinstance(shape, MapShape):
        return "{" + ", ".join(f"{k}->{render(v)}" for k, v in x.payload) + "}"
    raise UnsupportedShapeError(f"unknown shape {shape!r}")


def leaf_count(x: LatticeValue) -> int:
    """Number of scalar leaves (integers, booleans, element ids, keys)."""
    shape = x.shape
    if isinstance(shape, (NatShape, BoolShape)):
        return 1
    if isinstance(shape, SetShape):
        return len(x.payload)
    if isinstance(shape, (ProductShape, LexShape)):
        return leaf_count(x.payload[0]) + leaf_count(x.payload[1])
    if isinstance(shape, MapShape):
        return sum(1 + leaf_count(v) for _, v in x.payload)
    raise UnsupportedShapeError(f"unknown shape {shape!r}")
