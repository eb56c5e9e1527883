"""State-based datatypes: inflations, merges, convergence under gossip."""

import random

import pytest

from crdtlab import lattice as lat
from crdtlab.causal import Dot, dotset, make_context
from crdtlab.statebased import (
    STATE_DATATYPES,
    make_state_replica,
    merge_states,
    state_leq,
    state_size,
)

OPS = {
    "gcounter": [("inc",)],
    "pncounter": [("inc",), ("dec",)],
    "gset": [("add", "a"), ("add", "b"), ("add", "c")],
    "orset": [("add", "a"), ("add", "b"), ("remove", "a"), ("remove", "b")],
    "advancer": [("advance", "a"), ("advance", "b"), ("advance", "c")],
}


def random_replica(rng, datatype, rid):
    r = make_state_replica(datatype, rid)
    for _ in range(rng.randint(0, 6)):
        r.mutate(rng.choice(OPS[datatype]))
    return r


def test_gcounter_inc_and_value():
    r = make_state_replica("gcounter", "i")
    r.mutate(("inc",))
    assert r.state == lat.lmap(lat.NAT, {"i": lat.nat(1)})
    assert r.query(("value",)) == 1


def test_advancer_sequential_runs():
    r = make_state_replica("advancer", "i")
    r.mutate(("advance", "a"))
    r.mutate(("advance", "b"))
    assert r.state == lat.lmap(lat.NAT, {"a": lat.nat(1), "b": lat.nat(2)})
    r2 = make_state_replica("advancer", "j")
    r2.mutate(("advance", "b"))
    r2.mutate(("advance", "a"))
    assert r2.state == lat.lmap(lat.NAT, {"a": lat.nat(2), "b": lat.nat(1)})


def test_advancer_concurrent_merge_ties():
    a = make_state_replica("advancer", "i")
    b = make_state_replica("advancer", "j")
    a.mutate(("advance", "a"))
    b.mutate(("advance", "b"))
    merged = merge_states(a.state, b.state)
    assert merged == lat.lmap(lat.NAT, {"a": lat.nat(1), "b": lat.nat(1)})
    assert STATE_DATATYPES["advancer"].query(merged, ("ahead",)) == frozenset({"a", "b"})


def test_advancer_ahead_on_empty():
    r = make_state_replica("advancer", "i")
    assert r.query(("ahead",)) == frozenset()


def test_advancer_idempotent():
    rng = random.Random(31)
    adv = STATE_DATATYPES["advancer"]
    for _ in range(300):
        r = random_replica(rng, "advancer", "i")
        key = rng.choice(["a", "b", "c"])
        once = adv.apply(r.state, ("advance", key), "i")
        twice = adv.apply(once, ("advance", key), "i")
        assert once == twice


def test_orset_add_generates_dot():
    r = make_state_replica("orset", "i")
    r.mutate(("add", "e"))
    assert dict(r.state.store.entries)["e"] == dotset([Dot("i", 1)])
    assert r.state.context == make_context({"i": 1})


def test_orset_remove_keeps_context():
    r = make_state_replica("orset", "i")
    r.mutate(("add", "e"))
    r.mutate(("remove", "e"))
    assert r.state.store.entries == ()
    assert r.state.context == make_context({"i": 1})
    assert r.query(("elements",)) == frozenset()


def test_orset_concurrent_add_remove_add_wins():
    a = make_state_replica("orset", "i")
    b = make_state_replica("orset", "j")
    a.mutate(("add", "e"))
    b.merge(a.state)  # j observes i's add
    b.mutate(("remove", "e"))
    a.mutate(("add", "e"))  # concurrent re-add at i
    merged = merge_states(a.state, b.state)
    assert STATE_DATATYPES["orset"].query(merged, ("elements",)) == frozenset({"e"})
    assert dict(merged.store.entries)["e"] == dotset([Dot("i", 2)])


def test_pncounter_merge_example():
    a = make_state_replica("pncounter", "i")
    a.mutate(("inc",))
    a.mutate(("inc",))
    a.mutate(("dec",))
    b = make_state_replica("pncounter", "j")
    for _ in range(3):
        b.mutate(("inc",))
    merged = merge_states(a.state, b.state)
    expected = lat.pair(
        lat.lmap(lat.NAT, {"i": lat.nat(2), "j": lat.nat(3)}),
        lat.lmap(lat.NAT, {"i": lat.nat(1)}),
    )
    assert merged == expected
    assert STATE_DATATYPES["pncounter"].query(merged, ("value",)) == 4


def test_gset_contains():
    r = make_state_replica("gset", "i")
    r.mutate(("add", "e"))
    assert r.query(("contains", "e")) is True
    assert r.query(("contains", "f")) is False


def test_mutators_are_inflations():
    rng = random.Random(37)
    for datatype in sorted(STATE_DATATYPES):
        for _ in range(200):
            r = random_replica(rng, datatype, rng.choice("ijk"))
            before = r.state
            r.mutate(rng.choice(OPS[datatype]))
            assert state_leq(before, r.state), datatype


def test_merge_laws():
    rng = random.Random(41)
    for datatype in sorted(STATE_DATATYPES):
        for _ in range(100):
            a = random_replica(rng, datatype, "i").state
            b = random_replica(rng, datatype, "j").state
            c = random_replica(rng, datatype, "k").state
            assert merge_states(a, a) == a, datatype
            assert merge_states(a, b) == merge_states(b, a), datatype
            assert merge_states(a, merge_states(b, c)) == merge_states(merge_states(a, b), c), datatype


def test_convergence_under_lossy_gossip():
    """Loss, duplication and reordering; final full exchange reaches all."""
    rng = random.Random(47)
    for datatype in sorted(STATE_DATATYPES):
        for _ in range(40):
            ids = ["i", "j", "k"]
            replicas = {n: make_state_replica(datatype, n) for n in ids}
            for _ in range(12):
                node = rng.choice(ids)
                action = rng.random()
                if action < 0.5:
                    replicas[node].mutate(rng.choice(OPS[datatype]))
                else:
                    dest = rng.choice([m for m in ids if m != node])
                    if rng.random() < 0.3:
                        continue  # lost
                    replicas[dest].merge(replicas[node].state)
                    if rng.random() < 0.2:
                        replicas[dest].merge(replicas[node].state)  # duplicate
            # closing exchange until fixpoint: everyone sees everyone
            changed = True
            while changed:
                changed = False
                for n in ids:
                    for m in ids:
                        if n != m:
                            before = replicas[m].state
                            replicas[m].merge(replicas[n].state)
                            changed = changed or replicas[m].state != before
            states = [replicas[n].state for n in ids]
            assert all(s == states[0] for s in states), datatype


def test_non_idempotent_reuse_undercounts():
    """Reusing a sequential counter with max-merge drops concurrent increments."""

    def inc(state):
        return state + 1

    base = 3
    a = inc(base)
    b = inc(base)
    merged = max(a, b)
    assert merged == inc(base)
    assert merged < inc(inc(base))


def test_state_sizes():
    r = make_state_replica("gcounter", "i")
    r.mutate(("inc",))
    assert state_size(r.state) == 2
    o = make_state_replica("orset", "i")
    o.mutate(("add", "e"))
    assert state_size(o.state) == 1 + 1 + 2  # key + dot + vv entry


def test_merge_shape_mismatch():
    a = make_state_replica("gcounter", "i")
    b = make_state_replica("orset", "j")
    with pytest.raises(lat.ShapeMismatchError):
        merge_states(a.state, b.state)
