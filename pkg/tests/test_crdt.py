"""Replicated data types: semantics, merge laws, canonical encoding."""

from __future__ import annotations

import itertools
import json
import random
from pathlib import Path

import pytest

from ipa.crdt import (
    AwSet,
    CompensationSet,
    Dot,
    ObjectMismatch,
    PnCounter,
    RwSet,
    StaleDot,
    VectorClock,
    trim_excess,
)

GOLDEN = Path(__file__).parent / "golden"


# -- add-wins set -----------------------------------------------------------


def test_concurrent_add_remove_converges_to_present():
    left = AwSet("players")
    right = AwSet("players")
    d0 = Dot("r1", 1)
    left.add(("p1",), d0)
    right.merge(left)

    # right removes what it observed; left concurrently adds again
    right.remove(("p1",), right.observed_dots(("p1",)))
    left.add(("p1",), Dot("r1", 2))

    left.merge(right)
    right.merge(left)
    assert left.contains(("p1",))
    assert right.contains(("p1",))
    assert left.to_json() == right.to_json()


def test_touch_restores_membership_and_preserves_payload():
    origin = AwSet("players")
    origin.add(("p1",), Dot("r1", 1), payload={"name": "p one"})
    remote = AwSet("players")
    remote.merge(origin)
    remote.remove(("p1",), remote.observed_dots(("p1",)))
    origin.merge(remote)
    assert not origin.contains(("p1",))

    origin.touch(("p1",), Dot("r1", 2))
    assert origin.contains(("p1",))
    assert origin.payload_of(("p1",)) == {"name": "p one"}


def test_touch_never_changes_payload_bytes():
    s = AwSet("players")
    s.add(("p1",), Dot("r1", 1), payload=b"original")
    before = s.payload_of(("p1",))
    s.touch(("p1",), Dot("r1", 2))
    assert s.payload_of(("p1",)) is before


def test_remove_of_absent_element_is_noop():
    s = AwSet("players")
    s.remove(("ghost",), set())
    assert s.value() == set()


def test_stale_dot_reuse_rejected():
    s = AwSet("players")
    s.add(("p1",), Dot("r1", 1))
    with pytest.raises(StaleDot):
        s.add(("p1",), Dot("r1", 1))


def test_gc_drops_stable_tombstones_but_not_live_tags():
    s = AwSet("players")
    s.add(("p1",), Dot("r1", 1), payload="data")
    s.remove(("p1",), {Dot("r1", 1)})
    s.add(("p2",), Dot("r1", 2))
    s.gc(VectorClock({"r1": 2, "r2": 2}))
    assert ("p1",) not in s.tags
    assert s.payload_of(("p1",)) is None  # retention ends at the horizon
    assert s.contains(("p2",))


def test_merge_requires_same_object():
    with pytest.raises(ObjectMismatch):
        AwSet("a").merge(AwSet("b"))


# -- rem-wins set ------------------------------------------------------------


def _ctx(*dots: Dot) -> VectorClock:
    vc = VectorClock()
    for d in dots:
        vc.advance(d)
    return vc


def test_concurrent_add_and_wildcard_remove_converges_to_absent():
    left = RwSet("enrolled")
    right = RwSet("enrolled")
    # concurrent: add(p1, t1) at r1; remove all rows of t1 at r2
    left.add(("p1", "t1"), Dot("r1", 1), _ctx())
    right.remove_matching((None, "t1"), Dot("r2", 1), _ctx())
    left.merge(right)
    right.merge(left)
    assert not left.contains(("p1", "t1"))
    assert not right.contains(("p1", "t1"))
    assert left.to_json() == right.to_json()


def test_causally_later_add_survives_past_remove():
    s = RwSet("enrolled")
    barrier_dot = Dot("r2", 1)
    s.remove_matching((None, "t1"), barrier_dot, _ctx())
    # The add's context covers the barrier: issued after seeing the remove.
    s.add(("p1", "t1"), Dot("r1", 1), _ctx(barrier_dot))
    assert s.contains(("p1", "t1"))


def test_two_concurrent_overlapping_removes_mask_both_matches():
    s = RwSet("enrolled")
    s.add(("p1", "t1"), Dot("r1", 1), _ctx())
    s.add(("p1", "t2"), Dot("r1", 2), _ctx())
    s.remove_matching(("p1", None), Dot("r2", 1), _ctx())
    s.remove_matching((None, "t2"), Dot("r3", 1), _ctx())
    assert s.value() == set()


def test_wildcard_remove_order_independent_all_four_op_cases():
    """Exhaustive check: every 4-operation mix of adds and (wildcard)
    removes, delivered to a fresh replica in every order, lands in the
    same state."""
    ops = {
        "add_a": ("add", ("a", "t1"), Dot("r1", 1), _ctx()),
        "add_b": ("add", ("b", "t1"), Dot("r2", 1), _ctx()),
        "add_a2": ("add", ("a", "t2"), Dot("r3", 1), _ctx()),
        "rem_exact": ("rem", ("a", "t1"), Dot("r4", 1), _ctx()),
        "rem_t1": ("rem", (None, "t1"), Dot("r5", 1), _ctx()),
        "rem_all": ("rem", (None, None), Dot("r6", 1), _ctx()),
    }
    checked = 0
    for combo in itertools.combinations_with_replacement(sorted(ops), 4):
        if len(set(combo)) != len(combo):
            continue  # each op carries a unique dot; no duplicates
        baseline = None
        for order in itertools.permutations(combo):
            s = RwSet("x")
            for name in order:
                kind, arg, dot, ctx = ops[name]
                if kind == "add":
                    s.add(arg, dot, ctx)
                else:
                    s.remove_matching(arg, dot, ctx)
            encoded = json.dumps(s.to_json(), sort_keys=True)
            membership = tuple(sorted(s.value()))
            if baseline is None:
                baseline = (encoded, membership)
            else:
                assert (encoded, membership) == baseline, (combo, order)
        checked += 1
    assert checked == 15  # C(6, 4)


# -- counter --------------------------------------------------------------------


def test_counter_merge_example():
    a = PnCounter("stock")
    a.apply("r1", 3)
    b = PnCounter("stock")
    b.apply("r2", 2)
    b.apply("r2", -1)
    a.merge(b)
    assert a.value() == 4


def test_counter_value_is_incs_minus_decs():
    c = PnCounter("stock")
    c.apply("r1", 5)
    c.apply("r1", -2)
    c.apply("r2", -1)
    assert c.value() == 2
    assert all(v >= 0 for v in itertools.chain(c.incs.values(), c.decs.values()))


# -- compensation set ---------------------------------------------------------------


def test_trim_rule_keeps_smallest_and_trims_greatest():
    members = {("f",), ("a",), ("c",), ("e",), ("b",), ("d",)}
    visible, trimmed = trim_excess(members, 5)
    assert visible == [("a",), ("b",), ("c",), ("d",), ("e",)]
    assert trimmed == [("f",)]


def test_compensation_read_over_bound():
    s = CompensationSet("tickets", bound=5)
    for i, name in enumerate("abcdef"):
        s.add((name,), Dot("r1", i + 1))
    visible, pending = s.read()
    assert visible == [(c,) for c in "abcde"]
    assert [e for e, _ in pending] == [("f",)]
    # Committing the pending removes realizes the trim.
    for element, observed in pending:
        s.remove(element, observed)
    assert s.value() == {(c,) for c in "abcde"}
    assert s.read()[1] == []


def test_compensation_read_within_bound_is_plain():
    s = CompensationSet("tickets", bound=5)
    s.add(("a",), Dot("r1", 1))
    visible, pending = s.read()
    assert visible == [("a",)]
    assert pending == []


def test_replicas_over_bound_emit_identical_trims_and_converge():
    base = CompensationSet("tickets", bound=2)
    for i, name in enumerate("abc"):
        base.add((name,), Dot("r1", i + 1))
    left = base.copy()
    right = base.copy()
    _, pend_left = left.read()
    _, pend_right = right.read()
    assert pend_left == pend_right
    for element, observed in pend_left:
        left.remove(element, observed)
    for element, observed in pend_right:
        right.remove(element, observed)
    left.merge(right)
    right.merge(left)
    assert left.to_json() == right.to_json()
    assert left.value() == {("a",), ("b",)}


# -- merge laws -------------------------------------------------------------------


REPLICA_IDS = ("r1", "r2", "r3")


def replica_trio(kind: str, rng: random.Random, steps: int = 10):
    """Three replicas of one object after a random mix of local updates and
    gossip merges.  Dots stay globally unique and contexts honest, exactly
    as in a real deployment, so every pairwise merge below is a legal join."""
    if kind == "pn-counter":
        states = [PnCounter("obj") for _ in REPLICA_IDS]
    elif kind == "aw-set":
        states = [AwSet("obj") for _ in REPLICA_IDS]
    elif kind == "compensation-set":
        states = [CompensationSet("obj", bound=2) for _ in REPLICA_IDS]
    else:
        states = [RwSet("obj") for _ in REPLICA_IDS]
    seq = {r: 0 for r in REPLICA_IDS}
    clocks = {r: VectorClock() for r in REPLICA_IDS}

    def fresh_dot(i: int) -> Dot:
        rid = REPLICA_IDS[i]
        seq[rid] += 1
        dot = Dot(rid, seq[rid])
        clocks[rid].advance(dot)
        return dot

    for _ in range(steps):
        i = rng.randrange(len(states))
        s = states[i]
        action = rng.random()
        if action < 0.25 and len(states) > 1:  # gossip
            j = rng.randrange(len(states))
            if j != i:
                s.merge(states[j])
                clocks[REPLICA_IDS[i]].merge(clocks[REPLICA_IDS[j]])
            continue
        if kind == "pn-counter":
            s.apply(REPLICA_IDS[i], rng.randrange(-4, 5))
        elif kind in ("aw-set", "compensation-set"):
            element = (rng.choice("abcd"),)
            inner = s.inner if kind == "compensation-set" else s
            if action < 0.7 or not inner.observed_dots(element):
                dot = fresh_dot(i)
                if rng.random() < 0.25:
                    s.touch(element, dot)
                else:
                    s.add(element, dot, payload=rng.randrange(100))
            else:
                observed = inner.observed_dots(element)
                subset = set(rng.sample(sorted(observed), rng.randrange(1, len(observed) + 1)))
                s.remove(element, subset)
        else:  # rw-set
            ctx = clocks[REPLICA_IDS[i]].copy()
            dot = fresh_dot(i)
            if action < 0.65:
                s.add((rng.choice("ab"), rng.choice("xy")), dot, ctx)
            else:
                pattern = (rng.choice(["a", "b", None]), rng.choice(["x", "y", None]))
                s.remove_matching(pattern, dot, ctx)
    return states


_KINDS = ("aw-set", "rw-set", "pn-counter", "compensation-set")


def _encoded(obj) -> str:
    return json.dumps(obj.to_json(), sort_keys=True)


def check_merge_laws(kind: str, cases: int, seed: int = 0) -> int:
    """Commutativity, associativity, idempotence over replica trios; the
    acceptance suite calls this with the full 10,000-case budget."""
    rng = random.Random(seed + len(kind))
    for case in range(cases):
        a, b, c = replica_trio(kind, rng)

        ab = a.copy(); ab.merge(b)
        ba = b.copy(); ba.merge(a)
        assert _encoded(ab) == _encoded(ba), f"{kind} commutativity case {case}"

        ab_c = ab.copy(); ab_c.merge(c)
        bc = b.copy(); bc.merge(c)
        a_bc = a.copy(); a_bc.merge(bc)
        assert _encoded(ab_c) == _encoded(a_bc), f"{kind} associativity case {case}"

        aa = a.copy(); aa.merge(a)
        assert _encoded(aa) == _encoded(a), f"{kind} idempotence case {case}"
    return cases


@pytest.mark.parametrize("kind", _KINDS)
def test_merge_laws_randomized(kind):
    assert check_merge_laws(kind, 500) == 500


# -- canonical encoding ---------------------------------------------------------


def test_json_round_trip_every_type():
    rng = random.Random(7)
    for kind in _KINDS:
        for obj in replica_trio(kind, rng):
            cls = type(obj)
            again = cls.from_json(json.loads(json.dumps(obj.to_json())))
            assert _encoded(again) == _encoded(obj), kind


def test_golden_snapshots_stable():
    """Frozen canonical encodings; a diff here means the wire format moved."""
    aw = AwSet("players")
    aw.add(("p1",), Dot("r1", 1), payload="alpha")
    aw.add(("p2",), Dot("r2", 1))
    aw.remove(("p2",), aw.observed_dots(("p2",)))
    aw.touch(("p2",), Dot("r1", 2))

    rw = RwSet("enrolled")
    rw.add(("p1", "t1"), Dot("r1", 1), _ctx())
    rw.remove_matching((None, "t1"), Dot("r2", 1), _ctx())

    pn = PnCounter("stock")
    pn.apply("r1", 3)
    pn.apply("r2", -1)

    comp = CompensationSet("tickets", bound=1)
    comp.add(("a",), Dot("r1", 1))
    comp.add(("b",), Dot("r1", 2))

    got = {
        "aw": aw.to_json(),
        "rw": rw.to_json(),
        "pn": pn.to_json(),
        "comp": comp.to_json(),
    }
    golden_path = GOLDEN / "crdt-states.json"
    expected = json.loads(golden_path.read_text())
    assert got == expected
