"""Acceptance suite: one test per criterion, one PASS/FAIL line each.

Run with `pytest tests/test_acceptance.py -s` to see the lines as they
complete.  Criteria 1-8 exercise the analysis, repair, CRDT, and
simulation stack end to end at their stated budgets; nothing here is
tunable after the fact.
"""

from __future__ import annotations

import itertools
import json
import time
from contextlib import contextmanager

import pytest

from ipa.cli import main
from ipa.conflicts import ConflictDetector
from ipa.crdt import AwSet, Dot, RwSet, VectorClock
from ipa.logic import Universe
from ipa.repair import (
    BUILT_IN_POLICIES,
    filter_safe_candidates,
    generate_candidates,
)
from ipa.sim import execute_schedule, fuzz_schedule

import oracle
from conftest import SPEC_NAMES, spec_path
from test_crdt import check_merge_laws


@contextmanager
def criterion(number: int, title: str):
    started = time.time()
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {number} [{title}]: FAIL ({time.time() - started:.1f}s)")
        raise
    print(f"ACCEPTANCE {number} [{title}]: PASS ({time.time() - started:.1f}s)")


# -- 1. conflict detection ---------------------------------------------------------


def test_criterion_1_conflict_detection(tmp_path, monkeypatch):
    with criterion(1, "conflict detection on tournament"):
        monkeypatch.chdir(tmp_path)
        started = time.time()
        code = main(["analyze", str(spec_path("tournament"))])
        elapsed = time.time() - started
        assert code == 1
        report = json.loads((tmp_path / "conflicts.json").read_text())
        pairs = {
            frozenset((c["opA"]["name"], c["opB"]["name"]))
            for c in report["conflicts"]
        }
        assert pairs == {
            frozenset({"enroll", "remTournament"}),
            frozenset({"enroll", "remPlayer"}),
        }
        compensation = report["compensationRequired"]
        assert len(compensation) == 1
        assert "nrPlayers" in compensation[0]["invariant"]
        assert elapsed < 5.0, f"analyze took {elapsed:.2f}s, budget is 5s"


# -- 2. repair candidates -----------------------------------------------------------


def test_criterion_2_repair_candidates(tournament, tournament_detector):
    with criterion(2, "repair candidates for (enroll, remTournament)"):
        result = tournament_detector.find_conflicting_pairs()
        report = next(
            r
            for r in result.reports
            if set(r.pair_names()) == {"enroll", "remTournament"}
        )
        raw = generate_candidates(tournament, report)
        safe = filter_safe_candidates(tournament, tournament_detector, raw)
        described = {
            (
                c.modified_op,
                tuple((e.pred, e.args, e.action) for e in c.added_effects),
                tuple((r.pred, r.policy) for r in c.required_rules),
            )
            for c in safe
        }
        assert described == {
            (
                "enroll",
                (("tournament", ("t",), "setTrue"),),
                (("tournament", "add-wins"),),
            ),
            (
                "remTournament",
                (("enrolled", ("*", "t"), "setFalse"),),
                (("enrolled", "rem-wins"),),
            ),
        }
        # Minimality: no kept candidate's additions contain another's.
        for cand, kept in itertools.product(raw, safe):
            if cand.modified_side == kept.modified_side and set(
                cand.added_effects
            ) > set(kept.added_effects):
                assert cand not in safe


# -- 3. repair fixpoint ---------------------------------------------------------------


def test_criterion_3_repair_fixpoint_all_policies(tmp_path, monkeypatch):
    with criterion(3, "repair fixpoint under every policy"):
        monkeypatch.chdir(tmp_path)
        for name in SPEC_NAMES:
            for policy in BUILT_IN_POLICIES:
                out = tmp_path / f"{name}-{policy}"
                out.mkdir()
                code = main([
                    "repair", str(spec_path(name)),
                    "--policy", policy, "--output-dir", str(out),
                ])
                assert code == 0, (name, policy)
                session = json.loads((out / "session.json").read_text())
                assert session["complete"] is True
                assert session["rounds"] <= session["roundLimit"]
                repaired = out / f"{name}.repaired.ipa"
                assert main(["analyze", str(repaired), "--output-dir", str(out)]) == 0, (
                    name,
                    policy,
                )


# -- 4. confluence validated by schedule fuzzing ----------------------------------------


def test_criterion_4_validate_repaired_specs(tmp_path, monkeypatch):
    with criterion(4, "1000-schedule validation, repaired vs original"):
        monkeypatch.chdir(tmp_path)
        started = time.time()
        repaired_paths = {}
        for name in SPEC_NAMES:
            out = tmp_path / name
            out.mkdir()
            assert main(["repair", str(spec_path(name)), "--output-dir", str(out)]) == 0
            repaired_paths[name] = out / f"{name}.repaired.ipa"

        for name in SPEC_NAMES:
            out = tmp_path / name
            code = main([
                "validate", str(repaired_paths[name]),
                "--seeds", "0..999", "--output-dir", str(out),
            ])
            payload = json.loads((out / "validation.json").read_text())
            assert payload["totalViolations"] == 0, name
            assert payload["divergentSeeds"] == [], name
            assert code == 0, name

        for name in ("tournament", "twitter"):
            out = tmp_path / f"orig-{name}"
            out.mkdir()
            code = main([
                "validate", str(spec_path(name)),
                "--seeds", "0..999", "--output-dir", str(out),
            ])
            payload = json.loads((out / "validation.json").read_text())
            assert payload["totalViolations"] > 0, name
            assert code == 1, name

        elapsed = time.time() - started
        assert elapsed < 120.0, f"validation sweep took {elapsed:.1f}s, budget is 120s"


# -- 5. CRDT property suite --------------------------------------------------------------


def test_criterion_5_crdt_properties():
    with criterion(5, "CRDT merge laws and policy semantics"):
        for kind in ("aw-set", "rw-set", "pn-counter", "compensation-set"):
            assert check_merge_laws(kind, 10_000) == 10_000

        # add || remove converges to present under add-wins...
        left, right = AwSet("s"), AwSet("s")
        left.add(("e",), Dot("r1", 1))
        right.merge(left)
        right.remove(("e",), right.observed_dots(("e",)))
        left.add(("e",), Dot("r1", 2))
        left.merge(right)
        right.merge(left)
        assert left.contains(("e",)) and right.contains(("e",))

        # ...and to absent under rem-wins.
        rw_left, rw_right = RwSet("s"), RwSet("s")
        rw_left.add(("e",), Dot("r1", 1), VectorClock())
        rw_right.remove_matching(("e",), Dot("r2", 1), VectorClock())
        rw_left.merge(rw_right)
        rw_right.merge(rw_left)
        assert not rw_left.contains(("e",)) and not rw_right.contains(("e",))

        # Wildcard removes: exhaustive delivery-order enumeration for every
        # 4-operation case over the fixed op vocabulary.
        ops = {
            "add_a": ("add", ("a", "t1"), Dot("r1", 1)),
            "add_b": ("add", ("b", "t1"), Dot("r2", 1)),
            "add_a2": ("add", ("a", "t2"), Dot("r3", 1)),
            "rem_exact": ("rem", ("a", "t1"), Dot("r4", 1)),
            "rem_t1": ("rem", (None, "t1"), Dot("r5", 1)),
            "rem_all": ("rem", (None, None), Dot("r6", 1)),
        }
        cases = 0
        for combo in itertools.combinations(sorted(ops), 4):
            baseline = None
            for order in itertools.permutations(combo):
                s = RwSet("x")
                for key in order:
                    kind, arg, dot = ops[key]
                    if kind == "add":
                        s.add(arg, dot, VectorClock())
                    else:
                        s.remove_matching(arg, dot, VectorClock())
                state = (json.dumps(s.to_json(), sort_keys=True), tuple(sorted(s.value())))
                if baseline is None:
                    baseline = state
                assert state == baseline, (combo, order)
            cases += 1
        assert cases == 15


# -- 6. oracle equivalence ------------------------------------------------------------------


ORACLE_SCOPES = {
    # (per-sort sizes, counter window); universes chosen so the boolean
    # grounding stays at or below 12 atoms.
    "tournament": ({"Player": 2, "Tournament": 2}, 6),
    "twitter": ({"User": 2, "Tweet": 1}, 2),
    "tickets": ({"Event": 2, "Ticket": 2}, 4),
    "tpcc": ({"Item": 2, "Order": 2}, 2),
    "tpcw": ({"Item": 2, "Order": 1}, 2),
}


def test_criterion_6_oracle_equivalence(specs):
    with criterion(6, "detector verdicts equal exhaustive enumeration"):
        disagreements = []
        for name, (sizes, window) in ORACLE_SCOPES.items():
            spec = specs[name]
            universe = Universe(
                per_sort=tuple(
                    (s.name, tuple(f"{s.name.lower()}{i+1}" for i in range(sizes[s.name])))
                    for s in spec.sorts
                )
            )
            booleans = sum(
                1 for p in spec.boolean_predicates()
                for _ in itertools.product(*[universe.constants(s) for s in p.arg_sorts])
            )
            assert booleans <= 12, (name, booleans)
            detector = ConflictDetector(spec, universe, numeric_window=window)
            consts = {sort: list(c) for sort, c in universe.per_sort}
            ops = spec.operations
            for i, op_a in enumerate(ops):
                for op_b in ops[i:]:
                    ours = detector.check_pair(op_a, op_b).report is not None
                    theirs = oracle.boolean_conflict(spec, consts, op_a, op_b, window)
                    if ours != theirs:
                        disagreements.append((name, op_a.name, op_b.name, ours, theirs))
        assert disagreements == []


# -- 7. compensations at runtime ----------------------------------------------------------------


def test_criterion_7_ticket_compensations(repaired_specs):
    with criterion(7, "oversell compensations: bounded, identical, idempotent"):
        repaired, _, _ = repaired_specs["tickets"]
        # A deeper ticket pool makes overselling schedules common.
        universe = Universe(
            per_sort=(
                ("Event", ("event1", "event2")),
                ("Ticket", tuple(f"ticket{i}" for i in range(1, 7))),
            )
        )
        runs_with_compensations = 0
        for seed in range(60):
            schedule, _ = fuzz_schedule(repaired, seed, universe, ops_count=30)
            sim = execute_schedule(repaired, schedule, universe)
            assert not sim.divergent(), seed
            assert sim.violations == [], seed

            for replica in sim.replicas.values():
                sold = replica.sets["soldFor"].value()
                for event in ("event1", "event2"):
                    count = sum(1 for e in sold if e[1] == event)
                    assert count <= 3, (seed, replica.id, event, count)

            cancellations = {
                rid: tuple(sorted(r.sets["reimbursed"].value()))
                for rid, r in sim.replicas.items()
            }
            assert len(set(cancellations.values())) == 1, (seed, cancellations)

            comps = [r for r in sim.records if r.kind == "compensation"]
            if comps:
                runs_with_compensations += 1
                before = {
                    rid: json.dumps(r.canonical_state(), sort_keys=True)
                    for rid, r in sim.replicas.items()
                }
                for record in comps:
                    for rid in sim.replicas:
                        if rid != record.origin:
                            sim.deliver(record, rid)
                after = {
                    rid: json.dumps(r.canonical_state(), sort_keys=True)
                    for rid, r in sim.replicas.items()
                }
                assert before == after, seed
        assert runs_with_compensations > 0, "no overselling schedule exercised the path"


# -- 8. taxonomy reproduction ----------------------------------------------------------------------


EXPECTED_OUTCOME = {
    "sequentialIdentifier": "flagged",
    "uniqueIdentifier": "safe",
    "numericBound": "compensation",
    "aggregationConstraint": "compensation",
    "aggregationInclusion": "safe",
    "referentialIntegrity": "repaired",
    "disjunction": "repaired",
}


def test_criterion_8_taxonomy_table(repaired_specs):
    with criterion(8, "invariant classes map to their handling outcomes"):
        seen_tags = set()
        for name, (_, session, engine) in repaired_specs.items():
            outcomes = engine.clause_outcomes()
            for idx, inv in enumerate(session.spec.invariants):
                seen_tags.add(inv.class_tag)
                assert outcomes[idx] == EXPECTED_OUTCOME[inv.class_tag], (
                    name,
                    idx,
                    inv.class_tag,
                    outcomes[idx],
                )
        # Every taxonomy row must actually be exercised by the bundled corpus.
        assert seen_tags == set(EXPECTED_OUTCOME)
