"""Deterministic multi-replica simulator with causal delivery.

Operations run against CRDT-backed replica state: boolean predicates are
add-wins or rem-wins sets of argument tuples (per the spec's convergence
rules), counters are PN-counters.  An operation's recorded mutations form
one atomic, causally tagged update; delivery replays the recorded
mutations, never the operation code.

Compensations execute on read: after every applied update the affected
bounded groups are re-read, and any overflow (or counter deficit) commits
a deterministic corrective update at that replica.  Invariant checks run
after the compensation pass, so observed states are the enforced ones.

Violations are counted on edges: an event is charged once for each clause
instance it newly falsifies at that replica.
"""

from __future__ import annotations

import itertools
import json
import random
from dataclasses import dataclass, field

from .crdt import AwSet, Dot, PnCounter, RwSet, VectorClock, trim_excess
from .logic import GroundAtom, Grounding, Universe, expand_pattern
from .model import (
    ADD_WINS,
    DECREMENT,
    INCREMENT,
    SET_FALSE,
    SET_TRUE,
    WILDCARD,
    AppSpec,
    OperationSpec,
    PreAtom,
    PreCmp,
)

DELIVERY_PROBABILITY = 0.5
ENABLED_ARG_BIAS = 0.8


class CausalityError(Exception):
    pass


class ReplayMismatch(Exception):
    pass


@dataclass(frozen=True)
class Mutation:
    """One recorded CRDT change; replayed verbatim at remote replicas."""

    kind: str  # aw_add | aw_touch | aw_remove | rw_add | rw_remove | counter
    pred: str
    element: tuple[str, ...] = ()
    observed: tuple[Dot, ...] = ()
    pattern: tuple[str | None, ...] = ()
    delta: int = 0
    dot: Dot = Dot("", 0)

    def to_json(self) -> dict:
        out: dict = {"kind": self.kind, "pred": self.pred, "dot": self.dot.to_json()}
        if self.kind == "counter":
            out["args"] = list(self.element)
            out["delta"] = self.delta
        elif self.kind == "rw_remove":
            out["pattern"] = [p if p is not None else "*" for p in self.pattern]
        else:
            out["element"] = list(self.element)
            if self.kind == "aw_remove":
                out["observed"] = sorted(d.to_json() for d in self.observed)
        return out


@dataclass(frozen=True)
class UpdateRecord:
    origin: str
    first_seq: int
    context: VectorClock
    source_op: str
    args: tuple[str, ...]
    mutations: tuple[Mutation, ...]
    kind: str = "op"  # op | compensation

    @property
    def key(self) -> tuple[str, int]:
        return (self.origin, self.first_seq)

    @property
    def last_seq(self) -> int:
        return self.first_seq + max(len(self.mutations), 1) - 1

    def to_json(self) -> dict:
        return {
            "origin": self.origin,
            "seq": self.first_seq,
            "context": self.context.to_json(),
            "op": self.source_op,
            "args": list(self.args),
            "kind": self.kind,
            "mutations": [m.to_json() for m in self.mutations],
        }


@dataclass
class ViolationEvent:
    replica: str
    step: int
    event_kind: str  # submit | deliver | compensation
    instance: str
    clause_index: int

    def to_json(self) -> dict:
        return {
            "replica": self.replica,
            "step": self.step,
            "eventKind": self.event_kind,
            "instance": self.instance,
            "clause": self.clause_index,
        }


@dataclass
class PreconditionFailure:
    replica: str
    op: str
    args: tuple[str, ...]


@dataclass(frozen=True)
class ScheduleEvent:
    kind: str  # submit | deliver
    replica: str
    op: str = ""
    args: tuple[str, ...] = ()
    record_index: int = -1

    def to_json(self) -> dict:
        if self.kind == "submit":
            return {"submit": {"replica": self.replica, "op": self.op, "args": list(self.args)}}
        return {"deliver": {"replica": self.replica, "record": self.record_index}}


@dataclass
class Schedule:
    seed: int
    events: list[ScheduleEvent] = field(default_factory=list)

    def to_json(self) -> dict:
        return {"seed": self.seed, "events": [e.to_json() for e in self.events]}


@dataclass
class SimReport:
    seed: int
    violations: list[ViolationEvent]
    precondition_failures: list[PreconditionFailure]
    divergence: bool
    steps: int
    final_state: dict

    @property
    def violation_count(self) -> int:
        return len(self.violations)

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "violationCount": self.violation_count,
            "violations": [v.to_json() for v in self.violations],
            "preconditionFailures": len(self.precondition_failures),
            "divergence": self.divergence,
            "steps": self.steps,
            "finalState": self.final_state,
        }


# ---------------------------------------------------------------------------
# Compensation wiring derived from the spec's compensation operations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrimRule:
    """Keep a relationship group within its bound by removing the
    lexicographically greatest members, decrementing the tracking counter,
    and marking removed elements."""

    counter: str
    key_params: tuple[str, ...]  # compensation parameter names, in counter order
    bound: int
    rel_pred: str
    rel_pattern: tuple[str | None, ...]  # parameter name or None (trimmed position)
    marker_pred: str | None
    comp_name: str


@dataclass(frozen=True)
class ReplenishRule:
    """Raise a counter back to its floor when a read sees it below."""

    counter: str
    key_params: tuple[str, ...]
    floor: int
    comp_name: str


def _group_key(rule: TrimRule, element: tuple[str, ...]) -> tuple[str, ...]:
    """Counter arguments identifying the bounded group an element belongs to."""
    binding = {p: v for p, v in zip(rule.rel_pattern, element) if p is not None}
    return tuple(binding[p] for p in rule.key_params)


def compensation_rules(spec: AppSpec) -> list[TrimRule | ReplenishRule]:
    rules: list[TrimRule | ReplenishRule] = []
    for comp in spec.compensations:
        guard = next((c for c in comp.precondition if isinstance(c, PreCmp)), None)
        if guard is None:
            continue
        if guard.op == ">":
            rel = next(
                (e for e in comp.effects if e.action == SET_FALSE), None
            )
            if rel is None:
                continue
            marker = next(
                (e.pred for e in comp.effects if e.action == SET_TRUE), None
            )
            rules.append(
                TrimRule(
                    counter=guard.pred,
                    key_params=guard.args,
                    bound=guard.value,
                    rel_pred=rel.pred,
                    rel_pattern=tuple(None if a == WILDCARD else a for a in rel.args),
                    marker_pred=marker,
                    comp_name=comp.name,
                )
            )
        elif guard.op == "<":
            rules.append(
                ReplenishRule(
                    counter=guard.pred,
                    key_params=guard.args,
                    floor=guard.value,
                    comp_name=comp.name,
                )
            )
    return rules


# ---------------------------------------------------------------------------
# Replica
# ---------------------------------------------------------------------------


class Replica:
    def __init__(self, replica_id: str, spec: AppSpec, universe: Universe):
        self.id = replica_id
        self.spec = spec
        self.universe = universe
        self.clock = VectorClock()
        self.sets: dict[str, AwSet | RwSet] = {}
        rules = {r.pred: r.policy for r in spec.convergence_rules}
        for p in spec.boolean_predicates():
            if rules.get(p.name) == ADD_WINS:
                self.sets[p.name] = AwSet(p.name)
            else:
                self.sets[p.name] = RwSet(p.name)
        self.counters: dict[GroundAtom, PnCounter] = {}
        self.delivered: set[tuple[str, int]] = set()
        self.log: list[UpdateRecord] = []
        # Materialized truth assignment used by precondition and invariant
        # evaluation; updated for the atoms each record touches.
        self.view: dict[GroundAtom, object] = {}
        booleans, numerics = _all_atoms(spec, universe)
        for a in booleans:
            self.view[a] = False
        for a in numerics:
            self.view[a] = 0

    def counter(self, atom: GroundAtom) -> PnCounter:
        c = self.counters.get(atom)
        if c is None:
            c = PnCounter(f"{atom[0]}({','.join(atom[1])})")
            self.counters[atom] = c
        return c

    # -- mutation application ---------------------------------------------

    def apply_record(self, record: UpdateRecord) -> set[GroundAtom]:
        """Apply recorded mutations; returns the ground atoms whose visible
        value may have changed."""
        touched: set[GroundAtom] = set()
        for m in record.mutations:
            if m.kind == "counter":
                self.counter((m.pred, m.element)).apply(record.origin, m.delta)
                touched.add((m.pred, m.element))
                continue
            obj = self.sets[m.pred]
            if m.kind == "aw_add":
                assert isinstance(obj, AwSet)
                obj.add(m.element, m.dot)
                touched.add((m.pred, m.element))
            elif m.kind == "aw_touch":
                assert isinstance(obj, AwSet)
                obj.touch(m.element, m.dot)
                touched.add((m.pred, m.element))
            elif m.kind == "aw_remove":
                assert isinstance(obj, AwSet)
                obj.remove(m.element, set(m.observed))
                touched.add((m.pred, m.element))
            elif m.kind == "rw_add":
                assert isinstance(obj, RwSet)
                obj.add(m.element, m.dot, record.context)
                touched.add((m.pred, m.element))
            elif m.kind == "rw_remove":
                assert isinstance(obj, RwSet)
                obj.remove_matching(m.pattern, m.dot, record.context)
                pat = tuple(p if p is not None else WILDCARD for p in m.pattern)
                touched.update(expand_pattern(self.spec, self.universe, m.pred, pat))
            else:
                raise ValueError(f"unknown mutation kind {m.kind}")
        self.clock.advance(Dot(record.origin, record.last_seq))
        self.clock.merge(record.context)
        self.delivered.add(record.key)
        self.log.append(record)
        self._refresh(touched)
        return touched

    def _refresh(self, atoms: set[GroundAtom]) -> None:
        for atom in atoms:
            pred, args = atom
            obj = self.sets.get(pred)
            if obj is not None:
                self.view[atom] = obj.contains(args)
            else:
                self.view[atom] = self.counter(atom).value()

    # -- reads ----------------------------------------------------------------

    def pre_satisfied(self, op: OperationSpec, binding: dict[str, str]) -> bool:
        for c in op.precondition:
            if isinstance(c, PreAtom):
                pattern = tuple(binding.get(a, a) for a in c.args)
                atoms = expand_pattern(self.spec, self.universe, c.pred, pattern)
                want = not c.negated
                if c.negated:
                    if any(self.view[a] for a in atoms):
                        return False
                elif not all(self.view[a] for a in atoms):
                    return False
            else:
                value = int(self.view[(c.pred, tuple(binding.get(a, a) for a in c.args))])
                ok = {
                    "<=": value <= c.value,
                    ">=": value >= c.value,
                    "<": value < c.value,
                    ">": value > c.value,
                    "=": value == c.value,
                }[c.op]
                if not ok:
                    return False
        return True

    def canonical_state(self) -> dict:
        return {
            "sets": {name: obj.to_json() for name, obj in sorted(self.sets.items())},
            "counters": {
                f"{p}({','.join(a)})": c.to_json()
                for (p, a), c in sorted(self.counters.items())
            },
        }


def _all_atoms(spec: AppSpec, universe: Universe):
    from .logic import ground_atoms

    return ground_atoms(spec, universe)


# ---------------------------------------------------------------------------
# Simulator
# ---------------------------------------------------------------------------


class Simulator:
    def __init__(
        self,
        spec: AppSpec,
        universe: Universe | None = None,
        replica_ids: tuple[str, ...] = ("r1", "r2", "r3"),
        trace: list | None = None,
    ):
        self.spec = spec
        self.universe = universe or Universe.uniform(spec)
        self.replicas = {rid: Replica(rid, spec, self.universe) for rid in replica_ids}
        self.records: list[UpdateRecord] = []
        self.grounding = Grounding.build(spec, self.universe)
        self.comp_rules = compensation_rules(spec)
        self.violations: list[ViolationEvent] = []
        self.precondition_failures: list[PreconditionFailure] = []
        self.step = 0
        self.trace = trace
        # Counters managed by a trim compensation are observed through the
        # group they bound: reads (preconditions and invariant checks) see
        # the membership count of the relationship, which the on-read trim
        # keeps within the bound.  The raw counter keeps its role as the
        # replicated proxy but may drift when concurrent updates collapse
        # onto one element.
        self._trimmed_counters: dict[str, TrimRule] = {
            r.counter: r for r in self.comp_rules if isinstance(r, TrimRule)
        }
        # Pairs flagged unsolvable need external coordination; the schedule
        # generator honors that by never running them concurrently.
        self.flagged_partners: dict[str, set[str]] = {}
        for a, b in spec.flagged_pairs:
            self.flagged_partners.setdefault(a, set()).add(b)
            self.flagged_partners.setdefault(b, set()).add(a)
        # instance truth per replica, for edge-counted violations
        self._instance_truth: dict[str, list[bool]] = {
            rid: [True] * len(self.grounding.instances) for rid in replica_ids
        }
        self._instances_by_atom = self.grounding.by_atom

    # -- operation submission ---------------------------------------------

    def submit(self, replica_id: str, op_name: str, args: tuple[str, ...]):
        """Execute an operation at its origin replica.

        Returns the UpdateRecord, or None on a precondition failure (a
        counted, side-effect-free outcome)."""
        replica = self.replicas[replica_id]
        op = self.spec.operation(op_name)
        if op is None:
            raise ValueError(f"unknown operation '{op_name}'")
        binding = dict(zip(op.param_names(), args))
        if not replica.pre_satisfied(op, binding):
            self.precondition_failures.append(PreconditionFailure(replica_id, op_name, args))
            self._trace({"event": "preconditionFailure", "replica": replica_id, "op": op_name, "args": list(args)})
            self.step += 1
            return None
        mutations = self._mutations_for(replica, op, binding)
        record = self._commit(replica, op_name, args, mutations, kind="op")
        self._after_event(replica, record, "submit")
        return record

    def _mutations_for(
        self, replica: Replica, op: OperationSpec, binding: dict[str, str]
    ) -> list[Mutation]:
        mutations: list[Mutation] = []
        seq = replica.clock.entries.get(replica.id, 0)
        for effect in op.effects:
            args = tuple(binding.get(a, a) for a in effect.args)
            if effect.action in (INCREMENT, DECREMENT):
                delta = effect.amount if effect.action == INCREMENT else -effect.amount
                for _, ground in expand_pattern(self.spec, self.universe, effect.pred, args):
                    seq += 1
                    mutations.append(
                        Mutation(
                            "counter", effect.pred, element=ground, delta=delta,
                            dot=Dot(replica.id, seq),
                        )
                    )
                continue
            obj = replica.sets[effect.pred]
            if effect.action == SET_TRUE:
                for _, ground in expand_pattern(self.spec, self.universe, effect.pred, args):
                    seq += 1
                    if isinstance(obj, AwSet):
                        kind = "aw_touch" if effect.added_by_repair else "aw_add"
                    else:
                        kind = "rw_add"
                    mutations.append(
                        Mutation(kind, effect.pred, element=ground, dot=Dot(replica.id, seq))
                    )
            else:  # SET_FALSE
                if isinstance(obj, RwSet):
                    seq += 1
                    pattern = tuple(None if a == WILDCARD else a for a in args)
                    mutations.append(
                        Mutation("rw_remove", effect.pred, pattern=pattern, dot=Dot(replica.id, seq))
                    )
                else:
                    # Observed-remove per matching member at the origin.
                    for _, ground in expand_pattern(self.spec, self.universe, effect.pred, args):
                        observed = obj.observed_dots(ground)
                        if not observed and WILDCARD in args:
                            continue
                        seq += 1
                        mutations.append(
                            Mutation(
                                "aw_remove", effect.pred, element=ground,
                                observed=tuple(sorted(observed)), dot=Dot(replica.id, seq),
                            )
                        )
        return mutations

    def _commit(
        self, replica: Replica, op_name: str, args: tuple[str, ...],
        mutations: list[Mutation], kind: str,
    ) -> UpdateRecord:
        first_seq = replica.clock.entries.get(replica.id, 0) + 1
        record = UpdateRecord(
            origin=replica.id,
            first_seq=first_seq,
            context=replica.clock.copy(),
            source_op=op_name,
            args=args,
            mutations=tuple(mutations),
            kind=kind,
        )
        self.records.append(record)
        replica.apply_record(record)
        return record

    # -- delivery ---------------------------------------------------------------

    def deliver(self, record: UpdateRecord, replica_id: str) -> bool:
        """Apply a remote record; idempotent for already-delivered records."""
        replica = self.replicas[replica_id]
        if record.key in replica.delivered:
            self.step += 1
            return False
        if not replica.clock.dominates(record.context):
            raise CausalityError(
                f"record {record.key} not deliverable at {replica_id}"
            )
        replica.apply_record(record)
        self._after_event(replica, record, "deliver")
        return True

    def deliverable(self, replica_id: str, record: UpdateRecord) -> bool:
        replica = self.replicas[replica_id]
        return record.key not in replica.delivered and replica.clock.dominates(record.context)

    def pending(self) -> list[tuple[int, str]]:
        """(record index, replica) pairs that can be delivered now."""
        out = []
        for idx, record in enumerate(self.records):
            for rid in self.replicas:
                if rid == record.origin:
                    continue
                if self.deliverable(rid, record):
                    out.append((idx, rid))
        return out

    # -- compensations and invariant checking ------------------------------------

    def _after_event(self, replica: Replica, record: UpdateRecord, event_kind: str) -> None:
        self._trace({"event": event_kind, "replica": replica.id, "record": record.to_json()})
        touched = set()
        for m in record.mutations:
            if m.kind == "rw_remove":
                pat = tuple(p if p is not None else WILDCARD for p in m.pattern)
                touched.update(expand_pattern(self.spec, self.universe, m.pred, pat))
            else:
                touched.add((m.pred, m.element))
        touched |= self._observe_bounded_groups(replica, touched)
        comp_touched = self.run_compensations(replica)
        comp_touched |= self._observe_bounded_groups(replica, comp_touched)
        self._check_invariants(replica, touched | comp_touched, event_kind)
        self.step += 1

    def _observe_bounded_groups(
        self, replica: Replica, touched: set[GroundAtom]
    ) -> set[GroundAtom]:
        """Re-derive the observed value of trim-guarded counters from their
        relationship groups.  Returns the counter atoms that changed."""
        changed: set[GroundAtom] = set()
        for rule in self._trimmed_counters.values():
            keys: set[tuple[str, ...]] = set()
            for pred, args in touched:
                if pred == rule.rel_pred:
                    keys.add(_group_key(rule, args))
                elif pred == rule.counter:
                    keys.add(args)
            if not keys:
                continue
            members = replica.sets[rule.rel_pred].value()
            for key in keys:
                size = sum(1 for e in members if _group_key(rule, e) == key)
                atom = (rule.counter, key)
                if replica.view.get(atom) != size:
                    replica.view[atom] = size
                    changed.add(atom)
        return changed

    def run_compensations(self, replica: Replica) -> set[GroundAtom]:
        """Read every bounded group at this replica and commit corrective
        updates until all constraints hold (the on-read enforcement)."""
        touched: set[GroundAtom] = set()
        for _ in range(8):
            record = self._compensation_round(replica)
            if record is None:
                return touched
            for m in record.mutations:
                touched.add((m.pred, m.element))
        raise RuntimeError("compensations did not quiesce")

    def _compensation_round(self, replica: Replica) -> UpdateRecord | None:
        for rule in self.comp_rules:
            if isinstance(rule, TrimRule):
                record = self._apply_trim(replica, rule)
            else:
                record = self._apply_replenish(replica, rule)
            if record is not None:
                return record
        return None

    def _key_bindings(self, params: tuple[tuple[str, str], ...]):
        domains = [self.universe.constants(s) for _, s in params]
        names = [n for n, _ in params]
        for combo in itertools.product(*domains):
            yield dict(zip(names, combo))

    def _apply_trim(self, replica: Replica, rule: TrimRule) -> UpdateRecord | None:
        comp = next(c for c in self.spec.compensations if c.name == rule.comp_name)
        obj = replica.sets[rule.rel_pred]
        for binding in self._key_bindings(comp.params):
            pattern = tuple(
                None if p is None else binding[p] for p in rule.rel_pattern
            )
            members = sorted(
                e for e in obj.value()
                if all(p is None or p == v for p, v in zip(pattern, e))
            )
            _, trimmed = trim_excess(set(members), rule.bound)
            if not trimmed:
                continue
            mutations: list[Mutation] = []
            seq = replica.clock.entries.get(replica.id, 0)
            counter_args = tuple(binding[p] for p in rule.key_params)
            for element in trimmed:
                seq += 1
                if isinstance(obj, RwSet):
                    mutations.append(
                        Mutation("rw_remove", rule.rel_pred, pattern=element, dot=Dot(replica.id, seq))
                    )
                else:
                    mutations.append(
                        Mutation(
                            "aw_remove", rule.rel_pred, element=element,
                            observed=tuple(sorted(obj.observed_dots(element))),
                            dot=Dot(replica.id, seq),
                        )
                    )
                seq += 1
                mutations.append(
                    Mutation("counter", rule.counter, element=counter_args, delta=-1, dot=Dot(replica.id, seq))
                )
                if rule.marker_pred is not None:
                    marker_args = tuple(
                        v for p, v in zip(rule.rel_pattern, element) if p is None
                    )
                    seq += 1
                    marker_obj = replica.sets[rule.marker_pred]
                    kind = "aw_add" if isinstance(marker_obj, AwSet) else "rw_add"
                    mutations.append(
                        Mutation(kind, rule.marker_pred, element=marker_args, dot=Dot(replica.id, seq))
                    )
            args = tuple(binding[n] for n, _ in comp.params)
            record = self._commit(replica, rule.comp_name, args, mutations, kind="compensation")
            self._trace({"event": "compensation", "replica": replica.id, "record": record.to_json()})
            return record
        return None

    def _apply_replenish(self, replica: Replica, rule: ReplenishRule) -> UpdateRecord | None:
        comp = next(c for c in self.spec.compensations if c.name == rule.comp_name)
        for binding in self._key_bindings(comp.params):
            counter_args = tuple(binding[p] for p in rule.key_params)
            value = int(replica.view[(rule.counter, counter_args)])
            if value >= rule.floor:
                continue
            deficit = rule.floor - value
            seq = replica.clock.entries.get(replica.id, 0) + 1
            mutations = [
                Mutation("counter", rule.counter, element=counter_args, delta=deficit, dot=Dot(replica.id, seq))
            ]
            args = tuple(binding[n] for n, _ in comp.params)
            record = self._commit(replica, rule.comp_name, args, mutations, kind="compensation")
            self._trace({"event": "compensation", "replica": replica.id, "record": record.to_json()})
            return record
        return None

    def check_compensations(
        self, replica_id: str, object_key: str | None = None
    ) -> UpdateRecord | None:
        """Explicit read path: run one compensation round at a replica.

        object_key narrows the read to the rules guarding that predicate
        or counter; None reads every bounded object."""
        replica = self.replicas[replica_id]
        rules = self.comp_rules
        if object_key is not None:
            rules = [
                r
                for r in rules
                if object_key in (r.counter, getattr(r, "rel_pred", None))
            ]
        record = None
        for rule in rules:
            if isinstance(rule, TrimRule):
                record = self._apply_trim(replica, rule)
            else:
                record = self._apply_replenish(replica, rule)
            if record is not None:
                break
        if record is not None:
            touched = {(m.pred, m.element) for m in record.mutations}
            touched |= self._observe_bounded_groups(replica, touched)
            self._check_invariants(replica, touched, "compensation")
            self.step += 1
        return record

    def _check_invariants(self, replica: Replica, touched: set[GroundAtom], event_kind: str) -> None:
        truth = self._instance_truth[replica.id]
        seen: set[int] = set()
        for atom in touched:
            for idx in self._instances_by_atom.get(atom, ()):
                if idx in seen:
                    continue
                seen.add(idx)
                inst = self.grounding.instances[idx]
                now = bool(inst.holds_in(replica.view))
                if truth[idx] and not now:
                    self.violations.append(
                        ViolationEvent(
                            replica=replica.id,
                            step=self.step,
                            event_kind=event_kind,
                            instance=inst.describe(),
                            clause_index=inst.clause_index,
                        )
                    )
                    self._trace(
                        {"event": "violation", "replica": replica.id, "instance": inst.describe()}
                    )
                truth[idx] = now

    def _trace(self, entry: dict) -> None:
        if self.trace is not None:
            entry["step"] = self.step
            self.trace.append(entry)

    # -- convergence -----------------------------------------------------------

    def flush(self, schedule: Schedule | None = None) -> None:
        """Deliver everything everywhere (compensations included) until the
        system is quiescent."""
        for _ in range(64):
            progress = False
            idx = 0
            while idx < len(self.records):
                record = self.records[idx]
                for rid in sorted(self.replicas):
                    if rid != record.origin and self.deliverable(rid, record):
                        self.deliver(record, rid)
                        if schedule is not None:
                            schedule.events.append(
                                ScheduleEvent("deliver", rid, record_index=idx)
                            )
                        progress = True
                idx += 1
            if not progress:
                return
        raise RuntimeError("flush did not quiesce")

    def divergent(self) -> bool:
        states = [
            json.dumps(r.canonical_state(), sort_keys=True)
            for r in self.replicas.values()
        ]
        return len(set(states)) > 1

    def report(self, seed: int = 0) -> SimReport:
        return SimReport(
            seed=seed,
            violations=list(self.violations),
            precondition_failures=list(self.precondition_failures),
            divergence=self.divergent(),
            steps=self.step,
            final_state={rid: r.canonical_state() for rid, r in sorted(self.replicas.items())},
        )


# ---------------------------------------------------------------------------
# Schedules
# ---------------------------------------------------------------------------


def execute_schedule(
    spec: AppSpec,
    schedule: Schedule,
    universe: Universe | None = None,
    replica_ids: tuple[str, ...] = ("r1", "r2", "r3"),
    trace: list | None = None,
) -> Simulator:
    """Replay a recorded schedule event for event, then complete delivery;
    returns the live simulator for further inspection."""
    sim = Simulator(spec, universe, replica_ids, trace=trace)
    for event in schedule.events:
        if event.kind == "submit":
            sim.submit(event.replica, event.op, event.args)
        else:
            if event.record_index >= len(sim.records):
                raise ReplayMismatch(
                    f"schedule references record {event.record_index} before it exists"
                )
            sim.deliver(sim.records[event.record_index], event.replica)
    sim.flush()
    return sim


def run_schedule(
    spec: AppSpec,
    schedule: Schedule,
    universe: Universe | None = None,
    replica_ids: tuple[str, ...] = ("r1", "r2", "r3"),
    trace: list | None = None,
) -> SimReport:
    """Replay a recorded schedule.

    Deterministic: identical (spec, schedule) yields an identical report."""
    sim = execute_schedule(spec, schedule, universe, replica_ids, trace=trace)
    return sim.report(schedule.seed)


def _coordinated(sim: Simulator, replica_id: str, op_name: str) -> bool:
    """May op_name run at this replica without violating the coordination
    a flagged pair demands?  True when every record of a flagged partner
    operation is already visible here (no concurrent execution)."""
    partners = sim.flagged_partners.get(op_name)
    if not partners:
        return True
    delivered = sim.replicas[replica_id].delivered
    return all(
        r.key in delivered for r in sim.records if r.source_op in partners
    )


def _enabled_submissions(sim: Simulator, replica_id: str) -> list[tuple[str, tuple[str, ...]]]:
    replica = sim.replicas[replica_id]
    out: list[tuple[str, tuple[str, ...]]] = []
    for op in sim.spec.operations:
        if not _coordinated(sim, replica_id, op.name):
            continue
        domains = [sim.universe.constants(s) for _, s in op.params]
        names = op.param_names()
        for combo in itertools.product(*domains):
            if replica.pre_satisfied(op, dict(zip(names, combo))):
                out.append((op.name, combo))
    return out


def _random_submission(sim: Simulator, replica_id: str, rng: random.Random):
    ops = [o for o in sim.spec.operations if _coordinated(sim, replica_id, o.name)]
    if not ops:
        return None
    op = rng.choice(ops)
    args = tuple(
        rng.choice(sim.universe.constants(sort)) for _, sort in op.params
    )
    return op.name, args


def fuzz_schedule(
    spec: AppSpec,
    seed: int,
    universe: Universe | None = None,
    replica_ids: tuple[str, ...] = ("r1", "r2", "r3"),
    ops_count: int = 40,
    trace: list | None = None,
) -> tuple[Schedule, SimReport]:
    """Generate and execute one seeded random schedule.

    Submissions prefer locally enabled operations (80% of draws) with the
    rest fully random to exercise precondition failures; deliveries pick a
    random causally ready (record, replica) pair.  The schedule records
    every event, so replaying it reproduces the run exactly.
    """
    rng = random.Random(seed)
    sim = Simulator(spec, universe, replica_ids, trace=trace)
    schedule = Schedule(seed=seed)
    submitted = 0
    while submitted < ops_count:
        pending = sim.pending()
        if pending and rng.random() < DELIVERY_PROBABILITY:
            idx, rid = pending[rng.randrange(len(pending))]
            sim.deliver(sim.records[idx], rid)
            schedule.events.append(ScheduleEvent("deliver", rid, record_index=idx))
            continue
        rid = replica_ids[rng.randrange(len(replica_ids))]
        choice = None
        if rng.random() < ENABLED_ARG_BIAS:
            enabled = _enabled_submissions(sim, rid)
            if enabled:
                choice = enabled[rng.randrange(len(enabled))]
        if choice is None:
            choice = _random_submission(sim, rid, rng)
        if choice is None:
            # Every operation is waiting on coordination; make progress by
            # delivering instead.
            pending = sim.pending()
            if not pending:
                break
            idx, drid = pending[rng.randrange(len(pending))]
            sim.deliver(sim.records[idx], drid)
            schedule.events.append(ScheduleEvent("deliver", drid, record_index=idx))
            continue
        op_name, args = choice
        sim.submit(rid, op_name, args)
        schedule.events.append(ScheduleEvent("submit", rid, op=op_name, args=args))
        submitted += 1
    sim.flush(schedule)
    return schedule, sim.report(seed)


@dataclass
class FuzzReport:
    seeds: tuple[int, ...]
    total_violations: int
    divergent_seeds: list[int]
    total_precondition_failures: int
    per_seed: list[SimReport]

    def to_json(self) -> dict:
        return {
            "seeds": [self.seeds[0], self.seeds[-1]] if self.seeds else [],
            "totalViolations": self.total_violations,
            "divergentSeeds": self.divergent_seeds,
            "preconditionFailures": self.total_precondition_failures,
            "perSeed": [
                {"seed": r.seed, "violations": r.violation_count, "divergence": r.divergence}
                for r in self.per_seed
            ],
        }


def fuzz(
    spec: AppSpec,
    seeds,
    universe: Universe | None = None,
    replica_ids: tuple[str, ...] = ("r1", "r2", "r3"),
    ops_count: int = 40,
) -> FuzzReport:
    reports = []
    for seed in seeds:
        _, report = fuzz_schedule(
            spec, seed, universe, replica_ids, ops_count=ops_count
        )
        reports.append(report)
    return FuzzReport(
        seeds=tuple(seeds),
        total_violations=sum(r.violation_count for r in reports),
        divergent_seeds=[r.seed for r in reports if r.divergence],
        total_precondition_failures=sum(len(r.precondition_failures) for r in reports),
        per_seed=reports,
    )
