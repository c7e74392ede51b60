"""Repair of conflicting operation pairs.

For each conflict the engine generates candidate repairs: combinations of
true/false assignments over the predicates of the implicated invariant
clauses, added to exactly one side of the pair, with arguments drawn from
that operation's parameters (a wildcard stands in for invariant positions
the parameters cannot bind).  Candidates that leave the pair conflicting
are dropped, as is any candidate whose added effects contain those of an
already accepted candidate on the same side, so surviving repairs are
minimal.  A chooser (interactive or policy) picks one; the loop repeats
until no conflicts remain, flagging pairs with no safe candidate.

Numeric-bound and aggregation violations are repaired by synthesized
compensations instead: guarded operations that trim a relationship back
under its bound (or replenish a counter) when a read observes the bound
broken.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

from .conflicts import ConflictDetector, ConflictReport, DetectionResult
from .logic import Universe
from .model import (
    ADD_WINS,
    COMPENSATABLE_TAGS,
    DECREMENT,
    INCREMENT,
    REM_WINS,
    SET_FALSE,
    SET_TRUE,
    WILDCARD,
    AppSpec,
    Cmp,
    ConvergenceRule,
    Effect,
    IntConst,
    InvariantClause,
    NumAtom,
    OperationSpec,
    PreAtom,
    PreCmp,
)

POLICY_FEWEST = "fewest-effects"
POLICY_RESTORE = "prefer-restore"
POLICY_CLEAR = "prefer-clear"
POLICY_INTERACTIVE = "interactive"

BUILT_IN_POLICIES = (POLICY_FEWEST, POLICY_RESTORE, POLICY_CLEAR)


class RoundLimitExceeded(Exception):
    def __init__(self, session: "AnalysisSession"):
        super().__init__(f"repair did not converge within {session.round_limit} rounds")
        self.session = session


class UnsupportedClause(Exception):
    pass


@dataclass(frozen=True)
class RepairCandidate:
    op_a: str
    op_b: str
    modified_side: str  # "A" | "B"
    added_effects: tuple[Effect, ...]
    required_rules: tuple[ConvergenceRule, ...]
    resolution_meaning: str
    semantics_changing: bool

    @property
    def modified_op(self) -> str:
        return self.op_a if self.modified_side == "A" else self.op_b

    @property
    def is_restore(self) -> bool:
        return all(e.action == SET_TRUE for e in self.added_effects)

    @property
    def is_clear(self) -> bool:
        return all(e.action == SET_FALSE for e in self.added_effects)

    def to_json(self) -> dict:
        return {
            "pair": [self.op_a, self.op_b],
            "modifiedSide": self.modified_side,
            "modifiedOp": self.modified_op,
            "addedEffects": [
                {
                    "pred": e.pred,
                    "args": list(e.args),
                    "action": e.action,
                }
                for e in self.added_effects
            ],
            "requiredRules": [
                {"pred": r.pred, "policy": r.policy} for r in self.required_rules
            ],
            "resolutionMeaning": self.resolution_meaning,
            "semanticsChanging": self.semantics_changing,
        }


# ---------------------------------------------------------------------------
# Candidate generation
# ---------------------------------------------------------------------------


def _arg_tuples(spec: AppSpec, pred_name: str, op: OperationSpec) -> list[tuple[str, ...]]:
    """Argument tuples for an added effect: every combination of the
    operation's same-sort parameters, with a wildcard where no parameter
    of the needed sort exists."""
    decl = spec.predicate(pred_name)
    assert decl is not None
    position_choices: list[tuple[str, ...]] = []
    for sort in decl.arg_sorts:
        params = tuple(n for n, s in op.params if s == sort)
        position_choices.append(params if params else (WILDCARD,))
    return [tuple(combo) for combo in itertools.product(*position_choices)]


def _boolean_pool(spec: AppSpec, clauses) -> list[str]:
    pool: list[str] = []
    for clause in clauses:
        for name in clause.predicates():
            decl = spec.predicate(name)
            if decl is not None and decl.kind == "boolean" and name not in pool:
                pool.append(name)
    return pool


def violated_pool(spec: AppSpec, report: ConflictReport) -> list[str]:
    """Boolean predicates of the clauses the counterexample violates."""
    return _boolean_pool(spec, (inst.clause for inst in report.violated))


def implicated_pool(spec: AppSpec, op_a: OperationSpec, op_b: OperationSpec) -> list[str]:
    """Boolean predicates of every invariant clause touched by the pair's
    effects; a wider pool used when the violated clauses alone yield no
    safe candidate."""
    effect_preds = set(op_a.effect_preds()) | set(op_b.effect_preds())
    return _boolean_pool(
        spec,
        (c for c in spec.invariants if effect_preds.intersection(c.predicates())),
    )


def _covered_by_pre(op: OperationSpec, effect: Effect) -> bool:
    """True when the operation's own precondition already fixes the atoms
    the effect writes, making the effect a sequential no-op."""
    want_negated = effect.action == SET_FALSE
    for c in op.precondition:
        if not isinstance(c, PreAtom) or c.pred != effect.pred or c.negated != want_negated:
            continue
        if len(c.args) == len(effect.args) and all(
            pa == WILDCARD or pa == ea for pa, ea in zip(c.args, effect.args)
        ):
            return True
    return False


def _effects_contradict(effects: tuple[Effect, ...]) -> bool:
    bools = [e for e in effects if e.is_boolean]
    for e1, e2 in itertools.combinations(bools, 2):
        if e1.pred != e2.pred or e1.action == e2.action:
            continue
        if all(a == b or WILDCARD in (a, b) for a, b in zip(e1.args, e2.args)):
            return True
    return False


def _required_rules(
    spec: AppSpec, added: tuple[Effect, ...], counterpart: OperationSpec
) -> tuple[ConvergenceRule, ...]:
    """The convergence rules the added effects lean on: one per added
    assignment that can meet an opposing assignment from the other
    operation."""
    rules: list[ConvergenceRule] = []
    other_actions = {(e.pred, e.action) for e in counterpart.effects if e.is_boolean}
    for e in added:
        opposite = SET_FALSE if e.action == SET_TRUE else SET_TRUE
        if (e.pred, opposite) in other_actions:
            rule = ConvergenceRule(e.pred, ADD_WINS if e.action == SET_TRUE else REM_WINS)
            if rule not in rules:
                rules.append(rule)
    return tuple(rules)


def generate_candidates(
    spec: AppSpec, report: ConflictReport, pool: list[str] | None = None
) -> list[RepairCandidate]:
    """All candidate repairs for a conflicting pair, unfiltered, ordered by
    ascending added-effect count (side A before B at equal size)."""
    op_a, op_b = report.op_a.op, report.op_b.op
    if pool is None:
        pool = implicated_pool(spec, op_a, op_b)
    out: list[RepairCandidate] = []
    for side, modified, other in (("A", op_a, op_b), ("B", op_b, op_a)):
        present = set(modified.effect_preds())
        seed: list[tuple[str, tuple[str, ...]]] = []
        for pred in pool:
            if pred in present:
                continue
            for args in _arg_tuples(spec, pred, modified):
                seed.append((pred, args))
        for choices in itertools.product((None, SET_TRUE, SET_FALSE), repeat=len(seed)):
            added = tuple(
                Effect(pred, args, action)
                for (pred, args), action in zip(seed, choices)
                if action is not None
            )
            if not added:
                continue
            if _effects_contradict(modified.effects + added):
                continue
            meaning = (
                f"{modified.name} wins over {other.name}: "
                + ", ".join(_describe_effect(e) for e in added)
            )
            out.append(
                RepairCandidate(
                    op_a=op_a.name,
                    op_b=op_b.name,
                    modified_side=side,
                    added_effects=added,
                    required_rules=_required_rules(spec, added, other),
                    resolution_meaning=meaning,
                    semantics_changing=not all(_covered_by_pre(modified, e) for e in added),
                )
            )
    out.sort(key=lambda c: (len(c.added_effects), c.modified_side))
    return out


def _describe_effect(e: Effect) -> str:
    args = ", ".join(e.args)
    if e.action == SET_TRUE:
        return f"restore {e.pred}({args})"
    return f"clear {e.pred}({args})"


def splice_candidate(spec: AppSpec, candidate: RepairCandidate) -> AppSpec:
    op = spec.operation(candidate.modified_op)
    assert op is not None
    return spec.replace_operation(op.with_added_effects(candidate.added_effects))


def filter_safe_candidates(
    spec: AppSpec,
    detector: ConflictDetector,
    candidates: list[RepairCandidate],
) -> list[RepairCandidate]:
    """Keep candidates whose modified pair no longer conflicts, dropping
    any whose added effects contain an already kept candidate's (minimality)."""
    kept: list[RepairCandidate] = []
    for cand in candidates:
        added = set(cand.added_effects)
        if any(
            cand.modified_side == k.modified_side and added >= set(k.added_effects)
            for k in kept
        ):
            continue
        mod_op = spec.operation(cand.modified_op)
        assert mod_op is not None
        modified = mod_op.with_added_effects(cand.added_effects)
        if cand.modified_side == "A":
            pair = (modified, spec.operation(cand.op_b) or modified)
        else:
            pair = (spec.operation(cand.op_a) or modified, modified)
        if detector.check_pair(*pair).report is None:
            kept.append(cand)
    return kept


# ---------------------------------------------------------------------------
# Policies
# ---------------------------------------------------------------------------


def _policy_key(policy: str):
    if policy == POLICY_RESTORE:
        return lambda ic: (not ic[1].is_restore, len(ic[1].added_effects), ic[1].modified_op, ic[0])
    if policy == POLICY_CLEAR:
        return lambda ic: (not ic[1].is_clear, len(ic[1].added_effects), ic[1].modified_op, ic[0])
    # Default: fewest added effects, restores before clears, earlier op name.
    return lambda ic: (len(ic[1].added_effects), not ic[1].is_restore, ic[1].modified_op, ic[0])


def policy_chooser(policy: str):
    key = _policy_key(policy)

    def choose(report: ConflictReport, candidates: list[RepairCandidate]) -> int:
        return min(enumerate(candidates), key=key)[0]

    return choose


# ---------------------------------------------------------------------------
# Analysis session and loop
# ---------------------------------------------------------------------------


@dataclass
class Resolution:
    pair: tuple[str, str]
    report: ConflictReport
    candidate: RepairCandidate
    round: int

    def to_json(self) -> dict:
        return {
            "pair": list(self.pair),
            "round": self.round,
            "candidate": self.candidate.to_json(),
        }


@dataclass
class FlaggedPair:
    pair: tuple[str, str]
    reason: tuple[str, ...]  # class tags of the clauses that caused flagging

    def to_json(self) -> dict:
        return {"pair": list(self.pair), "reason": list(self.reason)}


@dataclass
class AnalysisSession:
    spec: AppSpec
    universe: Universe
    resolved: list[Resolution] = field(default_factory=list)
    flagged: list[FlaggedPair] = field(default_factory=list)
    reopened: list[dict] = field(default_factory=list)
    resolution_clashes: list[dict] = field(default_factory=list)
    compensations: list[OperationSpec] = field(default_factory=list)
    compensation_clauses: list[int] = field(default_factory=list)
    round: int = 0
    round_limit: int = 0
    complete: bool = False

    def flagged_keys(self) -> set[tuple[str, str]]:
        keys = {f.pair for f in self.flagged}
        keys.update(self.spec.flagged_pairs)
        return keys

    def clause_outcomes(self) -> dict[int, str]:
        """Per-clause verdict so far: compensation, repaired, or safe.

        SessionEngine.clause_outcomes refines this with the clauses behind
        flagged pairs, which the session object alone does not track."""
        outcomes: dict[int, str] = {}
        for idx in range(len(self.spec.invariants)):
            outcomes[idx] = "compensation" if idx in self.compensation_clauses else "safe"
        for res in self.resolved:
            for inst in res.report.violated:
                if outcomes.get(inst.clause_index) == "safe":
                    outcomes[inst.clause_index] = "repaired"
        return outcomes


class SessionEngine:
    """Stepwise driver for the repair loop.

    Exposes the current conflict and its safe candidates; `choose` splices
    a repair and advances, `flag` gives the pair up.  run_ipa_loop drives
    this with a chooser callback; the HTTP session API drives it from
    requests.
    """

    def __init__(
        self,
        spec: AppSpec,
        universe: Universe | None = None,
        numeric_window: int | None = None,
        round_limit: int | None = None,
    ):
        self.universe = universe or Universe.uniform(spec)
        kwargs = {} if numeric_window is None else {"numeric_window": numeric_window}
        self.detector = ConflictDetector(spec, self.universe, **kwargs)
        n_pairs = len(spec.operations) * (len(spec.operations) + 1) // 2
        n_preds = len(spec.boolean_predicates())
        computed = max(1, n_pairs) * (3 ** min(n_preds, 10))
        self.session = AnalysisSession(
            spec=spec,
            universe=self.universe,
            round_limit=round_limit if round_limit is not None else min(computed, 100_000),
        )
        self._flagged_clauses: dict[tuple[str, str], list[int]] = {}
        self._compensation_witnesses: dict[int, list[ConflictReport]] = {}
        self.current_report: ConflictReport | None = None
        self.current_candidates: list[RepairCandidate] = []
        self._advance()

    # -- state machine -----------------------------------------------------

    def _detect(self) -> DetectionResult:
        result = self.detector.find_conflicting_pairs(
            operations=self.session.spec.operations,
            ignored=self.session.flagged_keys(),
        )
        for clause_idx, witnesses in result.compensation_findings.items():
            bucket = self._compensation_witnesses.setdefault(clause_idx, [])
            bucket.extend(witnesses)
        return result

    def _advance(self) -> None:
        while True:
            if self.session.round >= self.session.round_limit:
                raise RoundLimitExceeded(self.session)
            result = self._detect()
            if not result.reports:
                self.current_report = None
                self.current_candidates = []
                self._finish()
                return
            report = result.reports[0]
            spec = self.session.spec
            # Seed candidates from the violated clauses; widen to every
            # implicated clause only if nothing safe comes out.
            candidates = filter_safe_candidates(
                spec, self.detector, generate_candidates(spec, report, violated_pool(spec, report))
            )
            if not candidates:
                candidates = filter_safe_candidates(
                    spec, self.detector, generate_candidates(spec, report)
                )
            if not candidates:
                self._flag(report)
                continue
            self.current_report = report
            self.current_candidates = candidates
            return

    def _flag(self, report: ConflictReport) -> None:
        reason = tuple(dict.fromkeys(i.clause.class_tag for i in report.violated))
        pair = report.pair_names()
        self.session.flagged.append(FlaggedPair(pair, reason))
        self._flagged_clauses[pair] = [i.clause_index for i in report.violated]
        self.session.round += 1

    def _finish(self) -> None:
        if self.session.complete:
            return
        self.session.complete = True
        for clause_idx in sorted(self._compensation_witnesses):
            comp = synthesize_compensation(
                self.session.spec, clause_idx, self.session.spec.operations
            )
            self.session.compensations.append(comp)
            self.session.compensation_clauses.append(clause_idx)

    @property
    def done(self) -> bool:
        return self.current_report is None

    def choose(self, index: int) -> None:
        """Apply the indexed safe candidate for the current conflict."""
        if self.done:
            raise ValueError("session already complete")
        if not 0 <= index < len(self.current_candidates):
            raise IndexError(f"candidate index {index} out of range")
        report, candidate = self.current_report, self.current_candidates[index]
        assert report is not None
        pair = report.pair_names()
        previous = [r for r in self.session.resolved if set(r.pair) == set(pair)]
        for old in previous:
            self.session.resolved.remove(old)
            self.session.reopened.append(
                {"pair": list(pair), "supersededRound": old.round, "round": self.session.round}
            )
        self.session.spec = splice_candidate(self.session.spec, candidate)
        self.session.resolved.append(
            Resolution(pair, report, candidate, self.session.round)
        )
        self._record_clashes(candidate)
        self.session.round += 1
        self._advance()

    def flag_current(self) -> None:
        if self.done:
            raise ValueError("session already complete")
        assert self.current_report is not None
        self._flag(self.current_report)
        self._advance()

    def _record_clashes(self, candidate: RepairCandidate) -> None:
        for other in self.session.resolved[:-1]:
            for e1 in candidate.added_effects:
                for e2 in other.candidate.added_effects:
                    if e1.pred == e2.pred and e1.action != e2.action:
                        self.session.resolution_clashes.append(
                            {
                                "predicate": e1.pred,
                                "pairs": [
                                    list(other.pair),
                                    [candidate.op_a, candidate.op_b],
                                ],
                            }
                        )

    def clause_outcomes(self) -> dict[int, str]:
        outcomes = self.session.clause_outcomes()
        for pair, clause_indexes in self._flagged_clauses.items():
            for idx in clause_indexes:
                outcomes[idx] = "flagged"
        return outcomes


def run_ipa_loop(engine: SessionEngine, chooser) -> AnalysisSession:
    """Drive the repair loop to completion with a chooser callback.

    The chooser receives the current conflict report and its safe
    candidates and returns the index to apply, or None to flag the pair."""
    while not engine.done:
        index = chooser(engine.current_report, engine.current_candidates)
        if index is None:
            engine.flag_current()
        else:
            engine.choose(index)
    return engine.session


def repair_spec(
    spec: AppSpec,
    policy: str = POLICY_FEWEST,
    universe: Universe | None = None,
    numeric_window: int | None = None,
) -> tuple[AppSpec, AnalysisSession, SessionEngine]:
    """Non-interactive repair: returns the repaired spec (with synthesized
    compensations and flagged pairs recorded) plus the session."""
    engine = SessionEngine(spec, universe, numeric_window)
    session = run_ipa_loop(engine, policy_chooser(policy))
    repaired = replace(
        session.spec,
        compensations=session.spec.compensations + tuple(session.compensations),
        flagged_pairs=session.spec.flagged_pairs
        + tuple(f.pair for f in session.flagged),
    )
    return repaired, session, engine


# ---------------------------------------------------------------------------
# Compensations
# ---------------------------------------------------------------------------


def _bound_shape(clause: InvariantClause) -> tuple[NumAtom, str, int]:
    body = clause.body
    if isinstance(body, Cmp):
        if isinstance(body.lhs, NumAtom) and isinstance(body.rhs, IntConst):
            return body.lhs, body.op, body.rhs.value
        if isinstance(body.rhs, NumAtom) and isinstance(body.lhs, IntConst):
            flipped = {"<=": ">=", ">=": "<=", "<": ">", ">": "<", "=": "="}
            return body.rhs, flipped[body.op], body.lhs.value
    raise UnsupportedClause(f"cannot synthesize a compensation for: {clause}")


def _contributing_relationship(
    spec: AppSpec, counter_name: str, counter_args: tuple[str, ...], triggers: list[OperationSpec]
) -> tuple[str, tuple[str, ...], str | None] | None:
    """The relationship predicate whose rows the trimming compensation
    removes, as (pred, pattern over clause vars + wildcards, marker)."""
    decl = spec.predicate(counter_name)
    assert decl is not None
    if decl.sizeof_pred is not None:
        name_to_var = dict(zip(decl.arg_names, counter_args))
        pattern = tuple(
            WILDCARD if p == WILDCARD else name_to_var.get(p, WILDCARD)
            for p in decl.sizeof_pattern
        )
        return decl.sizeof_pred, pattern, decl.marker_pred
    for op in triggers:
        inc_args = [
            e.args for e in op.effects if e.pred == counter_name and e.action == INCREMENT
        ]
        if not inc_args:
            continue
        key_params = set(inc_args[0])
        for e in op.effects:
            pred = spec.predicate(e.pred)
            if e.action != SET_TRUE or pred is None or pred.kind != "boolean":
                continue
            if key_params and key_params.issubset(set(e.args)):
                param_to_var = dict(zip(inc_args[0], counter_args))
                pattern = tuple(param_to_var.get(a, WILDCARD) for a in e.args)
                return e.pred, pattern, None
    return None


def synthesize_compensation(
    spec: AppSpec, clause_index: int, operations: tuple[OperationSpec, ...]
) -> OperationSpec:
    """Build the guarded compensation for a numeric-bound or aggregation
    clause: trim the contributing relationship (upper bounds) or replenish
    the counter (lower bounds), plus the trigger list.  Effects are chosen
    to be commutative and safe to apply at every replica independently."""
    clause = spec.invariants[clause_index]
    if clause.class_tag not in COMPENSATABLE_TAGS:
        raise UnsupportedClause(f"clause #{clause_index + 1} is {clause.class_tag}")
    atom, op_sym, bound = _bound_shape(clause)
    params = tuple(clause.quantified_vars)
    counter_decl = spec.predicate(atom.pred)
    assert counter_decl is not None

    if op_sym in ("<=", "<"):
        limit = bound if op_sym == "<=" else bound - 1
        triggers = [
            o
            for o in operations
            if any(e.pred == atom.pred and e.action == INCREMENT for e in o.effects)
        ]
        rel = _contributing_relationship(spec, atom.pred, atom.args, triggers)
        if rel is None:
            raise UnsupportedClause(
                f"no relationship contributes to counter '{atom.pred}'"
            )
        rel_pred, pattern, marker = rel
        effects = [
            Effect(rel_pred, pattern, SET_FALSE),
            Effect(atom.pred, atom.args, DECREMENT, 1),
        ]
        if marker is not None:
            marker_decl = spec.predicate(marker)
            assert marker_decl is not None
            effects.append(Effect(marker, (WILDCARD,) * marker_decl.arity, SET_TRUE))
        guard: tuple = (PreCmp(atom.pred, atom.args, ">", limit),)
    elif op_sym in (">=", ">"):
        limit = bound if op_sym == ">=" else bound + 1
        triggers = [
            o
            for o in operations
            if any(e.pred == atom.pred and e.action == DECREMENT for e in o.effects)
        ]
        effects = [Effect(atom.pred, atom.args, INCREMENT, 1)]
        guard = (PreCmp(atom.pred, atom.args, "<", limit),)
    else:
        raise UnsupportedClause("equality bounds have no compensation semantics")

    return OperationSpec(
        name=f"compensate_{atom.pred}",
        params=params,
        precondition=guard,
        effects=tuple(effects),
        origin="compensation",
        triggers=tuple(o.name for o in triggers),
    )
