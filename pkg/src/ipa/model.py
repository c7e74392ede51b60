"""Core data model for replicated-application specifications.

An application spec declares sorts, boolean predicates, integer counters,
invariants, per-predicate convergence rules, operations, and (after repair)
compensations.  Everything here is an immutable value object: specs are
safe to share between analysis passes and simulator replicas.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace

WILDCARD = "*"

# Invariant taxonomy tags.
REFERENTIAL_INTEGRITY = "referentialIntegrity"
NUMERIC_BOUND = "numericBound"
AGGREGATION_CONSTRAINT = "aggregationConstraint"
AGGREGATION_INCLUSION = "aggregationInclusion"
DISJUNCTION = "disjunction"
UNIQUE_IDENTIFIER = "uniqueIdentifier"
SEQUENTIAL_IDENTIFIER = "sequentialIdentifier"
OTHER = "other"

CLASS_TAGS = (
    REFERENTIAL_INTEGRITY,
    NUMERIC_BOUND,
    AGGREGATION_CONSTRAINT,
    AGGREGATION_INCLUSION,
    DISJUNCTION,
    UNIQUE_IDENTIFIER,
    SEQUENTIAL_IDENTIFIER,
    OTHER,
)

# Classes whose violations are handled by compensations rather than by
# adding effects to operations.
COMPENSATABLE_TAGS = (NUMERIC_BOUND, AGGREGATION_CONSTRAINT)

ADD_WINS = "add-wins"
REM_WINS = "rem-wins"

CMP_OPS = ("<=", ">=", "<", ">", "=")


@dataclass(frozen=True)
class Sort:
    name: str


@dataclass(frozen=True)
class PredicateDecl:
    """A boolean predicate or an integer counter over sorted arguments."""

    name: str
    arg_sorts: tuple[str, ...]
    kind: str  # "boolean" | "numeric"
    arg_names: tuple[str, ...] = ()
    # For counters that track the size of a relationship predicate:
    # sizeof_pred names the predicate, sizeof_pattern gives its argument
    # pattern with "*" in counted positions and counter parameter names in
    # key positions.  marker_pred optionally names a boolean predicate set
    # true for elements trimmed by a compensation.
    sizeof_pred: str | None = None
    sizeof_pattern: tuple[str, ...] = ()
    marker_pred: str | None = None

    @property
    def arity(self) -> int:
        return len(self.arg_sorts)


@dataclass(frozen=True)
class Term:
    """An argument position: a bound variable or the wildcard."""

    name: str
    sort: str | None = None

    @property
    def is_wildcard(self) -> bool:
        return self.name == WILDCARD


# ---------------------------------------------------------------------------
# Invariant formulas
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Atom:
    """Boolean predicate applied to quantified variables."""

    pred: str
    args: tuple[str, ...]


@dataclass(frozen=True)
class Not:
    arg: "Formula"


@dataclass(frozen=True)
class And:
    args: tuple["Formula", ...]


@dataclass(frozen=True)
class Or:
    args: tuple["Formula", ...]


@dataclass(frozen=True)
class Implies:
    lhs: "Formula"
    rhs: "Formula"


@dataclass(frozen=True)
class NumAtom:
    """Counter applied to quantified variables, used inside comparisons."""

    pred: str
    args: tuple[str, ...]


@dataclass(frozen=True)
class CardTerm:
    """Number of true atoms of a predicate matching a pattern.

    Pattern entries are variable names or "*" for counted positions.  Used
    by sequential-identifier clauses, which tie an allocation counter to
    the cardinality of the allocated set.
    """

    pred: str
    pattern: tuple[str, ...]


@dataclass(frozen=True)
class IntConst:
    value: int


NumTerm = NumAtom | CardTerm | IntConst


@dataclass(frozen=True)
class Cmp:
    lhs: NumTerm
    op: str
    rhs: NumTerm


Formula = Atom | Not | And | Or | Implies | Cmp


def formula_atoms(f: Formula) -> list[Atom]:
    """All boolean atoms of a formula, in syntactic order."""
    if isinstance(f, Atom):
        return [f]
    if isinstance(f, Not):
        return formula_atoms(f.arg)
    if isinstance(f, (And, Or)):
        return [a for g in f.args for a in formula_atoms(g)]
    if isinstance(f, Implies):
        return formula_atoms(f.lhs) + formula_atoms(f.rhs)
    return []


def _num_terms(f: Formula) -> list[NumTerm]:
    if isinstance(f, Cmp):
        return [f.lhs, f.rhs]
    if isinstance(f, Not):
        return _num_terms(f.arg)
    if isinstance(f, (And, Or)):
        return [t for g in f.args for t in _num_terms(g)]
    if isinstance(f, Implies):
        return _num_terms(f.lhs) + _num_terms(f.rhs)
    return []


def formula_num_atoms(f: Formula) -> list[NumAtom]:
    return [t for t in _num_terms(f) if isinstance(t, NumAtom)]


def formula_card_terms(f: Formula) -> list[CardTerm]:
    return [t for t in _num_terms(f) if isinstance(t, CardTerm)]


def formula_predicates(f: Formula) -> list[str]:
    """Every predicate / counter name a formula mentions, deduplicated."""
    names: list[str] = []
    for a in formula_atoms(f):
        if a.pred not in names:
            names.append(a.pred)
    for t in _num_terms(f):
        if isinstance(t, (NumAtom, CardTerm)) and t.pred not in names:
            names.append(t.pred)
    return names


def formula_free_vars(f: Formula) -> set[str]:
    out: set[str] = set()
    for a in formula_atoms(f):
        out.update(a.args)
    for t in _num_terms(f):
        if isinstance(t, NumAtom):
            out.update(t.args)
        elif isinstance(t, CardTerm):
            out.update(v for v in t.pattern if v != WILDCARD)
    return out


@dataclass(frozen=True)
class InvariantClause:
    """One invariant: a quantified formula, or a declared unique/sequential
    identifier clause (which carry no formula of their own)."""

    quantified_vars: tuple[tuple[str, str], ...]  # (name, sort)
    body: Formula | None
    class_tag: str = OTHER
    # uniqueIdentifier: the declared predicate.
    unique_pred: str | None = None
    # sequentialIdentifier: counter name and the predicate it counts.
    sequential_counter: str | None = None
    sequential_pred: str | None = None

    def predicates(self) -> list[str]:
        if self.body is not None:
            return formula_predicates(self.body)
        if self.unique_pred is not None:
            return [self.unique_pred]
        if self.sequential_counter is not None:
            return [self.sequential_counter, self.sequential_pred or ""]
        return []


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

SET_TRUE = "setTrue"
SET_FALSE = "setFalse"
INCREMENT = "increment"
DECREMENT = "decrement"


@dataclass(frozen=True)
class Effect:
    """One predicate assignment produced by an operation.

    Arguments are operation parameter names, or "*" which applies the
    effect to every instantiation of that position.
    """

    pred: str
    args: tuple[str, ...]
    action: str
    amount: int = 1
    added_by_repair: bool = False

    @property
    def is_boolean(self) -> bool:
        return self.action in (SET_TRUE, SET_FALSE)


@dataclass(frozen=True)
class PreAtom:
    """A precondition conjunct: a possibly negated boolean atom.

    Wildcards are only meaningful under negation, where `!p(*, t)` asserts
    that no instantiation of the starred positions is true.
    """

    pred: str
    args: tuple[str, ...]
    negated: bool = False


@dataclass(frozen=True)
class PreCmp:
    """A precondition conjunct comparing a counter against a constant."""

    pred: str
    args: tuple[str, ...]
    op: str
    value: int


PreCondition = tuple[PreAtom | PreCmp, ...]

ORIGIN_ORIGINAL = "original"
ORIGIN_REPAIRED = "repaired"
ORIGIN_COMPENSATION = "compensation"


@dataclass(frozen=True)
class OperationSpec:
    name: str
    params: tuple[tuple[str, str], ...]  # (name, sort)
    precondition: PreCondition
    effects: tuple[Effect, ...]
    origin: str = ORIGIN_ORIGINAL
    # Compensations record which operations can trigger the violation they
    # repair; empty for ordinary operations.
    triggers: tuple[str, ...] = ()

    def param_names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.params)

    def effect_preds(self) -> list[str]:
        seen: list[str] = []
        for e in self.effects:
            if e.pred not in seen:
                seen.append(e.pred)
        return seen

    def with_added_effects(self, added: tuple[Effect, ...]) -> "OperationSpec":
        marked = tuple(replace(e, added_by_repair=True) for e in added)
        return replace(self, effects=self.effects + marked, origin=ORIGIN_REPAIRED)


@dataclass(frozen=True)
class ConvergenceRule:
    pred: str
    policy: str  # ADD_WINS | REM_WINS


@dataclass(frozen=True)
class AppSpec:
    name: str
    sorts: tuple[Sort, ...]
    predicates: tuple[PredicateDecl, ...]
    invariants: tuple[InvariantClause, ...]
    operations: tuple[OperationSpec, ...]
    convergence_rules: tuple[ConvergenceRule, ...]
    compensations: tuple[OperationSpec, ...] = ()
    # Pairs acknowledged as unsolvable in a previous repair session; the
    # analysis skips them and reports them separately.
    flagged_pairs: tuple[tuple[str, str], ...] = ()

    def predicate(self, name: str) -> PredicateDecl | None:
        for p in self.predicates:
            if p.name == name:
                return p
        return None

    def operation(self, name: str) -> OperationSpec | None:
        for o in self.operations:
            if o.name == name:
                return o
        return None

    def rule_for(self, pred: str) -> ConvergenceRule | None:
        for r in self.convergence_rules:
            if r.pred == pred:
                return r
        return None

    def boolean_predicates(self) -> tuple[PredicateDecl, ...]:
        return tuple(p for p in self.predicates if p.kind == "boolean")

    def numeric_predicates(self) -> tuple[PredicateDecl, ...]:
        return tuple(p for p in self.predicates if p.kind == "numeric")

    def replace_operation(self, new_op: OperationSpec) -> "AppSpec":
        ops = tuple(new_op if o.name == new_op.name else o for o in self.operations)
        return replace(self, operations=ops)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Diagnostic:
    message: str
    where: str  # human-readable location: spec element that failed

    def __str__(self) -> str:
        return f"{self.where}: {self.message}"


def _check_term_args(
    spec: AppSpec,
    pred: PredicateDecl,
    args: tuple[str, ...],
    params: dict[str, str],
    where: str,
    out: list[Diagnostic],
    allow_wildcard: bool,
) -> None:
    if len(args) != pred.arity:
        out.append(
            Diagnostic(
                f"{pred.name} expects {pred.arity} argument(s), got {len(args)}",
                where,
            )
        )
        return
    for pos, a in enumerate(args):
        if a == WILDCARD:
            if not allow_wildcard:
                out.append(Diagnostic("wildcard not allowed here", where))
            continue
        if a not in params:
            out.append(Diagnostic(f"unknown argument '{a}'", where))
        elif params[a] != pred.arg_sorts[pos]:
            out.append(
                Diagnostic(
                    f"argument '{a}' has sort {params[a]}, expected {pred.arg_sorts[pos]}",
                    where,
                )
            )


def validate_spec(spec: AppSpec) -> list[Diagnostic]:
    """Structural validation; an empty result means the spec is well formed."""
    out: list[Diagnostic] = []

    seen_sorts: set[str] = set()
    for s in spec.sorts:
        if s.name in seen_sorts:
            out.append(Diagnostic(f"duplicate sort '{s.name}'", f"sort {s.name}"))
        seen_sorts.add(s.name)

    seen_preds: dict[str, PredicateDecl] = {}
    for p in spec.predicates:
        where = f"predicate {p.name}"
        if p.name in seen_preds:
            out.append(Diagnostic(f"duplicate predicate '{p.name}'", where))
        seen_preds[p.name] = p
        for s in p.arg_sorts:
            if s not in seen_sorts:
                out.append(Diagnostic(f"unknown sort '{s}'", where))
        if p.sizeof_pred is not None:
            rel = spec.predicate(p.sizeof_pred)
            if p.kind != "numeric":
                out.append(Diagnostic("sizeof only applies to counters", where))
            if rel is None or rel.kind != "boolean":
                out.append(Diagnostic(f"sizeof target '{p.sizeof_pred}' is not a boolean predicate", where))
            elif len(p.sizeof_pattern) != rel.arity:
                out.append(Diagnostic("sizeof pattern arity mismatch", where))
            elif not set(p.arg_names) <= {a for a in p.sizeof_pattern if a != WILDCARD}:
                out.append(Diagnostic("sizeof pattern must bind every counter parameter", where))
            if p.marker_pred is not None:
                marker = spec.predicate(p.marker_pred)
                if marker is None or marker.kind != "boolean":
                    out.append(Diagnostic(f"marker '{p.marker_pred}' is not a boolean predicate", where))

    # Convergence rules: exactly one per boolean predicate.
    ruled: set[str] = set()
    for r in spec.convergence_rules:
        where = f"resolution {r.pred}"
        if r.pred in ruled:
            out.append(Diagnostic(f"duplicate convergence rule for '{r.pred}'", where))
        ruled.add(r.pred)
        decl = spec.predicate(r.pred)
        if decl is None:
            out.append(Diagnostic(f"unknown predicate '{r.pred}'", where))
        elif decl.kind != "boolean":
            out.append(Diagnostic("convergence rules apply to boolean predicates only", where))
        if r.policy not in (ADD_WINS, REM_WINS):
            out.append(Diagnostic(f"unknown policy '{r.policy}'", where))
    for p in spec.boolean_predicates():
        if p.name not in ruled:
            out.append(
                Diagnostic(f"boolean predicate '{p.name}' has no convergence rule", f"predicate {p.name}")
            )

    for idx, inv in enumerate(spec.invariants):
        where = f"invariant #{idx + 1}"
        _validate_invariant(spec, inv, where, out)

    op_names: set[str] = set()
    for op in itertools.chain(spec.operations, spec.compensations):
        where = f"op {op.name}"
        if op.name in op_names:
            out.append(Diagnostic(f"duplicate operation '{op.name}'", where))
        op_names.add(op.name)
        params = dict(op.params)
        for _, sort in op.params:
            if sort not in seen_sorts:
                out.append(Diagnostic(f"unknown sort '{sort}'", where))
        for pre in op.precondition:
            decl = spec.predicate(pre.pred)
            if decl is None:
                out.append(Diagnostic(f"unknown predicate '{pre.pred}'", where))
                continue
            if isinstance(pre, PreAtom):
                if decl.kind != "boolean":
                    out.append(Diagnostic(f"'{pre.pred}' is not a boolean predicate", where))
                # Wildcards in preconditions assert emptiness, which only
                # makes sense under negation.
                _check_term_args(spec, decl, pre.args, params, where, out, allow_wildcard=pre.negated)
            else:
                if decl.kind != "numeric":
                    out.append(Diagnostic(f"'{pre.pred}' is not a counter", where))
                if pre.op not in CMP_OPS:
                    out.append(Diagnostic(f"unknown comparison '{pre.op}'", where))
                _check_term_args(spec, decl, pre.args, params, where, out, allow_wildcard=False)
        bool_actions: dict[tuple[str, tuple[str, ...]], set[str]] = {}
        for eff in op.effects:
            decl = spec.predicate(eff.pred)
            if decl is None:
                out.append(Diagnostic(f"unknown predicate '{eff.pred}'", where))
                continue
            if eff.is_boolean and decl.kind != "boolean":
                out.append(Diagnostic(f"boolean effect on counter '{eff.pred}'", where))
            if not eff.is_boolean and decl.kind != "numeric":
                out.append(Diagnostic(f"numeric effect on boolean predicate '{eff.pred}'", where))
            if not eff.is_boolean and eff.amount <= 0:
                out.append(Diagnostic("increment amount must be positive", where))
            _check_term_args(spec, decl, eff.args, params, where, out, allow_wildcard=True)
            if eff.is_boolean:
                key = (eff.pred, eff.args)
                actions = bool_actions.setdefault(key, set())
                actions.add(eff.action)
                if len(actions) > 1:
                    out.append(
                        Diagnostic(
                            f"opposing assignments to {eff.pred}({', '.join(eff.args)})",
                            where,
                        )
                    )
        # Wildcard effects overlapping a fixed-argument effect of the
        # opposite polarity would contradict on the shared instantiation.
        for e1, e2 in itertools.combinations([e for e in op.effects if e.is_boolean], 2):
            if e1.pred != e2.pred or e1.action == e2.action:
                continue
            if all(a == b or WILDCARD in (a, b) for a, b in zip(e1.args, e2.args)):
                out.append(
                    Diagnostic(f"opposing assignments to overlapping {e1.pred} instances", where)
                )

    for a, b in spec.flagged_pairs:
        for name in (a, b):
            if name not in op_names:
                out.append(Diagnostic(f"unknown operation '{name}'", f"flag {a} {b}"))

    return out


def _validate_invariant(spec: AppSpec, inv: InvariantClause, where: str, out: list[Diagnostic]) -> None:
    if inv.unique_pred is not None:
        if spec.predicate(inv.unique_pred) is None:
            out.append(Diagnostic(f"unknown predicate '{inv.unique_pred}'", where))
        return
    if inv.sequential_counter is not None:
        counter = spec.predicate(inv.sequential_counter)
        pred = spec.predicate(inv.sequential_pred or "")
        if counter is None or counter.kind != "numeric":
            out.append(Diagnostic(f"'{inv.sequential_counter}' is not a counter", where))
        if pred is None or pred.kind != "boolean":
            out.append(Diagnostic(f"'{inv.sequential_pred}' is not a boolean predicate", where))
        return
    if inv.body is None:
        out.append(Diagnostic("invariant has no body", where))
        return
    qvars = dict(inv.quantified_vars)
    for name, sort in inv.quantified_vars:
        if not any(s.name == sort for s in spec.sorts):
            out.append(Diagnostic(f"unknown sort '{sort}'", where))
    free = formula_free_vars(inv.body)
    for v in free:
        if v not in qvars:
            out.append(Diagnostic(f"unquantified variable '{v}'", where))
    for atom in formula_atoms(inv.body):
        decl = spec.predicate(atom.pred)
        if decl is None:
            out.append(Diagnostic(f"unknown predicate '{atom.pred}'", where))
        elif decl.kind != "boolean":
            out.append(Diagnostic(f"counter '{atom.pred}' used as boolean atom", where))
        elif len(atom.args) != decl.arity:
            out.append(
                Diagnostic(
                    f"{atom.pred} expects {decl.arity} argument(s), got {len(atom.args)}",
                    where,
                )
            )
        if WILDCARD in atom.args:
            out.append(Diagnostic("wildcard not allowed in invariants", where))
    for t in formula_num_atoms(inv.body):
        decl = spec.predicate(t.pred)
        if decl is None:
            out.append(Diagnostic(f"unknown counter '{t.pred}'", where))
        elif decl.kind != "numeric":
            out.append(Diagnostic(f"'{t.pred}' is not a counter", where))
        elif len(t.args) != decl.arity:
            out.append(Diagnostic(f"{t.pred} expects {decl.arity} argument(s)", where))


# ---------------------------------------------------------------------------
# Invariant classification
# ---------------------------------------------------------------------------


def _flatten(f: Formula, ctor: type) -> list[Formula]:
    if isinstance(f, ctor):
        return [g for arg in f.args for g in _flatten(arg, ctor)]
    return [f]


def classify_invariant(spec: AppSpec, inv: InvariantClause) -> str:
    """Derive the taxonomy class of a clause from its syntactic shape.

    Total and deterministic: declared unique/sequential clauses keep their
    declared class; comparisons split into plain numeric bounds versus
    bounds over size-tracking counters; implications split into referential
    integrity (the consequent asserts existence of the antecedent's
    components), inclusion between collections (the consequent repeats the
    antecedent's full argument tuple), and disjunctive alternatives.
    """
    if inv.unique_pred is not None:
        return UNIQUE_IDENTIFIER
    if inv.sequential_counter is not None:
        return SEQUENTIAL_IDENTIFIER
    body = inv.body
    if body is None:
        return OTHER
    if isinstance(body, Cmp):
        for t in (body.lhs, body.rhs):
            if isinstance(t, NumAtom):
                decl = spec.predicate(t.pred)
                if decl is not None and decl.sizeof_pred is not None:
                    return AGGREGATION_CONSTRAINT
        if isinstance(body.lhs, CardTerm) or isinstance(body.rhs, CardTerm):
            return AGGREGATION_CONSTRAINT
        return NUMERIC_BOUND
    if isinstance(body, Or):
        return DISJUNCTION
    if isinstance(body, Implies):
        if isinstance(body.rhs, Or):
            return DISJUNCTION
        lhs = body.lhs
        rhs_parts = _flatten(body.rhs, And)
        if isinstance(lhs, Atom) and all(isinstance(p, Atom) for p in rhs_parts):
            lhs_args = set(lhs.args)
            rhs_atoms = [p for p in rhs_parts if isinstance(p, Atom)]
            if any(tuple(a.args) == tuple(lhs.args) for a in rhs_atoms):
                return AGGREGATION_INCLUSION
            if all(set(a.args) < lhs_args or set(a.args) <= lhs_args for a in rhs_atoms) and all(
                len(a.args) < len(lhs.args) for a in rhs_atoms
            ):
                return REFERENTIAL_INTEGRITY
    return OTHER


def classify_all(spec: AppSpec) -> AppSpec:
    """Return a copy of the spec with every clause's class tag filled in."""
    tagged = tuple(replace(inv, class_tag=classify_invariant(spec, inv)) for inv in spec.invariants)
    return replace(spec, invariants=tagged)
