"""Small-scope grounding and evaluation engine.

Quantified invariants are expanded over a finite universe of constants
per sort; states assign truth values to ground boolean atoms and integers
to ground counter atoms.  All analysis questions (does the invariant hold,
which initial states admit an operation pair, what does a merged effect
set do) are answered by exhaustive evaluation within the declared scope.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .model import (
    ADD_WINS,
    DECREMENT,
    INCREMENT,
    SET_FALSE,
    SET_TRUE,
    WILDCARD,
    And,
    AppSpec,
    Atom,
    CardTerm,
    Cmp,
    Effect,
    Formula,
    Implies,
    IntConst,
    InvariantClause,
    Not,
    NumAtom,
    OperationSpec,
    Or,
    PreAtom,
    PreCmp,
)

DEFAULT_SCOPE = 2
DEFAULT_NUMERIC_WINDOW = 8

GroundAtom = tuple[str, tuple[str, ...]]  # (predicate, constant args)


class MissingConvergenceRule(Exception):
    pass


class EmptySortError(Exception):
    pass


@dataclass(frozen=True)
class Universe:
    """Constants per sort; ordering is fixed so enumeration is repeatable."""

    per_sort: tuple[tuple[str, tuple[str, ...]], ...]

    @staticmethod
    def uniform(spec: AppSpec, size: int = DEFAULT_SCOPE) -> "Universe":
        per_sort = tuple(
            (s.name, tuple(f"{s.name.lower()}{i + 1}" for i in range(size)))
            for s in spec.sorts
        )
        return Universe(per_sort)

    def constants(self, sort: str) -> tuple[str, ...]:
        for name, consts in self.per_sort:
            if name == sort:
                return consts
        raise EmptySortError(f"sort '{sort}' has no constants in this universe")

    def to_json(self) -> dict:
        return {name: list(consts) for name, consts in self.per_sort}


@dataclass
class SymbolicState:
    """Total assignment over the grounding of all predicates."""

    booleans: dict[GroundAtom, bool]
    numerics: dict[GroundAtom, int]

    def copy(self) -> "SymbolicState":
        return SymbolicState(dict(self.booleans), dict(self.numerics))

    def true_atoms(self) -> list[GroundAtom]:
        return sorted(a for a, v in self.booleans.items() if v)

    def to_json(self) -> dict:
        return {
            "true": [f"{p}({', '.join(args)})" for p, args in self.true_atoms()],
            "counters": {
                f"{p}({', '.join(args)})": v
                for (p, args), v in sorted(self.numerics.items())
                if v != 0
            },
        }

    def key(self) -> tuple:
        return (
            tuple(sorted(self.booleans.items())),
            tuple(sorted(self.numerics.items())),
        )


@dataclass(frozen=True)
class GroundEffect:
    atom: GroundAtom
    action: str
    amount: int = 1


def ground_atoms(spec: AppSpec, universe: Universe) -> tuple[list[GroundAtom], list[GroundAtom]]:
    """All boolean and numeric ground atoms, in declaration-lexicographic order."""
    booleans: list[GroundAtom] = []
    numerics: list[GroundAtom] = []
    for p in spec.predicates:
        domains = [universe.constants(s) for s in p.arg_sorts]
        for combo in itertools.product(*domains):
            atom = (p.name, combo)
            (booleans if p.kind == "boolean" else numerics).append(atom)
    return booleans, numerics


def initial_state(spec: AppSpec, universe: Universe) -> SymbolicState:
    booleans, numerics = ground_atoms(spec, universe)
    return SymbolicState({a: False for a in booleans}, {a: 0 for a in numerics})


# ---------------------------------------------------------------------------
# Ground formulas
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GroundInstance:
    """One quantifier instantiation of an invariant clause."""

    clause_index: int
    clause: InvariantClause
    binding: tuple[tuple[str, str], ...]
    formula: Formula  # variables replaced by constants inside atom args
    atoms: frozenset[GroundAtom] = field(hash=False, compare=False, default=frozenset())
    # Compiled evaluator over one {atom: value} mapping; built by
    # ground_invariant, excluded from equality.
    eval_fn: object = field(hash=False, compare=False, default=None)

    def holds_in(self, assign) -> bool:
        fn = self.eval_fn
        assert fn is not None
        return fn(assign)  # type: ignore[operator]

    def describe(self) -> str:
        bind = ", ".join(f"{v}={c}" for v, c in self.binding)
        return f"clause#{self.clause_index + 1}[{bind}]" if bind else f"clause#{self.clause_index + 1}"


def _substitute(f: Formula, env: dict[str, str]) -> Formula:
    if isinstance(f, Atom):
        return Atom(f.pred, tuple(env.get(a, a) for a in f.args))
    if isinstance(f, Not):
        return Not(_substitute(f.arg, env))
    if isinstance(f, And):
        return And(tuple(_substitute(g, env) for g in f.args))
    if isinstance(f, Or):
        return Or(tuple(_substitute(g, env) for g in f.args))
    if isinstance(f, Implies):
        return Implies(_substitute(f.lhs, env), _substitute(f.rhs, env))
    if isinstance(f, Cmp):
        return Cmp(_substitute_num(f.lhs, env), f.op, _substitute_num(f.rhs, env))
    return f


def _substitute_num(t, env: dict[str, str]):
    if isinstance(t, NumAtom):
        return NumAtom(t.pred, tuple(env.get(a, a) for a in t.args))
    if isinstance(t, CardTerm):
        return CardTerm(t.pred, tuple(env.get(a, a) for a in t.pattern))
    return t


def _instance_atoms(spec: AppSpec, f: Formula, universe: Universe) -> frozenset[GroundAtom]:
    out: set[GroundAtom] = set()

    def walk(g: Formula) -> None:
        if isinstance(g, Atom):
            out.add((g.pred, g.args))
        elif isinstance(g, Not):
            walk(g.arg)
        elif isinstance(g, (And, Or)):
            for a in g.args:
                walk(a)
        elif isinstance(g, Implies):
            walk(g.lhs)
            walk(g.rhs)
        elif isinstance(g, Cmp):
            for t in (g.lhs, g.rhs):
                if isinstance(t, NumAtom):
                    out.add((t.pred, t.args))
                elif isinstance(t, CardTerm):
                    out.update(expand_pattern(spec, universe, t.pred, t.pattern))

    walk(f)
    return frozenset(out)


def expand_pattern(
    spec: AppSpec, universe: Universe, pred: str, pattern: tuple[str, ...]
) -> list[GroundAtom]:
    """Ground atoms of `pred` matching a pattern of constants and wildcards."""
    decl = spec.predicate(pred)
    assert decl is not None
    domains = [
        universe.constants(s) if pattern[i] == WILDCARD else (pattern[i],)
        for i, s in enumerate(decl.arg_sorts)
    ]
    return [(pred, combo) for combo in itertools.product(*domains)]


def compile_formula(spec: AppSpec, universe: Universe, f: Formula):
    """Compile a ground formula to a closure over one {atom: value} mapping.

    The compiled form is what the detector's inner loop evaluates; holds()
    below stays as the direct recursive reference implementation.
    """
    if isinstance(f, Atom):
        key = (f.pred, f.args)
        return lambda a: a[key]
    if isinstance(f, Not):
        sub = compile_formula(spec, universe, f.arg)
        return lambda a: not sub(a)
    if isinstance(f, And):
        subs = tuple(compile_formula(spec, universe, g) for g in f.args)
        return lambda a: all(s(a) for s in subs)
    if isinstance(f, Or):
        subs = tuple(compile_formula(spec, universe, g) for g in f.args)
        return lambda a: any(s(a) for s in subs)
    if isinstance(f, Implies):
        lhs = compile_formula(spec, universe, f.lhs)
        rhs = compile_formula(spec, universe, f.rhs)
        return lambda a: (not lhs(a)) or rhs(a)
    if isinstance(f, Cmp):
        lhs = _compile_num(spec, universe, f.lhs)
        rhs = _compile_num(spec, universe, f.rhs)
        op = _CMP[f.op]
        return lambda a: op(lhs(a), rhs(a))
    raise TypeError(f"not a formula: {f!r}")


def _compile_num(spec: AppSpec, universe: Universe, t):
    if isinstance(t, IntConst):
        value = t.value
        return lambda a: value
    if isinstance(t, NumAtom):
        key = (t.pred, t.args)
        return lambda a: a[key]
    if isinstance(t, CardTerm):
        keys = tuple(expand_pattern(spec, universe, t.pred, t.pattern))
        return lambda a: sum(1 for k in keys if a[k])
    raise TypeError(f"not a numeric term: {t!r}")


def ground_invariant(spec: AppSpec, universe: Universe) -> list[GroundInstance]:
    """Expand every invariant clause over the universe.

    Unique-identifier declarations contribute no ground formulas; every
    other clause yields one instance per quantifier binding.
    """
    instances: list[GroundInstance] = []
    for idx, inv in enumerate(spec.invariants):
        if inv.body is None:
            continue
        var_names = [n for n, _ in inv.quantified_vars]
        domains = [universe.constants(s) for _, s in inv.quantified_vars]
        for combo in itertools.product(*domains):
            env = dict(zip(var_names, combo))
            formula = _substitute(inv.body, env)
            instances.append(
                GroundInstance(
                    clause_index=idx,
                    clause=inv,
                    binding=tuple(zip(var_names, combo)),
                    formula=formula,
                    atoms=_instance_atoms(spec, formula, universe),
                    eval_fn=compile_formula(spec, universe, formula),
                )
            )
    return instances


def _eval_num(spec: AppSpec, universe: Universe, t, state: SymbolicState) -> int:
    if isinstance(t, IntConst):
        return t.value
    if isinstance(t, NumAtom):
        return state.numerics[(t.pred, t.args)]
    if isinstance(t, CardTerm):
        return sum(
            1
            for atom in expand_pattern(spec, universe, t.pred, t.pattern)
            if state.booleans[atom]
        )
    raise TypeError(f"not a numeric term: {t!r}")


_CMP = {
    "<=": lambda a, b: a <= b,
    ">=": lambda a, b: a >= b,
    "<": lambda a, b: a < b,
    ">": lambda a, b: a > b,
    "=": lambda a, b: a == b,
}


def holds(spec: AppSpec, universe: Universe, state: SymbolicState, formula: Formula) -> bool:
    """Truth of a ground formula in a state."""
    if isinstance(formula, Atom):
        return state.booleans[(formula.pred, formula.args)]
    if isinstance(formula, Not):
        return not holds(spec, universe, state, formula.arg)
    if isinstance(formula, And):
        return all(holds(spec, universe, state, g) for g in formula.args)
    if isinstance(formula, Or):
        return any(holds(spec, universe, state, g) for g in formula.args)
    if isinstance(formula, Implies):
        return (not holds(spec, universe, state, formula.lhs)) or holds(
            spec, universe, state, formula.rhs
        )
    if isinstance(formula, Cmp):
        return _CMP[formula.op](
            _eval_num(spec, universe, formula.lhs, state),
            _eval_num(spec, universe, formula.rhs, state),
        )
    raise TypeError(f"not a formula: {formula!r}")


def invariant_holds(
    spec: AppSpec, universe: Universe, state: SymbolicState, instances: list[GroundInstance]
) -> bool:
    return all(holds(spec, universe, state, inst.formula) for inst in instances)


def violated_instances(
    spec: AppSpec, universe: Universe, state: SymbolicState, instances: list[GroundInstance]
) -> list[GroundInstance]:
    return [i for i in instances if not holds(spec, universe, state, i.formula)]


# ---------------------------------------------------------------------------
# Effects
# ---------------------------------------------------------------------------


def ground_effects(
    spec: AppSpec,
    universe: Universe,
    op: OperationSpec,
    binding: dict[str, str],
) -> list[GroundEffect]:
    """Instantiate an operation's effects; wildcards expand over the universe."""
    out: list[GroundEffect] = []
    for e in op.effects:
        pattern = tuple(binding.get(a, a) for a in e.args)
        for atom in expand_pattern(spec, universe, e.pred, pattern):
            out.append(GroundEffect(atom, e.action, e.amount))
    return out


def apply_effects(state: SymbolicState, effects: list[GroundEffect]) -> SymbolicState:
    """New state after applying ground effects; untouched atoms unchanged."""
    new = state.copy()
    for e in effects:
        if e.action == SET_TRUE:
            new.booleans[e.atom] = True
        elif e.action == SET_FALSE:
            new.booleans[e.atom] = False
        elif e.action == INCREMENT:
            new.numerics[e.atom] += e.amount
        elif e.action == DECREMENT:
            new.numerics[e.atom] -= e.amount
    return new


def merge_concurrent_effects(
    spec: AppSpec,
    one: list[GroundEffect],
    other: list[GroundEffect],
    rules: dict[str, str] | None = None,
) -> list[GroundEffect]:
    """Combine the ground effects of two concurrent operations.

    Boolean assignments union; where the two sides oppose each other on the
    same atom, the predicate's convergence rule decides the survivor
    (setTrue under add-wins, setFalse under rem-wins).  Counter deltas sum.
    The result is symmetric in the two arguments.
    """
    if rules is None:
        rules = {r.pred: r.policy for r in spec.convergence_rules}
    bool_actions: dict[GroundAtom, set[str]] = {}
    deltas: dict[GroundAtom, int] = {}
    order: list[GroundAtom] = []
    for e in sorted(one + other, key=lambda e: e.atom):
        if e.atom not in order:
            order.append(e.atom)
        if e.action in (SET_TRUE, SET_FALSE):
            bool_actions.setdefault(e.atom, set()).add(e.action)
        else:
            delta = e.amount if e.action == INCREMENT else -e.amount
            deltas[e.atom] = deltas.get(e.atom, 0) + delta
    merged: list[GroundEffect] = []
    for atom in order:
        if atom in bool_actions:
            actions = bool_actions[atom]
            if len(actions) == 1:
                merged.append(GroundEffect(atom, next(iter(actions))))
            else:
                policy = rules.get(atom[0])
                if policy is None:
                    raise MissingConvergenceRule(
                        f"opposing effects on '{atom[0]}' and no convergence rule"
                    )
                merged.append(
                    GroundEffect(atom, SET_TRUE if policy == ADD_WINS else SET_FALSE)
                )
        if atom in deltas and deltas[atom] != 0:
            d = deltas[atom]
            merged.append(
                GroundEffect(atom, INCREMENT if d > 0 else DECREMENT, abs(d))
            )
    return merged


def opposing_effects(one: list[GroundEffect], other: list[GroundEffect]) -> bool:
    """Do the two sides assign opposite truth values to some atom?"""
    left = {(e.atom, e.action) for e in one if e.action in (SET_TRUE, SET_FALSE)}
    flipped = {
        (e.atom, SET_TRUE if e.action == SET_FALSE else SET_FALSE)
        for e in other
        if e.action in (SET_TRUE, SET_FALSE)
    }
    return bool(left & flipped)


# ---------------------------------------------------------------------------
# Preconditions
# ---------------------------------------------------------------------------


def ground_precondition(
    spec: AppSpec, universe: Universe, op: OperationSpec, binding: dict[str, str]
) -> list:
    """Ground conjuncts: (atom, expected bool) pairs and counter comparisons.

    A negated wildcard atom expands into one (atom, False) conjunct per
    matching instantiation, i.e. an emptiness assertion.
    """
    out: list = []
    for c in op.precondition:
        if isinstance(c, PreAtom):
            pattern = tuple(binding.get(a, a) for a in c.args)
            for atom in expand_pattern(spec, universe, c.pred, pattern):
                out.append(("bool", atom, not c.negated))
        else:
            assert isinstance(c, PreCmp)
            args = tuple(binding.get(a, a) for a in c.args)
            out.append(("cmp", (c.pred, args), c.op, c.value))
    return out


def precondition_satisfied(state: SymbolicState, ground_pre: list) -> bool:
    for c in ground_pre:
        if c[0] == "bool":
            if state.booleans[c[1]] != c[2]:
                return False
        else:
            if not _CMP[c[2]](state.numerics[c[1]], c[3]):
                return False
    return True


def precondition_atoms(ground_pre: list) -> set[GroundAtom]:
    return {c[1] for c in ground_pre}


# ---------------------------------------------------------------------------
# Valid-state enumeration
# ---------------------------------------------------------------------------


def enumerate_valid_states(
    spec: AppSpec,
    universe: Universe,
    constraint: list | None = None,
    max_numeric: int = DEFAULT_NUMERIC_WINDOW,
    instances: list[GroundInstance] | None = None,
):
    """Yield every state satisfying the grounded invariant and the optional
    ground precondition constraint, in lexicographic atom order.

    Counter atoms range over [0, max_numeric].  This is the direct,
    hand-auditable enumeration; the conflict detector uses a restricted
    internal search cross-checked against this one.
    """
    booleans, numerics = ground_atoms(spec, universe)
    if instances is None:
        instances = ground_invariant(spec, universe)
    constraint = constraint or []
    for bool_vals in itertools.product((False, True), repeat=len(booleans)):
        partial = dict(zip(booleans, bool_vals))
        for num_vals in itertools.product(range(max_numeric + 1), repeat=len(numerics)):
            state = SymbolicState(dict(partial), dict(zip(numerics, num_vals)))
            if not precondition_satisfied(state, constraint):
                continue
            if not invariant_holds(spec, universe, state, instances):
                continue
            yield state


# ---------------------------------------------------------------------------
# Connected components of the grounded invariant (used by the detector to
# restrict enumeration to the atoms that can influence a given pair).
# ---------------------------------------------------------------------------


@dataclass
class Grounding:
    """Grounded invariant plus connectivity indexes, cached per universe."""

    spec: AppSpec
    universe: Universe
    instances: list[GroundInstance]
    by_atom: dict[GroundAtom, list[int]]
    booleans: list[GroundAtom]
    numerics: list[GroundAtom]

    @staticmethod
    def build(spec: AppSpec, universe: Universe) -> "Grounding":
        instances = ground_invariant(spec, universe)
        by_atom: dict[GroundAtom, list[int]] = {}
        for i, inst in enumerate(instances):
            for atom in inst.atoms:
                by_atom.setdefault(atom, []).append(i)
        booleans, numerics = ground_atoms(spec, universe)
        return Grounding(spec, universe, instances, by_atom, booleans, numerics)

    def closure(self, seed: set[GroundAtom]) -> tuple[set[GroundAtom], list[int]]:
        """Close a set of atoms under clause-instance connectivity.

        Returns the closed atom set and the indices of every instance whose
        atoms fall entirely inside it.
        """
        atoms = set(seed)
        used: set[int] = set()
        frontier = list(seed)
        while frontier:
            atom = frontier.pop()
            for idx in self.by_atom.get(atom, ()):
                if idx in used:
                    continue
                used.add(idx)
                for a in self.instances[idx].atoms:
                    if a not in atoms:
                        atoms.add(a)
                        frontier.append(a)
        return atoms, sorted(used)
