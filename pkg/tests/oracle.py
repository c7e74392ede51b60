"""Independent brute-force conflict oracle.

Everything here is deliberately the dumbest correct implementation:
quantifiers expand by plain product, states enumerate over every ground
atom, formulas evaluate by recursion over the AST, and concurrent effects
merge by a literal reading of the convergence rules.  It shares only the
spec data structures with the engine under test, never its search,
closure, symmetry, or compiled-evaluation machinery.
"""

from __future__ import annotations

import itertools

from ipa.model import (
    ADD_WINS,
    COMPENSATABLE_TAGS,
    WILDCARD,
    And,
    AppSpec,
    Atom,
    CardTerm,
    Cmp,
    Implies,
    IntConst,
    Not,
    NumAtom,
    OperationSpec,
    Or,
    PreAtom,
    PreCmp,
)


def all_atoms(spec: AppSpec, consts: dict[str, list[str]]):
    booleans, numerics = [], []
    for p in spec.predicates:
        for combo in itertools.product(*[consts[s] for s in p.arg_sorts]):
            (booleans if p.kind == "boolean" else numerics).append((p.name, combo))
    return booleans, numerics


def expand(spec: AppSpec, consts, pred: str, pattern):
    decl = spec.predicate(pred)
    domains = [
        consts[s] if pattern[i] == WILDCARD else [pattern[i]]
        for i, s in enumerate(decl.arg_sorts)
    ]
    return [(pred, combo) for combo in itertools.product(*domains)]


def ground_clauses(spec: AppSpec, consts):
    """(clause_index, class_tag, ground formula) triples."""
    out = []
    for idx, inv in enumerate(spec.invariants):
        if inv.body is None:
            continue
        names = [n for n, _ in inv.quantified_vars]
        for combo in itertools.product(*[consts[s] for _, s in inv.quantified_vars]):
            env = dict(zip(names, combo))
            out.append((idx, inv.class_tag, _subst(inv.body, env)))
    return out


def _subst(f, env):
    if isinstance(f, Atom):
        return Atom(f.pred, tuple(env.get(a, a) for a in f.args))
    if isinstance(f, Not):
        return Not(_subst(f.arg, env))
    if isinstance(f, And):
        return And(tuple(_subst(g, env) for g in f.args))
    if isinstance(f, Or):
        return Or(tuple(_subst(g, env) for g in f.args))
    if isinstance(f, Implies):
        return Implies(_subst(f.lhs, env), _subst(f.rhs, env))
    if isinstance(f, Cmp):
        return Cmp(_subst_num(f.lhs, env), f.op, _subst_num(f.rhs, env))
    raise TypeError(f)


def _subst_num(t, env):
    if isinstance(t, NumAtom):
        return NumAtom(t.pred, tuple(env.get(a, a) for a in t.args))
    if isinstance(t, CardTerm):
        return CardTerm(t.pred, tuple(env.get(a, a) for a in t.pattern))
    return t


def eval_formula(spec, consts, f, bools, nums) -> bool:
    if isinstance(f, Atom):
        return bools[(f.pred, f.args)]
    if isinstance(f, Not):
        return not eval_formula(spec, consts, f.arg, bools, nums)
    if isinstance(f, And):
        return all(eval_formula(spec, consts, g, bools, nums) for g in f.args)
    if isinstance(f, Or):
        return any(eval_formula(spec, consts, g, bools, nums) for g in f.args)
    if isinstance(f, Implies):
        return (not eval_formula(spec, consts, f.lhs, bools, nums)) or eval_formula(
            spec, consts, f.rhs, bools, nums
        )
    if isinstance(f, Cmp):
        lhs = _eval_num(spec, consts, f.lhs, bools, nums)
        rhs = _eval_num(spec, consts, f.rhs, bools, nums)
        return {
            "<=": lhs <= rhs,
            ">=": lhs >= rhs,
            "<": lhs < rhs,
            ">": lhs > rhs,
            "=": lhs == rhs,
        }[f.op]
    raise TypeError(f)


def _eval_num(spec, consts, t, bools, nums):
    if isinstance(t, IntConst):
        return t.value
    if isinstance(t, NumAtom):
        return nums[(t.pred, t.args)]
    if isinstance(t, CardTerm):
        return sum(1 for a in expand(spec, consts, t.pred, t.pattern) if bools[a])
    raise TypeError(t)


def op_effects(spec, consts, op: OperationSpec, binding):
    """Ground (atom, action, amount) triples, wildcards expanded."""
    out = []
    for e in op.effects:
        pattern = tuple(binding.get(a, a) for a in e.args)
        for atom in expand(spec, consts, e.pred, pattern):
            out.append((atom, e.action, e.amount))
    return out


def merge_effects(spec, one, other):
    """Literal convergence-rule merge: opposing boolean assignments resolve
    to true under add-wins and false under rem-wins; deltas add up."""
    rules = {r.pred: r.policy for r in spec.convergence_rules}
    boolean: dict = {}
    delta: dict = {}
    for atom, action, amount in one + other:
        if action == "setTrue":
            boolean.setdefault(atom, set()).add(True)
        elif action == "setFalse":
            boolean.setdefault(atom, set()).add(False)
        elif action == "increment":
            delta[atom] = delta.get(atom, 0) + amount
        else:
            delta[atom] = delta.get(atom, 0) - amount
    resolved = {}
    for atom, values in boolean.items():
        if len(values) == 1:
            resolved[atom] = next(iter(values))
        else:
            resolved[atom] = rules[atom[0]] == ADD_WINS
    return resolved, delta


def pre_bool_holds(spec, consts, op, binding, bools) -> bool:
    """Just the boolean conjuncts; lets the state scan skip numeric
    sub-products for states that already fail."""
    for c in op.precondition:
        if not isinstance(c, PreAtom):
            continue
        pattern = tuple(binding.get(a, a) for a in c.args)
        atoms = expand(spec, consts, c.pred, pattern)
        if c.negated:
            if any(bools[a] for a in atoms):
                return False
        elif not all(bools[a] for a in atoms):
            return False
    return True


def pre_holds(spec, consts, op, binding, bools, nums) -> bool:
    for c in op.precondition:
        if isinstance(c, PreAtom):
            pattern = tuple(binding.get(a, a) for a in c.args)
            atoms = expand(spec, consts, c.pred, pattern)
            if c.negated:
                if any(bools[a] for a in atoms):
                    return False
            elif not all(bools[a] for a in atoms):
                return False
        else:
            assert isinstance(c, PreCmp)
            value = nums[(c.pred, tuple(binding.get(a, a) for a in c.args))]
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


def boolean_conflict(
    spec: AppSpec,
    consts: dict[str, list[str]],
    op_a: OperationSpec,
    op_b: OperationSpec,
    numeric_window: int,
) -> bool:
    """Exhaustive verdict: does any invariant-valid initial state satisfying
    both preconditions produce a merged state violating a boolean-channel
    clause?  Numeric-bound and aggregation clauses go to the compensation
    channel and do not count."""
    booleans, numerics = all_atoms(spec, consts)
    clauses = ground_clauses(spec, consts)
    bindings_a = list(
        itertools.product(*[consts[s] for _, s in op_a.params])
    )
    bindings_b = list(
        itertools.product(*[consts[s] for _, s in op_b.params])
    )
    names_a = [n for n, _ in op_a.params]
    names_b = [n for n, _ in op_b.params]
    for combo_a in bindings_a:
        for combo_b in bindings_b:
            bind_a = dict(zip(names_a, combo_a))
            bind_b = dict(zip(names_b, combo_b))
            eff_a = op_effects(spec, consts, op_a, bind_a)
            eff_b = op_effects(spec, consts, op_b, bind_b)
            resolved, delta = merge_effects(spec, eff_a, eff_b)
            for bool_vals in itertools.product((False, True), repeat=len(booleans)):
                bools = dict(zip(booleans, bool_vals))
                if not pre_bool_holds(spec, consts, op_a, bind_a, bools):
                    continue
                if not pre_bool_holds(spec, consts, op_b, bind_b, bools):
                    continue
                for num_vals in itertools.product(
                    range(numeric_window + 1), repeat=len(numerics)
                ):
                    nums = dict(zip(numerics, num_vals))
                    if not pre_holds(spec, consts, op_a, bind_a, bools, nums):
                        continue
                    if not pre_holds(spec, consts, op_b, bind_b, bools, nums):
                        continue
                    if not all(
                        eval_formula(spec, consts, f, bools, nums) for _, _, f in clauses
                    ):
                        continue
                    new_bools = dict(bools)
                    new_bools.update(resolved)
                    new_nums = dict(nums)
                    for atom, d in delta.items():
                        new_nums[atom] += d
                    for _, tag, f in clauses:
                        if tag in COMPENSATABLE_TAGS:
                            continue
                        if not eval_formula(spec, consts, f, new_bools, new_nums):
                            return True
    return False
