"""Pairwise conflict detection.

Two operations conflict when some invariant-valid state satisfying both
preconditions is driven invalid by the merge of their concurrent effects
(with per-predicate convergence rules deciding opposing assignments).
The detector searches every parameter binding over the universe and every
admissible initial state, and reports a minimal counterexample: the
four-state diamond of initial state, the two branch states, and the
merged state.

Violations of numeric-bound and aggregation clauses are not boolean
conflicts; they are reported separately as compensation findings and
handled by the repair engine's compensation path.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .logic import (
    DEFAULT_NUMERIC_WINDOW,
    GroundAtom,
    GroundEffect,
    Grounding,
    GroundInstance,
    SymbolicState,
    Universe,
    apply_effects,
    ground_effects,
    ground_precondition,
    merge_concurrent_effects,
    precondition_atoms,
)
from .model import COMPENSATABLE_TAGS, AppSpec, OperationSpec

BOOLEAN_CONFLICT = "boolean"
COMPENSATION_REQUIRED = "compensationRequired"


@dataclass(frozen=True)
class BoundOp:
    """An operation together with chosen ground arguments."""

    op: OperationSpec
    binding: tuple[tuple[str, str], ...]

    def describe(self) -> str:
        args = ", ".join(c for _, c in self.binding)
        return f"{self.op.name}({args})"


@dataclass
class ConflictReport:
    """A counterexample: replaying both branches and the merge from
    initial_state reproduces merged_state and its violations."""

    op_a: BoundOp
    op_b: BoundOp
    initial_state: SymbolicState
    state_after_a: SymbolicState
    state_after_b: SymbolicState
    merged_state: SymbolicState
    violated: list[GroundInstance]
    compensation_violated: list[GroundInstance] = field(default_factory=list)
    kind: str = BOOLEAN_CONFLICT

    def pair_names(self) -> tuple[str, str]:
        return (self.op_a.op.name, self.op_b.op.name)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "opA": {"name": self.op_a.op.name, "args": dict(self.op_a.binding)},
            "opB": {"name": self.op_b.op.name, "args": dict(self.op_b.binding)},
            "initialState": self.initial_state.to_json(),
            "stateAfterA": self.state_after_a.to_json(),
            "stateAfterB": self.state_after_b.to_json(),
            "mergedState": self.merged_state.to_json(),
            "violatedClauses": [i.describe() for i in self.violated],
            "compensationClauses": [i.describe() for i in self.compensation_violated],
        }


@dataclass
class PairResult:
    report: ConflictReport | None
    # clause index -> witness report for numeric violations of that clause
    compensation: dict[int, ConflictReport]


@dataclass
class DetectionResult:
    reports: list[ConflictReport]
    compensation_findings: dict[int, list[ConflictReport]]
    checked_pairs: list[tuple[str, str]]
    skipped_pairs: list[tuple[str, str]]

    def conflicting_pairs(self) -> list[tuple[str, str]]:
        return [r.pair_names() for r in self.reports]


def _bindings(op: OperationSpec, universe: Universe):
    domains = [universe.constants(sort) for _, sort in op.params]
    names = [n for n, _ in op.params]
    for combo in itertools.product(*domains):
        yield tuple(zip(names, combo))


class ConflictDetector:
    """Caches the grounded invariant for one (spec, universe) pair.

    Operations are passed explicitly so repaired candidates can be checked
    without rebuilding the grounding.
    """

    def __init__(
        self,
        spec: AppSpec,
        universe: Universe | None = None,
        numeric_window: int = DEFAULT_NUMERIC_WINDOW,
    ):
        self.spec = spec
        self.universe = universe or Universe.uniform(spec)
        self.numeric_window = numeric_window
        self.grounding = Grounding.build(spec, self.universe)
        self.rules = {r.pred: r.policy for r in spec.convergence_rules}
        self._completion = self._complete_outside_components()
        # Constants within a sort are interchangeable as long as nothing in
        # the grounding distinguishes them; the all-false/zero completion is
        # the only potentially asymmetric piece, so a uniform completion
        # licenses checking one representative binding per symmetry orbit.
        self._symmetric = self._completion is not None and all(
            v is False or v == 0 for v in self._completion.values()
        )
        # Pair results keyed by the (frozen) operation values, so repair
        # rounds only pay for pairs whose operations actually changed.
        self._memo: dict[tuple[OperationSpec, OperationSpec], PairResult] = {}

    # -- component completion ------------------------------------------------

    def _complete_outside_components(self) -> dict[GroundAtom, object] | None:
        """A satisfying default for every atom, component by component.

        Atoms outside a pair's closure are pinned to these values, which
        keeps the full initial state invariant-valid without enumerating
        them.  Returns None when some component is unsatisfiable (the spec
        then has no valid states at all).
        """
        g = self.grounding
        comp_of: dict[GroundAtom, int] = {}
        comps: list[set[GroundAtom]] = []
        for atom in itertools.chain(g.booleans, g.numerics):
            if atom in comp_of:
                continue
            atoms, _ = g.closure({atom})
            cid = len(comps)
            comps.append(atoms)
            for a in atoms:
                comp_of[a] = cid
        defaults: dict[GroundAtom, object] = {}
        numeric_set = set(g.numerics)
        for atoms in comps:
            bools = sorted(a for a in atoms if a not in numeric_set)
            nums = sorted(a for a in atoms if a in numeric_set)
            _, insts = g.closure(set(atoms))
            found = self._min_satisfying(bools, nums, insts)
            if found is None:
                return None
            defaults.update(found)
        return defaults

    def _min_satisfying(self, bools, nums, instance_indices):
        g = self.grounding
        fns = [g.instances[i].holds_in for i in instance_indices]
        for true_count in range(len(bools) + 1):
            for true_set in itertools.combinations(range(len(bools)), true_count):
                bool_assign = {a: (i in true_set) for i, a in enumerate(bools)}
                for num_vals in itertools.product(range(self.numeric_window + 1), repeat=len(nums)):
                    assign: dict[GroundAtom, object] = dict(bool_assign)
                    assign.update(zip(nums, num_vals))
                    if all(fn(assign) for fn in fns):
                        return assign
        return None

    # -- pair checking ---------------------------------------------------------

    def check_pair(self, op_a: OperationSpec, op_b: OperationSpec) -> PairResult:
        """Search all bindings and admissible states for a violating merge.

        The returned boolean-conflict witness is the one with the fewest
        true atoms (ties broken by binding order); numeric violations are
        collected per clause.
        """
        key = (op_a, op_b)
        cached = self._memo.get(key)
        if cached is not None:
            return cached
        result = self._check_pair_uncached(op_a, op_b)
        self._memo[key] = result
        return result

    def _check_pair_uncached(self, op_a: OperationSpec, op_b: OperationSpec) -> PairResult:
        if self._completion is None:
            return PairResult(None, {})
        best: tuple[tuple, ConflictReport] | None = None
        compensation: dict[int, ConflictReport] = {}
        self_pair = op_a.name == op_b.name
        for bind_a in _bindings(op_a, self.universe):
            for bind_b in _bindings(op_b, self.universe):
                if self_pair and bind_b < bind_a:
                    continue  # unordered pair: mirror bindings are identical
                if self._symmetric and not self._canonical(op_a, bind_a, op_b, bind_b):
                    continue
                found = self._check_binding(op_a, bind_a, op_b, bind_b)
                if found is None:
                    continue
                rank, report = found
                for inst in report.compensation_violated:
                    compensation.setdefault(inst.clause_index, report)
                if report.violated and (best is None or rank < best[0]):
                    best = (rank, report)
        return PairResult(best[1] if best else None, compensation)

    def _canonical(self, op_a, bind_a, op_b, bind_b) -> bool:
        """Is this the orbit representative?  For each sort, constants must
        first appear in universe order across the combined binding."""
        sorts_a, sorts_b = dict(op_a.params), dict(op_b.params)
        seen: dict[str, list[str]] = {}
        for binding, sorts in ((bind_a, sorts_a), (bind_b, sorts_b)):
            for name, const in binding:
                order = seen.setdefault(sorts[name], [])
                if const in order:
                    continue
                expected = self.universe.constants(sorts[name])[len(order)]
                if const != expected:
                    return False
                order.append(const)
        return True

    def _check_binding(self, op_a, bind_a, op_b, bind_b):
        spec, u, g = self.spec, self.universe, self.grounding
        env_a, env_b = dict(bind_a), dict(bind_b)
        eff_a = ground_effects(spec, u, op_a, env_a)
        eff_b = ground_effects(spec, u, op_b, env_b)
        merged = merge_concurrent_effects(spec, eff_a, eff_b, self.rules)
        if not merged:
            return None
        pre_a = ground_precondition(spec, u, op_a, env_a)
        pre_b = ground_precondition(spec, u, op_b, env_b)

        numeric_set = set(g.numerics)
        # Forced booleans and admissible counter ranges from the preconditions.
        forced: dict[GroundAtom, bool] = {}
        ranges: dict[GroundAtom, tuple[int, int]] = {}
        for c in pre_a + pre_b:
            if c[0] == "bool":
                if forced.setdefault(c[1], c[2]) != c[2]:
                    return None  # contradictory preconditions: no admissible state
            else:
                lo, hi = ranges.get(c[1], (0, self.numeric_window))
                lo, hi = _narrow(lo, hi, c[2], c[3])
                if lo > hi:
                    return None
                ranges[c[1]] = (lo, hi)

        touched = {e.atom for e in merged}
        seed = set(touched)
        seed.update(precondition_atoms(pre_a))
        seed.update(precondition_atoms(pre_b))
        closure_atoms, instance_idx = g.closure(seed)
        instances = [g.instances[i] for i in instance_idx]
        risk = [inst for inst in instances if inst.atoms & touched]
        if not risk:
            return None

        free_bools = sorted(
            a for a in closure_atoms if a not in numeric_set and a not in forced
        )
        closure_nums = sorted(a for a in closure_atoms if a in numeric_set)
        num_domains = [
            range(*_bump(ranges.get(a, (0, self.numeric_window)))) for a in closure_nums
        ]

        assert self._completion is not None
        fixed_true = sum(
            1 for a, v in forced.items() if v
        ) + sum(
            1
            for a, v in self._completion.items()
            if a not in closure_atoms and a not in numeric_set and v is True
        )
        valid_fns = [inst.holds_in for inst in instances]
        risk_checks = [
            (inst, inst.holds_in, inst.clause.class_tag in COMPENSATABLE_TAGS)
            for inst in risk
        ]

        # The working assignment covers closure atoms only: every instance
        # the enumeration evaluates lives entirely inside the closure.
        base: dict[GroundAtom, object] = dict(forced)

        # Fewest-true-atoms first, so the first witness is the minimal one.
        for true_count in range(len(free_bools) + 1):
            for true_set in itertools.combinations(free_bools, true_count):
                assign = dict(base)
                for a in free_bools:
                    assign[a] = False
                for a in true_set:
                    assign[a] = True
                for num_vals in itertools.product(*num_domains):
                    assign.update(zip(closure_nums, num_vals))
                    if not all(fn(assign) for fn in valid_fns):
                        continue
                    merged_assign = _apply_to_assign(assign, merged)
                    bool_viol: list[GroundInstance] = []
                    num_viol: list[GroundInstance] = []
                    for inst, fn, compensatable in risk_checks:
                        if fn(merged_assign):
                            continue
                        if compensatable:
                            num_viol.append(inst)
                        else:
                            bool_viol.append(inst)
                    if not bool_viol and not num_viol:
                        continue
                    report = self._build_report(
                        op_a, bind_a, op_b, bind_b, assign, eff_a, eff_b, merged,
                        bool_viol, num_viol,
                    )
                    rank = (fixed_true + true_count, tuple(bind_a), tuple(bind_b), num_vals)
                    return rank, report
        return None

    def _build_report(
        self, op_a, bind_a, op_b, bind_b, assign, eff_a, eff_b, merged, bool_viol, num_viol
    ) -> ConflictReport:
        # Extend the closure assignment to a full state with the
        # precomputed satisfying defaults for untouched components.
        assert self._completion is not None
        full = {a: v for a, v in self._completion.items() if a not in assign}
        full.update(assign)
        numeric_set = set(self.grounding.numerics)
        initial = SymbolicState(
            {a: bool(v) for a, v in full.items() if a not in numeric_set},
            {a: int(v) for a, v in full.items() if a in numeric_set},  # type: ignore[arg-type]
        )
        return ConflictReport(
            op_a=BoundOp(op_a, bind_a),
            op_b=BoundOp(op_b, bind_b),
            initial_state=initial,
            state_after_a=apply_effects(initial, eff_a),
            state_after_b=apply_effects(initial, eff_b),
            merged_state=apply_effects(initial, merged),
            violated=bool_viol,
            compensation_violated=num_viol,
            kind=BOOLEAN_CONFLICT if bool_viol else COMPENSATION_REQUIRED,
        )

    # -- whole-spec sweep ------------------------------------------------------

    def find_conflicting_pairs(
        self,
        operations: tuple[OperationSpec, ...] | None = None,
        ignored: set[tuple[str, str]] | None = None,
    ) -> DetectionResult:
        """Check every unordered operation pair, self-pairs included, in
        declaration order; `ignored` pairs (flagged unsolvable) are skipped."""
        ops = operations if operations is not None else self.spec.operations
        ignored = ignored or set()
        reports: list[ConflictReport] = []
        findings: dict[int, list[ConflictReport]] = {}
        checked: list[tuple[str, str]] = []
        skipped: list[tuple[str, str]] = []
        for i, op_a in enumerate(ops):
            for op_b in ops[i:]:
                key = (op_a.name, op_b.name)
                if key in ignored or (key[1], key[0]) in ignored:
                    skipped.append(key)
                    continue
                checked.append(key)
                result = self.check_pair(op_a, op_b)
                if result.report is not None:
                    reports.append(result.report)
                for clause_idx, witness in result.compensation.items():
                    findings.setdefault(clause_idx, []).append(witness)
        return DetectionResult(reports, findings, checked, skipped)


def _apply_to_assign(
    assign: dict[GroundAtom, object], effects: list[GroundEffect]
) -> dict[GroundAtom, object]:
    new = dict(assign)
    for e in effects:
        if e.action == "setTrue":
            new[e.atom] = True
        elif e.action == "setFalse":
            new[e.atom] = False
        elif e.action == "increment":
            new[e.atom] = int(new[e.atom]) + e.amount  # type: ignore[call-overload]
        else:
            new[e.atom] = int(new[e.atom]) - e.amount  # type: ignore[call-overload]
    return new


def _narrow(lo: int, hi: int, op: str, value: int) -> tuple[int, int]:
    if op == "<=":
        hi = min(hi, value)
    elif op == "<":
        hi = min(hi, value - 1)
    elif op == ">=":
        lo = max(lo, value)
    elif op == ">":
        lo = max(lo, value + 1)
    else:
        lo, hi = max(lo, value), min(hi, value)
    return lo, hi


def _bump(pair: tuple[int, int]) -> tuple[int, int]:
    return pair[0], pair[1] + 1
