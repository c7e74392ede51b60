"""Canonical text rendering of application specs.

print_spec is the inverse of parse_spec: parsing the output yields a
structurally equal spec.  Effects introduced by a repair carry a trailing
`# added by IPA` marker, which the parser reads back.
"""

from __future__ import annotations

from .model import (
    ADD_WINS,
    And,
    AppSpec,
    Atom,
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
from .parser import REPAIR_MARK

_PRECEDENCE = {Implies: 1, Or: 2, And: 3, Not: 4}


def _render(f: Formula, parent_prec: int = 0) -> str:
    if isinstance(f, Atom):
        return f"{f.pred}({', '.join(f.args)})"
    if isinstance(f, Cmp):
        return f"{_render_num(f.lhs)} {f.op} {_render_num(f.rhs)}"
    prec = _PRECEDENCE[type(f)]
    if isinstance(f, Not):
        text = f"!{_render(f.arg, prec)}"
    elif isinstance(f, And):
        text = " && ".join(_render(a, prec) for a in f.args)
    elif isinstance(f, Or):
        text = " || ".join(_render(a, prec) for a in f.args)
    else:
        # Right associative: the right side may repeat at equal precedence.
        text = f"{_render(f.lhs, prec + 1)} => {_render(f.rhs, prec)}"
    if prec < parent_prec:
        return f"({text})"
    return text


def _render_num(t) -> str:
    if isinstance(t, IntConst):
        return str(t.value)
    if isinstance(t, NumAtom):
        return f"{t.pred}({', '.join(t.args)})"
    return f"#{t.pred}({', '.join(t.pattern)})"


def _render_invariant(inv: InvariantClause) -> str:
    if inv.unique_pred is not None:
        return f"invariant unique {inv.unique_pred}"
    if inv.sequential_counter is not None:
        return f"invariant sequential {inv.sequential_counter} counts {inv.sequential_pred}"
    assert inv.body is not None
    if inv.quantified_vars:
        qv = ", ".join(f"{n}: {s}" for n, s in inv.quantified_vars)
        return f"invariant forall {qv} :: {_render(inv.body)}"
    return f"invariant {_render(inv.body)}"


def _render_effect(e: Effect) -> str:
    args = ", ".join(e.args)
    if e.action == "setTrue":
        body = f"effect {e.pred}({args}) := true;"
    elif e.action == "setFalse":
        body = f"effect {e.pred}({args}) := false;"
    elif e.action == "increment":
        body = f"effect {e.pred}({args}) += {e.amount};"
    else:
        body = f"effect {e.pred}({args}) -= {e.amount};"
    if e.added_by_repair:
        return f"{body}  {REPAIR_MARK}"
    return body


def _render_pre(p) -> str:
    if isinstance(p, PreCmp):
        return f"{p.pred}({', '.join(p.args)}) {p.op} {p.value}"
    assert isinstance(p, PreAtom)
    neg = "!" if p.negated else ""
    return f"{neg}{p.pred}({', '.join(p.args)})"


def _render_op(op: OperationSpec, keyword: str) -> list[str]:
    params = ", ".join(f"{n}: {s}" for n, s in op.params)
    lines = [f"{keyword} {op.name}({params}) {{"]
    if op.precondition:
        guard = "when" if keyword == "compensation" else "pre"
        lines.append(f"  {guard} {', '.join(_render_pre(p) for p in op.precondition)};")
    for e in op.effects:
        lines.append(f"  {_render_effect(e)}")
    if op.triggers:
        lines.append(f"  triggers {', '.join(op.triggers)};")
    lines.append("}")
    return lines


def print_spec(spec: AppSpec) -> str:
    out: list[str] = [f"app {spec.name}", ""]
    for s in spec.sorts:
        out.append(f"sort {s.name}")
    if spec.sorts:
        out.append("")
    for p in spec.predicates:
        names = p.arg_names if len(p.arg_names) == len(p.arg_sorts) else tuple(
            f"x{i}" for i in range(len(p.arg_sorts))
        )
        args = ", ".join(f"{n}: {s}" for n, s in zip(names, p.arg_sorts))
        if p.kind == "boolean":
            out.append(f"predicate {p.name}({args})")
        else:
            line = f"counter {p.name}({args})"
            if p.sizeof_pred is not None:
                pattern = ", ".join(p.sizeof_pattern)
                line += f" sizeof {p.sizeof_pred}({pattern})"
                if p.marker_pred is not None:
                    line += f" marking {p.marker_pred}"
            out.append(line)
    if spec.predicates:
        out.append("")
    for inv in spec.invariants:
        out.append(_render_invariant(inv))
    if spec.invariants:
        out.append("")
    for r in spec.convergence_rules:
        policy = "add-wins" if r.policy == ADD_WINS else "rem-wins"
        out.append(f"resolution {r.pred}: {policy}")
    if spec.convergence_rules:
        out.append("")
    for op in spec.operations:
        out.extend(_render_op(op, "op"))
        out.append("")
    for comp in spec.compensations:
        out.extend(_render_op(comp, "compensation"))
        out.append("")
    for a, b in spec.flagged_pairs:
        out.append(f"flag {a} {b}")
    while out and out[-1] == "":
        out.pop()
    return "\n".join(out) + "\n"
