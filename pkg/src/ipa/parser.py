"""Parser for the `.ipa` application-specification language.

The language is line oriented: one declaration per line, with `op` and
`compensation` blocks spanning multiple lines between braces.  `#` starts
a comment, except for the `# added by IPA` marker on effect lines, which
is part of the format and survives a parse/print round trip.  The full
grammar ships in docs/spec-grammar.ebnf.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .model import (
    ADD_WINS,
    REM_WINS,
    WILDCARD,
    And,
    AppSpec,
    Atom,
    CardTerm,
    Cmp,
    ConvergenceRule,
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
    PredicateDecl,
    Sort,
    classify_all,
    validate_spec,
)

REPAIR_MARK = "# added by IPA"

_IDENT = r"[A-Za-z_][A-Za-z0-9_]*"
_IDENT_RE = re.compile(_IDENT)


@dataclass(frozen=True)
class SourceLocation:
    file: str
    line: int  # 1-based
    column: int = 1

    def __str__(self) -> str:
        return f"{self.file}:{self.line}:{self.column}"


@dataclass(frozen=True)
class ParseError:
    location: SourceLocation
    message: str

    def __str__(self) -> str:
        return f"{self.location}: {self.message}"


class SpecSyntaxError(Exception):
    """Raised by parse_spec when the text cannot be turned into a spec."""

    def __init__(self, errors: list[ParseError]):
        super().__init__("; ".join(str(e) for e in errors))
        self.errors = errors


def _strip_comment(line: str) -> str:
    # The repair marker is data, not commentary; anything else after '#' goes.
    if REPAIR_MARK in line:
        head, _, _ = line.partition(REPAIR_MARK)
        return head.rstrip() + "  " + REPAIR_MARK
    return line.partition("#")[0].rstrip()


class _Parser:
    def __init__(self, text: str, filename: str):
        self.lines = text.split("\n")
        self.filename = filename
        self.errors: list[ParseError] = []
        self.idx = 0

        self.name = ""
        self.sorts: list[Sort] = []
        self.predicates: list[PredicateDecl] = []
        self.invariants: list[InvariantClause] = []
        self.rules: list[ConvergenceRule] = []
        self.operations: list[OperationSpec] = []
        self.compensations: list[OperationSpec] = []
        self.flagged: list[tuple[str, str]] = []

    # -- error helpers ----------------------------------------------------

    def err(self, line_no: int, message: str, column: int = 1) -> None:
        self.errors.append(ParseError(SourceLocation(self.filename, line_no, column), message))

    # -- driver ------------------------------------------------------------

    def parse(self) -> AppSpec | None:
        header_seen = False
        while self.idx < len(self.lines):
            raw = self.lines[self.idx]
            line_no = self.idx + 1
            self.idx += 1
            line = _strip_comment(raw).strip()
            if not line:
                continue
            if not header_seen:
                m = re.fullmatch(rf"app\s+({_IDENT})", line)
                if not m:
                    self.err(line_no, "expected 'app' header")
                    return None
                self.name = m.group(1)
                header_seen = True
                continue
            self.decl(line, line_no)
        if not header_seen:
            self.err(1, "expected 'app' header")
            return None
        spec = AppSpec(
            name=self.name,
            sorts=tuple(self.sorts),
            predicates=tuple(self.predicates),
            invariants=tuple(self.invariants),
            operations=tuple(self.operations),
            convergence_rules=tuple(self.rules),
            compensations=tuple(self.compensations),
            flagged_pairs=tuple(self.flagged),
        )
        return classify_all(spec)

    def decl(self, line: str, line_no: int) -> None:
        word = line.split(None, 1)[0]
        handler = {
            "sort": self.decl_sort,
            "predicate": self.decl_predicate,
            "counter": self.decl_counter,
            "invariant": self.decl_invariant,
            "resolution": self.decl_resolution,
            "op": self.decl_op,
            "compensation": self.decl_compensation,
            "flag": self.decl_flag,
        }.get(word)
        if handler is None:
            self.err(line_no, f"unknown declaration '{word}'")
            return
        handler(line, line_no)

    # -- simple declarations ------------------------------------------------

    def decl_sort(self, line: str, line_no: int) -> None:
        m = re.fullmatch(rf"sort\s+({_IDENT})", line)
        if not m:
            self.err(line_no, "expected 'sort <Name>'")
            return
        self.sorts.append(Sort(m.group(1)))

    def _parse_params(self, text: str, line_no: int) -> tuple[tuple[str, str], ...] | None:
        text = text.strip()
        if not text:
            return ()
        params: list[tuple[str, str]] = []
        for part in text.split(","):
            m = re.fullmatch(rf"\s*({_IDENT})\s*:\s*({_IDENT})\s*", part)
            if not m:
                self.err(line_no, f"bad parameter '{part.strip()}'")
                return None
            params.append((m.group(1), m.group(2)))
        return tuple(params)

    def decl_predicate(self, line: str, line_no: int) -> None:
        m = re.fullmatch(rf"predicate\s+({_IDENT})\s*\((.*?)\)", line)
        if not m:
            self.err(line_no, "expected 'predicate name(x: Sort, ...)'")
            return
        params = self._parse_params(m.group(2), line_no)
        if params is None:
            return
        self.predicates.append(
            PredicateDecl(
                m.group(1),
                tuple(s for _, s in params),
                "boolean",
                arg_names=tuple(n for n, _ in params),
            )
        )

    def decl_counter(self, line: str, line_no: int) -> None:
        m = re.fullmatch(
            rf"counter\s+({_IDENT})\s*\((.*?)\)"
            rf"(?:\s+sizeof\s+({_IDENT})\s*\((.*?)\))?"
            rf"(?:\s+marking\s+({_IDENT}))?",
            line,
        )
        if not m:
            self.err(line_no, "expected 'counter name(x: Sort, ...)'")
            return
        params = self._parse_params(m.group(2), line_no)
        if params is None:
            return
        sizeof_pred = m.group(3)
        pattern: tuple[str, ...] = ()
        if sizeof_pred is not None:
            raw = [p.strip() for p in m.group(4).split(",")] if m.group(4).strip() else []
            names = {n for n, _ in params}
            for p in raw:
                if p != WILDCARD and p not in names:
                    self.err(line_no, f"sizeof pattern argument '{p}' is not a counter parameter")
            pattern = tuple(raw)
        if m.group(5) is not None and sizeof_pred is None:
            self.err(line_no, "'marking' requires a sizeof declaration")
            return
        self.predicates.append(
            PredicateDecl(
                m.group(1),
                tuple(s for _, s in params),
                "numeric",
                arg_names=tuple(n for n, _ in params),
                sizeof_pred=sizeof_pred,
                sizeof_pattern=pattern,
                marker_pred=m.group(5),
            )
        )

    def decl_resolution(self, line: str, line_no: int) -> None:
        m = re.fullmatch(rf"resolution\s+({_IDENT})\s*:\s*(add-wins|rem-wins)", line)
        if not m:
            self.err(line_no, "expected 'resolution pred: add-wins|rem-wins'")
            return
        pred = m.group(1)
        if any(r.pred == pred for r in self.rules):
            self.err(line_no, f"duplicate convergence rule for '{pred}'")
            return
        policy = ADD_WINS if m.group(2) == "add-wins" else REM_WINS
        self.rules.append(ConvergenceRule(pred, policy))

    def decl_flag(self, line: str, line_no: int) -> None:
        m = re.fullmatch(rf"flag\s+({_IDENT})\s+({_IDENT})", line)
        if not m:
            self.err(line_no, "expected 'flag opA opB'")
            return
        self.flagged.append((m.group(1), m.group(2)))

    # -- invariants -----------------------------------------------------------

    def decl_invariant(self, line: str, line_no: int) -> None:
        body = line[len("invariant"):].strip()
        m = re.fullmatch(rf"unique\s+({_IDENT})", body)
        if m:
            self.invariants.append(
                InvariantClause(quantified_vars=(), body=None, unique_pred=m.group(1))
            )
            return
        m = re.fullmatch(rf"sequential\s+({_IDENT})\s+counts\s+({_IDENT})", body)
        if m:
            counter, pred = m.group(1), m.group(2)
            arity = next((p.arity for p in self.predicates if p.name == pred), 0)
            clause = InvariantClause(
                quantified_vars=(),
                body=Cmp(NumAtom(counter, ()), "=", CardTerm(pred, (WILDCARD,) * arity)),
                sequential_counter=counter,
                sequential_pred=pred,
            )
            self.invariants.append(clause)
            return
        qvars: tuple[tuple[str, str], ...] = ()
        if body.startswith("forall"):
            head, sep, rest = body.partition("::")
            if not sep:
                self.err(line_no, "expected '::' after quantifier")
                return
            parsed = self._parse_params(head[len("forall"):], line_no)
            if parsed is None:
                return
            qvars = parsed
            body = rest.strip()
        formula = _FormulaParser(body, line_no, self).parse()
        if formula is None:
            return
        self.invariants.append(InvariantClause(quantified_vars=qvars, body=formula))

    # -- operations ------------------------------------------------------------

    def _collect_block(self, first_line: str, line_no: int) -> list[tuple[int, str]] | None:
        """Gather `stmt;` lines until the closing brace."""
        if not first_line.endswith("{"):
            self.err(line_no, "expected '{' at end of line")
            return None
        stmts: list[tuple[int, str]] = []
        while self.idx < len(self.lines):
            raw = self.lines[self.idx]
            inner_no = self.idx + 1
            self.idx += 1
            stripped = _strip_comment(raw).strip()
            if not stripped:
                continue
            if stripped == "}":
                return stmts
            if not stripped.endswith(";") and not stripped.endswith(REPAIR_MARK):
                self.err(inner_no, "expected ';' at end of statement")
                continue
            stmts.append((inner_no, stripped))
        self.err(line_no, "unterminated block")
        return None

    def _parse_effect(self, text: str, line_no: int) -> Effect | None:
        repaired = text.endswith(REPAIR_MARK)
        if repaired:
            text = text[: -len(REPAIR_MARK)].rstrip()
        text = text.rstrip(";").strip()
        m = re.fullmatch(
            rf"({_IDENT})\s*\((.*?)\)\s*(:=|\+=|-=)\s*(true|false|\d+)", text
        )
        if not m:
            self.err(line_no, f"bad effect '{text}'")
            return None
        args = tuple(a.strip() for a in m.group(2).split(",")) if m.group(2).strip() else ()
        op, value = m.group(3), m.group(4)
        if op == ":=":
            if value not in ("true", "false"):
                self.err(line_no, "boolean effect must assign true or false")
                return None
            action = "setTrue" if value == "true" else "setFalse"
            return Effect(m.group(1), args, action, added_by_repair=repaired)
        if value in ("true", "false"):
            self.err(line_no, "counter effect must use an integer amount")
            return None
        action = "increment" if op == "+=" else "decrement"
        return Effect(m.group(1), args, action, amount=int(value), added_by_repair=repaired)

    def _parse_pre(self, text: str, line_no: int) -> list[PreAtom | PreCmp] | None:
        out: list[PreAtom | PreCmp] = []
        for part in _split_top_commas(text):
            part = part.strip()
            m = re.fullmatch(rf"({_IDENT})\s*\((.*?)\)\s*(<=|>=|<|>|=)\s*(-?\d+)", part)
            if m:
                args = tuple(a.strip() for a in m.group(2).split(",")) if m.group(2).strip() else ()
                out.append(PreCmp(m.group(1), args, m.group(3), int(m.group(4))))
                continue
            negated = part.startswith("!")
            if negated:
                part = part[1:].strip()
            m = re.fullmatch(rf"({_IDENT})\s*\((.*?)\)", part)
            if not m:
                self.err(line_no, f"bad precondition atom '{part}'")
                return None
            args = tuple(a.strip() for a in m.group(2).split(",")) if m.group(2).strip() else ()
            out.append(PreAtom(m.group(1), args, negated=negated))
        return out

    def _op_header(self, line: str, keyword: str, line_no: int):
        m = re.fullmatch(rf"{keyword}\s+({_IDENT})\s*\((.*?)\)\s*\{{", line)
        if not m:
            self.err(line_no, f"expected '{keyword} name(params) {{'")
            return None
        params = self._parse_params(m.group(2), line_no)
        if params is None:
            return None
        return m.group(1), params

    def decl_op(self, line: str, line_no: int) -> None:
        header = self._op_header(line, "op", line_no)
        stmts = self._collect_block(line, line_no) if header else None
        if header is None or stmts is None:
            return
        name, params = header
        pre: list[PreAtom | PreCmp] = []
        effects: list[Effect] = []
        for inner_no, stmt in stmts:
            if stmt.startswith("pre "):
                parsed = self._parse_pre(stmt[4:].rstrip(";"), inner_no)
                if parsed is not None:
                    pre.extend(parsed)
            elif stmt.startswith("effect "):
                eff = self._parse_effect(stmt[len("effect "):], inner_no)
                if eff is not None:
                    effects.append(eff)
            else:
                self.err(inner_no, f"unknown statement '{stmt}'")
        origin = "repaired" if any(e.added_by_repair for e in effects) else "original"
        self.operations.append(
            OperationSpec(name, params, tuple(pre), tuple(effects), origin=origin)
        )

    def decl_compensation(self, line: str, line_no: int) -> None:
        header = self._op_header(line, "compensation", line_no)
        stmts = self._collect_block(line, line_no) if header else None
        if header is None or stmts is None:
            return
        name, params = header
        pre: list[PreAtom | PreCmp] = []
        effects: list[Effect] = []
        triggers: tuple[str, ...] = ()
        for inner_no, stmt in stmts:
            if stmt.startswith("when "):
                parsed = self._parse_pre(stmt[5:].rstrip(";"), inner_no)
                if parsed is not None:
                    pre.extend(parsed)
            elif stmt.startswith("effect "):
                eff = self._parse_effect(stmt[len("effect "):], inner_no)
                if eff is not None:
                    effects.append(eff)
            elif stmt.startswith("triggers"):
                names = stmt[len("triggers"):].rstrip(";").strip()
                triggers = tuple(n.strip() for n in names.split(",")) if names else ()
            else:
                self.err(inner_no, f"unknown statement '{stmt}'")
        self.compensations.append(
            OperationSpec(
                name, params, tuple(pre), tuple(effects), origin="compensation", triggers=triggers
            )
        )


def _split_top_commas(text: str) -> list[str]:
    """Split on commas that are not inside parentheses."""
    parts: list[str] = []
    depth = 0
    cur = ""
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append(cur)
            cur = ""
        else:
            cur += ch
    if cur.strip():
        parts.append(cur)
    return parts


class _FormulaParser:
    """Recursive-descent parser for invariant bodies.

    Precedence, loosest first: `=>` (right associative), `||`, `&&`, `!`.
    Comparisons relate counter atoms and integer constants.
    """

    _TOKEN_RE = re.compile(
        rf"\s*(=>|\|\||&&|<=|>=|=|<|>|!|\(|\)|,|{_IDENT}|-?\d+)"
    )

    def __init__(self, text: str, line_no: int, owner: _Parser):
        self.owner = owner
        self.line_no = line_no
        self.tokens: list[str] = []
        pos = 0
        while pos < len(text):
            m = self._TOKEN_RE.match(text, pos)
            if not m:
                owner.err(line_no, f"bad token at '{text[pos:].strip()}'")
                self.tokens = []
                return
            self.tokens.append(m.group(1))
            pos = m.end()
        self.pos = 0

    def peek(self) -> str | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self) -> str | None:
        tok = self.peek()
        if tok is not None:
            self.pos += 1
        return tok

    def expect(self, tok: str) -> bool:
        if self.peek() == tok:
            self.take()
            return True
        self.owner.err(self.line_no, f"expected '{tok}', found '{self.peek()}'")
        return False

    def parse(self) -> Formula | None:
        if not self.tokens:
            self.owner.err(self.line_no, "empty invariant body")
            return None
        f = self.implication()
        if f is not None and self.peek() is not None:
            self.owner.err(self.line_no, f"unexpected trailing '{self.peek()}'")
            return None
        return f

    def implication(self) -> Formula | None:
        lhs = self.disjunction()
        if lhs is None:
            return None
        if self.peek() == "=>":
            self.take()
            rhs = self.implication()
            if rhs is None:
                return None
            return Implies(lhs, rhs)
        return lhs

    def disjunction(self) -> Formula | None:
        parts = [self.conjunction()]
        while self.peek() == "||":
            self.take()
            parts.append(self.conjunction())
        if any(p is None for p in parts):
            return None
        return parts[0] if len(parts) == 1 else Or(tuple(parts))  # type: ignore[arg-type]

    def conjunction(self) -> Formula | None:
        parts = [self.unary()]
        while self.peek() == "&&":
            self.take()
            parts.append(self.unary())
        if any(p is None for p in parts):
            return None
        return parts[0] if len(parts) == 1 else And(tuple(parts))  # type: ignore[arg-type]

    def unary(self) -> Formula | None:
        if self.peek() == "!":
            self.take()
            arg = self.unary()
            return None if arg is None else Not(arg)
        if self.peek() == "(":
            self.take()
            inner = self.implication()
            if inner is None or not self.expect(")"):
                return None
            return inner
        return self.atom_or_cmp()

    def _num_operand(self):
        tok = self.take()
        if tok is None:
            self.owner.err(self.line_no, "expected counter or integer")
            return None
        if re.fullmatch(r"-?\d+", tok):
            return IntConst(int(tok))
        args = self._arg_list()
        if args is None:
            return None
        return NumAtom(tok, args)

    def _arg_list(self) -> tuple[str, ...] | None:
        if not self.expect("("):
            return None
        args: list[str] = []
        if self.peek() != ")":
            while True:
                tok = self.take()
                if tok is None or not (_IDENT_RE.fullmatch(tok) or tok == WILDCARD):
                    self.owner.err(self.line_no, f"bad argument '{tok}'")
                    return None
                args.append(tok)
                if self.peek() == ",":
                    self.take()
                    continue
                break
        if not self.expect(")"):
            return None
        return tuple(args)

    def atom_or_cmp(self) -> Formula | None:
        name = self.take()
        if name is None or not _IDENT_RE.fullmatch(name):
            self.owner.err(self.line_no, f"expected atom, found '{name}'")
            return None
        args = self._arg_list()
        if args is None:
            return None
        if self.peek() in ("<=", ">=", "<", ">", "="):
            op = self.take()
            rhs = self._num_operand()
            if rhs is None:
                return None
            return Cmp(NumAtom(name, args), op or "=", rhs)
        return Atom(name, args)


def parse_spec(text: str, filename: str = "<string>") -> AppSpec:
    """Parse and validate a spec; raises SpecSyntaxError with every
    independent problem found in one pass, syntax errors and validation
    diagnostics together."""
    p = _Parser(text, filename)
    spec = p.parse()
    errors = list(p.errors)
    if spec is not None:
        errors.extend(
            ParseError(SourceLocation(filename, 1), str(d)) for d in validate_spec(spec)
        )
    if errors:
        raise SpecSyntaxError(errors)
    assert spec is not None
    return spec


def parse_spec_file(path) -> AppSpec:
    from pathlib import Path

    p = Path(path)
    return parse_spec(p.read_text(encoding="utf-8"), filename=str(p))
