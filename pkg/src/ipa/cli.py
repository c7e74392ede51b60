"""Command-line entry point: analyze, repair, validate, serve.

Exit codes are part of the interface:
  analyze   0 no conflicts / 1 conflicts or unhandled numeric findings / 2 spec errors
  repair    0 finished / 2 spec errors / 3 round limit exceeded
  validate  0 no violations and no divergence / 1 otherwise / 2 spec errors
  serve     runs until interrupted

All artifacts land in --output-dir (overridden by $IPA_OUTPUT_DIR).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .conflicts import ConflictDetector
from .logic import DEFAULT_NUMERIC_WINDOW, DEFAULT_SCOPE, Universe
from .model import AppSpec
from .parser import SpecSyntaxError, parse_spec_file
from .printer import print_spec
from .repair import (
    BUILT_IN_POLICIES,
    POLICY_FEWEST,
    POLICY_INTERACTIVE,
    RoundLimitExceeded,
    SessionEngine,
    repair_spec,
    run_ipa_loop,
)
from .sim import fuzz, fuzz_schedule


def _parse_seeds(text: str) -> range:
    if ".." in text:
        lo, hi = text.split("..", 1)
        return range(int(lo), int(hi) + 1)
    return range(int(text), int(text) + 1)


def _output_dir(args) -> Path:
    out = os.environ.get("IPA_OUTPUT_DIR") or args.output_dir
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_spec(path: str) -> AppSpec | None:
    try:
        return parse_spec_file(path)
    except FileNotFoundError:
        print(f"error: no such file: {path}", file=sys.stderr)
        return None
    except SpecSyntaxError as exc:
        for err in exc.errors:
            print(f"error: {err}", file=sys.stderr)
        return None


def _universe(spec: AppSpec, args) -> Universe:
    return Universe.uniform(spec, args.scope)


def _invariant_lines(spec: AppSpec) -> list[str]:
    from .printer import _render_invariant

    return [_render_invariant(inv) for inv in spec.invariants]


def cmd_analyze(args) -> int:
    spec = _load_spec(args.spec)
    if spec is None:
        return 2
    out = _output_dir(args)
    universe = _universe(spec, args)
    detector = ConflictDetector(spec, universe, numeric_window=args.numeric_window)
    result = detector.find_conflicting_pairs(ignored=set(spec.flagged_pairs))

    compensated = {
        c.precondition[0].pred
        for c in spec.compensations
        if c.precondition and hasattr(c.precondition[0], "op")
    }
    lines = _invariant_lines(spec)
    classes = []
    unhandled_numeric = False
    for idx, inv in enumerate(spec.invariants):
        finding = "none"
        if any(
            inst.clause_index == idx for r in result.reports for inst in r.violated
        ):
            finding = "conflicting"
        elif idx in result.compensation_findings:
            counter = _clause_counter(spec, idx)
            if counter is not None and counter in compensated:
                finding = "compensated"
            else:
                finding = "compensationRequired"
                unhandled_numeric = True
        classes.append(
            {
                "index": idx,
                "invariant": lines[idx],
                "classTag": inv.class_tag,
                "finding": finding,
            }
        )

    report = {
        "app": spec.name,
        "scope": universe.to_json(),
        "scopeNote": f"verified up to scope {args.scope} per sort",
        "conflicts": [r.to_json() for r in result.reports],
        "compensationRequired": [
            {
                "clause": idx,
                "invariant": lines[idx],
                "witnesses": [w.to_json() for w in ws],
            }
            for idx, ws in sorted(result.compensation_findings.items())
        ],
        "ignoredFlaggedPairs": [list(p) for p in result.skipped_pairs],
    }
    (out / "conflicts.json").write_text(json.dumps(report, indent=2) + "\n")
    (out / "invariant-classes.json").write_text(json.dumps(classes, indent=2) + "\n")

    for r in result.reports:
        a, b = r.pair_names()
        print(f"conflict: ({a}, {b}) violates {[i.describe() for i in r.violated]}")
    for entry in classes:
        if entry["finding"] == "compensationRequired":
            print(f"compensationRequired: {entry['invariant']}")
        elif entry["finding"] == "compensated":
            print(f"compensated (handled): {entry['invariant']}")
    code = 1 if result.reports or unhandled_numeric else 0
    print(f"analyze: {len(result.reports)} conflicting pair(s); exit {code}")
    return code


def _clause_counter(spec: AppSpec, idx: int) -> str | None:
    from .model import Cmp, NumAtom

    body = spec.invariants[idx].body
    if isinstance(body, Cmp):
        for side in (body.lhs, body.rhs):
            if isinstance(side, NumAtom):
                return side.pred
    return None


def _resume_spec(checkpoint: str, original: AppSpec) -> AppSpec | None:
    """Continue from a session.json checkpoint: its spec text already
    carries every spliced repair, and flagged pairs come along so the loop
    keeps skipping them."""
    from dataclasses import replace as _replace

    from .parser import parse_spec

    try:
        payload = json.loads(Path(checkpoint).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read checkpoint {checkpoint}: {exc}", file=sys.stderr)
        return None
    try:
        spec = parse_spec(payload["spec"], filename=checkpoint)
    except (KeyError, SpecSyntaxError) as exc:
        print(f"error: bad checkpoint spec: {exc}", file=sys.stderr)
        return None
    if spec.name != original.name:
        print(
            f"error: checkpoint is for app '{spec.name}', not '{original.name}'",
            file=sys.stderr,
        )
        return None
    flagged = tuple(
        tuple(entry["pair"]) for entry in payload.get("flaggedUnsolvable", ())
    )
    new = tuple(p for p in flagged if p not in spec.flagged_pairs)
    return _replace(spec, flagged_pairs=spec.flagged_pairs + new)


def _interactive_chooser(report, candidates):
    a, b = report.pair_names()
    print(f"\nconflict between {report.op_a.describe()} and {report.op_b.describe()}")
    print(f"  violates: {[i.describe() for i in report.violated]}")
    print(f"  merged state: {report.merged_state.to_json()}")
    for i, c in enumerate(candidates):
        tag = " [semantics-changing]" if c.semantics_changing else ""
        print(f"  [{i}] {c.resolution_meaning}{tag}")
    print("  [f] flag pair as unsolvable")
    while True:
        answer = input("choose resolution: ").strip()
        if answer == "f":
            return None
        try:
            index = int(answer)
        except ValueError:
            continue
        if 0 <= index < len(candidates):
            return index


def session_to_json(engine: SessionEngine, policy: str) -> dict:
    session = engine.session
    outcomes = engine.clause_outcomes()
    spec = session.spec
    lines = _invariant_lines(spec)
    return {
        "app": spec.name,
        "policy": policy,
        "rounds": session.round,
        "roundLimit": session.round_limit,
        "complete": session.complete,
        "resolved": [r.to_json() for r in session.resolved],
        "flaggedUnsolvable": [f.to_json() for f in session.flagged],
        "reopened": session.reopened,
        "resolutionClashes": session.resolution_clashes,
        "compensations": [c.name for c in session.compensations],
        "classTable": [
            {
                "index": idx,
                "invariant": lines[idx],
                "classTag": inv.class_tag,
                "outcome": outcomes.get(idx, "safe"),
            }
            for idx, inv in enumerate(spec.invariants)
        ],
        "spec": print_spec(spec),
    }


def cmd_repair(args) -> int:
    spec = _load_spec(args.spec)
    if spec is None:
        return 2
    if args.resume:
        spec = _resume_spec(args.resume, spec)
        if spec is None:
            return 2
    out = _output_dir(args)
    universe = _universe(spec, args)
    try:
        if args.policy == POLICY_INTERACTIVE:
            engine = SessionEngine(spec, universe, args.numeric_window)
            session = run_ipa_loop(engine, _interactive_chooser)
            from dataclasses import replace as _replace

            repaired = _replace(
                session.spec,
                compensations=session.spec.compensations + tuple(session.compensations),
                flagged_pairs=session.spec.flagged_pairs + tuple(f.pair for f in session.flagged),
            )
        else:
            repaired, session, engine = repair_spec(
                spec, args.policy, universe, args.numeric_window
            )
    except RoundLimitExceeded as exc:
        payload = {"error": str(exc), "rounds": exc.session.round, "complete": False}
        (out / "session.json").write_text(json.dumps(payload, indent=2) + "\n")
        print(f"error: {exc}", file=sys.stderr)
        return 3

    stem = Path(args.spec).stem
    repaired_path = out / f"{stem}.repaired.ipa"
    repaired_path.write_text(print_spec(repaired))
    (out / "session.json").write_text(
        json.dumps(session_to_json(engine, args.policy), indent=2) + "\n"
    )
    print(f"repaired spec: {repaired_path}")
    print(
        f"rounds={session.round} resolved={len(session.resolved)} "
        f"flagged={len(session.flagged)} compensations={len(session.compensations)}"
    )
    return 0


def cmd_validate(args) -> int:
    spec = _load_spec(args.spec)
    if spec is None:
        return 2
    out = _output_dir(args)
    universe = _universe(spec, args)
    seeds = _parse_seeds(args.seeds)
    replica_ids = tuple(f"r{i + 1}" for i in range(args.replicas))

    trace_seeds = set()
    if args.trace_seeds:
        trace_seeds = {int(s) for s in args.trace_seeds.split(",")}
    for seed in sorted(trace_seeds):
        trace: list = []
        fuzz_schedule(spec, seed, universe, replica_ids, ops_count=args.ops, trace=trace)
        (out / f"trace-{seed}.jsonl").write_text(
            "\n".join(json.dumps(e) for e in trace) + "\n"
        )

    report = fuzz(spec, seeds, universe, replica_ids, ops_count=args.ops)
    payload = report.to_json()
    payload["app"] = spec.name
    (out / "validation.json").write_text(json.dumps(payload, indent=2) + "\n")
    print(
        f"schedules={len(report.per_seed)} violations={report.total_violations} "
        f"divergent={len(report.divergent_seeds)} "
        f"preconditionFailures={report.total_precondition_failures}"
    )
    return 0 if report.total_violations == 0 and not report.divergent_seeds else 1


def cmd_serve(args) -> int:
    spec = _load_spec(args.spec)
    if spec is None:
        return 2
    out = _output_dir(args)
    universe = _universe(spec, args)
    from .server import serve

    return serve(spec, universe, args.numeric_window, args.port, out)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ipa",
        description="Analyze, repair, and validate replicated-application specs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("spec", help="path to a .ipa specification")
        p.add_argument("--scope", type=int, default=DEFAULT_SCOPE,
                       help="constants per sort (default 2)")
        p.add_argument("--numeric-window", type=int, default=DEFAULT_NUMERIC_WINDOW,
                       help="counter range for state enumeration (default 8)")
        p.add_argument("--output-dir", default=".",
                       help="artifact directory (env IPA_OUTPUT_DIR overrides)")

    p = sub.add_parser("analyze", help="report conflicting operation pairs")
    common(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("repair", help="rewrite operations until conflict-free")
    common(p)
    p.add_argument("--policy", default=POLICY_FEWEST,
                   choices=(*BUILT_IN_POLICIES, POLICY_INTERACTIVE))
    p.add_argument("--resume", default=None, metavar="SESSION_JSON",
                   help="continue from a session checkpoint instead of the raw spec")
    p.set_defaults(func=cmd_repair)

    p = sub.add_parser("validate", help="fuzz schedules and count violations")
    common(p)
    p.add_argument("--seeds", default="0..99", help="seed range, e.g. 0..999")
    p.add_argument("--replicas", type=int, default=3)
    p.add_argument("--ops", type=int, default=40, help="submissions per schedule")
    p.add_argument("--trace-seeds", default="",
                   help="comma-separated seeds to dump per-step traces for")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("serve", help="run the conflict-resolution session API")
    common(p)
    p.add_argument("--port", type=int, default=7400)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
