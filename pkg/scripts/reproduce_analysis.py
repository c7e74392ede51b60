#!/usr/bin/env python3
"""Analyze and repair every bundled spec under every policy.

Writes conflicts, invariant classes, sessions, and repaired specs under
out/<spec>-<policy>/ and prints a per-spec summary of what the analysis
found and how each policy resolved it.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from ipa.cli import main as ipa_main  # noqa: E402
from ipa.conflicts import ConflictDetector  # noqa: E402
from ipa.parser import parse_spec_file  # noqa: E402
from ipa.repair import BUILT_IN_POLICIES, repair_spec  # noqa: E402

SPECS = ("tournament", "twitter", "tickets", "tpcc", "tpcw")


def run(out_root: Path) -> None:
    for name in SPECS:
        path = ROOT / "specs" / f"{name}.ipa"
        spec = parse_spec_file(path)
        detector = ConflictDetector(spec)
        result = detector.find_conflicting_pairs()
        print(f"\n=== {name}")
        print(f"  conflicting pairs: {result.conflicting_pairs() or 'none'}")
        if result.compensation_findings:
            clauses = sorted(result.compensation_findings)
            print(f"  compensation-required clauses: {clauses}")
        for policy in BUILT_IN_POLICIES:
            out = out_root / f"{name}-{policy}"
            out.mkdir(parents=True, exist_ok=True)
            ipa_main([
                "repair", str(path), "--policy", policy, "--output-dir", str(out),
            ])
            repaired, session, _ = repair_spec(spec, policy)
            changes = [
                f"{r.candidate.modified_op}+{len(r.candidate.added_effects)}"
                for r in session.resolved
            ]
            flagged = [f"{a}|{b}" for (a, b) in (f.pair for f in session.flagged)]
            print(
                f"  {policy:<16} rounds={session.round} "
                f"changes=[{', '.join(changes)}] flagged=[{', '.join(flagged)}] "
                f"compensations={[c.name for c in session.compensations]}"
            )


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default=str(ROOT / "out"), help="artifact directory")
    args = parser.parse_args()
    run(Path(args.out))
