#!/usr/bin/env python3
"""Original-versus-repaired violation matrix.

Fuzzes every bundled spec before and after repair with the same seeds and
prints observed invariant violations, divergence, and precondition
failures -- the desk-scale executable form of the repaired-applications
claim: repaired specs stay invariant-clean under every schedule tried.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from ipa.logic import Universe  # noqa: E402
from ipa.parser import parse_spec_file  # noqa: E402
from ipa.repair import POLICY_FEWEST, repair_spec  # noqa: E402
from ipa.sim import fuzz  # noqa: E402

SPECS = ("tournament", "twitter", "tickets", "tpcc", "tpcw")


def run(seeds: range, ops: int) -> None:
    header = f"{'spec':<12} {'variant':<10} {'violations':>10} {'divergent':>9} {'prefail':>8} {'secs':>6}"
    print(header)
    print("-" * len(header))
    for name in SPECS:
        spec = parse_spec_file(ROOT / "specs" / f"{name}.ipa")
        repaired, _, _ = repair_spec(spec, POLICY_FEWEST)
        universe = Universe.uniform(spec, 2)
        for variant, target in (("original", spec), ("repaired", repaired)):
            started = time.time()
            report = fuzz(target, seeds, universe, ops_count=ops)
            print(
                f"{name:<12} {variant:<10} {report.total_violations:>10} "
                f"{len(report.divergent_seeds):>9} "
                f"{report.total_precondition_failures:>8} "
                f"{time.time() - started:>6.1f}"
            )


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, default=200, help="number of seeds")
    parser.add_argument("--ops", type=int, default=40, help="submissions per schedule")
    args = parser.parse_args()
    run(range(args.seeds), args.ops)
