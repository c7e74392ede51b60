"""IPA: invariant-preserving application toolkit.

Analyzes declarative specs of replicated applications, detects operation
pairs whose concurrent execution can violate invariants, proposes repairs
built on convergent data-type semantics, and validates the result in a
causally consistent replica simulator.
"""

from .conflicts import ConflictDetector, ConflictReport
from .logic import Universe
from .model import AppSpec, classify_invariant, validate_spec
from .parser import SpecSyntaxError, parse_spec, parse_spec_file
from .printer import print_spec
from .repair import (
    RepairCandidate,
    SessionEngine,
    repair_spec,
    run_ipa_loop,
    synthesize_compensation,
)
from .sim import Simulator, fuzz, fuzz_schedule, run_schedule

__all__ = [
    "AppSpec",
    "ConflictDetector",
    "ConflictReport",
    "RepairCandidate",
    "SessionEngine",
    "Simulator",
    "SpecSyntaxError",
    "Universe",
    "classify_invariant",
    "fuzz",
    "fuzz_schedule",
    "parse_spec",
    "parse_spec_file",
    "print_spec",
    "repair_spec",
    "run_ipa_loop",
    "run_schedule",
    "synthesize_compensation",
    "validate_spec",
]

__version__ = "0.1.0"
