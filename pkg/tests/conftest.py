from __future__ import annotations

from pathlib import Path

import pytest

from ipa.conflicts import ConflictDetector
from ipa.logic import Universe
from ipa.parser import parse_spec_file

SPEC_DIR = Path(__file__).resolve().parent.parent / "specs"
SPEC_NAMES = ("tournament", "twitter", "tickets", "tpcc", "tpcw")


def spec_path(name: str) -> Path:
    return SPEC_DIR / f"{name}.ipa"


@pytest.fixture(scope="session")
def specs():
    return {name: parse_spec_file(spec_path(name)) for name in SPEC_NAMES}


@pytest.fixture(scope="session")
def tournament(specs):
    return specs["tournament"]


@pytest.fixture(scope="session")
def tournament_detector(tournament):
    return ConflictDetector(tournament, Universe.uniform(tournament, 2))


@pytest.fixture(scope="session")
def repaired_specs(specs):
    """Repaired spec per bundled app under the default policy, plus sessions."""
    from ipa.repair import POLICY_FEWEST, repair_spec

    out = {}
    for name, spec in specs.items():
        repaired, session, engine = repair_spec(spec, POLICY_FEWEST)
        out[name] = (repaired, session, engine)
    return out
