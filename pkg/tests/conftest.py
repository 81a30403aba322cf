import sys
from pathlib import Path

import pytest

from rulegame.rules import parse_rule

sys.path.insert(0, str(Path(__file__).parent))  # make `oracles` importable

RULES_DIR = Path(__file__).parent.parent / "rules" / "exhibit1"


@pytest.fixture(scope="session")
def exhibit_rules():
    """Mapping '01'..'06' -> parsed exhibit rule."""
    rules = {}
    for path in sorted(RULES_DIR.glob("*.rule")):
        rules[path.stem[:2]] = parse_rule(path.read_text(encoding="utf-8"))
    assert len(rules) == 6
    return rules


@pytest.fixture(scope="session")
def exhibit_rule_files():
    return sorted(RULES_DIR.glob("*.rule"))
