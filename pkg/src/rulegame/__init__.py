"""Hidden-rule block-removal game laboratory.

Subpackages by concern: rule language (`rules`), episode engine (`engine`),
learners (`agents`), training + statistics (`harness`, `stats`), transcript
persistence (`transcripts`), HTTP play service (`service`) and the CLI
(`cli`).
"""

from .engine import (
    EpisodeParams,
    MoveAttempt,
    Outcome,
    Status,
    attempt_move,
    count_initial_configs,
    distance_semantics,
    legal_moves,
    new_episode,
    rule_space_upper_bound,
)
from .rules import (
    Bucket,
    HistoryClass,
    RuleAst,
    RuleParseError,
    canonical_form,
    classify_history,
    parse_rule,
    rule_size,
    validate,
)

__all__ = [
    "Bucket",
    "EpisodeParams",
    "HistoryClass",
    "MoveAttempt",
    "Outcome",
    "RuleAst",
    "RuleParseError",
    "Status",
    "attempt_move",
    "canonical_form",
    "classify_history",
    "count_initial_configs",
    "distance_semantics",
    "legal_moves",
    "new_episode",
    "parse_rule",
    "rule_size",
    "rule_space_upper_bound",
    "validate",
]
