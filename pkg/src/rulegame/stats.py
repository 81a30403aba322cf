"""Nonparametric statistics: Wilcoxon rank-sum test and crossing detection.

Difficulty comparisons are ordinal, so everything here works on ranks: the
test assigns midranks to ties, enumerates all choose(n+m, n) label
assignments exactly when that is feasible, and otherwise falls back to a
tie-corrected normal approximation with continuity correction.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from statistics import NormalDist

EXACT_ENUMERATION_LIMIT = 10**6

_NORMAL = NormalDist()


class TestMethod(enum.Enum):
    __test__ = False  # not a pytest class, despite the name

    EXACT = "exact"
    NORMAL_APPROX = "normal_approx"


@dataclass(frozen=True)
class TestResult:
    __test__ = False

    statistic: float  # rank-sum of the first sample (midranks)
    p_less: float
    p_greater: float
    p_two_sided: float
    method: TestMethod


def _midranks(values: list[float]) -> list[float]:
    """Fractional ranks (ties get the mean of their rank block)."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        rank = (i + j + 2) / 2  # mean of 1-based ranks i+1..j+1
        for k in range(i, j + 1):
            ranks[order[k]] = rank
        i = j + 1
    return ranks


def _tie_sizes(values: list[float]) -> list[int]:
    sizes = []
    for _, group in itertools.groupby(sorted(values)):
        sizes.append(sum(1 for _ in group))
    return sizes


def wilcoxon_rank_sum(xs, ys) -> TestResult:
    """Rank-sum test of two independent samples.

    The statistic is the midrank sum of ``xs`` within the pooled sample.
    Exact p-values enumerate every way of labelling n of the n+m pooled
    observations as ``xs`` (all equally likely under the null); the normal
    approximation is used when that enumeration would exceed
    EXACT_ENUMERATION_LIMIT assignments.
    """
    xs = [float(v) for v in xs]
    ys = [float(v) for v in ys]
    if not xs or not ys:
        raise ValueError("both samples must be nonempty")
    n, m = len(xs), len(ys)
    pooled = xs + ys
    ranks = _midranks(pooled)
    statistic = sum(ranks[:n])

    if math.comb(n + m, n) <= EXACT_ENUMERATION_LIMIT:
        # Double the midranks so every rank is an exact integer.
        ranks2 = [int(round(2 * r)) for r in ranks]
        observed = sum(ranks2[:n])
        total = 0
        at_most = 0
        at_least = 0
        for combo in itertools.combinations(range(n + m), n):
            s = sum(ranks2[i] for i in combo)
            total += 1
            if s <= observed:
                at_most += 1
            if s >= observed:
                at_least += 1
        p_less = at_most / total
        p_greater = at_least / total
        method = TestMethod.EXACT
    else:
        mean = n * (n + m + 1) / 2
        tie_term = sum(t**3 - t for t in _tie_sizes(pooled))
        big_n = n + m
        variance = (n * m / 12) * ((big_n + 1) - tie_term / (big_n * (big_n - 1)))
        if variance <= 0:
            p_less = p_greater = 1.0
        else:
            sd = variance**0.5
            p_less = _NORMAL.cdf((statistic - mean + 0.5) / sd)
            p_greater = 1.0 - _NORMAL.cdf((statistic - mean - 0.5) / sd)
        method = TestMethod.NORMAL_APPROX
    p_two = min(1.0, 2.0 * min(p_less, p_greater))
    return TestResult(statistic, p_less, p_greater, p_two, method)


# --- Difficulty tables and interesting pairs ---------------------------------


class DifficultyMeasure(enum.Enum):
    EPISODES_TO_CRITERION = "episodes_to_criterion"
    ASYMPTOTE_POINT = "asymptote_point"


@dataclass
class DifficultyTable:
    """Samples of difficulty per (rule, learner), one value per seed/participant."""

    measure: DifficultyMeasure = DifficultyMeasure.EPISODES_TO_CRITERION
    samples: dict = field(default_factory=dict)  # (rule_id, learner_id) -> list[float]

    def add(self, rule_id: str, learner_id: str, value: float) -> None:
        self.samples.setdefault((rule_id, learner_id), []).append(value)

    def rules(self) -> list[str]:
        return sorted({rule for rule, _ in self.samples})

    def learners(self) -> list[str]:
        return sorted({learner for _, learner in self.samples})

    def sample(self, rule_id: str, learner_id: str) -> list[float]:
        try:
            return self.samples[(rule_id, learner_id)]
        except KeyError:
            raise ValueError(f"no difficulty sample for rule {rule_id!r}, learner {learner_id!r}")


@dataclass(frozen=True)
class InterestingPair:
    rule_a: str
    rule_b: str
    direction: str  # axis ("x" or "y") whose learner finds rule_a harder
    p_axis_x: float
    p_axis_y: float


def detect_interesting_pairs(
    table: DifficultyTable,
    learner_x: str | None = None,
    learner_y: str | None = None,
    alpha: float = 0.05,
) -> list[InterestingPair]:
    """Rule pairs whose difficulty ordering reverses between two learners.

    A pair (a, b) is reported when learner X finds a significantly harder
    than b while learner Y finds a significantly easier than b (one-sided
    rank-sum tests at ``alpha`` on both axes), or the mirror image.  Being
    rank-based, the output is invariant under any strictly increasing
    transform of the difficulty values.
    """
    if learner_x is None or learner_y is None:
        learners = table.learners()
        if len(learners) != 2:
            raise ValueError(f"table has learners {learners}; pass learner_x/learner_y explicitly")
        learner_x, learner_y = learners

    pairs: list[InterestingPair] = []
    rules = table.rules()
    for a, b in itertools.combinations(rules, 2):
        on_x = wilcoxon_rank_sum(table.sample(a, learner_x), table.sample(b, learner_x))
        on_y = wilcoxon_rank_sum(table.sample(a, learner_y), table.sample(b, learner_y))
        if on_x.p_greater < alpha and on_y.p_less < alpha:
            pairs.append(InterestingPair(a, b, "x", on_x.p_greater, on_y.p_less))
        elif on_x.p_less < alpha and on_y.p_greater < alpha:
            pairs.append(InterestingPair(a, b, "y", on_x.p_less, on_y.p_greater))
    pairs.sort(key=lambda p: (max(p.p_axis_x, p.p_axis_y), p.rule_a, p.rule_b))
    return pairs
