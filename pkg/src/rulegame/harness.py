"""Training sweeps, learning-curve measures and transfer experiments.

A sweep trains one fresh agent per master seed; each episode's board comes
from a seed-derived sub-stream, so parallel and serial execution produce the
same curves and the whole run is reproducible from (rule, config, seeds).
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from statistics import median

from .agents import AgentConfig, AgentKind, agent_for_run, make_observation
from .engine import EpisodeParams, RuleAst, Status, attempt_move, new_episode
from .rng import substream_seed
from .rules import canonical_form
from .stats import DifficultyMeasure, DifficultyTable

# Per-episode attempt cap: generous safety net against pathological loops.
MAX_ATTEMPTS_PER_EPISODE = 100_000

# Sub-stream tag separating phase-1 pretraining boards from phase-2 boards.
_PRETRAIN_STREAM = 0x505245 << 32


@dataclass(frozen=True)
class EpisodeRecord:
    episode_index: int
    attempts: int
    errors: int  # rejected attempts
    reward_sum: int
    discounted_return: float
    cleared: bool

    @property
    def successes(self) -> int:
        return self.attempts - self.errors


@dataclass
class LearningCurve:
    rule_id: str
    learner_id: str
    seed: int
    records: list[EpisodeRecord] = field(default_factory=list)
    session_id: str | None = None  # set when the run was recorded to a store

    def errors_per_episode(self) -> list[int]:
        return [rec.errors for rec in self.records]


def per_round_success_rate(rec: EpisodeRecord) -> float:
    """Fraction of attempts that were accepted."""
    if rec.attempts < 1:
        raise ValueError("episode has zero attempts")
    return rec.successes / rec.attempts


def discounted_return(rewards, gamma: float) -> float:
    """Sum of gamma^t * r_t over an attempt-reward sequence (t from 0)."""
    if not (0.0 <= gamma < 1.0):
        raise ValueError(f"gamma must be in [0,1), got {gamma}")
    total = 0.0
    weight = 1.0
    for r in rewards:
        total += weight * r
        weight *= gamma
    return total


def play_episode(agent, rule: RuleAst, params: EpisodeParams, episode_seed: int, *, recorder=None):
    """Run one episode to termination; returns (rewards, state)."""
    state = new_episode(rule, params, episode_seed)
    if recorder is not None:
        recorder.begin_episode(state)
    rewards: list[int] = []
    obs = make_observation(state)
    while state.status is Status.IN_PROGRESS:
        if state.attempt_count >= MAX_ATTEMPTS_PER_EPISODE:
            raise RuntimeError(
                f"episode exceeded {MAX_ATTEMPTS_PER_EPISODE} attempts (rule "
                f"{canonical_form(rule)!r})"
            )
        move = agent.select_move(obs)
        before = tuple(state.board)
        outcome = attempt_move(state, move)
        if recorder is not None:
            recorder.record_attempt(state, before, move, outcome)
        rewards.append(outcome.reward)
        next_obs = make_observation(state)
        agent.observe(obs, move, outcome, next_obs)
        obs = next_obs
    agent.end_episode()
    return rewards, state


def _train_one_seed(
    rule: RuleAst,
    agent_config: AgentConfig,
    params: EpisodeParams,
    episodes: int,
    master_seed: int,
    rule_id: str,
    learner_id: str,
    *,
    agent=None,
    episode_stream_salt: int = 0,
    recorder=None,
) -> LearningCurve:
    if agent is None:
        agent = agent_for_run(agent_config, master_seed)
    curve = LearningCurve(rule_id=rule_id, learner_id=learner_id, seed=master_seed)
    for index in range(1, episodes + 1):
        episode_seed = substream_seed(master_seed, episode_stream_salt + index)
        rewards, state = play_episode(agent, rule, params, episode_seed, recorder=recorder)
        errors = len(state.failures)
        curve.records.append(
            EpisodeRecord(
                episode_index=index,
                attempts=state.attempt_count,
                errors=errors,
                reward_sum=state.attempt_count - 2 * errors,
                discounted_return=discounted_return(rewards, params.gamma),
                cleared=state.status is Status.CLEARED,
            )
        )
    return curve


def run_training(
    rule: RuleAst,
    agent_config: AgentConfig,
    params: EpisodeParams,
    episodes: int,
    seeds,
    *,
    rule_id: str | None = None,
    learner_id: str | None = None,
    store=None,
    max_workers: int | None = None,
) -> list[LearningCurve]:
    """One learning curve per master seed, each from a fresh (tabula rasa) agent.

    When ``store`` (a transcript store) is given, every seed's run is also
    persisted as a machine session for later replay.  Seeds run in a thread
    pool but curves are returned in input seed order, so output is identical
    to a serial run.
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    seeds = list(seeds)
    rule_id = rule_id if rule_id is not None else canonical_form(rule)
    learner_id = learner_id if learner_id is not None else agent_config.kind.value

    def run(seed: int) -> LearningCurve:
        recorder = None
        if store is not None:
            from .transcripts import MachineSessionRecorder

            recorder = MachineSessionRecorder(store, rule, params, seed, learner_id)
        curve = _train_one_seed(
            rule, agent_config, params, episodes, seed, rule_id, learner_id, recorder=recorder
        )
        if recorder is not None:
            curve.session_id = recorder.session_id
        return curve

    if max_workers == 1 or len(seeds) == 1:
        return [run(seed) for seed in seeds]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(run, seeds))


def episodes_to_criterion(
    curve: LearningCurve, window: int = 5, max_errors: int = 0
) -> int | None:
    """First episode starting ``window`` consecutive episodes with errors <= max_errors."""
    if window < 1:
        raise ValueError("window must be >= 1")
    errors = curve.errors_per_episode()
    run_length = 0
    for i, e in enumerate(errors):
        run_length = run_length + 1 if e <= max_errors else 0
        if run_length >= window:
            return i - window + 2  # 1-based start of the window
    return None


def asymptote_point(curve: LearningCurve, eps: float = 0.05, window: int = 20) -> int | None:
    """First episode from which the windowed error rate stays near its minimum.

    The moving average at episode e covers episodes e..e+window-1; the
    answer is the smallest e whose average and all later averages are within
    ``eps`` of the curve-wide minimum.  None when the curve is shorter than
    the window.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    if eps <= 0:
        raise ValueError("eps must be > 0")
    rates = [rec.errors / rec.attempts for rec in curve.records if rec.attempts > 0]
    if len(rates) != len(curve.records) or len(rates) < window:
        return None
    averages = []
    rolling = sum(rates[:window])
    averages.append(rolling / window)
    for i in range(window, len(rates)):
        rolling += rates[i] - rates[i - window]
        averages.append(rolling / window)
    floor = min(averages)
    answer = None
    for e in range(len(averages), 0, -1):  # scan backwards for the stable suffix
        if averages[e - 1] <= floor + eps:
            answer = e
        else:
            break
    return answer


def difficulty_table(
    curves,
    measure: DifficultyMeasure = DifficultyMeasure.EPISODES_TO_CRITERION,
    *,
    window: int = 5,
    max_errors: int = 0,
    eps: float = 0.05,
    asymptote_window: int = 20,
    budget: int | None = None,
) -> DifficultyTable:
    """Reduce curves to one difficulty value per (rule, learner, seed).

    Censored runs (criterion never met) score budget + 1, where the budget
    defaults to the longest curve.
    """
    table = DifficultyTable(measure=measure)
    curves = list(curves)
    if budget is None:
        budget = max((len(c.records) for c in curves), default=0)
    for curve in curves:
        if measure is DifficultyMeasure.EPISODES_TO_CRITERION:
            value = episodes_to_criterion(curve, window=window, max_errors=max_errors)
        else:
            value = asymptote_point(curve, eps=eps, window=asymptote_window)
        table.add(curve.rule_id, curve.learner_id, float(budget + 1 if value is None else value))
    return table


def transfer_index(
    rule_from: RuleAst,
    rule_to: RuleAst,
    agent_config: AgentConfig,
    params: EpisodeParams,
    episodes_phase1: int,
    seeds,
    *,
    episodes_phase2: int | None = None,
    window: int = 5,
    max_errors: int = 0,
) -> float:
    """Median paired saving in episodes-to-criterion from pretraining.

    For each seed, a naive agent and an agent pretrained ``episodes_phase1``
    episodes on ``rule_from`` (Q-table kept, epsilon reset) both learn
    ``rule_to`` on identical phase-2 boards; censored criteria count as
    budget + 1.  Positive values mean positive transfer.
    """
    if episodes_phase2 is None:
        episodes_phase2 = episodes_phase1
    seeds = list(seeds)
    diffs = []
    for seed in seeds:
        naive_curve = _train_one_seed(
            rule_to, agent_config, params, episodes_phase2, seed, "to", "naive"
        )
        pretrained = agent_for_run(agent_config, seed)
        if episodes_phase1 > 0:
            _train_one_seed(
                rule_from,
                agent_config,
                params,
                episodes_phase1,
                seed,
                "from",
                "pretrain",
                agent=pretrained,
                episode_stream_salt=_PRETRAIN_STREAM,
            )
        if hasattr(pretrained, "epsilon"):
            pretrained.epsilon = agent_config.epsilon0
        carried_curve = _train_one_seed(
            rule_to,
            agent_config,
            params,
            episodes_phase2,
            seed,
            "to",
            "pretrained",
            agent=pretrained,
        )
        censored = episodes_phase2 + 1
        naive = episodes_to_criterion(naive_curve, window, max_errors) or censored
        carried = episodes_to_criterion(carried_curve, window, max_errors) or censored
        diffs.append(naive - carried)
    return float(median(diffs))


# --- Experiment config file ---------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    params: EpisodeParams = EpisodeParams()
    agent: AgentConfig = AgentConfig()
    seed_count: int = 10
    episodes: int = 200
    criterion_window: int = 5
    criterion_max_errors: int = 0
    alpha: float = 0.05

    def seeds(self) -> list[int]:
        return list(range(1, self.seed_count + 1))


def _parse_sections(text: str) -> dict[str, dict[str, str]]:
    sections: dict[str, dict[str, str]] = {}
    current = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip().lower()
            sections.setdefault(current, {})
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key = value, got {raw!r}")
        key, value = line.split("=", 1)
        sections.setdefault(current, {})[key.strip()] = value.strip().strip("\"'")
    return sections


def load_config(path) -> ExperimentConfig:
    """Read a TOML-style key/value experiment config (see README for keys)."""
    sections = _parse_sections(Path(path).read_text(encoding="utf-8"))
    game = sections.get("game", {})
    agent = sections.get("agent", {})
    run = sections.get("run", {})

    def pick(table: dict[str, str], key: str, cast, default):
        if key not in table:
            return default
        raw = table[key]
        if cast is bool:
            return raw.lower() in ("1", "true", "yes", "on")
        return cast(raw)

    params = EpisodeParams(
        L=pick(game, "L", int, 20),
        Kmin=pick(game, "Kmin", int, 5),
        Kmax=pick(game, "Kmax", int, 10),
        C=pick(game, "C", int, 4),
        gamma=pick(game, "gamma", float, 0.95),
    )
    agent_config = AgentConfig(
        kind=AgentKind(pick(agent, "kind", str, "qlearn").lower()),
        alpha=pick(agent, "alpha", float, 0.1),
        epsilon0=pick(agent, "epsilon0", float, 0.2),
        epsilon_decay=pick(agent, "epsilonDecay", float, 0.995),
        gamma=pick(agent, "gamma", float, 0.95),
        seed=pick(agent, "seed", int, 0),
        avoid_failures=pick(agent, "avoidFailures", bool, True),
    )
    return ExperimentConfig(
        params=params,
        agent=agent_config,
        seed_count=pick(agent, "seedCount", int, 10),
        episodes=pick(run, "episodes", int, 200),
        criterion_window=pick(run, "criterionWindow", int, 5),
        criterion_max_errors=pick(run, "criterionMaxErrors", int, 0),
        alpha=pick(run, "alpha", float, 0.05),
    )


def with_agent_kind(config: ExperimentConfig, kind: AgentKind) -> ExperimentConfig:
    return replace(config, agent=replace(config.agent, kind=kind))


# --- CSV formats ---------------------------------------------------------------

CURVE_HEADER = [
    "rule",
    "learner",
    "seed",
    "episode",
    "attempts",
    "errors",
    "reward_sum",
    "discounted_return",
    "cleared",
]

DIFFICULTY_HEADER = ["rule", "learner", "seed", "difficulty"]

PAIR_HEADER = ["ruleA", "ruleB", "direction", "p_axis_x", "p_axis_y"]


def curves_to_csv(curves) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CURVE_HEADER)
    for curve in curves:
        for rec in curve.records:
            writer.writerow(
                [
                    curve.rule_id,
                    curve.learner_id,
                    curve.seed,
                    rec.episode_index,
                    rec.attempts,
                    rec.errors,
                    rec.reward_sum,
                    repr(rec.discounted_return),
                    "true" if rec.cleared else "false",
                ]
            )
    return out.getvalue()


def curves_from_csv(text: str) -> list[LearningCurve]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != CURVE_HEADER:
        raise ValueError(f"expected curve CSV header {CURVE_HEADER}, got {header}")
    curves: dict[tuple, LearningCurve] = {}
    for row in reader:
        rule_id, learner_id, seed = row[0], row[1], int(row[2])
        curve = curves.setdefault(
            (rule_id, learner_id, seed),
            LearningCurve(rule_id=rule_id, learner_id=learner_id, seed=seed),
        )
        curve.records.append(
            EpisodeRecord(
                episode_index=int(row[3]),
                attempts=int(row[4]),
                errors=int(row[5]),
                reward_sum=int(row[6]),
                discounted_return=float(row[7]),
                cleared=row[8] == "true",
            )
        )
    return list(curves.values())


def difficulty_to_csv(table: DifficultyTable) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(DIFFICULTY_HEADER)
    for (rule_id, learner_id), values in sorted(table.samples.items()):
        for i, value in enumerate(values, start=1):
            writer.writerow([rule_id, learner_id, i, repr(float(value))])
    return out.getvalue()


def difficulty_from_csv(text: str) -> DifficultyTable:
    """Difficulty table from either the difficulty schema or a curve CSV."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header == DIFFICULTY_HEADER:
        table = DifficultyTable()
        for row in reader:
            table.add(row[0], row[1], float(row[3]))
        return table
    if header == CURVE_HEADER:
        return difficulty_table(curves_from_csv(text))
    raise ValueError(
        f"unrecognized CSV header {header}; expected {DIFFICULTY_HEADER} or {CURVE_HEADER}"
    )


def pairs_to_csv(pairs) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(PAIR_HEADER)
    for pair in pairs:
        writer.writerow(
            [pair.rule_a, pair.rule_b, pair.direction, repr(pair.p_axis_x), repr(pair.p_axis_y)]
        )
    return out.getvalue()
