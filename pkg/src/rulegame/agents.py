"""Game-playing learners: a uniform-random baseline and tabular Q-learning.

Both agents speak the same observe/act protocol the human-session pathway
uses: select a move for the current observation, then observe the outcome.
The Q-learner works over a small abstract action set (leftmost / rightmost /
leftmost-of-color, times bucket) and a pluggable state featurizer, keeping
the table tractable despite the astronomical raw state space.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Hashable

from .engine import EpisodeState, MoveAttempt
from .rng import SplitMix64, substream_seed
from .rules import Bucket, PALETTE


@dataclass(frozen=True)
class Observation:
    """What a learner may see: board, last success, rejections on this board."""

    board: tuple
    last_success: tuple | None  # (position, color, bucket)
    success_count: int
    failures_this_board: frozenset  # MoveAttempt already rejected since last change

    @property
    def terminal(self) -> bool:
        return all(cell is None for cell in self.board)


def make_observation(state: EpisodeState) -> Observation:
    """Derive an Observation from engine state.

    Failures since the last board change are recovered from the attempt
    counter: failure records carry global attempt indices, so the last
    success sits at the largest index not claimed by a failure.
    """
    last = state.successes[-1] if state.successes else None
    failed_at = {f.attempt_index for f in state.failures}
    cutoff = state.attempt_count
    if last is not None:
        while cutoff in failed_at:
            cutoff -= 1
    else:
        cutoff = 0
    fresh = frozenset(
        MoveAttempt(f.position, f.bucket) for f in state.failures if f.attempt_index > cutoff
    )
    return Observation(
        board=tuple(state.board),
        last_success=None if last is None else (last.position, last.color, last.bucket),
        success_count=len(state.successes),
        failures_this_board=fresh,
    )


class Selector(enum.Enum):
    LEFTMOST = "leftmost"
    RIGHTMOST = "rightmost"
    LEFTMOST_OF = "leftmost-of"


@dataclass(frozen=True)
class AbstractAction:
    selector: Selector
    color: str | None  # set only for LEFTMOST_OF
    bucket: Bucket

    def resolve(self, board) -> int | None:
        """Concrete 1-based position on this board, or None if unresolvable."""
        if self.selector is Selector.LEFTMOST_OF:
            for i, cell in enumerate(board):
                if cell == self.color:
                    return i + 1
            return None
        if self.selector is Selector.LEFTMOST:
            for i, cell in enumerate(board):
                if cell is not None:
                    return i + 1
            return None
        for i in range(len(board) - 1, -1, -1):
            if board[i] is not None:
                return i + 1
        return None


def _enumerate_actions() -> tuple[AbstractAction, ...]:
    actions = []
    selectors: list[tuple[Selector, str | None]] = [
        (Selector.LEFTMOST, None),
        (Selector.RIGHTMOST, None),
    ]
    selectors += [(Selector.LEFTMOST_OF, color) for color in PALETTE]
    for selector, color in selectors:
        for bucket in (Bucket.LEFT, Bucket.RIGHT):
            actions.append(AbstractAction(selector, color, bucket))
    return tuple(actions)


ACTIONS: tuple[AbstractAction, ...] = _enumerate_actions()


def default_state_key(obs: Observation) -> tuple:
    """(last bucket, success parity, leftmost color, rightmost color)."""
    last_bucket = "none" if obs.last_success is None else obs.last_success[2].value
    leftmost = rightmost = "empty"
    for cell in obs.board:
        if cell is not None:
            leftmost = cell
            break
    for cell in reversed(obs.board):
        if cell is not None:
            rightmost = cell
            break
    return (last_bucket, obs.success_count % 2, leftmost, rightmost)


class AgentKind(enum.Enum):
    RANDOM = "random"
    QLEARN = "qlearn"


@dataclass(frozen=True)
class AgentConfig:
    kind: AgentKind = AgentKind.QLEARN
    alpha: float = 0.1
    epsilon0: float = 0.2
    epsilon_decay: float = 0.995
    gamma: float = 0.95
    seed: int = 0
    avoid_failures: bool = True  # random baseline skips already-rejected pairs

    def __post_init__(self) -> None:
        if not (0.0 < self.alpha <= 1.0):
            raise ValueError(f"alpha must be in (0,1], got {self.alpha}")
        if not (0.0 <= self.epsilon0 <= 1.0):
            raise ValueError(f"epsilon0 must be in [0,1], got {self.epsilon0}")
        if not (0.0 < self.epsilon_decay <= 1.0):
            raise ValueError(f"epsilon_decay must be in (0,1], got {self.epsilon_decay}")
        if not (0.0 <= self.gamma < 1.0):
            raise ValueError(f"gamma must be in [0,1), got {self.gamma}")


class RandomAgent:
    """Uniform over (occupied position, bucket) pairs, skipping pairs already
    rejected on the unchanged board (pure-uniform when avoid_failures=False)."""

    def __init__(self, config: AgentConfig) -> None:
        self.config = config
        self.rng = SplitMix64(config.seed)

    def select_move(self, obs: Observation) -> MoveAttempt:
        pairs = [
            MoveAttempt(i + 1, bucket)
            for i, cell in enumerate(obs.board)
            if cell is not None
            for bucket in (Bucket.LEFT, Bucket.RIGHT)
        ]
        if not pairs:
            raise ValueError("select_move on an empty board")
        if self.config.avoid_failures:
            untried = [m for m in pairs if m not in obs.failures_this_board]
            if untried:
                pairs = untried
        return pairs[self.rng.below(len(pairs))]

    def observe(self, obs, move, outcome, next_obs) -> None:
        pass  # rejected pairs are tracked in the observation itself

    def end_episode(self) -> None:
        pass


class QLearningAgent:
    """Epsilon-greedy tabular Q-learning over abstract actions."""

    def __init__(
        self,
        config: AgentConfig,
        featurizer: Callable[[Observation], Hashable] = default_state_key,
        actions: tuple[AbstractAction, ...] = ACTIONS,
    ) -> None:
        self.config = config
        self.featurizer = featurizer
        self.actions = actions
        self.q: dict[tuple, float] = {}
        self.epsilon = config.epsilon0
        self.rng = SplitMix64(config.seed)
        self._last_action: AbstractAction | None = None

    def value(self, key: Hashable, action: AbstractAction) -> float:
        return self.q.get((key, action), 0.0)

    def _resolvable(self, board) -> list[tuple[AbstractAction, int]]:
        out = []
        for action in self.actions:
            position = action.resolve(board)
            if position is not None:
                out.append((action, position))
        return out

    def select_move(self, obs: Observation) -> MoveAttempt:
        candidates = self._resolvable(obs.board)
        if not candidates:
            raise ValueError("select_move on an empty board")
        if self.rng.uniform() < self.epsilon:
            action, position = candidates[self.rng.below(len(candidates))]
        else:
            key = self.featurizer(obs)
            action, position = candidates[0]
            best = self.value(key, action)
            for cand, pos in candidates[1:]:
                v = self.value(key, cand)
                if v > best:  # ties keep enumeration order
                    action, position, best = cand, pos, v
        self._last_action = action
        return MoveAttempt(position, action.bucket)

    def observe(self, obs: Observation, move: MoveAttempt, outcome, next_obs: Observation) -> None:
        action = self._last_action or self._infer_action(obs, move)
        self._last_action = None
        if action is None:
            return
        key = self.featurizer(obs)
        if next_obs.terminal:
            target = float(outcome.reward)
        else:
            next_key = self.featurizer(next_obs)
            next_best = max(
                (self.value(next_key, a) for a, _ in self._resolvable(next_obs.board)),
                default=0.0,
            )
            target = outcome.reward + self.config.gamma * next_best
        old = self.value(key, action)
        self.q[(key, action)] = old + self.config.alpha * (target - old)

    def _infer_action(self, obs: Observation, move: MoveAttempt) -> AbstractAction | None:
        for action in self.actions:
            if action.bucket is move.bucket and action.resolve(obs.board) == move.position:
                return action
        return None

    def end_episode(self) -> None:
        self.epsilon *= self.config.epsilon_decay
        self._last_action = None


Agent = RandomAgent | QLearningAgent


def new_agent(config: AgentConfig, **kwargs) -> Agent:
    if config.kind is AgentKind.RANDOM:
        return RandomAgent(config)
    if config.kind is AgentKind.QLEARN:
        return QLearningAgent(config, **kwargs)
    raise ValueError(f"unknown agent kind {config.kind!r}")


def agent_for_run(config: AgentConfig, master_seed: int) -> Agent:
    """Fresh agent whose RNG stream is derived from the run's master seed."""
    derived = substream_seed(master_seed, _AGENT_STREAM)
    return new_agent(_with_seed(config, derived))


def _with_seed(config: AgentConfig, seed: int) -> AgentConfig:
    return AgentConfig(
        kind=config.kind,
        alpha=config.alpha,
        epsilon0=config.epsilon0,
        epsilon_decay=config.epsilon_decay,
        gamma=config.gamma,
        seed=seed,
        avoid_failures=config.avoid_failures,
    )


_AGENT_STREAM = 0x4147454E54  # distinct sub-stream tag ("AGENT")


def export_q_table(agent: QLearningAgent) -> str:
    """Q-table as CSV text: state-key fields, action fields, value."""
    lines = ["state_key,selector,color,bucket,value"]
    def fmt_key(key) -> str:
        if isinstance(key, tuple):
            return "|".join(str(part) for part in key)
        return str(key)
    entries = sorted(
        agent.q.items(),
        key=lambda kv: (fmt_key(kv[0][0]), agent.actions.index(kv[0][1])),
    )
    for (key, action), value in entries:
        color = action.color or ""
        lines.append(
            f"{fmt_key(key)},{action.selector.value},{color},{action.bucket.value},{value!r}"
        )
    return "\n".join(lines) + "\n"
