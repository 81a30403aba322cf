"""Episode engine: seeded board generation, move legality, reward, termination.

The game is a Markov decision process whose state is the board plus play
history.  A move picks an occupied position and a bucket; the hidden rule
accepts it (reward +1, piece removed) or rejects it (reward -1, nothing
changes).  An episode ends CLEARED when the board empties, or STALEMATE when
pieces remain but no move can ever be accepted.

All transitions are deterministic; the only randomness is the seeded initial
configuration, so (rule, params, seed, attempt sequence) fully determines a
transcript.  Rule evaluation reads the board, the success history and the
initial configuration - never the rejected attempts.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

from .rng import SplitMix64
from .rules import (
    AtTrigger,
    Bucket,
    ColorMap,
    EMPTY_CELL,
    COLOR_TO_LETTER,
    LETTER_TO_COLOR,
    Order,
    PALETTE,
    RuleAst,
    SimpleBucket,
    validate,
)


@dataclass(frozen=True)
class EpisodeParams:
    """Board length, piece-count bounds, color count and discount factor."""

    L: int = 20
    Kmin: int = 5
    Kmax: int = 10
    C: int = 4
    gamma: float = 0.95

    def __post_init__(self) -> None:
        if not (1 <= self.Kmin <= self.Kmax <= self.L):
            raise ValueError(
                f"need 1 <= Kmin <= Kmax <= L, got Kmin={self.Kmin} Kmax={self.Kmax} L={self.L}"
            )
        if not (1 <= self.C <= len(PALETTE)):
            raise ValueError(f"need 1 <= C <= {len(PALETTE)}, got C={self.C}")
        if not (0.0 <= self.gamma < 1.0):
            raise ValueError(f"need 0 <= gamma < 1, got gamma={self.gamma}")

    @property
    def colors(self) -> tuple[str, ...]:
        return PALETTE[: self.C]


Board = tuple  # length-L tuple of color names or None

LEFT = Bucket.LEFT
RIGHT = Bucket.RIGHT


@dataclass(frozen=True)
class MoveAttempt:
    position: int  # 1..L
    bucket: Bucket


class Status(enum.Enum):
    IN_PROGRESS = "in_progress"
    CLEARED = "cleared"
    STALEMATE = "stalemate"


@dataclass(frozen=True)
class Outcome:
    accepted: bool
    reward: int  # +1 iff accepted, else -1
    status: Status


@dataclass(frozen=True)
class SuccessRecord:
    move_index: int  # 1-based success counter
    position: int
    color: str
    bucket: Bucket


@dataclass(frozen=True)
class FailureRecord:
    attempt_index: int  # 1-based global attempt counter
    position: int
    bucket: Bucket


@dataclass
class EpisodeState:
    board: list  # current cells, index 0 = position 1
    rule: RuleAst
    successes: list[SuccessRecord] = field(default_factory=list)
    failures: list[FailureRecord] = field(default_factory=list)
    attempt_count: int = 0
    rng_state: int = 0
    initial_board: Board = ()
    status: Status = Status.IN_PROGRESS

    @property
    def L(self) -> int:
        return len(self.board)

    def piece_count(self) -> int:
        return sum(1 for cell in self.board if cell is not None)


class EpisodeFinishedError(RuntimeError):
    """Raised when a move is attempted on a CLEARED or STALEMATE episode."""


class InvalidRuleError(ValueError):
    """Raised when a rule fails validation for the given parameters."""


# --- Board pattern text -----------------------------------------------------


def board_to_pattern(board) -> str:
    """Board as text: one char per cell, R/G/B/Y or '. ', position 1 first."""
    return "".join(EMPTY_CELL if cell is None else COLOR_TO_LETTER[cell] for cell in board)


def pattern_to_board(pattern: str) -> Board:
    cells = []
    for ch in pattern.upper():
        if ch == EMPTY_CELL:
            cells.append(None)
        elif ch in LETTER_TO_COLOR:
            cells.append(LETTER_TO_COLOR[ch])
        else:
            raise ValueError(f"bad board pattern character {ch!r}")
    return tuple(cells)


# --- Episode lifecycle -------------------------------------------------------


def new_episode(rule: RuleAst, params: EpisodeParams, seed: int) -> EpisodeState:
    """Generate a fresh seeded episode.

    Piece count is uniform over [Kmin, Kmax]; positions come from a partial
    Fisher-Yates shuffle of 1..L; colors are uniform over the first C palette
    colors.  The same (rule, params, seed) always yields the same state.
    """
    report = validate(rule, params)
    if not report.ok:
        raise InvalidRuleError("; ".join(report.errors))
    rng = SplitMix64(seed)
    k = params.Kmin + rng.below(params.Kmax - params.Kmin + 1)
    cells = list(range(params.L))
    for i in range(k):
        j = i + rng.below(params.L - i)
        cells[i], cells[j] = cells[j], cells[i]
    board: list = [None] * params.L
    for i in range(k):
        board[cells[i]] = params.colors[rng.below(params.C)]
    state = EpisodeState(
        board=board,
        rule=rule,
        rng_state=rng.state,
        initial_board=tuple(board),
    )
    if not legal_moves(state):
        state.status = Status.STALEMATE
    return state


def make_state(rule: RuleAst, board: Board) -> EpisodeState:
    """Episode state over an explicit initial board (tests, replay, service)."""
    return EpisodeState(board=list(board), rule=rule, initial_board=tuple(board))


def would_accept(
    rule: RuleAst,
    initial_board: Board,
    board,
    successes: list[SuccessRecord],
    position: int,
    bucket: Bucket,
) -> bool:
    """Pure legality predicate; also used by transcript replay."""
    L = len(board)
    if not (1 <= position <= L):
        raise ValueError(f"position {position} out of range 1..{L}")

    color = board[position - 1]
    if color is None:
        return False

    order = rule.base.order
    if order is not Order.ANY:
        occupied = [i + 1 for i, cell in enumerate(board) if cell is not None]
        if order is Order.LEFT_TO_RIGHT:
            if position != occupied[0]:
                return False
        elif order is Order.RIGHT_TO_LEFT:
            if position != occupied[-1]:
                return False
        else:
            # Outside-in: odd moves take one extreme, even moves the other.
            next_index = len(successes) + 1
            if order is Order.OUTSIDE_IN_LEFT:
                wanted = occupied[0] if next_index % 2 == 1 else occupied[-1]
            else:
                wanted = occupied[-1] if next_index % 2 == 1 else occupied[0]
            if position != wanted:
                return False

    expr = rule.base.bucket
    per_color = isinstance(expr, ColorMap)
    sub = expr.lookup(color) if per_color else expr
    if sub is SimpleBucket.LEFT:
        if bucket is not LEFT:
            return False
    elif sub is SimpleBucket.RIGHT:
        if bucket is not RIGHT:
            return False
    elif sub in (SimpleBucket.NEAREST, SimpleBucket.FARTHEST):
        nearest, farthest = distance_semantics(position, L)
        if bucket not in (nearest if sub is SimpleBucket.NEAREST else farthest):
            return False
    elif sub is SimpleBucket.ALTERNATE:
        # Base-level alternation tracks the overall last success; inside a
        # color map it tracks the last success of the same color.
        last = None
        for rec in reversed(successes):
            if not per_color or rec.color == color:
                last = rec
                break
        if last is not None and bucket is last.bucket:
            return False

    next_index = len(successes) + 1
    for guard in rule.guards:
        if isinstance(guard.trigger, AtTrigger):
            tpos = guard.trigger.position
            if not (1 <= tpos <= L) or initial_board[tpos - 1] != guard.trigger.color:
                continue
            if next_index == guard.move_index:
                if position != tpos or bucket is not guard.bucket:
                    return False
            elif position == tpos:
                return False  # guarded piece immovable at other indices
        else:
            if guard.trigger.pattern != board_to_pattern(initial_board):
                continue
            if next_index == guard.move_index and bucket is not guard.bucket:
                return False
    return True


def attempt_move(state: EpisodeState, move: MoveAttempt) -> Outcome:
    """Apply one move: accept (remove piece, +1) or reject (-1, no change)."""
    if state.status is not Status.IN_PROGRESS:
        raise EpisodeFinishedError(f"episode already {state.status.value}")
    accepted = would_accept(
        state.rule, state.initial_board, state.board, state.successes, move.position, move.bucket
    )
    state.attempt_count += 1
    if accepted:
        color = state.board[move.position - 1]
        state.board[move.position - 1] = None
        state.successes.append(
            SuccessRecord(len(state.successes) + 1, move.position, color, move.bucket)
        )
        if state.piece_count() == 0:
            state.status = Status.CLEARED
        elif not legal_moves(state):
            state.status = Status.STALEMATE
        return Outcome(True, 1, state.status)
    state.failures.append(FailureRecord(state.attempt_count, move.position, move.bucket))
    return Outcome(False, -1, state.status)


def legal_moves(state: EpisodeState) -> set[MoveAttempt]:
    """Exactly the attempts attempt_move would accept (empty once terminal)."""
    if state.status is not Status.IN_PROGRESS:
        return set()
    moves = set()
    for i, cell in enumerate(state.board):
        if cell is None:
            continue
        for bucket in (LEFT, RIGHT):
            if would_accept(
                state.rule, state.initial_board, state.board, state.successes, i + 1, bucket
            ):
                moves.add(MoveAttempt(i + 1, bucket))
    return moves


def distance_semantics(position: int, L: int) -> tuple[frozenset, frozenset]:
    """Nearest/farthest bucket sets for a position; exact middle ties give both."""
    if not (1 <= position <= L):
        raise ValueError(f"position {position} out of range 1..{L}")
    d_left = position
    d_right = L + 1 - position
    if d_left < d_right:
        return frozenset({LEFT}), frozenset({RIGHT})
    if d_right < d_left:
        return frozenset({RIGHT}), frozenset({LEFT})
    both = frozenset({LEFT, RIGHT})
    return both, both


# --- Counting ----------------------------------------------------------------


def count_initial_configs(L: int, K: int, C: int) -> int:
    """Number of distinct initial configurations: C^K * binomial(L, K)."""
    if not (0 <= K <= L):
        raise ValueError(f"need 0 <= K <= L, got K={K} L={L}")
    if C < 1:
        raise ValueError(f"need C >= 1, got {C}")
    return C**K * math.comb(L, K)


def rule_space_upper_bound(L: int, C: int) -> int:
    """Upper bound on the rule space: L! orders times 2^(C*L) per order."""
    if L < 1 or C < 1:
        raise ValueError(f"need L >= 1 and C >= 1, got L={L} C={C}")
    return math.factorial(L) * 2 ** (C * L)


def scientific(n: int, digits: int = 2) -> str:
    """Exact-integer scientific notation, e.g. 2.80e36."""
    if n == 0:
        return f"{0:.{digits}f}e0"
    text = str(abs(n))
    exponent = len(text) - 1
    # Round the leading digits without going through float.
    keep = digits + 1
    head = int(text[: keep + 1]) if len(text) > keep else int(text.ljust(keep + 1, "0"))
    head = (head + 5) // 10  # round half away from zero on the extra digit
    if head >= 10 ** (digits + 1):
        head //= 10
        exponent += 1
    mantissa = head / 10**digits
    sign = "-" if n < 0 else ""
    return f"{sign}{mantissa:.{digits}f}e{exponent}"
