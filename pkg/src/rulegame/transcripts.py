"""Durable session transcripts: one line-delimited JSON file per session.

The first line is the session header, then attempt records in order, then
any rule guesses.  Files are append-only and human-inspectable, and every
untampered transcript replays through the engine with zero divergences,
machine and human sessions alike.
"""

from __future__ import annotations

import hashlib
import json
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .engine import (
    EpisodeParams,
    MoveAttempt,
    Outcome,
    SuccessRecord,
    board_to_pattern,
    legal_moves,
    make_state,
    pattern_to_board,
    would_accept,
)
from .harness import EpisodeRecord, LearningCurve, discounted_return
from .rules import Bucket, RuleAst, canonical_form, parse_rule


def rule_hash(rule_text: str) -> str:
    return hashlib.sha256(rule_text.encode("utf-8")).hexdigest()


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass(frozen=True)
class SessionRecord:
    session_id: str
    learner_kind: str  # "machine" | "human"
    learner_id: str
    rule_text: str  # canonical rule text (hidden from players, stored here)
    params: EpisodeParams
    master_seed: int
    created_at: str

    def to_json(self) -> dict:
        return {
            "session_id": self.session_id,
            "learner_kind": self.learner_kind,
            "learner_id": self.learner_id,
            "rule_text": self.rule_text,
            "rule_hash": rule_hash(self.rule_text),
            "L": self.params.L,
            "k_min": self.params.Kmin,
            "k_max": self.params.Kmax,
            "C": self.params.C,
            "gamma": self.params.gamma,
            "master_seed": self.master_seed,
            "created_at": self.created_at,
        }

    @staticmethod
    def from_json(obj: dict) -> "SessionRecord":
        params = EpisodeParams(
            L=obj["L"], Kmin=obj["k_min"], Kmax=obj["k_max"], C=obj["C"], gamma=obj["gamma"]
        )
        record = SessionRecord(
            session_id=obj["session_id"],
            learner_kind=obj["learner_kind"],
            learner_id=obj["learner_id"],
            rule_text=obj["rule_text"],
            params=params,
            master_seed=obj["master_seed"],
            created_at=obj["created_at"],
        )
        if obj.get("rule_hash") != rule_hash(record.rule_text):
            raise MalformedRecordError(f"rule_hash mismatch in session {record.session_id}")
        return record


@dataclass(frozen=True)
class AttemptRecord:
    episode: int  # 1-based episode index
    attempt: int  # 1-based attempt index within the episode
    board_before: str  # board pattern text
    position: int
    bucket: Bucket
    accepted: bool
    reward: int

    def to_json(self) -> dict:
        return {
            "episode": self.episode,
            "attempt": self.attempt,
            "board_before": self.board_before,
            "position": self.position,
            "bucket": self.bucket.value,
            "accepted": self.accepted,
            "reward": self.reward,
        }

    @staticmethod
    def from_json(obj: dict) -> "AttemptRecord":
        return AttemptRecord(
            episode=obj["episode"],
            attempt=obj["attempt"],
            board_before=obj["board_before"],
            position=obj["position"],
            bucket=Bucket(obj["bucket"]),
            accepted=obj["accepted"],
            reward=obj["reward"],
        )


@dataclass(frozen=True)
class GuessRecord:
    guess_text: str
    submitted_at: str

    def to_json(self) -> dict:
        return {"guess_text": self.guess_text, "submitted_at": self.submitted_at}

    @staticmethod
    def from_json(obj: dict) -> "GuessRecord":
        return GuessRecord(guess_text=obj["guess_text"], submitted_at=obj["submitted_at"])


class UnknownSessionError(KeyError):
    pass


class MalformedRecordError(ValueError):
    pass


class IncompleteSessionError(ValueError):
    pass


@dataclass(frozen=True)
class Divergence:
    episode: int
    attempt: int
    recorded_accepted: bool
    recomputed_accepted: bool


@dataclass
class ReplayReport:
    session_id: str
    attempts_checked: int = 0
    divergences: list[Divergence] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.divergences


class TranscriptStore:
    """File-backed store; one `<session_id>.jsonl` per session under root."""

    def __init__(self, root) -> None:
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._headers: dict[str, SessionRecord] = {}

    def path(self, session_id: str) -> Path:
        return self.root / f"{session_id}.jsonl"

    def exists(self, session_id: str) -> bool:
        return self.path(session_id).is_file()

    def session_ids(self) -> list[str]:
        return sorted(p.stem for p in self.root.glob("*.jsonl"))

    def create_session(self, record: SessionRecord) -> None:
        path = self.path(record.session_id)
        if path.exists():
            raise ValueError(f"session {record.session_id} already exists")
        self._append_line(path, record.to_json())
        self._headers[record.session_id] = record

    def header(self, session_id: str) -> SessionRecord:
        if session_id not in self._headers:
            path = self.path(session_id)
            if not path.is_file():
                raise UnknownSessionError(session_id)
            with path.open(encoding="utf-8") as fh:
                first = fh.readline()
            self._headers[session_id] = SessionRecord.from_json(json.loads(first))
        return self._headers[session_id]

    def append_attempt(self, session_id: str, rec: AttemptRecord) -> None:
        header = self.header(session_id)
        expected = 1 if rec.accepted else -1
        if rec.reward != expected:
            raise MalformedRecordError(
                f"reward {rec.reward} inconsistent with accepted={rec.accepted}"
            )
        if len(rec.board_before) != header.params.L:
            raise MalformedRecordError(
                f"board_before length {len(rec.board_before)} != L={header.params.L}"
            )
        if not (1 <= rec.position <= header.params.L):
            raise MalformedRecordError(f"position {rec.position} out of range")
        if rec.episode < 1 or rec.attempt < 1:
            raise MalformedRecordError("episode and attempt indices are 1-based")
        self._append_line(self.path(session_id), rec.to_json())

    def append_guess(self, session_id: str, rec: GuessRecord) -> None:
        header = self.header(session_id)
        if header.learner_kind != "human":
            raise MalformedRecordError("rule guesses are recorded for human sessions only")
        if not rec.guess_text.strip():
            raise MalformedRecordError("empty guess text")
        self._append_line(self.path(session_id), rec.to_json())

    @staticmethod
    def _append_line(path: Path, obj: dict) -> None:
        with path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(obj, separators=(",", ":")) + "\n")

    def read_session(
        self, session_id: str
    ) -> tuple[SessionRecord, list[AttemptRecord], list[GuessRecord]]:
        path = self.path(session_id)
        if not path.is_file():
            raise UnknownSessionError(session_id)
        attempts: list[AttemptRecord] = []
        guesses: list[GuessRecord] = []
        header: SessionRecord | None = None
        with path.open(encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                if "session_id" in obj:
                    header = SessionRecord.from_json(obj)
                elif "guess_text" in obj:
                    guesses.append(GuessRecord.from_json(obj))
                else:
                    attempts.append(AttemptRecord.from_json(obj))
        if header is None:
            raise MalformedRecordError(f"session file {path} has no header line")
        self._headers[session_id] = header
        return header, attempts, guesses

    def export_text(self, session_id: str, strip_timestamps: bool = False) -> str:
        """Raw transcript text; optionally blank timestamps for byte comparison."""
        path = self.path(session_id)
        if not path.is_file():
            raise UnknownSessionError(session_id)
        text = path.read_text(encoding="utf-8")
        if not strip_timestamps:
            return text
        lines = []
        for line in text.splitlines():
            if not line.strip():
                continue
            obj = json.loads(line)
            for key in ("created_at", "submitted_at"):
                if key in obj:
                    obj[key] = ""
            lines.append(json.dumps(obj, separators=(",", ":")))
        return "\n".join(lines) + "\n"

    # --- Verification and aggregation ---------------------------------------

    def replay(
        self,
        session_id: str,
        rule: RuleAst | None = None,
        params: EpisodeParams | None = None,
    ) -> ReplayReport:
        """Re-evaluate every recorded attempt; report accept/reject divergences.

        Each attempt is re-run against its recorded board context, so a
        single tampered record yields exactly one divergence.
        """
        header, attempts, _ = self.read_session(session_id)
        if rule is None:
            rule = parse_rule(header.rule_text)
        report = ReplayReport(session_id=session_id)
        for episode_attempts in _by_episode(attempts):
            initial = pattern_to_board(episode_attempts[0].board_before)
            successes: list[SuccessRecord] = []
            for rec in episode_attempts:
                board = pattern_to_board(rec.board_before)
                computed = would_accept(rule, initial, board, successes, rec.position, rec.bucket)
                report.attempts_checked += 1
                if computed != rec.accepted:
                    report.divergences.append(
                        Divergence(rec.episode, rec.attempt, rec.accepted, computed)
                    )
                if computed:
                    successes.append(
                        SuccessRecord(
                            len(successes) + 1, rec.position, board[rec.position - 1], rec.bucket
                        )
                    )
        return report

    def export_curves(self, session_ids) -> list[LearningCurve]:
        """Aggregate raw attempts into per-episode learning-curve records.

        The aggregation is identical for human and machine sessions.  A
        final episode that neither cleared nor stalemated raises
        IncompleteSessionError.
        """
        curves = []
        for session_id in session_ids:
            header, attempts, _ = self.read_session(session_id)
            rule = parse_rule(header.rule_text)
            curve = LearningCurve(
                rule_id=header.rule_text,
                learner_id=header.learner_id,
                seed=header.master_seed,
                session_id=session_id,
            )
            episodes = _by_episode(attempts)
            for i, episode_attempts in enumerate(episodes):
                first_board = pattern_to_board(episode_attempts[0].board_before)
                pieces = sum(1 for cell in first_board if cell is not None)
                accepted = sum(1 for rec in episode_attempts if rec.accepted)
                errors = len(episode_attempts) - accepted
                cleared = accepted == pieces
                if not cleared and i == len(episodes) - 1:
                    _require_stalemate(rule, episode_attempts, session_id)
                curve.records.append(
                    EpisodeRecord(
                        episode_index=episode_attempts[0].episode,
                        attempts=len(episode_attempts),
                        errors=errors,
                        reward_sum=accepted - errors,
                        discounted_return=discounted_return(
                            [rec.reward for rec in episode_attempts], header.params.gamma
                        ),
                        cleared=cleared,
                    )
                )
            curves.append(curve)
        return curves


def _by_episode(attempts: list[AttemptRecord]) -> list[list[AttemptRecord]]:
    episodes: list[list[AttemptRecord]] = []
    for rec in attempts:
        if not episodes or episodes[-1][0].episode != rec.episode:
            episodes.append([])
        episodes[-1].append(rec)
    return episodes


def _require_stalemate(rule, episode_attempts, session_id: str) -> None:
    initial = pattern_to_board(episode_attempts[0].board_before)
    state = make_state(rule, initial)
    board = list(initial)
    for rec in episode_attempts:
        if rec.accepted:
            color = board[rec.position - 1]
            state.successes.append(
                SuccessRecord(len(state.successes) + 1, rec.position, color, rec.bucket)
            )
            board[rec.position - 1] = None
    state.board = board
    if legal_moves(state):
        raise IncompleteSessionError(
            f"session {session_id}: final episode is neither cleared nor stalemated"
        )


class MachineSessionRecorder:
    """Hooks a training run into the store as a replayable machine session."""

    def __init__(self, store: TranscriptStore, rule, params, master_seed: int, learner_id: str):
        self.store = store
        self.session_id = str(uuid.uuid4())
        self.episode_index = 0
        self.attempt_index = 0
        store.create_session(
            SessionRecord(
                session_id=self.session_id,
                learner_kind="machine",
                learner_id=learner_id,
                rule_text=canonical_form(rule),
                params=params,
                master_seed=master_seed,
                created_at=utc_now(),
            )
        )

    def begin_episode(self, state) -> None:
        self.episode_index += 1
        self.attempt_index = 0

    def record_attempt(self, state, board_before, move: MoveAttempt, outcome: Outcome) -> None:
        self.attempt_index += 1
        self.store.append_attempt(
            self.session_id,
            AttemptRecord(
                episode=self.episode_index,
                attempt=self.attempt_index,
                board_before=board_to_pattern(board_before),
                position=move.position,
                bucket=move.bucket,
                accepted=outcome.accepted,
                reward=outcome.reward,
            ),
        )
