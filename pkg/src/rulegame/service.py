"""HTTP session service: humans (and scripted clients) play the hidden-rule game.

The server holds the rule; clients only ever see boards and accept/reject
feedback.  Every move is persisted to the transcript store before the
response is sent, sessions are strictly serialized, and duplicate move
submissions are deduplicated via a client-echoed attempt index.
"""

from __future__ import annotations

import json
import secrets
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.responses import PlainTextResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .engine import (
    EpisodeParams,
    EpisodeState,
    MoveAttempt,
    Status,
    attempt_move,
    board_to_pattern,
    new_episode,
)
from .rng import substream_seed
from .rules import Bucket, RuleAst, RuleParseError, canonical_form, parse_rule, validate
from .transcripts import (
    AttemptRecord,
    GuessRecord,
    SessionRecord,
    TranscriptStore,
    utc_now,
)

PHASE_PLAYING = "playing"
PHASE_AWAITING_GUESS = "awaiting_guess"
PHASE_DONE = "done"

RULE_REDACTED = "[hidden until session completes]"


class CreateSessionRequest(BaseModel):
    rule_text: str | None = None
    rule_id: str | None = None
    learner_id: str = "anonymous"
    learner_kind: str = Field(default="human", pattern="^(human|machine)$")
    episodes_target: int = Field(default=1, ge=1, le=10_000)
    seed: int | None = Field(default=None, ge=0)
    L: int | None = Field(default=None, ge=1, le=200)
    k_min: int | None = Field(default=None, ge=1)
    k_max: int | None = Field(default=None, ge=1)
    C: int | None = Field(default=None, ge=1, le=4)


class MoveRequest(BaseModel):
    position: int
    bucket: str = Field(pattern="^(left|right)$")
    attempt_index: int | None = Field(default=None, ge=1)


class GuessRequest(BaseModel):
    guess_text: str = ""


@dataclass
class SessionHandle:
    session_id: str
    rule: RuleAst
    params: EpisodeParams
    master_seed: int
    learner_kind: str
    episodes_target: int
    state: EpisodeState
    episode_index: int = 1
    episodes_completed: int = 0
    attempt_counter: int = 0  # global attempts across the session
    attempt_in_episode: int = 0
    reward_sum: int = 0
    phase: str = PHASE_PLAYING
    lock: threading.Lock = field(default_factory=threading.Lock)
    past_responses: dict = field(default_factory=dict)  # attempt_index -> response


def create_app(
    data_dir,
    rules_dir=None,
    default_params: EpisodeParams | None = None,
    app_dir=None,
) -> FastAPI:
    store = TranscriptStore(data_dir)
    rules_root = Path(rules_dir) if rules_dir else None
    base_params = default_params or EpisodeParams()

    app = FastAPI(title="rulegame session service")
    sessions: dict[str, SessionHandle] = {}
    registry_lock = threading.Lock()

    def get_handle(session_id: str) -> SessionHandle:
        with registry_lock:
            handle = sessions.get(session_id)
        if handle is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}")
        return handle

    def resolve_rule(req: CreateSessionRequest) -> RuleAst:
        if req.rule_id is not None:
            if rules_root is None:
                raise HTTPException(status_code=404, detail="no rules directory configured")
            path = rules_root / f"{req.rule_id}.rule"
            if not path.is_file():
                raise HTTPException(status_code=404, detail=f"unknown rule_id {req.rule_id!r}")
            text = path.read_text(encoding="utf-8")
        elif req.rule_text is not None:
            text = req.rule_text
        else:
            raise HTTPException(status_code=400, detail="provide rule_text or rule_id")
        try:
            return parse_rule(text)
        except RuleParseError as err:
            raise HTTPException(status_code=400, detail=f"invalid rule: {err}")

    def session_params(req: CreateSessionRequest) -> EpisodeParams:
        try:
            return EpisodeParams(
                L=req.L if req.L is not None else base_params.L,
                Kmin=req.k_min if req.k_min is not None else base_params.Kmin,
                Kmax=req.k_max if req.k_max is not None else base_params.Kmax,
                C=req.C if req.C is not None else base_params.C,
                gamma=base_params.gamma,
            )
        except ValueError as err:
            raise HTTPException(status_code=400, detail=str(err))

    def state_view(handle: SessionHandle) -> dict:
        return {
            "session_id": handle.session_id,
            "board": board_to_pattern(handle.state.board),
            "episode_index": handle.episode_index,
            "episodes_completed": handle.episodes_completed,
            "episodes_target": handle.episodes_target,
            "phase": handle.phase,
            "reward_sum": handle.reward_sum,
            "params": {
                "L": handle.params.L,
                "k_min": handle.params.Kmin,
                "k_max": handle.params.Kmax,
                "C": handle.params.C,
                "gamma": handle.params.gamma,
            },
        }

    @app.post("/v1/sessions", status_code=201)
    def create_session(req: CreateSessionRequest) -> dict:
        rule = resolve_rule(req)
        params = session_params(req)
        report = validate(rule, params)
        if not report.ok:
            raise HTTPException(status_code=400, detail="; ".join(report.errors))
        master_seed = req.seed if req.seed is not None else secrets.randbits(63)
        session_id = _new_session_id()
        record = SessionRecord(
            session_id=session_id,
            learner_kind=req.learner_kind,
            learner_id=req.learner_id,
            rule_text=canonical_form(rule),
            params=params,
            master_seed=master_seed,
            created_at=utc_now(),
        )
        store.create_session(record)
        state = new_episode(rule, params, substream_seed(master_seed, 1))
        handle = SessionHandle(
            session_id=session_id,
            rule=rule,
            params=params,
            master_seed=master_seed,
            learner_kind=req.learner_kind,
            episodes_target=req.episodes_target,
            state=state,
        )
        with registry_lock:
            sessions[session_id] = handle
        return state_view(handle)

    @app.get("/v1/sessions/{session_id}")
    def get_session(session_id: str) -> dict:
        return state_view(get_handle(session_id))

    @app.post("/v1/sessions/{session_id}/moves")
    def post_move(session_id: str, req: MoveRequest) -> dict:
        handle = get_handle(session_id)
        with handle.lock:
            if handle.phase != PHASE_PLAYING:
                raise HTTPException(
                    status_code=409, detail=f"session is {handle.phase}, not accepting moves"
                )
            if req.attempt_index is not None:
                if req.attempt_index <= handle.attempt_counter:
                    past = handle.past_responses.get(req.attempt_index)
                    if past is not None:
                        return past  # duplicate submission: replay stored response
                    raise HTTPException(status_code=409, detail="attempt_index already consumed")
                if req.attempt_index != handle.attempt_counter + 1:
                    raise HTTPException(
                        status_code=409,
                        detail=f"attempt_index {req.attempt_index} out of order"
                        f" (expected {handle.attempt_counter + 1})",
                    )
            if not (1 <= req.position <= handle.params.L):
                raise HTTPException(
                    status_code=422,
                    detail=f"position {req.position} out of range 1..{handle.params.L}",
                )
            board_before = board_to_pattern(handle.state.board)
            outcome = attempt_move(
                handle.state, MoveAttempt(req.position, Bucket(req.bucket))
            )
            handle.attempt_counter += 1
            handle.attempt_in_episode += 1
            handle.reward_sum += outcome.reward
            store.append_attempt(
                session_id,
                AttemptRecord(
                    episode=handle.episode_index,
                    attempt=handle.attempt_in_episode,
                    board_before=board_before,
                    position=req.position,
                    bucket=Bucket(req.bucket),
                    accepted=outcome.accepted,
                    reward=outcome.reward,
                ),
            )
            episode_status = outcome.status
            if episode_status is not Status.IN_PROGRESS:
                handle.episodes_completed += 1
                if handle.episodes_completed < handle.episodes_target:
                    handle.episode_index += 1
                    handle.attempt_in_episode = 0
                    handle.state = new_episode(
                        handle.rule,
                        handle.params,
                        substream_seed(handle.master_seed, handle.episode_index),
                    )
                else:
                    handle.phase = (
                        PHASE_AWAITING_GUESS
                        if handle.learner_kind == "human"
                        else PHASE_DONE
                    )
            response = {
                "accepted": outcome.accepted,
                "reward": outcome.reward,
                "episode_status": episode_status.value,
                "attempt_index": handle.attempt_counter,
                **state_view(handle),
            }
            if req.attempt_index is not None:
                handle.past_responses[req.attempt_index] = response
            return response

    @app.post("/v1/sessions/{session_id}/guess")
    def post_guess(session_id: str, req: GuessRequest) -> dict:
        handle = get_handle(session_id)
        with handle.lock:
            if handle.phase != PHASE_AWAITING_GUESS:
                raise HTTPException(
                    status_code=409, detail=f"session is {handle.phase}, not awaiting a guess"
                )
            if not req.guess_text.strip():
                raise HTTPException(status_code=400, detail="guess text must be nonempty")
            store.append_guess(
                session_id, GuessRecord(guess_text=req.guess_text, submitted_at=utc_now())
            )
            handle.phase = PHASE_DONE
            return {"ok": True, **state_view(handle)}

    @app.get("/v1/sessions/{session_id}/transcript", response_class=PlainTextResponse)
    def get_transcript(session_id: str) -> str:
        handle = get_handle(session_id)
        text = store.export_text(session_id)
        if handle.phase != PHASE_DONE:
            # Never leak the hidden rule while the session is live.
            lines = []
            for line in text.splitlines():
                obj = json.loads(line)
                if "rule_text" in obj:
                    obj["rule_text"] = RULE_REDACTED
                    obj.pop("rule_hash", None)
                lines.append(json.dumps(obj, separators=(",", ":")))
            text = "\n".join(lines) + "\n"
        return text

    @app.get("/v1/rules")
    def list_rules() -> dict:
        if rules_root is None or not rules_root.is_dir():
            return {"rules": []}
        return {"rules": sorted(p.stem for p in rules_root.glob("*.rule"))}

    if app_dir is not None and Path(app_dir).is_dir():
        app.mount("/app", StaticFiles(directory=str(app_dir), html=True), name="app")

    return app


def _new_session_id() -> str:
    return str(uuid.uuid4())
