"""HTTP service: studies, due occurrences, survey sessions, snooze, export.

The service holds one deployment in memory: loaded studies, enrolled
participants with their occurrence state, active sessions, and a result
sink. All /v1 responses are JSON; errors share one schema::

    {"httpStatus": 404, "code": "UNKNOWN_SESSION", "message": "...", "path": "..."}

Step payloads are self-contained: everything a client renders (prompts,
items, colors, grid layout) is embedded verbatim from the study definition,
so clients never parse study documents themselves.

Per-session and per-participant mutations are serialized with locks;
handlers run sync in the threadpool, so concurrent requests interleave at
entity granularity.
"""

from __future__ import annotations

import itertools
import json
import threading
import uuid
from dataclasses import dataclass, field, replace
from datetime import timedelta
from pathlib import Path
from typing import Any, Optional, Union

from fastapi import FastAPI, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.responses import FileResponse, JSONResponse, PlainTextResponse
from pydantic import BaseModel
from starlette.exceptions import HTTPException as StarletteHTTPException

from .clock import Clock, ManualClock, SystemClock, format_timestamp, parse_timestamp
from .compiler import (
    ActiveItemSet,
    SummaryStep,
    TaskPlan,
    compile_full_task,
    compile_pam_task,
    compile_spot_task,
    derive_active_items,
    step_to_dict,
)
from .definition import (
    StudyDefinition,
    canonical_serialize,
    parse_study_definition,
    validate_study,
)
from .scheduling import (
    Deployment,
    Occurrence,
    OccurrenceStateError,
    ParticipantState,
    ReminderPolicy,
    ScheduleSpec,
    SnoozeLimitReached,
    apply_snooze,
    due_occurrences,
    load_deployment,
)
from .sessions import (
    DEFAULT_SESSION_TTL,
    AnswerMismatch,
    SessionStateError,
    SurveySession,
    expire_if_stale,
    start_session,
)
from .sinks import ResultSink, SinkDeliveryError, ExportFilter, encode_record, export_results, sink_from_config

__all__ = ["ApiError", "DeploymentState", "ServerConfig", "create_app", "load_server_config"]

DEFAULT_PAM_PROMPT = "Which image best captures how you feel right now?"


class ApiError(Exception):
    """Error with a wire representation; handlers raise these."""

    def __init__(self, http_status: int, code: str, message: str):
        super().__init__(message)
        self.http_status = http_status
        self.code = code
        self.message = message


@dataclass
class ServerConfig:
    bind_host: str = "127.0.0.1"
    bind_port: int = 8765
    study_paths: tuple[Path, ...] = ()
    deployment_path: Path | None = None
    sink_config: dict = field(default_factory=lambda: {"kind": "memory"})
    clock_mode: str = "system"            # "system" | "manual"
    clock_start: str | None = None        # manual mode start instant
    assets_dir: Path | None = None
    auth_token_env: str | None = None
    session_ttl: timedelta = DEFAULT_SESSION_TTL
    base_dir: Path | None = None  # sink-relative paths resolve against this


def load_server_config(path: str | Path) -> ServerConfig:
    """Read the server config file; relative paths resolve against it."""
    path = Path(path)
    raw = json.loads(path.read_text(encoding="utf-8"))
    base = path.parent

    def resolve(p: str) -> Path:
        cand = Path(p)
        return cand if cand.is_absolute() else base / cand

    host, port = "127.0.0.1", 8765
    bind = raw.get("bind")
    if bind:
        host, _, port_text = bind.rpartition(":")
        port = int(port_text)
    clock = raw.get("clock", {"mode": "system"})
    ttl = raw.get("sessionTtl")
    return ServerConfig(
        bind_host=host or "127.0.0.1",
        bind_port=port,
        study_paths=tuple(resolve(p) for p in raw.get("studies", [])),
        deployment_path=resolve(raw["deployment"]) if "deployment" in raw else None,
        sink_config=raw.get("sink", {"kind": "memory"}),
        clock_mode=clock.get("mode", "system"),
        clock_start=clock.get("start"),
        assets_dir=resolve(raw["assetsDir"]) if "assetsDir" in raw else None,
        auth_token_env=raw.get("authTokenEnv"),
        session_ttl=timedelta(seconds=ttl) if ttl is not None else DEFAULT_SESSION_TTL,
        base_dir=base,
    )


@dataclass
class _SessionRecord:
    session: SurveySession
    occurrence_id: str
    participant_id: str
    study_id: str
    assessment_id: str
    lock: threading.Lock = field(default_factory=threading.Lock)


@dataclass
class _ParticipantRecord:
    schedule: ParticipantState
    # (study_id, full assessment identifier) -> derived active set
    active_items: dict[tuple[str, str], ActiveItemSet] = field(default_factory=dict)


class DeploymentState:
    """Everything one running service instance knows."""

    def __init__(self, studies: list[StudyDefinition], deployment: Deployment | None,
                 sink: ResultSink, clock: Clock, assets_dir: Path | None = None,
                 auth_token: str | None = None, session_ttl: timedelta = DEFAULT_SESSION_TTL):
        self.clock = clock
        self.sink = sink
        self.assets_dir = assets_dir
        self.auth_token = auth_token
        self.session_ttl = session_ttl
        self.lock = threading.RLock()

        self.studies: dict[str, StudyDefinition] = {}
        self.canonical: dict[str, bytes] = {}
        # assessment identifier -> (study, pair, "full"|"spot")
        self.assessments: dict[str, tuple[StudyDefinition, Any, str]] = {}
        for study in studies:
            self._register_study(study)

        self.schedules: tuple[ScheduleSpec, ...] = ()
        self.policy = ReminderPolicy()
        self.participants: dict[str, _ParticipantRecord] = {}
        if deployment is not None:
            self.schedules = deployment.schedules
            self.policy = deployment.reminders
            for pid, state in deployment.participant_states().items():
                self.participants[pid] = _ParticipantRecord(schedule=state)

        self.sessions: dict[str, _SessionRecord] = {}
        self.occurrence_owner: dict[str, str] = {}
        self._manual_clock = clock if isinstance(clock, ManualClock) else None
        self._session_seq = itertools.count(1)

    def _register_study(self, study: StudyDefinition) -> None:
        report = validate_study(study)
        if not report.ok:
            problems = "; ".join(f"{d.code} at {d.path}" for d in report.errors)
            raise ValueError(f"study {study.study_id!r} fails validation: {problems}")
        self.studies[study.study_id] = study
        self.canonical[study.study_id] = canonical_serialize(study)
        for pair in study.assessments:
            self.assessments[pair.full.identifier] = (study, pair, "full")
            self.assessments[pair.spot.identifier] = (study, pair, "spot")

    # -- id generation ------------------------------------------------------

    def next_session_id(self) -> str:
        if self._manual_clock is not None:
            return f"ses-{next(self._session_seq):04d}"  # deterministic under manual clock
        return f"ses-{uuid.uuid4().hex}"

    # -- lookups ------------------------------------------------------------

    def participant(self, pid: str) -> _ParticipantRecord:
        record = self.participants.get(pid)
        if record is None:
            raise ApiError(404, "UNKNOWN_PARTICIPANT", f"participant {pid!r} is not enrolled")
        return record

    def session_record(self, sid: str) -> _SessionRecord:
        record = self.sessions.get(sid)
        if record is None:
            raise ApiError(404, "UNKNOWN_SESSION", f"session {sid!r} does not exist")
        return record

    def active_set_for(self, pid: str, study: StudyDefinition, pair) -> ActiveItemSet:
        record = self.participant(pid)
        existing = record.active_items.get((study.study_id, pair.full.identifier))
        if existing is not None:
            return existing
        # No completed full assessment yet: nothing is active.
        return ActiveItemSet(item_ids=(), derived_from="",
                             derived_at=record.schedule.enrolled_at)

    def compile_for(self, pid: str, occ: Occurrence) -> TaskPlan:
        entry = self.assessments.get(occ.task_ref.assessment_id)
        if entry is None:
            raise ApiError(404, "UNKNOWN_ASSESSMENT",
                           f"assessment {occ.task_ref.assessment_id!r} is not loaded")
        study, pair, role = entry
        kind = occ.task_ref.kind
        if kind == "full":
            return compile_full_task(pair, study.items, study_id=study.study_id)
        if kind == "spot":
            active = self.active_set_for(pid, study, pair)
            return compile_spot_task(pair, active, study.items, study_id=study.study_id)
        if kind == "pam":
            return compile_pam_task(study.items, DEFAULT_PAM_PROMPT,
                                    identifier=occ.task_ref.assessment_id,
                                    study_id=study.study_id)
        raise ApiError(422, "BAD_TASK_KIND", f"unknown task kind {kind!r}")


# ---------------------------------------------------------------------------
# Wire forms

def _session_wire(record: _SessionRecord) -> dict:
    session = record.session
    if session.status == "completed":
        return {"sessionId": session.session_id, "done": True,
                "envelopeId": f"env-{session.session_id}"}
    if session.status == "abandoned":
        raise ApiError(409, "SESSION_NOT_IN_PROGRESS",
                       f"session {session.session_id!r} was abandoned")
    step = session.current_step
    return {"sessionId": session.session_id, "done": False,
            "step": step_to_dict(step, session.cursor, session.total_steps)}


def _occurrence_wire(occ: Occurrence, active_empty: bool | None) -> dict:
    return {
        "occurrenceId": occ.occurrence_id,
        "participantId": occ.participant_id,
        "taskRef": {"assessmentId": occ.task_ref.assessment_id, "kind": occ.task_ref.kind},
        "dueAt": format_timestamp(occ.due_at),
        "expiresAt": format_timestamp(occ.expires_at),
        "remindAt": format_timestamp(occ.remind_at),
        "snoozeCount": occ.snooze_count,
        "state": occ.state,
        "sessionId": occ.session_id,
        "activeItemsEmpty": active_empty,
    }


class _AnswerBody(BaseModel):
    answer: Union[str, list[str], None] = None
    back: bool = False


class _AdvanceBody(BaseModel):
    seconds: float


# ---------------------------------------------------------------------------
# App factory

def create_app(state: DeploymentState) -> FastAPI:
    app = FastAPI(title="visurvey", docs_url=None, redoc_url=None, openapi_url=None)
    app.state.deployment = state

    def api_error_response(request: Request, status: int, code: str, message: str) -> JSONResponse:
        return JSONResponse(status_code=status, content={
            "httpStatus": status, "code": code, "message": message,
            "path": request.url.path})

    @app.exception_handler(ApiError)
    async def handle_api_error(request: Request, exc: ApiError):
        return api_error_response(request, exc.http_status, exc.code, exc.message)

    @app.exception_handler(StarletteHTTPException)
    async def handle_http_error(request: Request, exc: StarletteHTTPException):
        code = {404: "NOT_FOUND", 405: "METHOD_NOT_ALLOWED"}.get(exc.status_code, "HTTP_ERROR")
        return api_error_response(request, exc.status_code, code, str(exc.detail))

    @app.exception_handler(RequestValidationError)
    async def handle_validation_error(request: Request, exc: RequestValidationError):
        return api_error_response(request, 422, "VALIDATION", str(exc.errors()))

    @app.middleware("http")
    async def check_auth(request: Request, call_next):
        token = state.auth_token
        if token and request.url.path.startswith("/v1"):
            supplied = request.headers.get("Authorization", "")
            if supplied != f"Bearer {token}":
                return JSONResponse(status_code=401, content={
                    "httpStatus": 401, "code": "UNAUTHORIZED",
                    "message": "missing or invalid bearer token",
                    "path": request.url.path})
        return await call_next(request)

    # -- studies ------------------------------------------------------------

    @app.get("/v1/studies/{study_id}")
    def get_study(study_id: str):
        blob = state.canonical.get(study_id)
        if blob is None:
            raise ApiError(404, "UNKNOWN_STUDY", f"study {study_id!r} is not loaded")
        return Response(content=blob, media_type="application/json")

    # -- due occurrences ------------------------------------------------------

    def _due_for(pid: str) -> list[dict]:
        record = state.participant(pid)
        now = state.clock.now()
        due = due_occurrences(state.schedules, record.schedule, now)
        for occ in due:
            state.occurrence_owner[occ.occurrence_id] = pid
        out = []
        for occ in due:
            active_empty: bool | None = None
            if occ.task_ref.kind == "spot":
                entry = state.assessments.get(occ.task_ref.assessment_id)
                if entry is not None:
                    study, pair, _ = entry
                    active_empty = not state.active_set_for(pid, study, pair).item_ids
            out.append(_occurrence_wire(occ, active_empty))
        return out

    @app.get("/v1/participants/{pid}/due")
    def get_due(pid: str):
        with state.lock:
            return _due_for(pid)

    # -- session lifecycle ----------------------------------------------------

    @app.post("/v1/participants/{pid}/occurrences/{occurrence_id}/sessions", status_code=201)
    def create_session(pid: str, occurrence_id: str):
        with state.lock:
            record = state.participant(pid)
            _due_for(pid)  # materialize current occurrence states
            occ = record.schedule.occurrences.get(occurrence_id)
            if occ is None:
                raise ApiError(404, "UNKNOWN_OCCURRENCE",
                               f"occurrence {occurrence_id!r} does not exist for {pid!r}")
            now = state.clock.now()
            if occ.state == "completed":
                raise ApiError(409, "OCCURRENCE_COMPLETED", "occurrence already completed")
            if occ.state == "expired" or now >= occ.expires_at:
                if occ.open:
                    record.schedule.occurrences[occurrence_id] = replace(occ, state="expired")
                raise ApiError(410, "OCCURRENCE_EXPIRED", "occurrence window has closed")
            if occ.session_id is not None:
                bound = state.sessions.get(occ.session_id)
                if bound is not None:
                    expire_if_stale(bound.session, now, state.session_ttl)
                if bound is not None and bound.session.status != "abandoned":
                    raise ApiError(409, "SESSION_EXISTS",
                                   f"occurrence already has session {occ.session_id!r}")

            plan = state.compile_for(pid, occ)
            session = start_session(plan, pid, clock=state.clock,
                                    session_id=state.next_session_id())
            entry = state.assessments.get(occ.task_ref.assessment_id)
            study_id = entry[0].study_id if entry else plan.study_id
            srecord = _SessionRecord(session=session, occurrence_id=occurrence_id,
                                     participant_id=pid, study_id=study_id,
                                     assessment_id=occ.task_ref.assessment_id)
            state.sessions[session.session_id] = srecord
            record.schedule.occurrences[occurrence_id] = replace(occ, session_id=session.session_id)

            body = _session_wire(srecord)
            body["occurrenceId"] = occurrence_id
            body["taskKind"] = plan.task_kind
            body["studyId"] = study_id
            return body

    @app.get("/v1/sessions/{sid}/step")
    def get_step(sid: str):
        record = state.session_record(sid)
        with record.lock:
            expire_if_stale(record.session, state.clock.now(), state.session_ttl)
            return _session_wire(record)

    def _complete_session(record: _SessionRecord) -> dict:
        """Finalize, persist, transition the occurrence, derive active items."""
        envelope = record.session.finalize()
        try:
            state.sink.append(envelope)
        except SinkDeliveryError:
            # Parked in the outbox; completion still stands, nothing was lost.
            pass
        with state.lock:
            participant = state.participants.get(record.participant_id)
            if participant is not None:
                occ = participant.schedule.occurrences.get(record.occurrence_id)
                if occ is not None:
                    participant.schedule.occurrences[record.occurrence_id] = replace(
                        occ, state="completed", session_id=record.session.session_id)
                entry = state.assessments.get(record.assessment_id)
                if entry is not None and record.session.plan.task_kind == "full":
                    study, pair, _ = entry
                    active = derive_active_items(envelope, pair.activation, study.items)
                    participant.active_items[(study.study_id, pair.full.identifier)] = active
        return {"sessionId": record.session.session_id, "done": True,
                "envelopeId": envelope.envelope_id}

    @app.post("/v1/sessions/{sid}/answers")
    def post_answer(sid: str, body: _AnswerBody):
        record = state.session_record(sid)
        with record.lock:
            expire_if_stale(record.session, state.clock.now(), state.session_ttl)
            try:
                if body.back:
                    record.session.go_back()
                else:
                    record.session.submit_answer(body.answer)
            except AnswerMismatch as exc:
                raise ApiError(422, "ANSWER_MISMATCH", str(exc)) from exc
            except SessionStateError as exc:
                raise ApiError(409, "SESSION_NOT_IN_PROGRESS", str(exc)) from exc
            if record.session.status == "completed":
                return _complete_session(record)
            return _session_wire(record)

    @app.post("/v1/sessions/{sid}/complete-ack")
    def post_complete_ack(sid: str):
        record = state.session_record(sid)
        with record.lock:
            expire_if_stale(record.session, state.clock.now(), state.session_ttl)
            step = record.session.current_step
            if record.session.status == "completed":
                raise ApiError(409, "SESSION_NOT_IN_PROGRESS", "session already completed")
            if not isinstance(step, SummaryStep):
                raise ApiError(422, "ANSWER_MISMATCH", "current step is not a summary")
            try:
                record.session.submit_answer(None)
            except SessionStateError as exc:
                raise ApiError(409, "SESSION_NOT_IN_PROGRESS", str(exc)) from exc
            if record.session.status == "completed":
                return _complete_session(record)
            return _session_wire(record)  # summary mid-plan cannot happen, but be safe

    # -- snooze ---------------------------------------------------------------

    @app.post("/v1/occurrences/{occurrence_id}/snooze")
    def post_snooze(occurrence_id: str):
        with state.lock:
            pid = state.occurrence_owner.get(occurrence_id)
            if pid is None:
                raise ApiError(404, "UNKNOWN_OCCURRENCE",
                               f"occurrence {occurrence_id!r} has not been issued")
            record = state.participant(pid)
            occ = record.schedule.occurrences[occurrence_id]
            try:
                updated = apply_snooze(occ, state.clock.now(), state.policy)
            except SnoozeLimitReached as exc:
                raise ApiError(409, "SNOOZE_LIMIT", str(exc)) from exc
            except OccurrenceStateError as exc:
                status = 410 if "expired" in str(exc) else 409
                code = "OCCURRENCE_EXPIRED" if status == 410 else "OCCURRENCE_COMPLETED"
                raise ApiError(status, code, str(exc)) from exc
            record.schedule.occurrences[occurrence_id] = updated
            active_empty = None
            if updated.task_ref.kind == "spot":
                entry = state.assessments.get(updated.task_ref.assessment_id)
                if entry is not None:
                    study, pair, _ = entry
                    active_empty = not state.active_set_for(pid, study, pair).item_ids
            return _occurrence_wire(updated, active_empty)

    # -- export ---------------------------------------------------------------

    @app.get("/v1/export")
    def get_export(studyId: str | None = None, participantId: str | None = None,
                   since: str | None = None, until: str | None = None):
        try:
            flt = ExportFilter(
                study_id=studyId,
                participant_id=participantId,
                since=parse_timestamp(since) if since else None,
                until=parse_timestamp(until) if until else None,
            )
        except ValueError as exc:
            raise ApiError(422, "VALIDATION", f"bad time filter: {exc}") from exc
        try:
            envelopes = export_results(state.sink, flt)
        except RuntimeError as exc:
            raise ApiError(400, "EXPORT_UNSUPPORTED", str(exc)) from exc
        body = "".join(encode_record(e) + "\n" for e in envelopes)
        return PlainTextResponse(content=body, media_type="application/x-ndjson")

    # -- assets ---------------------------------------------------------------

    @app.get("/assets/{image_title}")
    def get_asset(image_title: str):
        if state.assets_dir is None:
            raise ApiError(404, "ASSET_NOT_FOUND", "no assets directory configured")
        if "/" in image_title or image_title.startswith("."):
            raise ApiError(404, "ASSET_NOT_FOUND", "bad asset key")
        candidates = [state.assets_dir / image_title]
        candidates += [state.assets_dir / f"{image_title}{ext}"
                       for ext in (".png", ".jpg", ".jpeg", ".svg", ".gif")]
        for candidate in candidates:
            if candidate.is_file():
                return FileResponse(candidate)
        raise ApiError(404, "ASSET_NOT_FOUND", f"no asset for key {image_title!r}")

    # -- manual clock (test/deployment affordance) -----------------------------

    @app.get("/v1/_clock")
    def get_clock():
        mode = "manual" if state._manual_clock is not None else "system"
        return {"mode": mode, "now": format_timestamp(state.clock.now())}

    @app.post("/v1/_clock/advance")
    def post_clock_advance(body: _AdvanceBody):
        if state._manual_clock is None:
            raise ApiError(409, "CLOCK_NOT_MANUAL", "server runs on the system clock")
        state._manual_clock.advance(timedelta(seconds=body.seconds))
        return {"mode": "manual", "now": format_timestamp(state.clock.now())}

    return app


def build_state(config: ServerConfig) -> DeploymentState:
    """Load studies/deployment/sink per the config and assemble the state."""
    import os

    clock: Clock
    if config.clock_mode == "manual":
        if not config.clock_start:
            raise ValueError("manual clock needs a start instant")
        clock = ManualClock(parse_timestamp(config.clock_start))
    else:
        clock = SystemClock()

    deployment = None
    study_paths = list(config.study_paths)
    if config.deployment_path is not None:
        deployment = load_deployment(config.deployment_path)
        ref = Path(deployment.study_ref)
        ref = ref if ref.is_absolute() else config.deployment_path.parent / ref
        if ref.exists() and ref not in study_paths:
            study_paths.append(ref)

    studies = []
    seen_ids = set()
    for path in study_paths:
        study = parse_study_definition(Path(path).read_bytes())
        if study.study_id not in seen_ids:
            studies.append(study)
            seen_ids.add(study.study_id)

    sink = sink_from_config(config.sink_config, base_dir=config.base_dir, clock=clock)
    token = None
    if config.auth_token_env:
        token = os.environ.get(config.auth_token_env)

    return DeploymentState(studies=studies, deployment=deployment, sink=sink,
                           clock=clock, assets_dir=config.assets_dir,
                           auth_token=token, session_ttl=config.session_ttl)


def app_from_config(path: str | Path) -> FastAPI:
    config = load_server_config(path)
    return create_app(build_state(config))
