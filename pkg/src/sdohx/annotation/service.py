"""HTTP JSON API for the two-arm annotation study.

Timing is entirely server-side: the clock stamps first-serve and submission
times, and the browser never reports durations. Intervention items carry the
verified sentence spans from the extraction traces as highlights; control
items never do.
"""

from __future__ import annotations

import threading
import time
import uuid
from pathlib import Path
from typing import Callable, Mapping

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from ..corpus import IncidentRecord
from ..factors import FactorRegistry
from ..pipeline import StageTrace
from .store import StudyStore
from .study import (
    ARMS,
    StudyConfig,
    StudyError,
    compute_study_report,
    load_questionnaire,
    validate_answers,
    validate_study,
)


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, **extra):
        self.status = status
        self.code = code
        self.message = message
        self.extra = extra


class CreateStudyBody(BaseModel):
    study_id: str | None = None
    factors: list[str]
    incidents: list[str]
    min_arm_gap_seconds: float = Field(default=24 * 3600.0, ge=0)
    highlights_enabled: bool = True
    seed: int = 0


class OpenSessionBody(BaseModel):
    annotator_id: str
    arm: str


class DecisionBody(BaseModel):
    incident_id: str
    factor_id: str
    decision: bool


class QuestionnaireBody(BaseModel):
    answers: dict[str, int]


class AnnotationService:
    def __init__(
        self,
        records: Mapping[str, IncidentRecord],
        registry: FactorRegistry,
        traces: Mapping[tuple[str, str], StageTrace],
        store: StudyStore,
        clock: Callable[[], float] = time.time,
    ):
        self.records = dict(records)
        self.registry = registry
        self.traces = dict(traces)
        self.store = store
        self.clock = clock
        self.questions = load_questionnaire()
        self._session_locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _session_lock(self, session_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._session_locks.setdefault(session_id, threading.Lock())

    # --- studies ----------------------------------------------------------

    def create_study(self, body: CreateStudyBody) -> str:
        study_id = body.study_id or f"study-{uuid.uuid4().hex[:8]}"
        if self.store.has_study(study_id):
            raise ApiError(409, "study_exists", f"study {study_id!r} already exists")
        config = StudyConfig(
            study_id=study_id,
            factors=tuple(body.factors),
            incidents=tuple(body.incidents),
            min_arm_gap_seconds=body.min_arm_gap_seconds,
            highlights_enabled=body.highlights_enabled,
            seed=body.seed,
        )
        try:
            validate_study(config, self.records, self.registry, self.traces)
        except StudyError as exc:
            raise ApiError(400, "invalid_study", str(exc)) from exc
        self.store.put_study(study_id, config.to_obj(), self.clock())
        return study_id

    def _config(self, study_id: str) -> StudyConfig:
        obj = self.store.get_study(study_id)
        if obj is None:
            raise ApiError(404, "unknown_study", f"no study {study_id!r}")
        return StudyConfig.from_obj(obj)

    # --- sessions -----------------------------------------------------------

    def open_session(self, study_id: str, body: OpenSessionBody) -> dict:
        config = self._config(study_id)
        if body.arm not in ARMS:
            raise ApiError(400, "bad_arm", f"arm must be one of {ARMS}")
        if not body.annotator_id:
            raise ApiError(400, "bad_annotator", "annotator_id must be non-empty")
        session_id = f"sess-{uuid.uuid4().hex[:12]}"
        self.store.put_session(session_id, study_id, body.annotator_id, body.arm, self.clock())
        return {
            "session_id": session_id,
            "study_id": study_id,
            "arm": body.arm,
            "total_items": len(config.items()),
        }

    def _session(self, session_id: str):
        session = self.store.get_session(session_id)
        if session is None:
            raise ApiError(404, "unknown_session", f"no session {session_id!r}")
        return session

    def _check_arm_gate(self, session, config: StudyConfig) -> None:
        if session["arm"] != "intervention":
            return
        completed = self.store.completed_sessions(
            session["study_id"], session["annotator_id"], "control"
        )
        if not completed:
            raise ApiError(
                409,
                "arm_locked",
                "the intervention arm unlocks after the control arm is completed",
                unlock_at=None,
            )
        unlock_at = max(row["completed_at"] for row in completed) + config.min_arm_gap_seconds
        if self.clock() < unlock_at:
            raise ApiError(
                409,
                "arm_locked",
                "the intervention arm is still locked by the minimum arm gap",
                unlock_at=unlock_at,
            )

    def _highlights(self, incident_id: str, factor_id: str) -> list[dict]:
        trace = self.traces.get((incident_id, factor_id))
        if trace is None:
            return []
        spans_by_ref = {(s.report_tag, s.index): s for s in trace.sentences}
        highlights = []
        for ref in trace.verified:
            span = spans_by_ref[(ref.report, ref.index)]
            highlights.append(
                {
                    "report": span.report_tag,
                    "index": span.index,
                    "char_start": span.char_start,
                    "char_end": span.char_end,
                    "text": span.text,
                }
            )
        return highlights

    def next_item(self, session_id: str) -> dict:
        with self._session_lock(session_id):
            session = self._session(session_id)
            config = self._config(session["study_id"])
            self._check_arm_gate(session, config)
            order = config.item_order(session["annotator_id"])
            done = len(self.store.events_for_session(session_id))
            if done >= len(order):
                return {"done": True, "progress": {"done": done, "total": len(order)}}
            incident_id, factor_id = order[done]
            self.store.record_serve(session_id, incident_id, factor_id, self.clock())
            record = self.records[incident_id]
            factor = self.registry[factor_id]
            highlights = (
                self._highlights(incident_id, factor_id)
                if session["arm"] == "intervention" and config.highlights_enabled
                else []
            )
            return {
                "done": False,
                "arm": session["arm"],
                "incident_id": incident_id,
                "factor_id": factor_id,
                "factor_name": factor.name,
                "factor_definition": factor.definition,
                "cme_report": record.cme_report,
                "le_report": record.le_report,
                "highlights": highlights,
                "progress": {"done": done, "total": len(order)},
            }

    def submit_decision(self, session_id: str, body: DecisionBody) -> dict:
        with self._session_lock(session_id):
            session = self._session(session_id)
            config = self._config(session["study_id"])
            order = config.item_order(session["annotator_id"])
            done = len(self.store.events_for_session(session_id))
            if done >= len(order):
                raise ApiError(409, "study_complete", "all items already answered")
            if self.store.get_event(session_id, body.incident_id, body.factor_id) is not None:
                raise ApiError(409, "duplicate_decision", "item already answered")
            expected = order[done]
            if (body.incident_id, body.factor_id) != expected:
                raise ApiError(
                    409,
                    "out_of_order",
                    f"expected a decision for {expected[0]}/{expected[1]}",
                )
            serve = self.store.get_serve(session_id, body.incident_id, body.factor_id)
            if serve is None:
                raise ApiError(409, "not_served", "item was never served to this session")
            submitted_at = self.clock()
            self.store.put_event(
                session_id,
                session["annotator_id"],
                session["arm"],
                body.incident_id,
                body.factor_id,
                body.decision,
                serve["served_at"],
                submitted_at,
            )
            done += 1
            if done == len(order):
                self.store.complete_session(session_id, submitted_at)
            return {"ok": True, "progress": {"done": done, "total": len(order)}}

    def submit_questionnaire(self, session_id: str, body: QuestionnaireBody) -> dict:
        with self._session_lock(session_id):
            session = self._session(session_id)
            if session["completed_at"] is None:
                raise ApiError(409, "session_incomplete", "answer all items first")
            if self.store.get_questionnaire(session_id) is not None:
                raise ApiError(409, "duplicate_questionnaire", "questionnaire already submitted")
            try:
                clean = validate_answers(body.answers, self.questions)
            except StudyError as exc:
                raise ApiError(400, "invalid_answers", str(exc)) from exc
            self.store.put_questionnaire(session_id, session["arm"], clean, self.clock())
            return {"ok": True}

    def study_report(self, study_id: str) -> dict:
        config = self._config(study_id)
        try:
            return compute_study_report(
                config,
                self.store.sessions_for_study(study_id),
                self.store.events_for_study(study_id),
                self.store.questionnaires_for_study(study_id),
                self.records,
            )
        except StudyError as exc:
            raise ApiError(409, "report_unavailable", str(exc)) from exc


def create_app(
    records: Mapping[str, IncidentRecord],
    registry: FactorRegistry,
    traces: Mapping[tuple[str, str], StageTrace],
    store: StudyStore,
    clock: Callable[[], float] = time.time,
    ui_dir: str | Path | None = None,
) -> FastAPI:
    service = AnnotationService(records, registry, traces, store, clock=clock)
    app = FastAPI(title="annotation study service")
    app.state.service = service

    @app.exception_handler(ApiError)
    async def _api_error(_: Request, exc: ApiError) -> JSONResponse:
        body = {"code": exc.code, "message": exc.message, **exc.extra}
        return JSONResponse(status_code=exc.status, content=body)

    @app.get("/api/questionnaire")
    def get_questionnaire() -> list[dict]:
        return service.questions

    @app.post("/api/studies", status_code=201)
    def create_study(body: CreateStudyBody) -> dict:
        return {"study_id": service.create_study(body)}

    @app.post("/api/studies/{study_id}/sessions", status_code=201)
    def open_session(study_id: str, body: OpenSessionBody) -> dict:
        return service.open_session(study_id, body)

    @app.get("/api/sessions/{session_id}/next")
    def next_item(session_id: str) -> dict:
        return service.next_item(session_id)

    @app.post("/api/sessions/{session_id}/decision")
    def submit_decision(session_id: str, body: DecisionBody) -> dict:
        return service.submit_decision(session_id, body)

    @app.post("/api/sessions/{session_id}/questionnaire")
    def submit_questionnaire(session_id: str, body: QuestionnaireBody) -> dict:
        return service.submit_questionnaire(session_id, body)

    @app.get("/api/studies/{study_id}/report")
    def study_report(study_id: str) -> dict:
        return service.study_report(study_id)

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    return app
