"""HTTP surface of the live survey service.

Thin layer over the event-sourced store: routes validate payloads with the
pydantic models, translate store exceptions to HTTP statuses, and never
touch survey math directly. Sessions marked ``require_token`` demand the
per-session bearer token on the experimenter endpoints (state, export,
status changes); respondent endpoints stay open so survey links work.
"""

from __future__ import annotations

import secrets

from fastapi import FastAPI, Header, HTTPException
from fastapi.responses import PlainTextResponse

from .schemas import (
    AddRespondentRequest,
    AddRespondentResponse,
    ChoiceRequest,
    ChoiceResponse,
    CreateSessionRequest,
    CreateSessionResponse,
    QuestionResponse,
    SessionConfigIn,
    StateResponse,
    StatusRequest,
    StatusResponse,
)
from .store import (
    ConflictError,
    LiveSession,
    RespondentNotFound,
    SessionConfig,
    SessionNotFound,
    SessionStore,
)


def _config_from_api(cfg: SessionConfigIn) -> SessionConfig:
    default_eta = 1.0 if cfg.mode == "single" else 0.01
    return SessionConfig(
        mode=cfg.mode,
        eta=cfg.eta if cfg.eta is not None else default_eta,
        n_q=cfg.n_q,
        seed=cfg.seed,
        skip_identical=cfg.skip_identical,
        phi_init_std=cfg.phi_init_std,
        covariate_dim=cfg.covariate_dim,
        policy_hidden=tuple(cfg.policy_hidden),
        require_token=cfg.require_token,
        fsync=cfg.fsync,
    )


def create_app(data_dir: str) -> FastAPI:
    app = FastAPI(title="gbs survey service", version="0.1.0")
    store = SessionStore(data_dir)
    app.state.store = store

    def get_session(session_id: str) -> LiveSession:
        try:
            return store.get(session_id)
        except SessionNotFound as exc:
            raise HTTPException(status_code=404, detail=str(exc))

    def check_token(session: LiveSession, authorization: str | None) -> None:
        if not session.config.require_token:
            return
        expected = f"Bearer {session.token}"
        if authorization is None or not secrets.compare_digest(authorization, expected):
            raise HTTPException(status_code=401, detail="missing or invalid session token")

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/sessions", response_model=CreateSessionResponse, status_code=201)
    def create_session(req: CreateSessionRequest):
        try:
            session = store.create(req.schema_.attributes, _config_from_api(req.config))
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return CreateSessionResponse(session_id=session.session_id, token=session.token)

    @app.post("/sessions/{session_id}/respondents", response_model=AddRespondentResponse)
    def add_respondent(session_id: str, req: AddRespondentRequest):
        session = get_session(session_id)
        try:
            rid = session.add_respondent(req.covariates)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        except ConflictError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return AddRespondentResponse(respondent_id=rid)

    @app.get(
        "/sessions/{session_id}/respondents/{rid}/question",
        response_model=QuestionResponse,
    )
    def next_question(session_id: str, rid: str):
        session = get_session(session_id)
        try:
            return session.next_question(rid)
        except RespondentNotFound as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except ConflictError as exc:
            # a collision with an outstanding question ships that question
            # back so a client that lost the response can resume
            if exc.payload is not None:
                raise HTTPException(
                    status_code=409,
                    detail={"error": str(exc), "question": exc.payload},
                )
            raise HTTPException(status_code=409, detail=str(exc))

    @app.post(
        "/sessions/{session_id}/respondents/{rid}/choice",
        response_model=ChoiceResponse,
    )
    def submit_choice(session_id: str, rid: str, req: ChoiceRequest):
        session = get_session(session_id)
        try:
            return session.submit_choice(rid, req.question_token, req.choice)
        except RespondentNotFound as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except ConflictError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))

    @app.get("/sessions/{session_id}/state", response_model=StateResponse)
    def session_state(session_id: str, authorization: str | None = Header(default=None)):
        session = get_session(session_id)
        check_token(session, authorization)
        return session.snapshot()

    @app.get("/sessions/{session_id}/export", response_class=PlainTextResponse)
    def export_log(session_id: str, authorization: str | None = Header(default=None)):
        session = get_session(session_id)
        check_token(session, authorization)
        return PlainTextResponse(
            session.export_text(), media_type="application/x-ndjson"
        )

    @app.post("/sessions/{session_id}/status", response_model=StatusResponse)
    def set_status(session_id: str, req: StatusRequest,
                   authorization: str | None = Header(default=None)):
        session = get_session(session_id)
        check_token(session, authorization)
        session.set_status(req.status)
        return StatusResponse(session_id=session_id, status=session.status)

    return app
