"""HTTP JSON API over the store and pipelines.

Error contract: 400 malformed input, 404 unknown ids, 409 conflicts or
missing models (degraded mode), 422 answers outside a feature's domain
(response echoes the allowed values). Reads never block on training;
training swaps models atomically in the store, and the serving cache
re-prepares itself when it sees a new payload.
"""

from __future__ import annotations

import time
from pathlib import Path
from typing import Any

from fastapi import Body, FastAPI, Query, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, PlainTextResponse

from .cards import DomainError, answer_choices, validate_answer
from .config import EngineConfig
from .domain import FeedbackMode, ValidationError
from .features import default_schema
from .ingest import ingest_rows
from .pipeline import (
    MissingModelError,
    Runtime,
    explain_event,
    full_card,
    pipeline_train,
    resolve_week,
    weekly_feedback,
    global_shap_csv,
)
from .store import ConflictError, ElicitationRecord, NotFoundError, Store

API_FORMAT_VERSION = 1


def create_app(store: Store, config: EngineConfig) -> FastAPI:
    app = FastAPI(title="salient-feedback", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["GET", "POST"],
        allow_headers=["*"],
    )
    runtime = Runtime(store, config)
    app.state.store = store
    app.state.config = config
    app.state.runtime = runtime

    # ---------------------------------------------------- error mapping

    @app.exception_handler(RequestValidationError)
    async def _malformed(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": "malformed request body"})

    @app.exception_handler(NotFoundError)
    async def _not_found(request: Request, exc: NotFoundError):
        return JSONResponse(status_code=404, content={"detail": str(exc.args[0])})

    @app.exception_handler(MissingModelError)
    async def _no_model(request: Request, exc: MissingModelError):
        return JSONResponse(status_code=409, content={"detail": str(exc)})

    @app.exception_handler(ConflictError)
    async def _conflict(request: Request, exc: ConflictError):
        return JSONResponse(status_code=409, content={"detail": str(exc)})

    @app.exception_handler(DomainError)
    async def _bad_answer(request: Request, exc: DomainError):
        allowed = getattr(exc, "allowed", None)
        return JSONResponse(
            status_code=422,
            content={"detail": str(exc), "allowed": allowed},
        )

    @app.exception_handler(ValidationError)
    async def _invalid(request: Request, exc: ValidationError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(ValueError)
    async def _bad_value(request: Request, exc: ValueError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    # ------------------------------------------------------------ routes

    @app.get("/v1/status")
    def status() -> dict[str, Any]:
        models = {}
        for mode in (FeedbackMode.MANUAL.value, FeedbackMode.AUTO.value):
            stored = store.get_model(mode)
            models[mode] = (
                None
                if stored is None
                else {"n_labels": stored.n_labels, "trained_at": stored.trained_at}
            )
        return {
            "format_version": API_FORMAT_VERSION,
            "events": store.event_count(),
            "labels": {
                "total": store.label_count(),
                FeedbackMode.MANUAL.value: store.label_count(FeedbackMode.MANUAL.value),
                FeedbackMode.AUTO.value: store.label_count(FeedbackMode.AUTO.value),
            },
            "models": models,
        }

    @app.post("/v1/events")
    def post_events(payload: dict = Body(...)):
        rows = payload.get("rows")
        if not isinstance(rows, list) or not all(isinstance(r, dict) for r in rows):
            return JSONResponse(
                status_code=400,
                content={"detail": 'body must be {"rows": [row objects]}'},
            )
        report = ingest_rows(
            store, list(enumerate(rows, start=1)), source="<api>", fmt="json"
        )
        body = report.to_dict()
        if report.has_conflicts:
            return JSONResponse(status_code=409, content=body)
        if not report.ok:
            return JSONResponse(status_code=400, content=body)
        return body

    @app.post("/v1/train")
    def post_train() -> dict[str, Any]:
        report = pipeline_train(store, config)
        return report.to_dict()

    @app.get("/v1/users/{user_id}/feedback")
    def get_feedback(user_id: str, week: str | None = Query(default=None)):
        if not store.has_user(user_id):
            raise NotFoundError(f"unknown user {user_id!r}")
        week = resolve_week(store, user_id, week)
        bundles = weekly_feedback(runtime, user_id, week=week)
        return {
            "format_version": API_FORMAT_VERSION,
            "user_id": user_id,
            "week": week,
            "cards": [b.card.to_json_dict() for b in bundles],
        }

    @app.get("/v1/events/{event_id}/card")
    def get_card(event_id: str, expand: str | None = Query(default=None)):
        if expand == "full":
            return full_card(runtime, event_id).to_json_dict()
        return explain_event(runtime, event_id).card.to_json_dict()

    @app.get("/v1/events/{event_id}/explanation")
    def get_explanation(event_id: str):
        return explain_event(runtime, event_id).to_json_dict()

    @app.post("/v1/elicitations")
    def post_elicitation(payload: dict = Body(...)):
        required = ("event_id", "user_id", "feature", "answer", "rating")
        missing = [k for k in required if k not in payload]
        if missing:
            return JSONResponse(
                status_code=400,
                content={"detail": f"missing fields: {', '.join(missing)}"},
            )
        event_id = str(payload["event_id"])
        feature = str(payload["feature"])
        rating = payload["rating"]
        store.get_event(event_id)  # 404 when unknown
        try:
            schema = runtime.shared_schema()
        except MissingModelError:
            schema = default_schema()
        try:
            j = schema.index_of(feature)
        except KeyError:
            raise NotFoundError(f"unknown feature {feature!r}") from None
        spec = schema.features[j]
        canonical = validate_answer(spec, payload["answer"])
        if not isinstance(rating, int) or isinstance(rating, bool) or not -2 <= rating <= 2:
            return JSONResponse(
                status_code=422,
                content={
                    "detail": f"rating must be an integer in [-2, 2], got {rating!r}",
                    "allowed": [-2, -1, 0, 1, 2],
                },
            )
        submission_id = payload.get("submission_id")
        record = ElicitationRecord(
            event_id=event_id,
            user_id=str(payload["user_id"]),
            feature=feature,
            answer=canonical,
            rating=rating,
            received_at=int(time.time()),
            submission_id=str(submission_id) if submission_id is not None else None,
        )
        seq, created = store.add_elicitation(record)
        body = {
            "format_version": API_FORMAT_VERSION,
            "seq": seq,
            "created": created,
            "canonical_answer": canonical,
            "label_count": store.label_count(),
        }
        return JSONResponse(status_code=201 if created else 200, content=body)

    @app.get("/v1/reports/global-shap")
    def get_global_shap(
        mode: str = Query(default=FeedbackMode.AUTO.value),
        max_instances: int = Query(default=200, ge=1, le=2000),
    ):
        try:
            mode = FeedbackMode(mode).value
        except ValueError:
            return JSONResponse(
                status_code=400, content={"detail": f"unknown mode {mode!r}"}
            )
        csv_text = global_shap_csv(runtime, mode, max_instances=max_instances)
        return PlainTextResponse(csv_text, media_type="text/csv")

    ui_dir = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    if ui_dir.is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


def serve(store: Store, config: EngineConfig) -> None:
    """Run the API under uvicorn (blocking)."""
    import uvicorn

    app = create_app(store, config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="warning")
