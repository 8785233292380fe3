"""HTTP service wrapping the evaluation pipeline: runs, events, reports, chat."""
from __future__ import annotations

import json
import threading
import time
import uuid

from fastapi import FastAPI, File, Form, Request, UploadFile
from fastapi.responses import JSONResponse

from . import __version__
from .arxiv import ArxivClient
from .checklist import ChecklistRegistry, load_registry
from .copilot import CopilotError, load_session, respond, start_session
from .ingest import IngestError, SchemaError, ingest_structured, ingest_text
from .orchestrator import EvaluationReport, RunConfig, execute_run
from .provider import ChatProvider, OfflineProvider
from .store import RunStore, StoreError


class ApiError(Exception):
    def __init__(self, http_status: int, code: str, message: str, details: dict | None = None):
        self.http_status = http_status
        self.code = code
        self.message = message
        self.details = details or {}
        super().__init__(message)

    def to_response(self) -> JSONResponse:
        return JSONResponse(
            status_code=self.http_status,
            content={"code": self.code, "message": self.message, "details": self.details},
        )


class AppState:
    """Shared service state: store, registry, provider, run scheduler."""

    def __init__(self, store: RunStore, registry: ChecklistRegistry | None = None,
                 provider: ChatProvider | None = None,
                 toolkit: ArxivClient | None = None,
                 run_config: RunConfig | None = None,
                 max_concurrent_runs: int = 2,
                 synchronous: bool = False):
        self.store = store
        self.registry = registry or load_registry()
        self.provider = provider or OfflineProvider()
        self.toolkit = toolkit
        self.run_config = run_config or RunConfig()
        self._run_gate = threading.Semaphore(max_concurrent_runs)
        self._session_locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()
        self.synchronous = synchronous  # run in-request, for tests

    def session_lock(self, session_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._session_locks.setdefault(session_id, threading.Lock())

    def execute(self, run_id: str) -> None:
        with self._run_gate:
            doc_dict = self.store.load_document(run_id)
            from .ingest import ParsedDocument

            doc = ParsedDocument.from_dict(doc_dict)
            run, report = execute_run(
                doc, self.registry, self.provider, self.toolkit,
                config=self.run_config, run_id=run_id,
                progress_sink=lambda ev: self.store.append_event(run_id, ev),
            )
            self.store.save_run(run_id, run.to_dict())
            if report is not None:
                self.store.save_report(run_id, report.to_dict(self.registry))

    def schedule(self, run_id: str) -> None:
        if self.synchronous:
            self.execute(run_id)
        else:
            threading.Thread(target=self.execute, args=(run_id,), daemon=True).start()


def create_app(state: AppState) -> FastAPI:
    app = FastAPI(title="slreval", version=__version__)
    app.state.slreval = state

    @app.exception_handler(ApiError)
    async def handle_api_error(_request: Request, exc: ApiError):
        return exc.to_response()

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/runs", status_code=202)
    async def create_run(file: UploadFile = File(...), kind: str = Form("auto")):
        data = await file.read()
        if not data:
            raise ApiError(400, "empty_document", "uploaded file is empty")
        filename = file.filename or "upload"
        resolved = _resolve_kind(kind, filename)
        if resolved is None:
            raise ApiError(415, "unsupported_type",
                           f"unsupported document type for {filename!r}",
                           {"kind": kind, "filename": filename})
        try:
            if resolved == "structured":
                doc = ingest_structured(json.loads(data.decode("utf-8")), raw_bytes=data)
            elif resolved == "text":
                doc = ingest_text(data.decode("utf-8"))
            else:
                raise ApiError(415, "unsupported_type",
                               "PDF upload requires a configured remote extractor")
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise ApiError(400, "malformed_document", f"cannot parse upload: {exc}")
        except SchemaError as exc:
            raise ApiError(400, "schema_violation", str(exc), {"path": exc.path})
        except IngestError as exc:
            raise ApiError(400, "empty_document", str(exc))

        run_id = uuid.uuid4().hex[:12]
        state.store.save_source(run_id, data, filename="source" + _suffix(filename))
        state.store.save_document(run_id, doc.to_dict())
        state.store.save_run(run_id, {
            "run_id": run_id,
            "doc_id": doc.doc_id,
            "state": "pending",
            "tasks": [],
            "started_at": time.time(),
            "finished_at": 0.0,
            "config": state.run_config.to_dict(),
            "error": None,
        })
        state.schedule(run_id)
        return {"run_id": run_id, "doc_id": doc.doc_id}

    @app.get("/runs/{run_id}")
    def get_run(run_id: str):
        return _load_run(state, run_id)

    @app.get("/runs/{run_id}/events")
    def get_events(run_id: str, cursor: int = 0):
        _load_run(state, run_id)
        events = state.store.read_events(run_id, after_seq=cursor)
        next_cursor = events[-1]["seq"] if events else cursor
        return {"events": events, "cursor": next_cursor}

    @app.get("/runs/{run_id}/report")
    def get_report(run_id: str):
        run = _load_run(state, run_id)
        if run.get("state") != "complete" or not state.store.has_report(run_id):
            raise ApiError(409, "not_ready",
                           f"run {run_id} is in state {run.get('state')}")
        return state.store.load_report(run_id)

    @app.post("/runs/{run_id}/chat")
    def chat(run_id: str, body: dict):
        message = (body or {}).get("message", "")
        if not isinstance(message, str) or not message.strip():
            raise ApiError(400, "empty_message", "message must be nonempty")
        run = _load_run(state, run_id)
        if run.get("state") != "complete":
            raise ApiError(409, "not_ready",
                           f"run {run_id} is in state {run.get('state')}")

        session_id = (body or {}).get("session_id")
        if session_id:
            try:
                session = load_session(run_id, session_id, state.store)
            except StoreError:
                raise ApiError(404, "session_not_found", f"session {session_id} not found")
        else:
            session = start_session(run_id, state.store,
                                    registry_version=state.registry.version)

        lock = state.session_lock(session.session_id)
        if not lock.acquire(blocking=False):
            raise ApiError(409, "session_busy",
                           f"session {session.session_id} has a message in flight")
        try:
            from .ingest import ParsedDocument

            doc = ParsedDocument.from_dict(state.store.load_document(run_id))
            reply = respond(session, message, state.provider, state.toolkit,
                            state.store, doc=doc)
        except CopilotError as exc:
            raise ApiError(500, "copilot_error", str(exc))
        finally:
            lock.release()
        return {"session_id": session.session_id, "reply": reply}

    return app


def _resolve_kind(kind: str, filename: str) -> str | None:
    if kind in ("structured", "text", "pdf"):
        return kind
    lowered = filename.lower()
    if lowered.endswith(".json"):
        return "structured"
    if lowered.endswith(".txt") or lowered.endswith(".md"):
        return "text"
    if lowered.endswith(".pdf"):
        return "pdf"
    return None


def _suffix(filename: str) -> str:
    dot = filename.rfind(".")
    return filename[dot:] if dot >= 0 else ".bin"


def _load_run(state: AppState, run_id: str) -> dict:
    try:
        return state.store.load_run(run_id)
    except StoreError:
        raise ApiError(404, "run_not_found", f"run {run_id} not found")
