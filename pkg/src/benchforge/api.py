"""HTTP control plane.

Endpoints cover the full operator loop: validate definition text, store
definitions, inspect plans and parameter forms, launch and abort runs,
poll status, and stream live metric samples as server-sent events (one
``data:`` line per sample, in the monitor CSV column order).

Run state lives in RunController objects; request handlers never execute
tasks inline, they only read snapshots or set flags, so many concurrent
readers are safe.
"""

from __future__ import annotations

import hashlib
import queue
import threading
import time
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse, StreamingResponse

from .dsl import (
    ExperimentDefinition,
    check_overrides,
    coerce_overrides,
    parse_definition,
    render_parameter_form,
    validate,
)
from .attrs import AttributeTree
from .dag import plan_document
from .errors import BenchforgeError, DefinitionError, RunConflictError
from .executor import plan_machines
from .registry import RecipeRegistry, registry_for_definition
from .runner import RunManager

MAX_BODY_BYTES = 1 << 20


@dataclass
class StoredDefinition:
    id: str
    text: str
    definition: ExperimentDefinition


class DefinitionStore:
    def __init__(self) -> None:
        self._items: dict[str, StoredDefinition] = {}
        self._lock = threading.Lock()

    def put(self, text: str, definition: ExperimentDefinition) -> StoredDefinition:
        def_id = hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]
        entry = StoredDefinition(id=def_id, text=text, definition=definition)
        with self._lock:
            self._items[def_id] = entry
        return entry

    def get(self, def_id: str) -> StoredDefinition | None:
        with self._lock:
            return self._items.get(def_id)

    def all(self) -> list[StoredDefinition]:
        with self._lock:
            return sorted(self._items.values(), key=lambda e: e.id)


def _findings_doc(report) -> list[dict]:
    return [
        {"severity": f.severity, "path": f.path, "message": f.message}
        for f in report.findings
    ]


def create_app(
    runs_dir: str | Path = "runs",
    base_dir: str | Path = ".",
    monitor_source_factory=None,
    default_monitor_interval_ms: int = 1000,
    cors_origins: list[str] | None = None,
) -> FastAPI:
    """App factory.  base_dir anchors relative cookbook paths in posted
    definitions; monitor_source_factory is injectable for tests.
    cors_origins opts specific browser origins in (the dashboard is usually
    served from another port); cross-origin stays off by default."""
    app = FastAPI(title="benchforge", docs_url=None, redoc_url=None)
    if cors_origins:
        from fastapi.middleware.cors import CORSMiddleware

        app.add_middleware(
            CORSMiddleware,
            allow_origins=cors_origins,
            allow_methods=["*"],
            allow_headers=["*"],
        )
    base = Path(base_dir)
    manager = RunManager(runs_dir)
    store = DefinitionStore()
    app.state.manager = manager
    app.state.definitions = store

    def load_registry_checked(definition: ExperimentDefinition) -> tuple[RecipeRegistry | None, str | None]:
        try:
            return registry_for_definition(definition, base), None
        except BenchforgeError as exc:
            return None, str(exc)

    async def read_body_text(request: Request) -> str | Response:
        body = await request.body()
        if len(body) > MAX_BODY_BYTES:
            return JSONResponse(
                status_code=413,
                content={"error": f"body exceeds {MAX_BODY_BYTES} bytes"},
            )
        try:
            return body.decode("utf-8")
        except UnicodeDecodeError:
            return JSONResponse(
                status_code=400,
                content={
                    "findings": [
                        {"severity": "ERROR", "path": "syntax", "message": "body is not UTF-8"}
                    ]
                },
            )

    @app.post("/definitions/validate")
    async def validate_definition(request: Request):
        text = await read_body_text(request)
        if isinstance(text, Response):
            return text
        try:
            definition = parse_definition(text)
        except DefinitionError as exc:
            return JSONResponse(
                status_code=400,
                content={
                    "findings": [
                        {"severity": "ERROR", "path": "syntax", "message": str(exc)}
                    ]
                },
            )
        registry, registry_error = load_registry_checked(definition)
        if registry is None:
            return {
                "findings": [
                    {"severity": "ERROR", "path": "cookbooks", "message": registry_error}
                ],
                "errors": 1,
                "runnable": False,
            }
        report = validate(definition, registry)
        return {
            "findings": _findings_doc(report),
            "errors": len(report.errors),
            "runnable": report.is_runnable(),
        }

    @app.post("/definitions")
    async def post_definition(request: Request):
        text = await read_body_text(request)
        if isinstance(text, Response):
            return text
        try:
            definition = parse_definition(text)
        except DefinitionError as exc:
            return JSONResponse(
                status_code=400,
                content={
                    "findings": [
                        {"severity": "ERROR", "path": "syntax", "message": str(exc)}
                    ]
                },
            )
        entry = store.put(text, definition)
        return JSONResponse(status_code=201, content={"id": entry.id, "name": definition.name})

    @app.get("/definitions")
    def list_definitions():
        return {
            "definitions": [
                {"id": e.id, "name": e.definition.name} for e in store.all()
            ]
        }

    @app.get("/definitions/{def_id}")
    def get_definition(def_id: str):
        entry = store.get(def_id)
        if entry is None:
            return JSONResponse(status_code=404, content={"error": f"no definition {def_id}"})
        return {"id": entry.id, "name": entry.definition.name, "text": entry.text}

    def _valid_entry(def_id: str):
        """Shared 404/409 handling for plan-like endpoints."""
        entry = store.get(def_id)
        if entry is None:
            return None, JSONResponse(
                status_code=404, content={"error": f"no definition {def_id}"}
            )
        registry, registry_error = load_registry_checked(entry.definition)
        if registry is None:
            return None, JSONResponse(
                status_code=409,
                content={
                    "findings": [
                        {"severity": "ERROR", "path": "cookbooks", "message": registry_error}
                    ]
                },
            )
        report = validate(entry.definition, registry)
        if report.errors:
            return None, JSONResponse(
                status_code=409, content={"findings": _findings_doc(report)}
            )
        return (entry, registry), None

    @app.get("/definitions/{def_id}/plan")
    def get_plan(def_id: str):
        ok, err = _valid_entry(def_id)
        if err is not None:
            return err
        entry, registry = ok
        return plan_document(entry.definition, registry)

    @app.get("/definitions/{def_id}/form")
    def get_form(def_id: str):
        ok, err = _valid_entry(def_id)
        if err is not None:
            return err
        entry, registry = ok
        form = render_parameter_form(entry.definition, registry)
        return {
            "fields": [
                {
                    "key": f.key,
                    "kind": f.kind,
                    "default": f.default,
                    "effective": f.effective,
                    "recipe": f.recipe,
                    "constraint": f.constraint,
                }
                for f in form.fields
            ]
        }

    @app.post("/runs")
    def post_run(body: dict):
        def_id = body.get("definition_id", "")
        ok, err = _valid_entry(def_id)
        if err is not None:
            return err
        entry, registry = ok
        raw_overrides = body.get("overrides") or {}
        form = render_parameter_form(entry.definition, registry)
        problems = check_overrides(form, raw_overrides)
        if problems:
            return JSONResponse(status_code=422, content={"problems": problems})
        try:
            overrides = AttributeTree.from_mapping(coerce_overrides(form, raw_overrides))
        except (ValueError, BenchforgeError) as exc:
            return JSONResponse(status_code=422, content={"problems": [str(exc)]})
        try:
            controller = manager.launch(
                entry.definition,
                registry,
                run_id=body.get("run_id"),
                overrides=overrides,
                monitor_interval_ms=int(
                    body.get("monitor_interval_ms", default_monitor_interval_ms)
                ),
                parallelism=int(body.get("parallelism", 4)),
                keep=bool(body.get("keep", False)),
                monitor_source_factory=monitor_source_factory,
            )
        except RunConflictError as exc:
            return JSONResponse(status_code=409, content={"error": str(exc)})
        return JSONResponse(
            status_code=202,
            content={
                "run_id": controller.run_id,
                "status_url": f"/runs/{controller.run_id}/status",
            },
        )

    @app.get("/runs")
    def list_runs():
        return {"runs": [s.to_dict() for s in manager.all_statuses()]}

    @app.get("/runs/{run_id}/status")
    def run_status(run_id: str):
        controller = manager.get(run_id)
        if controller is None:
            return JSONResponse(status_code=404, content={"error": f"no run {run_id}"})
        return controller.status().to_dict()

    @app.post("/runs/{run_id}/abort")
    def abort_run(run_id: str):
        controller = manager.get(run_id)
        if controller is None:
            return JSONResponse(status_code=404, content={"error": f"no run {run_id}"})
        if not controller.abort():
            return JSONResponse(
                status_code=409,
                content={"error": f"run {run_id} already {controller.phase}"},
            )
        return {"run_id": run_id, "phase": controller.phase}

    @app.get("/runs/{run_id}/metrics")
    def run_metrics(run_id: str, machine: str):
        controller = manager.get(run_id)
        if controller is None:
            return JSONResponse(status_code=404, content={"error": f"no run {run_id}"})
        planned = plan_machines(
            [(g.name, g.size) for g in controller.definition.groups],
            controller.definition.provider.instance_profile,
        )
        if machine not in planned.ids():
            return JSONResponse(
                status_code=404, content={"error": f"no machine {machine} in this run"}
            )

        samples: queue.Queue[str] = queue.Queue()

        def listener(sample) -> None:
            samples.put(sample.row())

        # The monitor may not exist yet while the run is allocating.
        deadline = time.monotonic() + 30.0
        subscribed = False
        while time.monotonic() < deadline:
            if controller.subscribe_metrics(machine, listener):
                subscribed = True
                break
            if controller.is_terminal():
                break
            time.sleep(0.05)
        if not subscribed:
            return JSONResponse(
                status_code=404,
                content={"error": f"no metric stream for {machine} (monitoring off or run over)"},
            )

        def event_stream():
            while True:
                try:
                    row = samples.get(timeout=0.5)
                    yield f"data: {row}\n\n"
                except queue.Empty:
                    if controller.is_terminal():
                        return

        return StreamingResponse(event_stream(), media_type="text/event-stream")

    return app
