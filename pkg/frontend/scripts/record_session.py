"""Record one API session for the dashboard's replay tests.

Drives the control plane in-process against the bundled master/worker
definition (one namenode, two datanodes), captures every response the
dashboard consumes, and writes test/fixtures/session.json.  Run from the
repository root after installing the Python package:

    python3 frontend/scripts/record_session.py

The fixture is committed; re-recording is only needed when the API wire
format changes.
"""

import json
import sys
import tempfile
import threading
import time
from pathlib import Path

from fastapi.testclient import TestClient

from benchforge.api import create_app
from benchforge.monitor import SyntheticSource
from benchforge.record import load_run_record

REPO_ROOT = Path(__file__).resolve().parent.parent.parent
FIXTURE_PATH = Path(__file__).resolve().parent.parent / "test" / "fixtures" / "session.json"

BROKEN_TEXT = "name: [unclosed\n"


def record() -> dict:
    definition_text = (REPO_ROOT / "defs" / "hadoop.yml").read_text(encoding="utf-8")
    runs_dir = Path(tempfile.mkdtemp(prefix="bf-session-"))
    app = create_app(
        runs_dir=runs_dir,
        base_dir=REPO_ROOT / "defs",
        monitor_source_factory=lambda machine_id: SyntheticSource(seed=7),
        default_monitor_interval_ms=100,
    )
    session: dict = {"definition_text": definition_text}

    with TestClient(app) as client:
        session["validate_ok"] = client.post(
            "/definitions/validate", content=definition_text
        ).json()
        session["validate_broken"] = client.post(
            "/definitions/validate", content=BROKEN_TEXT
        ).json()

        created = client.post("/definitions", content=definition_text).json()
        def_id = created["id"]
        session["definition"] = created
        session["plan"] = client.get(f"/definitions/{def_id}/plan").json()
        session["form"] = client.get(f"/definitions/{def_id}/form").json()

        # parallelism 1 keeps task timestamps strictly ordered, so the
        # recoloring-order assertion has an unambiguous ground truth
        launch = client.post(
            "/runs",
            json={"definition_id": def_id, "run_id": "session-run", "parallelism": 1},
        )
        assert launch.status_code == 202, launch.text
        session["launch"] = launch.json()

        sse_rows: list[str] = []

        def pump_metrics() -> None:
            with client.stream(
                "GET", "/runs/session-run/metrics", params={"machine": "namenodes-0"}
            ) as response:
                if response.status_code != 200:
                    return
                for line in response.iter_lines():
                    if line.startswith("data: "):
                        sse_rows.append(line[len("data: "):])

        pump = threading.Thread(target=pump_metrics, daemon=True)
        pump.start()

        # tight poll; consecutive duplicates collapse so the fixture keeps
        # only the distinct recoloring steps
        snapshots: list[dict] = []
        deadline = time.monotonic() + 60.0
        while time.monotonic() < deadline:
            status = client.get("/runs/session-run/status").json()
            if not snapshots or status["task_states"] != snapshots[-1]["task_states"] \
                    or status["phase"] != snapshots[-1]["phase"]:
                snapshots.append(status)
            if status["phase"] in ("done", "failed", "aborted"):
                break
        session["status_snapshots"] = snapshots
        pump.join(timeout=10.0)
        session["metric_rows"] = {"machine": "namenodes-0", "rows": sse_rows}

        session["runs_list"] = client.get("/runs").json()
        session["abort_after_done"] = {
            "status_code": client.post("/runs/session-run/abort").status_code
        }

    record = load_run_record(runs_dir / "session-run")
    session["record_tasks"] = [
        {
            "id": t.id,
            "machine": t.machine,
            "recipe": t.recipe,
            "state": t.state,
            "started_ms": t.started_ms,
            "finished_ms": t.finished_ms,
        }
        for t in record.tasks
    ]

    terminal = session["status_snapshots"][-1]
    assert terminal["phase"] == "done", terminal
    assert len(session["record_tasks"]) == 3
    assert len(snapshots) >= 3, f"only {len(snapshots)} distinct snapshots; rerun"
    assert len(sse_rows) >= 1, "no metric rows captured; rerun"
    return session


def main() -> int:
    session = record()
    FIXTURE_PATH.parent.mkdir(parents=True, exist_ok=True)
    FIXTURE_PATH.write_text(json.dumps(session, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {FIXTURE_PATH}")
    print(f"  snapshots: {len(session['status_snapshots'])}")
    print(f"  metric rows: {len(session['metric_rows']['rows'])}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
