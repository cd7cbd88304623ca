"""RunRecord: the persisted, self-contained result of one experiment run.

On disk a run is a directory:

    run-<id>/
      run.json                 # states, timings, parameters, workload results
      logs/<task>.log          # captured output per task
      metrics/<machine>.csv    # full metric series per machine
      reports/<machine>/       # the four utilization reports (csv + svg)
      workload/<machine>/      # benchmark artifacts (dumps, result json)
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import BenchforgeError
from .monitor import MetricSeries, series_from_csv, series_to_csv


@dataclass
class TaskSnapshot:
    id: str
    machine: str
    recipe: str
    state: str
    started_ms: int | None = None
    finished_ms: int | None = None
    exit_code: int | None = None
    log_ref: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "machine": self.machine,
            "recipe": self.recipe,
            "state": self.state,
            "started_ms": self.started_ms,
            "finished_ms": self.finished_ms,
            "exit_code": self.exit_code,
            "log_ref": self.log_ref,
        }


@dataclass
class RunRecord:
    run_id: str
    definition_name: str = ""
    definition_hash: str = ""
    engine: str = "builtin"
    phase: str = "done"  # done | failed | aborted
    started_ms: int = 0
    finished_ms: int = 0
    parameters: dict[str, Any] = field(default_factory=dict)
    machines: list[dict[str, Any]] = field(default_factory=list)
    tasks: list[TaskSnapshot] = field(default_factory=list)
    metric_series: dict[str, MetricSeries] = field(default_factory=dict)
    workload: dict[str, Any] | None = None
    abort_reason: str | None = None
    spot_price_limit: float | None = None

    def task_states(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for t in self.tasks:
            counts[t.state] = counts.get(t.state, 0) + 1
        return counts

    def all_succeeded(self) -> bool:
        return bool(self.tasks) and all(t.state == "succeeded" for t in self.tasks)


def safe_name(identifier: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", identifier)


def save_run_record(record: RunRecord, run_dir: str | Path, logs: dict[str, str] | None = None) -> Path:
    """Persist a record (and task logs) into a run directory."""
    root = Path(run_dir)
    root.mkdir(parents=True, exist_ok=True)

    logs_dir = root / "logs"
    logs_dir.mkdir(exist_ok=True)
    for task in record.tasks:
        log_name = f"{safe_name(task.id)}.log"
        task.log_ref = f"logs/{log_name}"
        text = (logs or {}).get(task.id, "")
        (logs_dir / log_name).write_text(text, encoding="utf-8")

    if record.metric_series:
        metrics_dir = root / "metrics"
        metrics_dir.mkdir(exist_ok=True)
        for machine_id, series in record.metric_series.items():
            (metrics_dir / f"{safe_name(machine_id)}.csv").write_text(
                series_to_csv(series), encoding="utf-8"
            )

    doc = {
        "run_id": record.run_id,
        "definition": {"name": record.definition_name, "hash": record.definition_hash},
        "engine": record.engine,
        "phase": record.phase,
        "started_ms": record.started_ms,
        "finished_ms": record.finished_ms,
        "parameters": record.parameters,
        "machines": record.machines,
        "tasks": [t.to_dict() for t in record.tasks],
        "workload": record.workload,
        "abort_reason": record.abort_reason,
        "spot_price_limit": record.spot_price_limit,
    }
    (root / "run.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return root


def load_run_record(run_dir: str | Path, with_metrics: bool = False) -> RunRecord:
    root = Path(run_dir)
    run_json = root / "run.json"
    if not run_json.is_file():
        raise BenchforgeError(f"{root}: not a run directory (missing run.json)")
    doc = json.loads(run_json.read_text(encoding="utf-8"))
    record = RunRecord(
        run_id=doc["run_id"],
        definition_name=doc.get("definition", {}).get("name", ""),
        definition_hash=doc.get("definition", {}).get("hash", ""),
        engine=doc.get("engine", "builtin"),
        phase=doc.get("phase", "done"),
        started_ms=doc.get("started_ms", 0),
        finished_ms=doc.get("finished_ms", 0),
        parameters=doc.get("parameters", {}),
        machines=doc.get("machines", []),
        tasks=[TaskSnapshot(**t) for t in doc.get("tasks", [])],
        workload=doc.get("workload"),
        abort_reason=doc.get("abort_reason"),
        spot_price_limit=doc.get("spot_price_limit"),
    )
    if with_metrics:
        metrics_dir = root / "metrics"
        if metrics_dir.is_dir():
            for csv_path in sorted(metrics_dir.glob("*.csv")):
                record.metric_series[csv_path.stem] = series_from_csv(
                    csv_path.read_text(encoding="utf-8"), machine_id=csv_path.stem
                )
    return record
