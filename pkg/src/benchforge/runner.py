"""Run lifecycle: allocate, execute, report, release.

A RunController drives one run on a background thread through the phases
allocating -> executing -> reporting -> done/failed/aborted.  The phase
only ever moves forward, and the first terminal phase wins; everything a
status reader can observe ends up in the persisted RunRecord.
"""

from __future__ import annotations

import hashlib
import json
import secrets
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from .attrs import AttributeTree, merge_attributes
from .dag import build_dag, execute
from .dsl import ExperimentDefinition, serialize_definition, validate
from .errors import BenchforgeError, DefinitionError, RunConflictError
from .executor import make_backend
from .monitor import MonitorFleet, generate_reports
from .record import RunRecord, safe_name, save_run_record
from .registry import RecipeRegistry

PHASES = ("allocating", "executing", "reporting", "done", "failed", "aborted")
TERMINAL_PHASES = frozenset({"done", "failed", "aborted"})
_PHASE_RANK = {"allocating": 0, "executing": 1, "reporting": 2, "done": 3, "failed": 3, "aborted": 3}

WORKLOAD_ARTIFACTS = ("benchforge_result.json", "store_dump.csv", "event_log.csv", "campaigns.csv")


def definition_hash(definition: ExperimentDefinition) -> str:
    text = serialize_definition(definition)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]


def generate_run_id() -> str:
    return f"run-{time.strftime('%Y%m%d-%H%M%S')}-{secrets.token_hex(3)}"


def effective_parameters(definition: ExperimentDefinition, user: AttributeTree) -> dict:
    """Flat effective attribute view: global overlaid by each group in
    declaration order, then user overrides (later groups win on shared keys)."""
    out = merge_attributes(definition.global_attributes, AttributeTree(), user).as_flat_dict()
    for group in definition.groups:
        merged = merge_attributes(definition.global_attributes, group.attributes, user)
        out.update(merged.as_flat_dict())
    return out


@dataclass
class RunStatus:
    run_id: str
    phase: str
    started_ms: int
    total_tasks: int
    completed_tasks: int
    task_states: dict[str, str] = field(default_factory=dict)
    run_dir: str = ""
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "phase": self.phase,
            "started_ms": self.started_ms,
            "progress": {"completed": self.completed_tasks, "total": self.total_tasks},
            "task_states": self.task_states,
            "run_dir": self.run_dir,
            "error": self.error,
        }


class RunController:
    """Coordinator for one run; thread-safe status and abort."""

    def __init__(
        self,
        definition: ExperimentDefinition,
        registry: RecipeRegistry,
        runs_dir: str | Path,
        run_id: str | None = None,
        overrides: AttributeTree | None = None,
        monitor_interval_ms: int = 1000,
        parallelism: int = 4,
        keep: bool = False,
        inventory_path: str | Path | None = None,
        monitor_source_factory=None,
    ) -> None:
        self.definition = definition
        self.registry = registry
        self.run_id = run_id or generate_run_id()
        self.overrides = overrides or AttributeTree()
        self.monitor_interval_ms = monitor_interval_ms
        self.parallelism = parallelism
        self.keep = keep
        self.inventory_path = inventory_path
        self.monitor_source_factory = monitor_source_factory
        self.run_dir = Path(runs_dir) / safe_name(self.run_id)

        self._lock = threading.Lock()
        self._phase = "allocating"
        self._error: str | None = None
        self._started_ms = int(time.time() * 1000)
        self._task_states: dict[str, str] = {}
        self._abort_event = threading.Event()
        self._finished = threading.Event()
        self._fleet: MonitorFleet | None = None
        self._thread: threading.Thread | None = None
        self.record: RunRecord | None = None

    # -- status ----------------------------------------------------------

    @property
    def phase(self) -> str:
        with self._lock:
            return self._phase

    def is_terminal(self) -> bool:
        return self.phase in TERMINAL_PHASES

    def _set_phase(self, phase: str) -> None:
        with self._lock:
            if self._phase in TERMINAL_PHASES:
                return  # first terminal phase wins
            if _PHASE_RANK[phase] < _PHASE_RANK[self._phase]:
                raise BenchforgeError(
                    f"phase cannot move backward: {self._phase} -> {phase}"
                )
            self._phase = phase

    def status(self) -> RunStatus:
        with self._lock:
            states = dict(self._task_states)
            completed = sum(
                1 for s in states.values() if s in ("succeeded", "failed", "skipped")
            )
            return RunStatus(
                run_id=self.run_id,
                phase=self._phase,
                started_ms=self._started_ms,
                total_tasks=len(states),
                completed_tasks=completed,
                task_states=states,
                run_dir=str(self.run_dir),
                error=self._error,
            )

    def subscribe_metrics(self, machine_id: str, callback) -> bool:
        """Attach a per-sample callback; False when no such monitor exists."""
        fleet = self._fleet
        if fleet is None:
            return False
        try:
            fleet.monitor(machine_id).add_listener(callback)
            return True
        except BenchforgeError:
            return False

    def monitored_machines(self) -> list[str]:
        fleet = self._fleet
        if fleet is None:
            return []
        return fleet.machine_ids()

    # -- control ---------------------------------------------------------

    def start(self) -> "RunController":
        if self._thread is not None:
            raise BenchforgeError(f"run {self.run_id} already started")
        self._thread = threading.Thread(
            target=self._run, name=f"bf-run-{self.run_id}", daemon=True
        )
        self._thread.start()
        return self

    def wait(self, timeout: float | None = None) -> bool:
        # waits on an explicit completion event, not thread liveness: a
        # KeyboardInterrupt inside Thread.join can mark a running thread
        # stopped, and a caller trusting that would exit before run.json
        # is persisted
        if self._thread is None:
            raise BenchforgeError(f"run {self.run_id} never started")
        return self._finished.wait(timeout=timeout)

    def abort(self) -> bool:
        """Request a graceful stop.  False when the run is already terminal."""
        if self.is_terminal():
            return False
        self._abort_event.set()
        return True

    # -- lifecycle body ----------------------------------------------------

    def _on_transition(self, snapshot) -> None:
        with self._lock:
            self._task_states[snapshot.id] = snapshot.state

    def _run(self) -> None:
        backend = None
        machines = None
        outcome = None
        workload = None
        try:
            findings = validate(self.definition, self.registry)
            if findings.errors:
                raise DefinitionError(
                    "definition invalid: " + "; ".join(str(f) for f in findings.errors)
                )

            self.run_dir.mkdir(parents=True, exist_ok=True)
            backend = make_backend(
                self.definition.provider,
                workspace=self.run_dir / "workspace",
                inventory_path=self.inventory_path,
            )
            group_sizes = [(g.name, g.size) for g in self.definition.groups]
            machines = backend.allocate(self.definition.provider, group_sizes)

            dag = build_dag(
                self.definition,
                self.registry,
                machines=machines,
                run_id=self.run_id,
                user_attrs=self.overrides,
                definition_hash=definition_hash(self.definition),
            )
            with self._lock:
                self._task_states = {tid: node.state for tid, node in dag.nodes.items()}

            if self._abort_event.is_set():
                self._finish_aborted_early(dag, machines, backend)
                return

            self._set_phase("executing")
            if self.monitor_interval_ms and self.monitor_interval_ms > 0:
                self._fleet = MonitorFleet(
                    interval_ms=self.monitor_interval_ms,
                    source_factory=self.monitor_source_factory,
                )
                self._fleet.start(machines.ids())

            outcome = execute(
                dag,
                backend,
                parallelism=self.parallelism,
                monitor=self._fleet,
                abort_event=self._abort_event,
                on_transition=self._on_transition,
                task_env={"BF_RUN_ID": self.run_id},
            )

            self._set_phase("reporting")
            record = outcome.record
            workload = self._collect_workload(backend, machines)
            self._fill_record(record, machines, workload)
            for machine_id, series in record.metric_series.items():
                generate_reports(series, self.run_dir / "reports" / safe_name(machine_id))
            save_run_record(record, self.run_dir, logs=outcome.logs)
            self.record = record
            self._set_phase(record.phase)
        except Exception as exc:
            with self._lock:
                self._error = str(exc)
            self._persist_failure(str(exc))
            self._set_phase("aborted" if self._abort_event.is_set() else "failed")
        finally:
            if self._fleet is not None:
                try:
                    self._fleet.stop_all()
                except BenchforgeError:
                    pass
            if backend is not None and machines is not None:
                try:
                    backend.deallocate(machines, keep=self.keep)
                except Exception:
                    pass
            self._finished.set()

    def _finish_aborted_early(self, dag, machines, backend) -> None:
        record = RunRecord(
            run_id=self.run_id,
            phase="aborted",
            started_ms=self._started_ms,
            finished_ms=int(time.time() * 1000),
            abort_reason="abort requested before execution",
        )
        for tid in sorted(dag.nodes):
            node = dag.nodes[tid]
            node.state = "skipped"
            record.tasks.append(node.snapshot())
        with self._lock:
            self._task_states = {t.id: t.state for t in record.tasks}
        self._fill_record(record, machines, None)
        save_run_record(record, self.run_dir)
        self.record = record
        self._set_phase("aborted")

    def _persist_failure(self, message: str) -> None:
        try:
            record = RunRecord(
                run_id=self.run_id,
                definition_name=self.definition.name,
                definition_hash=definition_hash(self.definition),
                phase="aborted" if self._abort_event.is_set() else "failed",
                started_ms=self._started_ms,
                finished_ms=int(time.time() * 1000),
                abort_reason=message,
            )
            self.run_dir.mkdir(parents=True, exist_ok=True)
            save_run_record(record, self.run_dir)
            self.record = record
        except Exception:
            pass

    def _collect_workload(self, backend, machines) -> dict | None:
        """Pull benchmark artifacts out of machine work areas into the run
        directory; the first result (by machine id) becomes the run's
        workload summary."""
        result: dict | None = None
        for machine in sorted(machines, key=lambda m: m.id):
            dest_dir = self.run_dir / "workload" / safe_name(machine.id)
            fetched_result = backend.fetch_file(
                machine, "benchforge_result.json", dest_dir / "benchforge_result.json"
            )
            if not fetched_result:
                continue
            for name in WORKLOAD_ARTIFACTS[1:]:
                backend.fetch_file(machine, name, dest_dir / name)
            if result is None:
                try:
                    parsed = json.loads(
                        (dest_dir / "benchforge_result.json").read_text(encoding="utf-8")
                    )
                    parsed["machine"] = machine.id
                    result = parsed
                except (OSError, json.JSONDecodeError):
                    continue
        return result

    def _fill_record(self, record: RunRecord, machines, workload: dict | None) -> None:
        params = effective_parameters(self.definition, self.overrides)
        record.definition_name = self.definition.name
        record.definition_hash = definition_hash(self.definition)
        record.parameters = params
        record.machines = [
            {"id": m.id, "group": m.group, "index": m.index, "address": m.address}
            for m in sorted(machines, key=lambda m: m.index)
        ]
        record.workload = workload
        label = None
        if workload:
            label = workload.get("engine")
        record.engine = label or str(params.get("engine.label", "builtin"))
        record.spot_price_limit = self.definition.provider.spot_price_limit


class RunManager:
    """Registry of live controllers keyed by run id."""

    def __init__(self, runs_dir: str | Path) -> None:
        self.runs_dir = Path(runs_dir)
        self._runs: dict[str, RunController] = {}
        self._lock = threading.Lock()

    def launch(
        self,
        definition: ExperimentDefinition,
        registry: RecipeRegistry,
        run_id: str | None = None,
        **kwargs,
    ) -> RunController:
        with self._lock:
            run_id = run_id or generate_run_id()
            existing = self._runs.get(run_id)
            if existing is not None and not existing.is_terminal():
                raise RunConflictError(f"run {run_id} is still active")
            controller = RunController(
                definition, registry, self.runs_dir, run_id=run_id, **kwargs
            )
            self._runs[run_id] = controller
        controller.start()
        return controller

    def get(self, run_id: str) -> RunController | None:
        with self._lock:
            return self._runs.get(run_id)

    def all_statuses(self) -> list[RunStatus]:
        with self._lock:
            controllers = list(self._runs.values())
        return sorted((c.status() for c in controllers), key=lambda s: s.run_id)
