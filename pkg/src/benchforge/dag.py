"""Per-machine task graphs: materialization, staging, parallel execution.

A definition plus a registry expands into one task per (machine, recipe)
pair.  Dependency rules between recipes turn into edges between concrete
tasks according to their scope, and every data-generation task is ordered
before every run-phase task so benchmarks never race their own input.
"""

from __future__ import annotations

import threading
import time
from collections import deque
from dataclasses import dataclass, field
from queue import Empty, Queue
from typing import Callable, Iterable

from .attrs import AttributeTree, merge_attributes
from .dsl import ExperimentDefinition
from .errors import DagError
from .executor import Machine, plan_machines
from .record import RunRecord, TaskSnapshot
from .registry import ExecutableScript, RecipeRegistry, RuntimeVars, substitute_params

TASK_STATES = ("pending", "ready", "running", "succeeded", "failed", "skipped")

# Terminal states: once entered, a task never transitions again.
TERMINAL_STATES = frozenset({"succeeded", "failed", "skipped"})


@dataclass
class TaskNode:
    id: str
    machine: str
    recipe: str
    script: ExecutableScript
    phase: str
    state: str = "pending"
    started_ms: int | None = None
    finished_ms: int | None = None
    exit_code: int | None = None
    log_text: str = ""

    def snapshot(self) -> TaskSnapshot:
        return TaskSnapshot(
            id=self.id,
            machine=self.machine,
            recipe=self.recipe,
            state=self.state,
            started_ms=self.started_ms,
            finished_ms=self.finished_ms,
            exit_code=self.exit_code,
        )


@dataclass
class TaskDag:
    run_id: str
    definition_hash: str
    nodes: dict[str, TaskNode]
    edges: list[tuple[str, str]]

    def dependencies_of(self, task_id: str) -> list[str]:
        return [a for a, b in self.edges if b == task_id]

    def dependents_of(self, task_id: str) -> list[str]:
        return [b for a, b in self.edges if a == task_id]


def task_id_for(machine_id: str, recipe_id: str) -> str:
    return f"{machine_id}/{recipe_id}"


def build_dag(
    definition: ExperimentDefinition,
    registry: RecipeRegistry,
    machines: Iterable[Machine] | None = None,
    run_id: str = "",
    user_attrs: AttributeTree | None = None,
    definition_hash: str = "",
) -> TaskDag:
    """Expand a definition into concrete tasks with resolved scripts.

    Edge construction follows dependency scope: same-machine rules bind to
    the co-located instance, any-machine rules bind to the instance on the
    lowest-indexed machine, all-machines rules bind to every instance.
    """
    if machines is None:
        machines = plan_machines(
            [(g.name, g.size) for g in definition.groups],
            definition.provider.instance_profile,
        )
    user_attrs = user_attrs or AttributeTree()

    group_of = {g.name: g for g in definition.groups}
    machines_by_group: dict[str, list[Machine]] = {}
    for m in machines:
        machines_by_group.setdefault(m.group, []).append(m)
    for group_machines in machines_by_group.values():
        group_machines.sort(key=lambda m: m.index)

    nodes: dict[str, TaskNode] = {}
    # recipe id -> instances hosting it, in global machine-index order
    instances: dict[str, list[str]] = {}

    for machine in sorted(machines, key=lambda m: m.index):
        group = group_of.get(machine.group)
        if group is None:
            raise DagError(f"machine {machine.id} references unknown group {machine.group}")
        merged = merge_attributes(definition.global_attributes, group.attributes, user_attrs)
        runtime = RuntimeVars(
            machine_id=machine.id,
            machine_index=machine.index,
            machine_group=machine.group,
            run_id=run_id,
        )
        for ref in group.recipes:
            recipe = registry.require(ref)
            script = substitute_params(recipe, merged, runtime)
            node = TaskNode(
                id=task_id_for(machine.id, ref),
                machine=machine.id,
                recipe=ref,
                script=script,
                phase=recipe.phase,
            )
            nodes[node.id] = node
            instances.setdefault(ref, []).append(machine.id)

    edge_set: set[tuple[str, str]] = set()
    for node in nodes.values():
        recipe = registry.require(node.recipe)
        for rule in recipe.deps:
            if rule.scope == "same-machine":
                dep_id = task_id_for(node.machine, rule.target)
                if dep_id not in nodes:
                    raise DagError(
                        f"{node.id}: same-machine dependency {rule.target} "
                        f"has no instance on {node.machine}"
                    )
                edge_set.add((dep_id, node.id))
            elif rule.scope == "any-machine":
                hosts = instances.get(rule.target)
                if not hosts:
                    raise DagError(
                        f"{node.id}: dependency {rule.target} is not assigned to any machine"
                    )
                edge_set.add((task_id_for(hosts[0], rule.target), node.id))
            elif rule.scope == "all-machines":
                hosts = instances.get(rule.target)
                if not hosts:
                    raise DagError(
                        f"{node.id}: dependency {rule.target} is not assigned to any machine"
                    )
                for host in hosts:
                    edge_set.add((task_id_for(host, rule.target), node.id))
            else:  # pragma: no cover - registry validates scopes
                raise DagError(f"unknown dependency scope {rule.scope}")

    datagen = [n.id for n in nodes.values() if n.phase == "datagen"]
    runners = [n.id for n in nodes.values() if n.phase == "run"]
    for a in datagen:
        for b in runners:
            edge_set.add((a, b))

    edges = sorted(edge_set)
    dag = TaskDag(run_id=run_id, definition_hash=definition_hash, nodes=nodes, edges=edges)
    _check_acyclic(dag)
    return dag


def _check_acyclic(dag: TaskDag) -> None:
    indegree = {tid: 0 for tid in dag.nodes}
    children: dict[str, list[str]] = {tid: [] for tid in dag.nodes}
    for a, b in dag.edges:
        indegree[b] += 1
        children[a].append(b)
    queue = deque(tid for tid, d in sorted(indegree.items()) if d == 0)
    seen = 0
    while queue:
        tid = queue.popleft()
        seen += 1
        for child in children[tid]:
            indegree[child] -= 1
            if indegree[child] == 0:
                queue.append(child)
    if seen != len(dag.nodes):
        stuck = sorted(tid for tid, d in indegree.items() if d > 0)
        raise DagError(f"definition induces a dependency cycle through: {', '.join(stuck)}")


def topological_plan(dag: TaskDag) -> list[list[str]]:
    """Stage tasks by longest dependency path.

    Stage k holds exactly the tasks whose longest chain of prerequisites
    has length k, so a stage never contains two tasks ordered by an edge
    and every task appears as early as its dependencies allow.
    """
    parents: dict[str, list[str]] = {tid: [] for tid in dag.nodes}
    for a, b in dag.edges:
        parents[b].append(a)

    depth: dict[str, int] = {}

    def compute(tid: str, trail: tuple[str, ...]) -> int:
        if tid in depth:
            return depth[tid]
        if tid in trail:  # pragma: no cover - build_dag rejects cycles
            raise DagError(f"dependency cycle at {tid}")
        if not parents[tid]:
            depth[tid] = 0
            return 0
        d = 1 + max(compute(p, trail + (tid,)) for p in parents[tid])
        depth[tid] = d
        return d

    for tid in sorted(dag.nodes):
        compute(tid, ())

    if not dag.nodes:
        return []
    stages: list[list[str]] = [[] for _ in range(max(depth.values()) + 1)]
    for tid in sorted(dag.nodes):
        stages[depth[tid]].append(tid)
    return stages


def plan_document(definition: ExperimentDefinition, registry: RecipeRegistry) -> dict:
    """Stable plan rendering shared by the CLI and the HTTP API."""
    dag = build_dag(definition, registry)
    stages = topological_plan(dag)
    stage_of = {tid: k for k, stage in enumerate(stages) for tid in stage}
    return {
        "nodes": [
            {
                "id": tid,
                "machine": node.machine,
                "recipe": node.recipe,
                "stage": stage_of[tid],
            }
            for tid, node in sorted(dag.nodes.items())
        ],
        "edges": [list(edge) for edge in dag.edges],
        "stages": stages,
    }


class _Clock:
    """Monotonic clock anchored to the epoch so timestamps are comparable
    across machines in a record yet immune to wall-clock steps mid-run."""

    def __init__(self) -> None:
        self._anchor = time.time() * 1000.0 - time.monotonic() * 1000.0

    def now_ms(self) -> int:
        return int(self._anchor + time.monotonic() * 1000.0)


@dataclass
class ExecutionOutcome:
    record: RunRecord
    logs: dict[str, str] = field(default_factory=dict)

    @property
    def succeeded(self) -> bool:
        return self.record.all_succeeded()


def execute(
    dag: TaskDag,
    executor,
    parallelism: int = 2,
    monitor=None,
    abort_event: threading.Event | None = None,
    on_transition: Callable[[TaskSnapshot], None] | None = None,
    task_env: dict[str, str] | None = None,
) -> ExecutionOutcome:
    """Run every task, bounded by a fixed worker pool.

    A failing task marks all transitive dependents skipped; independent
    branches keep running.  Setting abort_event stops dispatch, kills
    in-flight work through the executor, and drains to terminal states.
    """
    if parallelism < 1:
        raise DagError(f"parallelism must be >= 1, got {parallelism}")
    clock = _Clock()
    abort_event = abort_event or threading.Event()

    lock = threading.Lock()
    done = threading.Condition(lock)
    indegree = {tid: 0 for tid in dag.nodes}
    children: dict[str, list[str]] = {tid: [] for tid in dag.nodes}
    for a, b in dag.edges:
        indegree[b] += 1
        children[a].append(b)

    ready_queue: Queue[str | None] = Queue()
    remaining = len(dag.nodes)

    def notify(node: TaskNode) -> None:
        if on_transition is not None:
            on_transition(node.snapshot())

    def mark_ready_locked(tid: str) -> None:
        node = dag.nodes[tid]
        node.state = "ready"
        notify(node)
        ready_queue.put(tid)

    def skip_dependents_locked(tid: str) -> None:
        nonlocal remaining
        stack = list(children[tid])
        while stack:
            cid = stack.pop()
            child = dag.nodes[cid]
            if child.state in ("pending", "ready"):
                child.state = "skipped"
                remaining -= 1
                notify(child)
                stack.extend(children[cid])

    def finish_locked(tid: str, ok: bool) -> None:
        nonlocal remaining
        remaining -= 1
        if ok:
            for cid in children[tid]:
                indegree[cid] -= 1
                child = dag.nodes[cid]
                if indegree[cid] == 0 and child.state == "pending":
                    mark_ready_locked(cid)
        else:
            skip_dependents_locked(tid)
        done.notify_all()

    def worker() -> None:
        nonlocal remaining
        while True:
            try:
                tid = ready_queue.get(timeout=0.1)
            except Empty:
                if abort_event.is_set():
                    return
                continue
            if tid is None:
                return
            node = dag.nodes[tid]
            with lock:
                if abort_event.is_set():
                    if node.state in ("pending", "ready"):
                        node.state = "skipped"
                        remaining -= 1
                        notify(node)
                        done.notify_all()
                    continue
                node.state = "running"
                node.started_ms = clock.now_ms()
                notify(node)
            try:
                machine = executor.machine(node.machine)
                result = executor.run_task(machine, node.script, env=task_env)
                exit_code = result.exit_code
                log = _format_log(result)
            except Exception as exc:  # executor unavailable or transport error
                exit_code = -1
                log = f"executor error: {exc}\n"
            with lock:
                node.finished_ms = clock.now_ms()
                node.exit_code = exit_code
                node.log_text = log
                node.state = "succeeded" if exit_code == 0 else "failed"
                notify(node)
                finish_locked(tid, exit_code == 0)

    started_ms = clock.now_ms()
    with lock:
        for tid in sorted(dag.nodes):
            if indegree[tid] == 0:
                mark_ready_locked(tid)

    workers = [
        threading.Thread(target=worker, name=f"bf-worker-{i}", daemon=True)
        for i in range(parallelism)
    ]
    for t in workers:
        t.start()

    aborted = False
    with done:
        while remaining > 0:
            done.wait(timeout=0.1)
            if abort_event.is_set() and not aborted:
                aborted = True
                abort = getattr(executor, "abort_all", None)
                if abort is not None:
                    abort()
                # nothing new will dispatch; non-running tasks go terminal
                for tid in sorted(dag.nodes):
                    node = dag.nodes[tid]
                    if node.state in ("pending", "ready"):
                        node.state = "skipped"
                        remaining -= 1
                        notify(node)
                done.notify_all()

    for _ in workers:
        ready_queue.put(None)
    for t in workers:
        t.join(timeout=10.0)

    series = {}
    if monitor is not None:
        series = monitor.stop_all()

    record = RunRecord(
        run_id=dag.run_id,
        definition_hash=dag.definition_hash,
        phase="aborted" if aborted else ("done" if all(
            n.state == "succeeded" for n in dag.nodes.values()) else "failed"),
        started_ms=started_ms,
        finished_ms=clock.now_ms(),
        tasks=[dag.nodes[tid].snapshot() for tid in sorted(dag.nodes)],
        metric_series=series,
        abort_reason="abort requested" if aborted else None,
    )
    logs = {tid: dag.nodes[tid].log_text for tid in sorted(dag.nodes)}
    return ExecutionOutcome(record=record, logs=logs)


def _format_log(result) -> str:
    parts = []
    if result.stdout:
        parts.append(result.stdout)
    if result.stderr:
        parts.append("--- stderr ---\n" + result.stderr)
    if getattr(result, "timed_out", False):
        parts.append("--- timed out ---")
    return "\n".join(parts)
