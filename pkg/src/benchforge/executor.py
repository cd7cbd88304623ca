"""Machine allocation and script execution: local sandboxes and remote shells.

The local backend models each machine as an isolated working directory with
a per-machine environment; it is the desk-scale backend every test uses.
The remote-shell backend fans scripts out over a static host inventory
(one ``host user port group`` line per machine); cloud provisioning is out
of scope, but the provider's spot_price_limit is recorded as provenance.

Set ``BENCHFORGE_KEEP_SANDBOX=1`` to preserve local sandboxes on release.
"""

from __future__ import annotations

import os
import shlex
import shutil
import signal
import subprocess
import sys
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from .dsl import ProviderSpec
from .errors import AllocationError
from .registry import ExecutableScript

KEEP_SANDBOX_ENV = "BENCHFORGE_KEEP_SANDBOX"


def _kill_tree(proc: subprocess.Popen) -> None:
    try:
        os.killpg(proc.pid, signal.SIGKILL)
    except (ProcessLookupError, PermissionError):
        try:
            proc.kill()
        except OSError:
            pass


@dataclass(frozen=True)
class Machine:
    id: str
    group: str
    index: int  # global allocation order; lowest index is the designated instance
    address: str  # sandbox path (local) or user@host:port (remote)
    labels: str = ""  # instance_profile copy


@dataclass
class MachineSet:
    machines: list[Machine] = field(default_factory=list)

    def __iter__(self):
        return iter(self.machines)

    def __len__(self):
        return len(self.machines)

    def by_id(self, machine_id: str) -> Machine:
        for m in self.machines:
            if m.id == machine_id:
                return m
        raise KeyError(machine_id)

    def group(self, name: str) -> list[Machine]:
        return [m for m in self.machines if m.group == name]

    def ids(self) -> list[str]:
        return [m.id for m in self.machines]


@dataclass(frozen=True)
class TaskResult:
    exit_code: int
    stdout: str = ""
    stderr: str = ""
    duration_ms: float = 0.0
    timed_out: bool = False


@dataclass
class ReleaseReport:
    released: list[str] = field(default_factory=list)
    already_released: list[str] = field(default_factory=list)
    failed: dict[str, str] = field(default_factory=dict)
    kept: list[str] = field(default_factory=list)


def plan_machines(groups: list[tuple[str, int]], instance_profile: str = "") -> MachineSet:
    """The machine ids a definition will get, without allocating anything.

    Ids are ``<group>-<i>`` in declaration order, so plans match later runs.
    """
    machines = []
    index = 0
    for name, size in groups:
        for i in range(size):
            machines.append(
                Machine(id=f"{name}-{i}", group=name, index=index, address="", labels=instance_profile)
            )
            index += 1
    return MachineSet(machines)


class LocalBackend:
    """Per-machine working-directory sandboxes on the local host."""

    def __init__(self, workspace: str | Path):
        self.workspace = Path(workspace)
        self._allocated: dict[str, Path] = {}
        self._released: set[str] = set()
        self._machine_locks: dict[str, threading.Lock] = {}
        self._running: dict[int, subprocess.Popen] = {}
        self._running_lock = threading.Lock()
        self._aborted = False
        self.machines = MachineSet()
        self.extra_env: dict[str, str] = {}

    def allocate(self, provider: ProviderSpec, groups: list[tuple[str, int]]) -> MachineSet:
        for _, size in groups:
            if size < 1:
                raise AllocationError("group sizes must be >= 1")
        planned = plan_machines(groups, provider.instance_profile)
        machines = []
        for m in planned:
            sandbox = self.workspace / "machines" / m.id
            try:
                sandbox.mkdir(parents=True, exist_ok=True)
            except OSError as exc:
                raise AllocationError(f"cannot create sandbox for {m.id}: {exc}") from exc
            machine = Machine(
                id=m.id, group=m.group, index=m.index, address=str(sandbox), labels=m.labels
            )
            machines.append(machine)
            self._allocated[m.id] = sandbox
            self._machine_locks[m.id] = threading.Lock()
            self._released.discard(m.id)
        self.machines = MachineSet(machines)
        return self.machines

    def machine(self, machine_id: str) -> Machine:
        return self.machines.by_id(machine_id)

    def run_task(
        self,
        machine: Machine,
        script: ExecutableScript,
        timeout_ms: float | None = None,
        env: dict[str, str] | None = None,
    ) -> TaskResult:
        """Run a script inside the machine's sandbox, capturing all output.

        Concurrent calls for distinct machines run in parallel; calls for the
        same machine are serialized.
        """
        sandbox = self._allocated.get(machine.id)
        if sandbox is None:
            raise AllocationError(f"machine {machine.id!r} is not allocated")
        if timeout_ms is None:
            timeout_ms = script.timeout_ms
        lock = self._machine_locks[machine.id]
        with lock:
            task_env = dict(os.environ)
            task_env.update(
                {
                    "BF_MACHINE_ID": machine.id,
                    "BF_MACHINE_GROUP": machine.group,
                    "BF_MACHINE_INDEX": str(machine.index),
                    "BF_PYTHON": sys.executable,
                }
            )
            task_env.update(self.extra_env)
            if env:
                task_env.update(env)
            started = time.monotonic()
            # new session: timeouts and aborts must kill the whole process
            # tree, or an orphaned child keeps the output pipes open forever
            proc = subprocess.Popen(
                ["sh", "-c", script.text],
                cwd=str(sandbox),
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                env=task_env,
                text=True,
                start_new_session=True,
            )
            with self._running_lock:
                if self._aborted:
                    _kill_tree(proc)
                self._running[proc.pid] = proc
            try:
                stdout, stderr = proc.communicate(timeout=timeout_ms / 1000.0 if timeout_ms else None)
                timed_out = False
            except subprocess.TimeoutExpired:
                _kill_tree(proc)
                stdout, stderr = proc.communicate()
                timed_out = True
            finally:
                with self._running_lock:
                    self._running.pop(proc.pid, None)
            duration_ms = (time.monotonic() - started) * 1000.0
            exit_code = proc.returncode if not timed_out else 124
            return TaskResult(
                exit_code=exit_code,
                stdout=stdout or "",
                stderr=stderr or "",
                duration_ms=duration_ms,
                timed_out=timed_out,
            )

    def abort_all(self) -> None:
        """Kill every running task; subsequent tasks are killed on start."""
        with self._running_lock:
            self._aborted = True
            for proc in self._running.values():
                _kill_tree(proc)

    def sandbox_path(self, machine: Machine) -> Path:
        return Path(machine.address)

    def fetch_file(self, machine: Machine, relpath: str, dest: Path) -> bool:
        src = Path(machine.address) / relpath
        if not src.is_file():
            return False
        dest.parent.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(src, dest)
        return True

    def deallocate(self, machines: MachineSet, keep: bool = False) -> ReleaseReport:
        report = ReleaseReport()
        keep = keep or os.environ.get(KEEP_SANDBOX_ENV) == "1"
        for m in machines:
            if m.id in self._released or m.id not in self._allocated:
                report.already_released.append(m.id)
                continue
            if keep:
                report.kept.append(m.id)
                self._released.add(m.id)
                continue
            try:
                shutil.rmtree(self._allocated[m.id], ignore_errors=False)
                report.released.append(m.id)
            except OSError as exc:
                report.failed[m.id] = str(exc)
            self._released.add(m.id)
        return report


@dataclass(frozen=True)
class InventoryHost:
    host: str
    user: str
    port: int
    group: str


def parse_inventory(text: str) -> list[InventoryHost]:
    """Parse an inventory file: one ``host user port group`` line per machine.

    Blank lines and ``#`` comments are ignored.
    """
    hosts = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 4:
            raise AllocationError(
                f"inventory line {lineno}: expected 'host user port group', got {raw!r}"
            )
        host, user, port_s, group = parts
        try:
            port = int(port_s)
        except ValueError:
            raise AllocationError(f"inventory line {lineno}: bad port {port_s!r}") from None
        hosts.append(InventoryHost(host=host, user=user, port=port, group=group))
    return hosts


class RemoteShellBackend:
    """Run scripts over ssh against a pre-declared host inventory.

    The transport is injectable so the fan-out logic is testable without a
    real ssh daemon: it is a callable(argv, input_text, timeout_s) returning
    (exit_code, stdout, stderr).
    """

    def __init__(self, inventory: list[InventoryHost], workdir: str = "benchforge-work", transport=None):
        self.inventory = inventory
        self.workdir = workdir
        self.transport = transport or _subprocess_transport
        self._machine_locks: dict[str, threading.Lock] = {}
        self._hosts_by_id: dict[str, InventoryHost] = {}
        self.machines = MachineSet()

    def allocate(self, provider: ProviderSpec, groups: list[tuple[str, int]]) -> MachineSet:
        pools: dict[str, list[InventoryHost]] = {}
        for h in self.inventory:
            pools.setdefault(h.group, []).append(h)
        machines = []
        index = 0
        for name, size in groups:
            available = pools.get(name, [])
            if len(available) < size:
                raise AllocationError(
                    f"group {name!r} needs {size} machines, inventory declares {len(available)} "
                    f"(short {size - len(available)})"
                )
            for i in range(size):
                h = available[i]
                machine = Machine(
                    id=f"{name}-{i}",
                    group=name,
                    index=index,
                    address=f"{h.user}@{h.host}:{h.port}",
                    labels=provider.instance_profile,
                )
                code, _, err = self.transport(self._ssh_argv(h, "true"), "", 15.0)
                if code != 0:
                    raise AllocationError(f"host {h.host} unreachable: {err.strip()}")
                machines.append(machine)
                self._hosts_by_id[machine.id] = h
                self._machine_locks[machine.id] = threading.Lock()
                index += 1
        self.machines = MachineSet(machines)
        return self.machines

    def machine(self, machine_id: str) -> Machine:
        return self.machines.by_id(machine_id)

    def _ssh_argv(self, h: InventoryHost, command: str) -> list[str]:
        return [
            "ssh",
            "-p",
            str(h.port),
            "-o",
            "BatchMode=yes",
            f"{h.user}@{h.host}",
            command,
        ]

    def run_task(
        self,
        machine: Machine,
        script: ExecutableScript,
        timeout_ms: float | None = None,
        env: dict[str, str] | None = None,
    ) -> TaskResult:
        h = self._hosts_by_id.get(machine.id)
        if h is None:
            raise AllocationError(f"machine {machine.id!r} is not allocated")
        if timeout_ms is None:
            timeout_ms = script.timeout_ms
        exports = "".join(
            f"export {k}={shlex.quote(v)}; "
            for k, v in {
                "BF_MACHINE_ID": machine.id,
                "BF_MACHINE_GROUP": machine.group,
                "BF_MACHINE_INDEX": str(machine.index),
                **(env or {}),
            }.items()
        )
        wrapped = f"mkdir -p {shlex.quote(self.workdir)} && cd {shlex.quote(self.workdir)} && {exports}sh -s"
        with self._machine_locks[machine.id]:
            started = time.monotonic()
            code, out, err = self.transport(
                self._ssh_argv(h, wrapped), script.text, timeout_ms / 1000.0 if timeout_ms else None
            )
            duration_ms = (time.monotonic() - started) * 1000.0
        timed_out = code == _TRANSPORT_TIMEOUT
        return TaskResult(
            exit_code=124 if timed_out else code,
            stdout=out,
            stderr=err,
            duration_ms=duration_ms,
            timed_out=timed_out,
        )

    def abort_all(self) -> None:
        pass  # remote sessions end with the transport call

    def fetch_file(self, machine: Machine, relpath: str, dest: Path) -> bool:
        h = self._hosts_by_id.get(machine.id)
        if h is None:
            return False
        dest.parent.mkdir(parents=True, exist_ok=True)
        argv = [
            "scp",
            "-P",
            str(h.port),
            f"{h.user}@{h.host}:{self.workdir}/{relpath}",
            str(dest),
        ]
        code, _, _ = self.transport(argv, "", 60.0)
        return code == 0

    def deallocate(self, machines: MachineSet, keep: bool = False) -> ReleaseReport:
        report = ReleaseReport()
        for m in machines:
            if m.id not in self._hosts_by_id:
                report.already_released.append(m.id)
                continue
            del self._hosts_by_id[m.id]
            report.released.append(m.id)
        return report


_TRANSPORT_TIMEOUT = -9999


def _subprocess_transport(argv: list[str], input_text: str, timeout_s: float | None):
    try:
        proc = subprocess.run(
            argv,
            input=input_text,
            capture_output=True,
            text=True,
            timeout=timeout_s,
        )
        return proc.returncode, proc.stdout, proc.stderr
    except subprocess.TimeoutExpired as exc:
        return _TRANSPORT_TIMEOUT, exc.stdout or "", exc.stderr or ""
    except FileNotFoundError as exc:
        return 127, "", str(exc)


def make_backend(
    provider: ProviderSpec,
    workspace: str | Path,
    inventory_path: str | Path | None = None,
):
    if provider.backend == "local":
        return LocalBackend(workspace)
    if provider.backend == "remote-shell":
        if inventory_path is None:
            raise AllocationError("remote-shell backend requires an inventory file")
        text = Path(inventory_path).read_text(encoding="utf-8")
        return RemoteShellBackend(parse_inventory(text))
    raise AllocationError(f"unknown backend {provider.backend!r}")
