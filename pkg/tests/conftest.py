"""Shared fixtures: cookbook builders, definition templates, fake executor."""

from __future__ import annotations

import threading
import time
from pathlib import Path

import pytest
import yaml

from benchforge.executor import Machine, TaskResult

REPO_ROOT = Path(__file__).resolve().parent.parent


@pytest.fixture
def repo_defs() -> Path:
    return REPO_ROOT / "defs"


@pytest.fixture
def repo_cookbooks() -> Path:
    return REPO_ROOT / "cookbooks"


def write_cookbook(root: Path, name: str, recipes: dict, scripts: dict[str, str]) -> Path:
    """Materialize a cookbook directory from literal metadata and scripts."""
    cb = root / name
    (cb / "recipes").mkdir(parents=True, exist_ok=True)
    meta = {"name": name, "version": "0.0.1", "recipes": recipes}
    (cb / "metadata.yaml").write_text(yaml.safe_dump(meta), encoding="utf-8")
    for recipe_name, text in scripts.items():
        (cb / "recipes" / f"{recipe_name}.sh.tmpl").write_text(text, encoding="utf-8")
    return cb


@pytest.fixture
def cookbook_factory(tmp_path):
    def make(name: str, recipes: dict, scripts: dict[str, str]) -> Path:
        return write_cookbook(tmp_path, name, recipes, scripts)

    return make


class FakeExecutor:
    """In-memory task runner for scheduler tests: no processes, no disk.

    Records a global monotone event sequence (task id, start/finish order)
    so tests can assert edge ordering, and tracks the high-water mark of
    concurrently running tasks to check the parallelism bound.
    """

    def __init__(self, delay_s: float = 0.0, fail: set[str] | None = None):
        self.delay_s = delay_s
        self.fail = fail or set()
        self.events: list[tuple[str, str]] = []  # (event, task key)
        self.max_concurrent = 0
        self._running = 0
        self._lock = threading.Lock()
        self.aborted = False

    def machine(self, machine_id: str) -> Machine:
        return Machine(id=machine_id, group="g", index=0, address="")

    def run_task(self, machine, script, timeout_ms=None, env=None) -> TaskResult:
        key = f"{machine.id}/{script.recipe_id}"
        with self._lock:
            self._running += 1
            self.max_concurrent = max(self.max_concurrent, self._running)
            self.events.append(("start", key))
        if self.delay_s:
            time.sleep(self.delay_s)
        with self._lock:
            self._running -= 1
            self.events.append(("finish", key))
        code = 1 if key in self.fail else 0
        return TaskResult(exit_code=code, stdout=f"{key}\n", stderr="", duration_ms=0)

    def abort_all(self) -> None:
        self.aborted = True


@pytest.fixture
def fake_executor():
    return FakeExecutor
