"""Exception hierarchy shared across benchforge modules."""

from __future__ import annotations


class BenchforgeError(Exception):
    """Base class for all benchforge failures."""


class DefinitionError(BenchforgeError):
    """A definition document is malformed or violates an invariant.

    Carries the source position when the underlying YAML parser provides one.
    """

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}" + (f", column {column})" if column is not None else ")")
        super().__init__(message)


class AttributeMergeError(BenchforgeError):
    """Two attribute trees disagree on the scalar kind or shape of a key."""


class RegistryError(BenchforgeError):
    """Cookbook or recipe metadata is malformed."""


class DependencyCycleError(RegistryError):
    def __init__(self, cycle: list[str]):
        self.cycle = cycle
        super().__init__("dependency cycle: " + " -> ".join(cycle))


class SubstitutionError(BenchforgeError):
    """A script template placeholder cannot be resolved or violates a constraint."""


class DagError(BenchforgeError):
    """Task DAG construction or execution failed structurally."""


class AllocationError(BenchforgeError):
    """Machine allocation failed (shortfall, unreachable host, filesystem)."""


class MonitorError(BenchforgeError):
    """Metrics monitor lifecycle misuse (double start, unknown handle, bad interval)."""


class PreflightError(BenchforgeError):
    """Storage preflight refused a run: not enough free space."""

    def __init__(self, required: int, available: int, path: str):
        self.required = required
        self.available = available
        self.path = path
        shortfall = required - available
        super().__init__(
            f"insufficient space on {path}: need {required} bytes, "
            f"{available} available (short {shortfall})"
        )


class WorkloadError(BenchforgeError):
    """A benchmark workload could not run (corrupt input, bad parameters)."""


class ReportError(BenchforgeError):
    """Comparison inputs are incompatible or a table is empty/unparseable."""


class RunConflictError(BenchforgeError):
    """A run id was requested while a run with that id is still active."""
