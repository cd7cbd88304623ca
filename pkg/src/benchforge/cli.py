"""Command-line entry point.

Exit codes are uniform across commands: 0 success, 1 validation or task
failure, 2 I/O failure (unreadable file, missing path), 130 interrupted.
Output is plain, deterministic, and uncolored, so NO_COLOR needs no
special handling and every command is scriptable.
"""

from __future__ import annotations

import json as jsonlib
import sys
import time
from pathlib import Path

import click

from .attrs import AttributeTree, parse_bytes
from .dag import plan_document
from .dsl import (
    check_overrides,
    coerce_overrides,
    parse_definition,
    render_parameter_form,
    validate as validate_definition,
)
from .errors import BenchforgeError, PreflightError, WorkloadError
from .record import load_run_record
from .registry import registry_for_definition
from .report import build_batch_comparison, build_stream_comparison, render
from .runner import RunController
from .workloads import (
    RECORD_LEN,
    preflight_storage,
    run_batch_experiment,
    run_stream_experiment,
    sort_record_file,
    write_record_file,
)


def _read_definition(path: str):
    """Returns (definition, registry) or exits with the contract code."""
    file_path = Path(path)
    try:
        text = file_path.read_text(encoding="utf-8")
    except OSError as exc:
        click.echo(f"ERROR io {exc}", err=True)
        sys.exit(2)
    try:
        definition = parse_definition(text)
        registry = registry_for_definition(definition, file_path.parent)
    except BenchforgeError as exc:
        click.echo(f"ERROR syntax {exc}", err=True)
        sys.exit(1)
    return definition, registry


@click.group()
def main() -> None:
    """Reproducible benchmark experiments: validate, plan, run, report."""


@main.command("validate")
@click.argument("file", type=click.Path())
@click.option("--json", "as_json", is_flag=True, help="emit findings as JSON")
def validate_cmd(file: str, as_json: bool) -> None:
    """Check a definition file; exit 0 iff it has no errors."""
    definition, registry = _read_definition(file)
    report = validate_definition(definition, registry)
    if as_json:
        click.echo(
            jsonlib.dumps(
                {
                    "findings": [
                        {"severity": f.severity, "path": f.path, "message": f.message}
                        for f in report.findings
                    ],
                    "errors": len(report.errors),
                    "runnable": report.is_runnable(),
                }
            )
        )
    else:
        for finding in report.findings:
            click.echo(str(finding))
    sys.exit(0 if report.is_runnable() else 1)


@main.command("plan")
@click.argument("file", type=click.Path())
@click.option("--dot", "as_dot", is_flag=True, help="emit a Graphviz digraph")
@click.option("--json", "as_json", is_flag=True, help="emit the plan document as JSON")
def plan_cmd(file: str, as_dot: bool, as_json: bool) -> None:
    """Print the task plan: one line per stage (or DOT/JSON forms)."""
    definition, registry = _read_definition(file)
    report = validate_definition(definition, registry)
    if not report.is_runnable():
        for finding in report.errors:
            click.echo(str(finding), err=True)
        sys.exit(1)
    try:
        doc = plan_document(definition, registry)
    except BenchforgeError as exc:
        click.echo(f"ERROR plan {exc}", err=True)
        sys.exit(1)
    if as_json:
        click.echo(jsonlib.dumps(doc))
    elif as_dot:
        lines = ["digraph plan {"]
        for node in doc["nodes"]:
            lines.append(f'  "{node["id"]}" [label="{node["recipe"]}\\n{node["machine"]}"];')
        for a, b in doc["edges"]:
            lines.append(f'  "{a}" -> "{b}";')
        lines.append("}")
        click.echo("\n".join(lines))
    elif not doc["nodes"]:
        click.echo("plan is empty (no tasks)")
    else:
        for k, stage in enumerate(doc["stages"]):
            click.echo(f"stage {k}: " + " ".join(stage))
    sys.exit(0)


@main.command("run")
@click.argument("file", type=click.Path())
@click.option("--set", "sets", multiple=True, metavar="KEY=VALUE", help="attribute override (repeatable; last wins)")
@click.option("--monitor-interval", default=1000, show_default=True, help="metric sampling interval in ms (0 disables)")
@click.option("--parallelism", default=4, show_default=True)
@click.option("--runs-dir", default="runs", show_default=True, type=click.Path())
@click.option("--run-id", default=None, help="explicit run id (default: generated)")
@click.option("--inventory", default=None, type=click.Path(), help="host inventory for the remote-shell backend")
@click.option("--keep", is_flag=True, help="keep machine work areas after the run")
def run_cmd(
    file: str,
    sets: tuple[str, ...],
    monitor_interval: int,
    parallelism: int,
    runs_dir: str,
    run_id: str | None,
    inventory: str | None,
    keep: bool,
) -> None:
    """Execute a definition end to end and print the run directory."""
    definition, registry = _read_definition(file)
    report = validate_definition(definition, registry)
    if not report.is_runnable():
        for finding in report.errors:
            click.echo(str(finding), err=True)
        sys.exit(1)

    raw: dict[str, str] = {}
    for item in sets:
        key, sep, value = item.partition("=")
        if not sep or not key:
            click.echo(f"ERROR overrides --set needs KEY=VALUE, got {item!r}", err=True)
            sys.exit(1)
        raw[key] = value
    form = render_parameter_form(definition, registry)
    problems = check_overrides(form, raw)
    if problems:
        for problem in problems:
            click.echo(f"ERROR overrides {problem}", err=True)
        sys.exit(1)
    try:
        overrides = AttributeTree.from_mapping(coerce_overrides(form, raw))
    except (ValueError, BenchforgeError) as exc:
        click.echo(f"ERROR overrides {exc}", err=True)
        sys.exit(1)

    controller = RunController(
        definition,
        registry,
        runs_dir,
        run_id=run_id,
        overrides=overrides,
        monitor_interval_ms=monitor_interval,
        parallelism=parallelism,
        keep=keep,
        inventory_path=inventory,
    )
    controller.start()
    try:
        while not controller.wait(timeout=0.2):
            pass
    except KeyboardInterrupt:
        click.echo("interrupt: aborting run", err=True)
        controller.abort()
        deadline = time.monotonic() + 60.0
        while not controller.wait(timeout=0.5) and time.monotonic() < deadline:
            pass
        click.echo(str(controller.run_dir))
        sys.exit(130)

    click.echo(str(controller.run_dir))
    status = controller.status()
    if status.phase != "done":
        if status.error:
            click.echo(f"run {status.phase}: {status.error}", err=True)
        else:
            click.echo(f"run {status.phase}", err=True)
        sys.exit(1)
    sys.exit(0)


@main.command("report")
@click.argument("run_dirs", nargs=-1, required=True, type=click.Path())
@click.option("--percentile", "p", default=99.0, show_default=True)
@click.option("--out", default=".", show_default=True, type=click.Path())
def report_cmd(run_dirs: tuple[str, ...], p: float, out: str) -> None:
    """Build comparison.csv/svg across one or more run directories."""
    records = []
    for run_dir in run_dirs:
        try:
            records.append(load_run_record(run_dir))
        except BenchforgeError as exc:
            click.echo(f"ERROR io {exc}", err=True)
            sys.exit(2)
    kinds = {(r.workload or {}).get("kind") for r in records}
    if len(kinds) > 1:
        click.echo(
            "ERROR report incompatible run kinds: " + ", ".join(sorted(str(k) for k in kinds)),
            err=True,
        )
        sys.exit(1)
    kind = kinds.pop() if kinds else None
    try:
        if kind == "batch":
            table = build_batch_comparison(records)
        elif kind == "streaming":
            table = build_stream_comparison(records, p)
        else:
            click.echo(f"ERROR report runs carry no workload results ({kind})", err=True)
            sys.exit(1)
        for warning in table.warnings:
            click.echo(f"WARNING report {warning}", err=True)
        paths = render(table, out)
    except BenchforgeError as exc:
        click.echo(f"ERROR report {exc}", err=True)
        sys.exit(1)
    for path in paths:
        click.echo(str(path))
    sys.exit(0)


@main.group("workload")
def workload_group() -> None:
    """Run a built-in benchmark workload in the current work area."""


@workload_group.command("batch")
@click.option("--records", required=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--memory-limit", default="64MB", show_default=True, help="sort memory budget (bytes or KB/MB/GB suffix)")
@click.option("--engine-cmd", default="", help="external sort command ({input}/{output} placeholders)")
@click.option("--label", default="builtin", show_default=True, help="engine label recorded in the result")
@click.option("--verify", is_flag=True, help="check output order and record multiset after the sort")
@click.option("--workdir", default=".", show_default=True, type=click.Path())
def workload_batch(
    records: int,
    seed: int,
    memory_limit: str,
    engine_cmd: str,
    label: str,
    verify: bool,
    workdir: str,
) -> None:
    try:
        limit = parse_bytes(memory_limit)
        result = run_batch_experiment(
            workdir,
            records=records,
            seed=seed,
            memory_limit=limit,
            engine_cmd=engine_cmd or None,
            engine_label=label,
            verify=verify,
        )
    except (ValueError, PreflightError, WorkloadError) as exc:
        click.echo(f"ERROR workload {exc}", err=True)
        sys.exit(1)
    doc = result.to_dict()
    (Path(workdir) / "benchforge_result.json").write_text(
        jsonlib.dumps(doc, indent=2) + "\n", encoding="utf-8"
    )
    click.echo(jsonlib.dumps(doc))
    sys.exit(0)


@workload_group.command("gen")
@click.option("--records", required=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--workdir", default=".", show_default=True, type=click.Path())
def workload_gen(records: int, seed: int, workdir: str) -> None:
    """Write the input record file (with the storage preflight)."""
    try:
        path = Path(workdir)
        path.mkdir(parents=True, exist_ok=True)
        preflight_storage(path, records * RECORD_LEN)
        rf = write_record_file(path / "input.dat", records, seed)
    except (PreflightError, WorkloadError, OSError) as exc:
        click.echo(f"ERROR workload {exc}", err=True)
        sys.exit(1)
    click.echo(
        jsonlib.dumps(
            {"kind": "datagen", "records": rf.record_count, "input_bytes": rf.size_bytes}
        )
    )


@workload_group.command("sort")
@click.option("--input", "input_path", default=None, type=click.Path(), help="record file (default <workdir>/input.dat)")
@click.option("--memory-limit", default="64MB", show_default=True, help="sort memory budget (bytes or KB/MB/GB suffix)")
@click.option("--engine-cmd", default="", help="external sort command ({input}/{output} placeholders)")
@click.option("--label", default="builtin", show_default=True, help="engine label recorded in the result")
@click.option("--verify", is_flag=True, help="check output order and record multiset after the sort")
@click.option("--workdir", default=".", show_default=True, type=click.Path())
def workload_sort(
    input_path: str | None,
    memory_limit: str,
    engine_cmd: str,
    label: str,
    verify: bool,
    workdir: str,
) -> None:
    """Sort a previously generated record file and record the timing."""
    try:
        limit = parse_bytes(memory_limit)
        result = sort_record_file(
            workdir,
            input_path=input_path,
            memory_limit=limit,
            engine_cmd=engine_cmd or None,
            engine_label=label,
            verify=verify,
        )
    except (ValueError, WorkloadError) as exc:
        click.echo(f"ERROR workload {exc}", err=True)
        sys.exit(1)
    doc = result.to_dict()
    (Path(workdir) / "benchforge_result.json").write_text(
        jsonlib.dumps(doc, indent=2) + "\n", encoding="utf-8"
    )
    click.echo(jsonlib.dumps(doc))


@workload_group.command("stream")
@click.option("--rate", required=True, type=int, help="events per second")
@click.option("--duration", default=10, show_default=True, type=int, help="seconds")
@click.option("--campaigns", default=100, show_default=True, type=int)
@click.option("--ads-per-campaign", default=10, show_default=True, type=int)
@click.option("--window-ms", default=10000, show_default=True, type=int)
@click.option("--queue-capacity", default=10000, show_default=True, type=int)
@click.option("--service-rate", default=5000, show_default=True, type=int, help="max events/s the processor consumes (0 = uncapped)")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--label", default="builtin", show_default=True)
@click.option("--workdir", default=".", show_default=True, type=click.Path())
def workload_stream(
    rate: int,
    duration: int,
    campaigns: int,
    ads_per_campaign: int,
    window_ms: int,
    queue_capacity: int,
    service_rate: int,
    seed: int,
    label: str,
    workdir: str,
) -> None:
    try:
        result = run_stream_experiment(
            workdir,
            rate=rate,
            duration_s=duration,
            num_campaigns=campaigns,
            ads_per_campaign=ads_per_campaign,
            window_ms=window_ms,
            queue_capacity=queue_capacity,
            service_rate=service_rate or None,
            seed=seed,
            engine_label=label,
        )
    except WorkloadError as exc:
        click.echo(f"ERROR workload {exc}", err=True)
        sys.exit(1)
    doc = result.to_dict()
    (Path(workdir) / "benchforge_result.json").write_text(
        jsonlib.dumps(doc, indent=2) + "\n", encoding="utf-8"
    )
    summary = {
        k: doc[k]
        for k in ("kind", "rate", "emitted_count", "dropped_count", "window_rows")
    }
    click.echo(jsonlib.dumps(summary))
    sys.exit(0)


@main.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8765, show_default=True, type=int)
@click.option("--runs-dir", default="runs", show_default=True, type=click.Path())
@click.option("--base-dir", default=".", show_default=True, type=click.Path(), help="directory cookbook paths resolve against")
@click.option("--cors-origin", "cors_origins", multiple=True, metavar="ORIGIN", help="browser origin allowed to call the API (repeatable)")
def serve_cmd(host: str, port: int, runs_dir: str, base_dir: str, cors_origins: tuple[str, ...]) -> None:
    """Start the HTTP control plane (binds loopback unless told otherwise)."""
    import uvicorn

    from .api import create_app

    app = create_app(runs_dir=runs_dir, base_dir=base_dir, cors_origins=list(cors_origins) or None)
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
