"""Comparison artifacts across runs.

Batch runs compare execution time against input size; streaming runs
compare a latency percentile against event rate.  Points group into one
series per engine label, all series share one x grid, and with exactly
two engines a per-x time ratio is derived as data (never asserted: the
ratio depends on the hardware the runs happened on).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ReportError
from .record import RunRecord
from .svg import Series, render_line_chart
from .workloads.stats import percentile

Number = int | float

CSV_HEADER = "engine,x,y"


@dataclass
class ComparisonTable:
    dimension: str  # input_size | event_rate
    x_unit: str
    y_unit: str
    series: dict[str, list[tuple[Number, Number]]] = field(default_factory=dict)
    ratios: dict[Number, float] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def x_grid(self) -> list[Number]:
        grid: set[Number] = set()
        for points in self.series.values():
            grid.update(x for x, _ in points)
        return sorted(grid)

    def is_empty(self) -> bool:
        return not any(self.series.values())


def _restrict_to_shared_grid(table: ComparisonTable) -> None:
    """Enforce the shared-grid invariant: drop points outside the
    intersection of per-series x sets, warning about each drop."""
    if len(table.series) < 2:
        return
    grids = [set(x for x, _ in pts) for pts in table.series.values()]
    shared = set.intersection(*grids)
    for label in sorted(table.series):
        points = table.series[label]
        kept = [(x, y) for x, y in points if x in shared]
        dropped = sorted(x for x, _ in points if x not in shared)
        if dropped:
            table.warnings.append(
                f"series {label}: dropped x values {dropped} missing from other series"
            )
        table.series[label] = kept


def _derive_ratios(table: ComparisonTable) -> None:
    """With exactly two series, ratio per x = second / first in sorted
    label order."""
    if len(table.series) != 2:
        return
    first, second = sorted(table.series)
    a = dict(table.series[first])
    b = dict(table.series[second])
    for x in sorted(set(a) & set(b)):
        if a[x]:
            table.ratios[x] = b[x] / a[x]


def build_batch_comparison(runs: list[RunRecord]) -> ComparisonTable:
    table = ComparisonTable(dimension="input_size", x_unit="bytes", y_unit="ms")
    for run in runs:
        workload = run.workload or {}
        if workload.get("kind") != "batch":
            raise ReportError(
                f"run {run.run_id}: expected a batch result, found "
                f"{workload.get('kind') or 'none'}"
            )
        label = workload.get("engine") or run.engine
        x = int(workload["input_bytes"])
        y = int(workload["execution_time_ms"])
        points = table.series.setdefault(label, [])
        if any(px == x for px, _ in points):
            table.warnings.append(f"series {label}: duplicate x={x}, keeping first")
            continue
        points.append((x, y))
    for points in table.series.values():
        points.sort()
    _restrict_to_shared_grid(table)
    _derive_ratios(table)
    return table


def build_stream_comparison(runs: list[RunRecord], p: float = 99) -> ComparisonTable:
    table = ComparisonTable(dimension="event_rate", x_unit="events_per_s", y_unit="ms")
    for run in runs:
        workload = run.workload or {}
        if workload.get("kind") != "streaming":
            raise ReportError(
                f"run {run.run_id}: expected a streaming result, found "
                f"{workload.get('kind') or 'none'}"
            )
        label = workload.get("engine") or run.engine
        latencies = workload.get("latencies_ms") or []
        x = int(workload["rate"])
        points = table.series.setdefault(label, [])
        if not latencies:
            table.warnings.append(f"series {label}: no latencies for rate {x}, point omitted")
            continue
        if any(px == x for px, _ in points):
            table.warnings.append(f"series {label}: duplicate x={x}, keeping first")
            continue
        points.append((x, float(percentile(latencies, p))))
    for points in table.series.values():
        points.sort()
    _restrict_to_shared_grid(table)
    _derive_ratios(table)
    return table


def _num(value: Number) -> str:
    if isinstance(value, bool):  # guard: bool is an int subclass
        raise ReportError("boolean is not a chart value")
    if isinstance(value, int):
        return str(value)
    return repr(value)


def _parse_num(text: str) -> Number:
    try:
        return int(text)
    except ValueError:
        return float(text)


def render_comparison_csv(table: ComparisonTable) -> str:
    lines = [
        f"# dimension: {table.dimension}",
        f"# units: x={table.x_unit},y={table.y_unit}",
    ]
    if table.ratios:
        first, second = sorted(table.series)
        for x in sorted(table.ratios):
            lines.append(f"# ratio {second}/{first}: x={_num(x)} ratio={_num(table.ratios[x])}")
    for warning in table.warnings:
        lines.append(f"# warning: {warning}")
    lines.append(CSV_HEADER)
    for label in sorted(table.series):
        for x, y in table.series[label]:
            lines.append(f"{label},{_num(x)},{_num(y)}")
    return "\n".join(lines) + "\n"


_RATIO_RE = re.compile(r"^# ratio .+: x=(\S+) ratio=(\S+)$")


def parse_comparison_csv(text: str) -> ComparisonTable:
    dimension = ""
    x_unit = y_unit = ""
    series: dict[str, list[tuple[Number, Number]]] = {}
    ratios: dict[Number, float] = {}
    warnings: list[str] = []
    header_seen = False
    for line in text.splitlines():
        if not line.strip():
            continue
        if line.startswith("#"):
            if line.startswith("# dimension: "):
                dimension = line[len("# dimension: "):]
            elif line.startswith("# units: "):
                m = re.match(r"^# units: x=(.+),y=(.+)$", line)
                if m:
                    x_unit, y_unit = m.group(1), m.group(2)
            elif line.startswith("# warning: "):
                warnings.append(line[len("# warning: "):])
            else:
                m = _RATIO_RE.match(line)
                if m:
                    ratios[_parse_num(m.group(1))] = float(m.group(2))
            continue
        if not header_seen:
            if line != CSV_HEADER:
                raise ReportError(f"unexpected comparison header: {line!r}")
            header_seen = True
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise ReportError(f"comparison row has {len(parts)} fields, expected 3")
        label, x, y = parts
        series.setdefault(label, []).append((_parse_num(x), _parse_num(y)))
    if not header_seen:
        raise ReportError("comparison CSV missing header")
    return ComparisonTable(
        dimension=dimension,
        x_unit=x_unit,
        y_unit=y_unit,
        series=series,
        ratios=ratios,
        warnings=warnings,
    )


def render(table: ComparisonTable, out_dir: str | Path) -> list[Path]:
    """Write comparison.csv and comparison.svg for a nonempty table."""
    if table.is_empty():
        raise ReportError("comparison table has no points to render")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "comparison.csv"
    csv_path.write_text(render_comparison_csv(table), encoding="utf-8")

    chart = [
        Series(label=label, points=[(float(x), float(y)) for x, y in table.series[label]])
        for label in sorted(table.series)
    ]
    titles = {
        "input_size": "execution time vs input size",
        "event_rate": "latency vs event rate",
    }
    svg_path = out / "comparison.svg"
    svg_path.write_text(
        render_line_chart(
            title=titles.get(table.dimension, table.dimension),
            x_label=f"{table.dimension} ({table.x_unit})",
            y_label=f"y ({table.y_unit})",
            series=chart,
        ),
        encoding="utf-8",
    )
    return [csv_path, svg_path]
