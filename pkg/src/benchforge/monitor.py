"""Machine utilization sampling.

One sampler per machine reads a counter source on a fixed interval and
derives rates.  The read at t=0 only establishes counter baselines; the
first emitted sample lands at t=interval.  Byte rates come from cumulative
counters, so a counter reset (new value below the previous one) yields a
rate of zero rather than a negative spike.

The load column is an exponentially weighted moving average of the
instantaneous runnable-task count with a five second time constant.
"""

from __future__ import annotations

import math
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from .errors import MonitorError
from .svg import Series, render_line_chart

CSV_HEADER = "t_ms,cpu_pct,loadavg_5s,mem_used,mem_free,disk_read_bps,disk_write_bps,net_rx_bps,net_tx_bps"

MIN_INTERVAL_MS = 100
LOAD_TIME_CONSTANT_S = 5.0

REPORT_NAMES = ("cpu", "memory", "disk", "network")


@dataclass
class CounterReading:
    """One raw read of the source: gauges plus cumulative byte counters."""

    cpu_pct: float
    runnable: float
    mem_used: int
    mem_free: int
    disk_read_bytes: int
    disk_write_bytes: int
    net_rx_bytes: int
    net_tx_bytes: int


@dataclass
class MetricSample:
    t_ms: int
    cpu_pct: float
    loadavg_5s: float
    mem_used: int
    mem_free: int
    disk_read_bps: float
    disk_write_bps: float
    net_rx_bps: float
    net_tx_bps: float

    def row(self) -> str:
        return ",".join(
            [
                str(self.t_ms),
                repr(float(self.cpu_pct)),
                repr(float(self.loadavg_5s)),
                str(self.mem_used),
                str(self.mem_free),
                repr(float(self.disk_read_bps)),
                repr(float(self.disk_write_bps)),
                repr(float(self.net_rx_bps)),
                repr(float(self.net_tx_bps)),
            ]
        )


@dataclass
class MetricSeries:
    machine_id: str
    interval_ms: int
    samples: list[MetricSample] = field(default_factory=list)


def _rate(new: int, old: int, dt_s: float) -> float:
    if dt_s <= 0 or new < old:
        return 0.0
    return (new - old) / dt_s


class _Ewma:
    def __init__(self, initial: float, time_constant_s: float = LOAD_TIME_CONSTANT_S) -> None:
        self.value = float(initial)
        self._tau = time_constant_s

    def update(self, x: float, dt_s: float) -> float:
        alpha = 1.0 - math.exp(-dt_s / self._tau)
        self.value += alpha * (float(x) - self.value)
        return self.value


def _derive(
    reading: CounterReading,
    prev: CounterReading,
    t_ms: int,
    dt_s: float,
    load: _Ewma,
) -> MetricSample:
    return MetricSample(
        t_ms=t_ms,
        cpu_pct=float(reading.cpu_pct),
        loadavg_5s=load.update(reading.runnable, dt_s),
        mem_used=reading.mem_used,
        mem_free=reading.mem_free,
        disk_read_bps=_rate(reading.disk_read_bytes, prev.disk_read_bytes, dt_s),
        disk_write_bps=_rate(reading.disk_write_bytes, prev.disk_write_bytes, dt_s),
        net_rx_bps=_rate(reading.net_rx_bytes, prev.net_rx_bytes, dt_s),
        net_tx_bps=_rate(reading.net_tx_bytes, prev.net_tx_bytes, dt_s),
    )


def collect_series(
    source,
    machine_id: str,
    interval_ms: int,
    sample_count: int,
) -> MetricSeries:
    """Drive a source synchronously on nominal ticks (no threads, no clock).

    Deterministic with a deterministic source, which is what report and
    serialization tests want.
    """
    if interval_ms < MIN_INTERVAL_MS:
        raise MonitorError(f"interval must be >= {MIN_INTERVAL_MS} ms, got {interval_ms}")
    series = MetricSeries(machine_id=machine_id, interval_ms=interval_ms)
    prev = source.read()
    load = _Ewma(prev.runnable)
    dt_s = interval_ms / 1000.0
    for k in range(1, sample_count + 1):
        reading = source.read()
        series.samples.append(_derive(reading, prev, k * interval_ms, dt_s, load))
        prev = reading
    return series


class MachineMonitor:
    """Background sampler for one machine."""

    def __init__(self, machine_id: str, source, interval_ms: int = 1000) -> None:
        if interval_ms < MIN_INTERVAL_MS:
            raise MonitorError(f"interval must be >= {MIN_INTERVAL_MS} ms, got {interval_ms}")
        self.machine_id = machine_id
        self._source = source
        self._interval_ms = interval_ms
        self._series = MetricSeries(machine_id=machine_id, interval_ms=interval_ms)
        self._lock = threading.Lock()
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None
        self._stopped = False
        self._listeners: list = []

    def add_listener(self, callback) -> None:
        """callback(sample) fires on the sampler thread after each append."""
        with self._lock:
            self._listeners.append(callback)

    def start(self) -> None:
        if self._thread is not None:
            raise MonitorError(f"monitor for {self.machine_id} already started")
        self._thread = threading.Thread(
            target=self._loop, name=f"bf-monitor-{self.machine_id}", daemon=True
        )
        self._thread.start()

    def _loop(self) -> None:
        t0 = time.monotonic()
        prev = self._source.read()
        prev_t = t0
        load = _Ewma(prev.runnable)
        k = 1
        while True:
            deadline = t0 + k * self._interval_ms / 1000.0
            timeout = deadline - time.monotonic()
            if self._stop.wait(timeout=max(0.0, timeout)):
                return
            now = time.monotonic()
            reading = self._source.read()
            dt_s = now - prev_t
            sample = _derive(reading, prev, int(round((now - t0) * 1000)), dt_s, load)
            with self._lock:
                self._series.samples.append(sample)
                listeners = list(self._listeners)
            for cb in listeners:
                cb(sample)
            prev, prev_t = reading, now
            # skip ticks we overslept instead of bursting to catch up
            k = max(k + 1, int((now - t0) * 1000 / self._interval_ms) + 1)

    def snapshot(self) -> MetricSeries:
        with self._lock:
            return MetricSeries(
                machine_id=self.machine_id,
                interval_ms=self._interval_ms,
                samples=list(self._series.samples),
            )

    def stop(self) -> MetricSeries:
        if self._thread is None:
            raise MonitorError(f"monitor for {self.machine_id} was never started")
        if not self._stopped:
            self._stop.set()
            self._thread.join(timeout=10.0)
            self._stopped = True
        return self.snapshot()


class MonitorFleet:
    """Samplers for a set of machines with a shared interval."""

    def __init__(self, interval_ms: int = 1000, source_factory=None) -> None:
        self.interval_ms = interval_ms
        self._source_factory = source_factory or (lambda machine_id: SystemSource())
        self._monitors: dict[str, MachineMonitor] = {}

    def start(self, machine_ids: list[str]) -> None:
        for machine_id in machine_ids:
            if machine_id in self._monitors:
                raise MonitorError(f"monitor for {machine_id} already started")
            monitor = MachineMonitor(
                machine_id, self._source_factory(machine_id), self.interval_ms
            )
            self._monitors[machine_id] = monitor
            monitor.start()

    def monitor(self, machine_id: str) -> MachineMonitor:
        try:
            return self._monitors[machine_id]
        except KeyError:
            raise MonitorError(f"no monitor for machine {machine_id}") from None

    def machine_ids(self) -> list[str]:
        return sorted(self._monitors)

    def stop_all(self) -> dict[str, MetricSeries]:
        return {mid: mon.stop() for mid, mon in sorted(self._monitors.items())}


class SyntheticSource:
    """Deterministic source for tests: smooth waves plus seeded jitter.

    Counters grow monotonically except at reset_at, where they restart
    from zero to exercise the reset-handling path.
    """

    def __init__(self, seed: int = 0, reset_at: int | None = None) -> None:
        import random

        self._rng = random.Random(seed)
        self._tick = 0
        self._reset_at = reset_at
        self._disk_read = 0
        self._disk_write = 0
        self._net_rx = 0
        self._net_tx = 0

    def read(self) -> CounterReading:
        t = self._tick
        self._tick += 1
        if self._reset_at is not None and t == self._reset_at:
            self._disk_read = self._disk_write = self._net_rx = self._net_tx = 0
        jitter = self._rng.random
        self._disk_read += int(2e7 * (1.2 + math.sin(t / 3.0)) * (0.9 + 0.2 * jitter()))
        self._disk_write += int(1e7 * (1.2 + math.cos(t / 4.0)) * (0.9 + 0.2 * jitter()))
        self._net_rx += int(5e6 * (1.1 + math.sin(t / 5.0)) * (0.9 + 0.2 * jitter()))
        self._net_tx += int(3e6 * (1.1 + math.cos(t / 6.0)) * (0.9 + 0.2 * jitter()))
        total_mem = 8 * (1 << 30)
        used = int(total_mem * (0.35 + 0.2 * (1 + math.sin(t / 7.0)) / 2))
        return CounterReading(
            cpu_pct=max(0.0, min(100.0, 45.0 + 35.0 * math.sin(t / 4.0) + 5.0 * jitter())),
            runnable=max(0.0, 2.0 + 2.0 * math.sin(t / 6.0) + jitter()),
            mem_used=used,
            mem_free=total_mem - used,
            disk_read_bytes=self._disk_read,
            disk_write_bytes=self._disk_write,
            net_rx_bytes=self._net_rx,
            net_tx_bytes=self._net_tx,
        )


class SystemSource:
    """Live readings for the local machine via psutil.

    The runnable count comes from /proc/stat's procs_running when present
    (one cheap read); otherwise the one-minute load average stands in.
    """

    def __init__(self) -> None:
        import psutil

        self._psutil = psutil
        psutil.cpu_percent(interval=None)  # prime the internal delta

    def _runnable(self) -> float:
        try:
            with open("/proc/stat", "rb") as fh:
                for line in fh:
                    if line.startswith(b"procs_running"):
                        return float(line.split()[1])
        except OSError:
            pass
        try:
            import os

            return os.getloadavg()[0]
        except OSError:  # pragma: no cover - platform without loadavg
            return 0.0

    def read(self) -> CounterReading:
        psutil = self._psutil
        mem = psutil.virtual_memory()
        disk = psutil.disk_io_counters()
        net = psutil.net_io_counters()
        return CounterReading(
            cpu_pct=psutil.cpu_percent(interval=None),
            runnable=self._runnable(),
            mem_used=mem.used,
            mem_free=mem.available,
            disk_read_bytes=disk.read_bytes if disk else 0,
            disk_write_bytes=disk.write_bytes if disk else 0,
            net_rx_bytes=net.bytes_recv if net else 0,
            net_tx_bytes=net.bytes_sent if net else 0,
        )


def series_to_csv(series: MetricSeries) -> str:
    lines = [CSV_HEADER]
    lines.extend(sample.row() for sample in series.samples)
    return "\n".join(lines) + "\n"


def series_from_csv(text: str, machine_id: str = "", interval_ms: int | None = None) -> MetricSeries:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != CSV_HEADER:
        raise MonitorError("metric CSV missing canonical header")
    samples: list[MetricSample] = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 9:
            raise MonitorError(f"metric CSV row has {len(parts)} fields, expected 9")
        samples.append(
            MetricSample(
                t_ms=int(parts[0]),
                cpu_pct=float(parts[1]),
                loadavg_5s=float(parts[2]),
                mem_used=int(parts[3]),
                mem_free=int(parts[4]),
                disk_read_bps=float(parts[5]),
                disk_write_bps=float(parts[6]),
                net_rx_bps=float(parts[7]),
                net_tx_bps=float(parts[8]),
            )
        )
    if interval_ms is None:
        if len(samples) >= 2:
            interval_ms = samples[1].t_ms - samples[0].t_ms
        elif samples:
            interval_ms = samples[0].t_ms
        else:
            interval_ms = 1000
    return MetricSeries(machine_id=machine_id, interval_ms=interval_ms, samples=samples)


_REPORT_COLUMNS: dict[str, list[tuple[str, str]]] = {
    "cpu": [("cpu_pct", "cpu %"), ("loadavg_5s", "load (5s avg)")],
    "memory": [("mem_used", "used bytes"), ("mem_free", "free bytes")],
    "disk": [("disk_read_bps", "read B/s"), ("disk_write_bps", "write B/s")],
    "network": [("net_rx_bps", "rx B/s"), ("net_tx_bps", "tx B/s")],
}


def generate_reports(series: MetricSeries, out_dir: str | Path) -> list[Path]:
    """Write the four utilization reports (csv and svg each) for one machine."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    for name in REPORT_NAMES:
        columns = _REPORT_COLUMNS[name]
        csv_path = out / f"{name}.csv"
        header = "t_ms," + ",".join(col for col, _ in columns)
        rows = [header]
        for s in series.samples:
            values = [str(s.t_ms)]
            for col, _ in columns:
                v = getattr(s, col)
                values.append(str(v) if isinstance(v, int) else repr(float(v)))
            rows.append(",".join(values))
        csv_path.write_text("\n".join(rows) + "\n", encoding="utf-8")
        written.append(csv_path)

        chart_series = [
            Series(
                label=label,
                points=[(float(s.t_ms), float(getattr(s, col))) for s in series.samples],
            )
            for col, label in columns
        ]
        svg_path = out / f"{name}.svg"
        svg_path.write_text(
            render_line_chart(
                title=f"{name} on {series.machine_id}",
                x_label="t (ms)",
                y_label=" / ".join(label for _, label in columns),
                series=chart_series,
            ),
            encoding="utf-8",
        )
        written.append(svg_path)
    return written
