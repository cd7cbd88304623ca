"""Ad-campaign streaming benchmark.

A paced generator pushes ad events through a bounded in-process queue to
a windowed counter backed by a timestamped store.  The queue models the
broker: when the consumer falls behind, the queue fills, overflow counts
as drops, and store writes drift later, which is what raises the high
percentile latencies at high input rates.

Window latency for a (campaign, window) row is store_write_time minus the
last emit timestamp among the window's events, and is never negative: a
row is written at or after the watermark passes the window end, which is
at or after its last emit.
"""

from __future__ import annotations

import csv
import io
import queue
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from ..errors import WorkloadError
from .stats import percentile

EVENT_TYPES = ("view", "click", "purchase")
UNKNOWN_CAMPAIGN = "unknown"

DEFAULT_WINDOW_MS = 10_000
DEFAULT_QUEUE_CAPACITY = 10_000
DEFAULT_SERVICE_RATE = 5_000
MIN_WINDOW_MS = 100

EVENT_LOG_HEADER = "event_id,ad_id,event_time_ms,emit_ms,type"
STORE_DUMP_HEADER = "campaign,window_start,count,last_emit_ms,write_ms"
CAMPAIGN_CSV_HEADER = "ad_id,campaign_id"


class RealClock:
    """Monotonic milliseconds since construction."""

    def __init__(self) -> None:
        self._t0 = time.monotonic()

    def now_ms(self) -> int:
        return int((time.monotonic() - self._t0) * 1000)

    def sleep(self, seconds: float) -> None:
        time.sleep(seconds)


class ManualClock:
    """Virtual clock for deterministic pacing tests: sleep advances time."""

    def __init__(self) -> None:
        self._now_s = 0.0

    def now_ms(self) -> int:
        return int(self._now_s * 1000)

    def sleep(self, seconds: float) -> None:
        self._now_s += seconds


@dataclass(frozen=True)
class AdEvent:
    event_id: str
    ad_id: str
    event_time_ms: int
    emit_ms: int
    event_type: str


@dataclass
class CampaignSet:
    ads_per_campaign: int
    campaigns: list[str]
    ad_to_campaign: dict[str, str]
    ads: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.ads:
            self.ads = list(self.ad_to_campaign)

    def campaign_of(self, ad_id: str) -> str | None:
        return self.ad_to_campaign.get(ad_id)

    def to_csv(self) -> str:
        lines = [CAMPAIGN_CSV_HEADER]
        lines.extend(f"{ad},{self.ad_to_campaign[ad]}" for ad in self.ads)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "CampaignSet":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or lines[0] != CAMPAIGN_CSV_HEADER:
            raise WorkloadError("campaign CSV missing canonical header")
        mapping: dict[str, str] = {}
        for ln in lines[1:]:
            ad, campaign = ln.split(",", 1)
            mapping[ad] = campaign
        campaigns = sorted(set(mapping.values()))
        per = len(mapping) // len(campaigns) if campaigns else 0
        return cls(ads_per_campaign=max(1, per), campaigns=campaigns, ad_to_campaign=mapping)


def _hex_id(rng: random.Random, taken: set[str]) -> str:
    while True:
        candidate = "%016x" % rng.getrandbits(64)
        if candidate not in taken:
            taken.add(candidate)
            return candidate


def generate_campaigns(num_campaigns: int, ads_per_campaign: int, seed: int = 0) -> CampaignSet:
    """Deterministic campaign metadata: ads assigned in contiguous blocks."""
    if num_campaigns < 1 or ads_per_campaign < 1:
        raise WorkloadError("num_campaigns and ads_per_campaign must be >= 1")
    rng = random.Random(seed)
    taken: set[str] = set()
    campaigns = [_hex_id(rng, taken) for _ in range(num_campaigns)]
    mapping: dict[str, str] = {}
    ads: list[str] = []
    for campaign in campaigns:
        for _ in range(ads_per_campaign):
            ad = _hex_id(rng, taken)
            mapping[ad] = campaign
            ads.append(ad)
    return CampaignSet(
        ads_per_campaign=ads_per_campaign,
        campaigns=campaigns,
        ad_to_campaign=mapping,
        ads=ads,
    )


class BoundedQueue:
    """The broker stand-in: non-blocking offers, overflow is the caller's drop."""

    def __init__(self, capacity: int = DEFAULT_QUEUE_CAPACITY) -> None:
        if capacity < 1:
            raise WorkloadError(f"queue capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._q: queue.Queue[AdEvent] = queue.Queue(maxsize=capacity)
        self._closed = threading.Event()

    def offer(self, event: AdEvent) -> bool:
        try:
            self._q.put_nowait(event)
            return True
        except queue.Full:
            return False

    def close(self) -> None:
        self._closed.set()

    def drain(self, service_rate: int | None = None, clock: RealClock | None = None) -> Iterator[AdEvent]:
        """Yield events until closed and empty, consuming at most
        service_rate events per second when a cap is given."""
        clock = clock or RealClock()
        t0 = clock.now_ms()
        taken = 0
        while True:
            batch = 256
            if service_rate is not None:
                allowed = (service_rate * (clock.now_ms() - t0)) // 1000 - taken
                if allowed <= 0:
                    if self._closed.is_set() and self._q.empty():
                        return
                    clock.sleep(0.002)
                    continue
                batch = min(batch, int(allowed))
            got = 0
            for _ in range(batch):
                try:
                    event = self._q.get_nowait()
                except queue.Empty:
                    break
                got += 1
                taken += 1
                yield event
            if got == 0:
                if self._closed.is_set() and self._q.empty():
                    return
                clock.sleep(0.001)


@dataclass
class GeneratorStats:
    rate: int
    duration_s: int
    emitted_count: int
    dropped_count: int
    emit_times: list[int]
    finished_ms: int

    @property
    def delivered_count(self) -> int:
        return self.emitted_count - self.dropped_count


def run_event_generator(
    campaigns: CampaignSet,
    rate: int,
    duration: int,
    sink,
    seed: int = 0,
    clock=None,
) -> GeneratorStats:
    """Emit rate x duration events, paced by a token bucket.

    Every generated event counts as emitted and is timestamped at emit;
    an event the sink refuses counts as dropped on top of that, so
    emitted_count stays comparable across rates even under backpressure.
    """
    if rate < 1:
        raise WorkloadError(f"rate must be >= 1, got {rate}")
    if duration < 1:
        raise WorkloadError(f"duration must be >= 1, got {duration}")
    clock = clock or RealClock()
    rng = random.Random(seed)
    ads = campaigns.ads
    target = rate * duration
    emitted = 0
    dropped = 0
    emit_times: list[int] = []
    t0 = clock.now_ms()
    while emitted < target:
        now = clock.now_ms()
        due = min(target, rate * (now - t0) // 1000)
        if due <= emitted:
            clock.sleep(0.002)
            continue
        for _ in range(due - emitted):
            now = clock.now_ms()
            event = AdEvent(
                event_id="%016x" % rng.getrandbits(64),
                ad_id=ads[rng.randrange(len(ads))],
                event_time_ms=now,
                emit_ms=now,
                event_type=EVENT_TYPES[rng.randrange(len(EVENT_TYPES))],
            )
            emitted += 1
            emit_times.append(now)
            if not sink.offer(event):
                dropped += 1
    return GeneratorStats(
        rate=rate,
        duration_s=duration,
        emitted_count=emitted,
        dropped_count=dropped,
        emit_times=emit_times,
        finished_ms=clock.now_ms(),
    )


@dataclass(frozen=True)
class StoreRow:
    campaign: str
    window_start: int
    count: int
    last_emit_ms: int | None
    write_ms: int | None


class WindowStore:
    """Timestamped (campaign, window) rows, append-only, thread-safe."""

    def __init__(self) -> None:
        self._rows: list[StoreRow] = []
        self._lock = threading.Lock()
        self.skipped_rows = 0

    def write(self, campaign: str, window_start: int, count: int, last_emit_ms: int, write_ms: int) -> None:
        with self._lock:
            self._rows.append(StoreRow(campaign, window_start, count, last_emit_ms, write_ms))

    def rows(self) -> list[StoreRow]:
        with self._lock:
            return list(self._rows)

    def to_csv(self) -> str:
        lines = [STORE_DUMP_HEADER]
        for r in self.rows():
            lines.append(
                f"{r.campaign},{r.window_start},{r.count},"
                f"{'' if r.last_emit_ms is None else r.last_emit_ms},"
                f"{'' if r.write_ms is None else r.write_ms}"
            )
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "WindowStore":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or lines[0] != STORE_DUMP_HEADER:
            raise WorkloadError("store dump missing canonical header")
        store = cls()
        for ln in lines[1:]:
            parts = ln.split(",")
            if len(parts) != 5:
                raise WorkloadError(f"store dump row has {len(parts)} fields, expected 5")
            campaign, window_start, count, last_emit, write = parts
            store._rows.append(
                StoreRow(
                    campaign=campaign,
                    window_start=int(window_start),
                    count=int(count),
                    last_emit_ms=int(last_emit) if last_emit else None,
                    write_ms=int(write) if write else None,
                )
            )
        return store


@dataclass
class ProcessingReport:
    processed_count: int = 0
    unknown_count: int = 0
    windows_written: int = 0


@dataclass
class _WindowAgg:
    count: int = 0
    last_emit_ms: int = 0


def process_stream(
    source: Iterable[AdEvent],
    campaigns: CampaignSet,
    window_ms: int = DEFAULT_WINDOW_MS,
    store: WindowStore | None = None,
    clock=None,
) -> ProcessingReport:
    """Count events per (campaign, window); write rows as the watermark
    closes windows, and flush whatever remains at end of stream.

    Without a clock, write timestamps fall back to the running maximum
    emit time, which keeps pure replays deterministic and latencies
    non-negative for any emit-ordered input.
    """
    if window_ms < MIN_WINDOW_MS:
        raise WorkloadError(f"window_ms must be >= {MIN_WINDOW_MS}, got {window_ms}")
    store = store if store is not None else WindowStore()
    report = ProcessingReport()
    open_windows: dict[tuple[str, int], _WindowAgg] = {}
    max_event_time = None
    max_emit_seen = 0

    def write_ms_now() -> int:
        return clock.now_ms() if clock is not None else max_emit_seen

    def close_ready(watermark: int) -> None:
        ready = [key for key in open_windows if key[1] + window_ms <= watermark]
        for key in sorted(ready, key=lambda k: (k[1], k[0])):
            agg = open_windows.pop(key)
            store.write(key[0], key[1], agg.count, agg.last_emit_ms, write_ms_now())
            report.windows_written += 1

    for event in source:
        report.processed_count += 1
        campaign = campaigns.campaign_of(event.ad_id)
        if campaign is None:
            campaign = UNKNOWN_CAMPAIGN
            report.unknown_count += 1
        window_start = (event.event_time_ms // window_ms) * window_ms
        agg = open_windows.setdefault((campaign, window_start), _WindowAgg())
        agg.count += 1
        agg.last_emit_ms = max(agg.last_emit_ms, event.emit_ms)
        max_emit_seen = max(max_emit_seen, event.emit_ms)
        if max_event_time is None or event.event_time_ms > max_event_time:
            max_event_time = event.event_time_ms
            close_ready(max_event_time - window_ms)

    if open_windows:
        final = max(key[1] + window_ms for key in open_windows)
        close_ready(final)
    return report


@dataclass(frozen=True)
class LatencyRecord:
    campaign: str
    window_start: int
    last_emit_ms: int
    write_ms: int

    @property
    def latency_ms(self) -> int:
        return self.write_ms - self.last_emit_ms


def compute_latencies(store: WindowStore) -> list[LatencyRecord]:
    """One latency record per store row; rows missing either timestamp are
    skipped and counted in store.skipped_rows."""
    records: list[LatencyRecord] = []
    store.skipped_rows = 0
    for row in store.rows():
        if row.last_emit_ms is None or row.write_ms is None:
            store.skipped_rows += 1
            continue
        record = LatencyRecord(
            campaign=row.campaign,
            window_start=row.window_start,
            last_emit_ms=row.last_emit_ms,
            write_ms=row.write_ms,
        )
        if record.latency_ms < 0:
            raise WorkloadError(
                f"negative latency for ({row.campaign}, {row.window_start}): "
                f"write {row.write_ms} before last emit {row.last_emit_ms}"
            )
        records.append(record)
    return records


def events_to_csv(events: Iterable[AdEvent]) -> str:
    out = io.StringIO()
    out.write(EVENT_LOG_HEADER + "\n")
    writer = csv.writer(out, lineterminator="\n")
    for e in events:
        writer.writerow([e.event_id, e.ad_id, e.event_time_ms, e.emit_ms, e.event_type])
    return out.getvalue()


def events_from_csv(text: str) -> list[AdEvent]:
    lines = text.splitlines()
    if not lines or lines[0] != EVENT_LOG_HEADER:
        raise WorkloadError("event log missing canonical header")
    events: list[AdEvent] = []
    for row in csv.reader(lines[1:]):
        if not row:
            continue
        if len(row) != 5:
            raise WorkloadError(f"event log row has {len(row)} fields, expected 5")
        events.append(
            AdEvent(
                event_id=row[0],
                ad_id=row[1],
                event_time_ms=int(row[2]),
                emit_ms=int(row[3]),
                event_type=row[4],
            )
        )
    return events


@dataclass
class StreamResult:
    rate: int
    duration_s: int
    window_ms: int
    emitted_count: int
    dropped_count: int
    delivered_count: int
    processed_count: int
    unknown_count: int
    window_rows: int
    latencies_ms: list[int]
    execution_time_ms: int
    engine: str = "builtin"

    def latency_percentile(self, p: float) -> float:
        if not self.latencies_ms:
            raise WorkloadError("no latency records in result")
        return float(percentile(self.latencies_ms, p))

    def to_dict(self) -> dict:
        return {
            "kind": "streaming",
            "rate": self.rate,
            "duration_s": self.duration_s,
            "window_ms": self.window_ms,
            "emitted_count": self.emitted_count,
            "dropped_count": self.dropped_count,
            "delivered_count": self.delivered_count,
            "processed_count": self.processed_count,
            "unknown_count": self.unknown_count,
            "window_rows": self.window_rows,
            "latencies_ms": self.latencies_ms,
            "execution_time_ms": self.execution_time_ms,
            "engine": self.engine,
        }


class _LoggingSink:
    """Wraps the queue so the event log holds exactly the delivered events."""

    def __init__(self, inner: BoundedQueue) -> None:
        self._inner = inner
        self.delivered: list[AdEvent] = []

    def offer(self, event: AdEvent) -> bool:
        if self._inner.offer(event):
            self.delivered.append(event)
            return True
        return False


def run_stream_experiment(
    workdir: str | Path,
    rate: int,
    duration_s: int,
    num_campaigns: int = 100,
    ads_per_campaign: int = 10,
    window_ms: int = DEFAULT_WINDOW_MS,
    queue_capacity: int = DEFAULT_QUEUE_CAPACITY,
    service_rate: int | None = DEFAULT_SERVICE_RATE,
    seed: int = 0,
    engine_label: str = "builtin",
) -> StreamResult:
    """Run generator and processor concurrently over the bounded queue and
    dump campaigns, the delivered-event log, and the store to workdir."""
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)

    campaigns = generate_campaigns(num_campaigns, ads_per_campaign, seed)
    (workdir / "campaigns.csv").write_text(campaigns.to_csv(), encoding="utf-8")

    clock = RealClock()
    bus = BoundedQueue(queue_capacity)
    sink = _LoggingSink(bus)
    store = WindowStore()
    box: dict[str, ProcessingReport] = {}

    def consume() -> None:
        box["report"] = process_stream(
            bus.drain(service_rate=service_rate, clock=clock),
            campaigns,
            window_ms=window_ms,
            store=store,
            clock=clock,
        )

    consumer = threading.Thread(target=consume, name="bf-stream-processor", daemon=True)
    consumer.start()
    stats = run_event_generator(campaigns, rate, duration_s, sink, seed=seed, clock=clock)
    bus.close()
    consumer.join()
    report = box["report"]

    (workdir / "event_log.csv").write_text(events_to_csv(sink.delivered), encoding="utf-8")
    (workdir / "store_dump.csv").write_text(store.to_csv(), encoding="utf-8")

    latencies = [r.latency_ms for r in compute_latencies(store)]
    return StreamResult(
        rate=rate,
        duration_s=duration_s,
        window_ms=window_ms,
        emitted_count=stats.emitted_count,
        dropped_count=stats.dropped_count,
        delivered_count=stats.delivered_count,
        processed_count=report.processed_count,
        unknown_count=report.unknown_count,
        window_rows=report.windows_written,
        latencies_ms=latencies,
        execution_time_ms=clock.now_ms(),
        engine=engine_label,
    )
