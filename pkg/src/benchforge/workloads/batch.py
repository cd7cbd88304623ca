"""Batch sort benchmark: fixed-width record generation plus external sort.

Records are 100 bytes: a 10-byte pseudo-random key followed by a 90-byte
payload that carries the record index, so any output file can be verified
structurally without keeping the input in memory.
"""

from __future__ import annotations

import hashlib
import heapq
import os
import random
import shutil
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

from ..errors import PreflightError, WorkloadError

RECORD_LEN = 100
KEY_LEN = 10
_INDEX_DIGITS = 20
_PAYLOAD_FILL = b"X" * (RECORD_LEN - KEY_LEN - _INDEX_DIGITS - 1)

MIN_MEMORY_LIMIT = 10 * (1 << 20)

# Input plus three times extra for replicas and temporaries.
STORAGE_FACTOR = 4


@dataclass(frozen=True)
class RecordFile:
    path: Path
    record_count: int

    @property
    def size_bytes(self) -> int:
        return self.record_count * RECORD_LEN


@dataclass
class BatchResult:
    records: int
    input_bytes: int
    execution_time_ms: int
    engine: str
    output_path: str

    def to_dict(self) -> dict:
        return {
            "kind": "batch",
            "records": self.records,
            "input_bytes": self.input_bytes,
            "execution_time_ms": self.execution_time_ms,
            "engine": self.engine,
            "output_path": self.output_path,
        }


def gen_records(n: int, seed: int) -> Iterator[bytes]:
    """Yield n records, deterministic for a given seed."""
    if n < 0:
        raise WorkloadError(f"record count must be >= 0, got {n}")
    rng = random.Random(seed)
    for i in range(n):
        key = rng.getrandbits(8 * KEY_LEN).to_bytes(KEY_LEN, "big")
        yield key + b"%020d" % i + _PAYLOAD_FILL + b"\n"


def write_record_file(path: str | Path, n: int, seed: int) -> RecordFile:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf: list[bytes] = []
    with open(path, "wb") as out:
        for record in gen_records(n, seed):
            buf.append(record)
            if len(buf) >= 65536:
                out.write(b"".join(buf))
                buf.clear()
        if buf:
            out.write(b"".join(buf))
    return RecordFile(path=path, record_count=n)


def check_record_file(path: str | Path) -> RecordFile:
    """Validate the structural law: size = 100n and every record well-formed."""
    path = Path(path)
    size = path.stat().st_size
    if size % RECORD_LEN != 0:
        raise WorkloadError(f"{path}: size {size} is not a multiple of {RECORD_LEN}")
    count = 0
    with open(path, "rb") as fh:
        while True:
            chunk = fh.read(RECORD_LEN * 8192)
            if not chunk:
                break
            for off in range(0, len(chunk), RECORD_LEN):
                record = chunk[off : off + RECORD_LEN]
                payload = record[KEY_LEN:]
                if (
                    not payload[:_INDEX_DIGITS].isdigit()
                    or payload[_INDEX_DIGITS:-1] != _PAYLOAD_FILL
                    or payload[-1:] != b"\n"
                ):
                    raise WorkloadError(f"{path}: malformed record at index {count}")
                count += 1
    return RecordFile(path=path, record_count=count)


def storage_requirement(input_bytes: int) -> int:
    if input_bytes < 0:
        raise WorkloadError(f"input size must be >= 0, got {input_bytes}")
    return STORAGE_FACTOR * input_bytes


def preflight_storage(directory: str | Path, input_bytes: int) -> None:
    """Refuse a run whose volume cannot hold input plus temporaries."""
    required = storage_requirement(input_bytes)
    available = shutil.disk_usage(directory).free
    if available < required:
        raise PreflightError(required=required, available=available, path=str(directory))


def _iter_records(path: Path, buffer_bytes: int) -> Iterator[bytes]:
    buffer_bytes = max(RECORD_LEN, (buffer_bytes // RECORD_LEN) * RECORD_LEN)
    with open(path, "rb") as fh:
        while True:
            chunk = fh.read(buffer_bytes)
            if not chunk:
                return
            for off in range(0, len(chunk), RECORD_LEN):
                yield chunk[off : off + RECORD_LEN]


def external_sort(
    input_path: str | Path,
    output_path: str | Path,
    memory_limit: int,
    tmp_dir: str | Path | None = None,
) -> tuple[RecordFile, int]:
    """Sort a record file ascending by key within a memory budget.

    Chunks of at most memory_limit bytes are sorted in memory and spilled
    as runs, then merged in one streaming pass.  Records sort as whole
    100-byte strings; the key is the prefix, so ordering is total and
    byte-identical to a full in-memory sort.
    """
    if memory_limit < MIN_MEMORY_LIMIT:
        raise WorkloadError(
            f"memory_limit must be >= {MIN_MEMORY_LIMIT} bytes, got {memory_limit}"
        )
    input_path = Path(input_path)
    output_path = Path(output_path)
    size = input_path.stat().st_size
    if size % RECORD_LEN != 0:
        raise WorkloadError(f"{input_path}: size {size} is not a multiple of {RECORD_LEN}")
    record_count = size // RECORD_LEN

    started = time.monotonic()
    chunk_bytes = (memory_limit // RECORD_LEN) * RECORD_LEN
    output_path.parent.mkdir(parents=True, exist_ok=True)

    with tempfile.TemporaryDirectory(
        prefix="bf-sort-", dir=str(tmp_dir) if tmp_dir else str(output_path.parent)
    ) as runs_dir:
        run_paths: list[Path] = []
        with open(input_path, "rb") as fh:
            while True:
                chunk = fh.read(chunk_bytes)
                if not chunk:
                    break
                records = [chunk[off : off + RECORD_LEN] for off in range(0, len(chunk), RECORD_LEN)]
                records.sort()
                run_path = Path(runs_dir) / f"run-{len(run_paths):05d}.dat"
                with open(run_path, "wb") as out:
                    out.write(b"".join(records))
                run_paths.append(run_path)

        if len(run_paths) <= 1:
            if run_paths:
                shutil.move(str(run_paths[0]), str(output_path))
            else:
                output_path.write_bytes(b"")
        else:
            per_run = max(RECORD_LEN, memory_limit // (len(run_paths) + 1))
            streams = [_iter_records(p, per_run) for p in run_paths]
            buf: list[bytes] = []
            with open(output_path, "wb") as out:
                for record in heapq.merge(*streams):
                    buf.append(record)
                    if len(buf) >= 8192:
                        out.write(b"".join(buf))
                        buf.clear()
                if buf:
                    out.write(b"".join(buf))

    elapsed_ms = int((time.monotonic() - started) * 1000)
    if output_path.stat().st_size != size:
        raise WorkloadError(
            f"{output_path}: sorted output size {output_path.stat().st_size} != input size {size}"
        )
    return RecordFile(path=output_path, record_count=record_count), elapsed_ms


def multiset_hash(path: str | Path) -> int:
    """Order-independent digest of a record file: sum of per-record md5."""
    total = 0
    for record in _iter_records(Path(path), 1 << 20):
        total = (total + int.from_bytes(hashlib.md5(record).digest(), "big")) % (1 << 128)
    return total


def verify_sorted(input_path: str | Path, output_path: str | Path) -> None:
    """Single-pass check: keys non-decreasing and record multiset preserved."""
    prev: bytes | None = None
    out_total = 0
    for record in _iter_records(Path(output_path), 1 << 20):
        key = record[:KEY_LEN]
        if prev is not None and key < prev:
            raise WorkloadError(f"{output_path}: key order violated")
        prev = key
        out_total = (out_total + int.from_bytes(hashlib.md5(record).digest(), "big")) % (1 << 128)
    if out_total != multiset_hash(input_path):
        raise WorkloadError(f"{output_path}: record multiset differs from input")


def sort_record_file(
    workdir: str | Path,
    input_path: str | Path | None = None,
    memory_limit: int = 64 * (1 << 20),
    engine_cmd: str | None = None,
    engine_label: str = "builtin",
    verify: bool = False,
) -> BatchResult:
    """Sort an existing record file; only the sort is timed (the reported
    metric).  engine_cmd swaps in an external sort: a shell command with
    {input}/{output} placeholders (also exported as BF_SORT_INPUT/OUTPUT)."""
    workdir = Path(workdir)
    input_path = Path(input_path) if input_path else workdir / "input.dat"
    output_path = workdir / "sorted.dat"
    if not input_path.is_file():
        raise WorkloadError(f"{input_path}: no input record file (run datagen first)")
    size = input_path.stat().st_size
    if size % RECORD_LEN != 0:
        raise WorkloadError(f"{input_path}: size {size} is not a multiple of {RECORD_LEN}")

    if engine_cmd:
        command = engine_cmd.replace("{input}", str(input_path)).replace(
            "{output}", str(output_path)
        )
        env = dict(os.environ)
        env.update(
            {
                "BF_SORT_INPUT": str(input_path),
                "BF_SORT_OUTPUT": str(output_path),
                "BF_MEMORY_LIMIT": str(memory_limit),
                "BF_PYTHON": env.get("BF_PYTHON", sys.executable),
            }
        )
        started = time.monotonic()
        proc = subprocess.run(
            command, shell=True, cwd=workdir, env=env, capture_output=True, text=True
        )
        elapsed_ms = int((time.monotonic() - started) * 1000)
        if proc.returncode != 0:
            raise WorkloadError(
                f"engine command failed with exit {proc.returncode}: {proc.stderr.strip()}"
            )
        if not output_path.is_file():
            raise WorkloadError(f"engine command produced no output at {output_path}")
    else:
        _, elapsed_ms = external_sort(input_path, output_path, memory_limit)

    if verify:
        verify_sorted(input_path, output_path)

    return BatchResult(
        records=size // RECORD_LEN,
        input_bytes=size,
        execution_time_ms=elapsed_ms,
        engine=engine_label,
        output_path=str(output_path),
    )


def run_batch_experiment(
    workdir: str | Path,
    records: int,
    seed: int = 0,
    memory_limit: int = 64 * (1 << 20),
    engine_cmd: str | None = None,
    engine_label: str = "builtin",
    verify: bool = False,
) -> BatchResult:
    """Datagen then sort, with the storage preflight up front."""
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    input_bytes = records * RECORD_LEN
    preflight_storage(workdir, input_bytes)
    write_record_file(workdir / "input.dat", records, seed)
    return sort_record_file(
        workdir,
        memory_limit=memory_limit,
        engine_cmd=engine_cmd,
        engine_label=engine_label,
        verify=verify,
    )
