"""The streaming classification pipeline and record persistence.

Four stages run concurrently over bounded queues: snapshot acquisition,
integrity check + resize, batched classification, and record handling
(append to daily CSV plus asynchronous submission to a remote sink).
Each stage consumes inputs as they emerge from the previous one, so
classification of early batches overlaps with ongoing acquisition.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import queue
import threading
import time
from collections import deque
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Protocol, Sequence

from .catalogue import CameraRecord, FetchFailure, FetchResult, Poller, Snapshot
from .classify import Backend, LabelRecord, classify_batch
from .conditions import parse_condition
from .imaging import CorruptImageError, Image, decode_and_check, resize

logger = logging.getLogger(__name__)

RECORD_HEADER = ["image_name", "latitude", "longitude", "class", "confidence", "timestamp"]

DEFAULT_BACKOFF_BASE_S = 1.0
DEFAULT_BACKOFF_CAP_S = 60.0
DEFAULT_MAX_ATTEMPTS = 8


# -- record persistence ----------------------------------------------------------


class RecordWriter:
    """Serialized, durable appends to daily ``labels-YYYYMMDD.csv`` files."""

    def __init__(self, output_dir: str | Path) -> None:
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._handles: dict[str, io.TextIOWrapper] = {}
        self.appended = 0

    def _handle_for(self, day: str) -> io.TextIOWrapper:
        handle = self._handles.get(day)
        if handle is None:
            path = self.output_dir / f"labels-{day}.csv"
            fresh = not path.exists()
            handle = open(path, "a", newline="", encoding="utf-8")
            if fresh:
                handle.write(",".join(RECORD_HEADER) + "\n")
                handle.flush()
            self._handles[day] = handle
        return handle

    def append(self, record: LabelRecord) -> None:
        """Write one CSV row and flush; safe from concurrent classifiers."""
        day = record.timestamp.astimezone(timezone.utc).strftime("%Y%m%d")
        with self._lock:
            handle = self._handle_for(day)
            writer = csv.writer(handle)
            writer.writerow(
                [
                    record.camera_id,
                    f"{record.latitude:.6f}",
                    f"{record.longitude:.6f}",
                    record.label.value,
                    f"{record.confidence:.6f}",
                    record.timestamp.isoformat(),
                ]
            )
            handle.flush()
            self.appended += 1

    def close(self) -> None:
        with self._lock:
            for handle in self._handles.values():
                handle.close()
            self._handles.clear()


def read_record_csv(path: str | Path) -> list[LabelRecord]:
    """Parse one record CSV back into label records."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RECORD_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        for row in reader:
            out.append(
                LabelRecord(
                    camera_id=row["image_name"],
                    timestamp=datetime.fromisoformat(row["timestamp"]),
                    label=parse_condition(row["class"]),
                    confidence=float(row["confidence"]),
                    latitude=float(row["latitude"]),
                    longitude=float(row["longitude"]),
                )
            )
    return out


def read_all_records(output_dir: str | Path) -> list[LabelRecord]:
    records = []
    for path in sorted(Path(output_dir).glob("labels-*.csv")):
        records.extend(read_record_csv(path))
    return records


# -- submission -------------------------------------------------------------------


class RecordSink(Protocol):
    """Remote record consumer; ``submit`` raises on failure."""

    def submit(self, records: Sequence[LabelRecord]) -> None: ...


class InMemorySink:
    """Test/demo sink with optional scripted failures."""

    def __init__(self, fail_times: int = 0, fail_forever: bool = False) -> None:
        self.records: list[LabelRecord] = []
        self.attempts = 0
        self.fail_times = fail_times
        self.fail_forever = fail_forever
        self._lock = threading.Lock()

    def submit(self, records: Sequence[LabelRecord]) -> None:
        with self._lock:
            self.attempts += 1
            if self.fail_forever or self.attempts <= self.fail_times:
                raise ConnectionError("sink unavailable")
            self.records.extend(records)


class DatabaseSink:
    """Relational sink with idempotent upserts keyed on (camera_id, ts)."""

    def __init__(self, url: str) -> None:
        import sqlalchemy as sa

        self._sa = sa
        self.engine = sa.create_engine(url)
        metadata = sa.MetaData()
        self.table = sa.Table(
            "label_records",
            metadata,
            sa.Column("camera_id", sa.Text, primary_key=True),
            sa.Column("ts", sa.DateTime(timezone=True), primary_key=True),
            sa.Column("class", sa.Text, nullable=False),
            sa.Column("confidence", sa.Double, nullable=False),
            sa.Column("lat", sa.Double, nullable=False),
            sa.Column("lon", sa.Double, nullable=False),
        )
        metadata.create_all(self.engine)

    def submit(self, records: Sequence[LabelRecord]) -> None:
        dialect = self.engine.dialect.name
        if dialect == "postgresql":
            from sqlalchemy.dialects.postgresql import insert
        elif dialect == "sqlite":
            from sqlalchemy.dialects.sqlite import insert
        else:
            raise ValueError(f"unsupported database dialect {dialect!r}")
        rows = [
            {
                "camera_id": r.camera_id,
                "ts": r.timestamp,
                "class": r.label.value,
                "confidence": r.confidence,
                "lat": r.latitude,
                "lon": r.longitude,
            }
            for r in records
        ]
        with self.engine.begin() as conn:
            stmt = insert(self.table)
            update_cols = {c: stmt.excluded[c] for c in ("class", "confidence", "lat", "lon")}
            conn.execute(stmt.on_conflict_do_update(index_elements=["camera_id", "ts"], set_=update_cols), rows)

    def fetch_all(self) -> list[tuple]:
        with self.engine.connect() as conn:
            return list(conn.execute(self._sa.select(self.table)))


@dataclass
class SubmissionBatch:
    records: list[LabelRecord]
    attempt: int = 0
    next_retry_at: float = 0.0  # monotonic seconds

    def __post_init__(self) -> None:
        if not self.records:
            raise ValueError("submission batch must be non-empty")


class Submitter:
    """At-least-once record submission with backoff and a dead-letter file.

    Acknowledged record counts persist in a watermark file so a restart can
    resume from unsubmitted rows; batches failing `max_attempts` times move
    to the dead-letter file and submission continues.
    """

    def __init__(
        self,
        sink: RecordSink,
        output_dir: str | Path,
        batch_size: int = 25,
        backoff_base_s: float = DEFAULT_BACKOFF_BASE_S,
        backoff_cap_s: float = DEFAULT_BACKOFF_CAP_S,
        max_attempts: int = DEFAULT_MAX_ATTEMPTS,
    ) -> None:
        self.sink = sink
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.batch_size = batch_size
        self.backoff_base_s = backoff_base_s
        self.backoff_cap_s = backoff_cap_s
        self.max_attempts = max_attempts
        self.submitted = self._read_watermark()
        self.dead_lettered = 0
        self._queue: deque[LabelRecord] = deque()
        self._inflight: SubmissionBatch | None = None
        self._lock = threading.Lock()
        self._wake = threading.Event()
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._run, name="roadwatch-submitter", daemon=True)

    @property
    def watermark_path(self) -> Path:
        return self.output_dir / "submission.watermark"

    @property
    def dead_letter_path(self) -> Path:
        return self.output_dir / "labels-deadletter.jsonl"

    def _read_watermark(self) -> int:
        try:
            return int(self.watermark_path.read_text().strip())
        except (FileNotFoundError, ValueError):
            return 0

    def _write_watermark(self) -> None:
        self.watermark_path.write_text(f"{self.submitted}\n")

    @property
    def pending(self) -> int:
        with self._lock:
            inflight = len(self._inflight.records) if self._inflight else 0
            return len(self._queue) + inflight

    def enqueue(self, record: LabelRecord) -> None:
        with self._lock:
            self._queue.append(record)
        self._wake.set()

    def recover(self, appended: Sequence[LabelRecord]) -> None:
        """Re-enqueue rows past the watermark (restart path; at-least-once)."""
        for record in appended[self.submitted :]:
            self.enqueue(record)

    def start(self) -> "Submitter":
        self._thread.start()
        return self

    def stop(self, drain_timeout_s: float = 0.0) -> None:
        """Stop submitting; optionally wait up to `drain_timeout_s` for the queue."""
        deadline = time.monotonic() + drain_timeout_s
        while drain_timeout_s > 0 and self.pending and time.monotonic() < deadline:
            time.sleep(0.01)
        self._stop.set()
        self._wake.set()
        self._thread.join(timeout=10)

    def _next_batch(self) -> SubmissionBatch | None:
        with self._lock:
            if self._inflight is not None:
                return self._inflight
            if not self._queue:
                return None
            records = [self._queue.popleft() for _ in range(min(self.batch_size, len(self._queue)))]
            self._inflight = SubmissionBatch(records)
            return self._inflight

    def _run(self) -> None:
        while not self._stop.is_set():
            batch = self._next_batch()
            if batch is None:
                self._wake.wait(timeout=0.05)
                self._wake.clear()
                continue
            delay = batch.next_retry_at - time.monotonic()
            if delay > 0:
                if self._stop.wait(timeout=delay):
                    break
            batch.attempt += 1
            try:
                self.sink.submit(batch.records)
            except Exception as exc:
                if batch.attempt >= self.max_attempts:
                    logger.error("batch dead-lettered after %d attempts: %s", batch.attempt, exc)
                    self._dead_letter(batch)
                    with self._lock:
                        self._inflight = None
                else:
                    backoff = min(self.backoff_base_s * 2 ** (batch.attempt - 1), self.backoff_cap_s)
                    batch.next_retry_at = time.monotonic() + backoff
                continue
            with self._lock:
                self.submitted += len(batch.records)
                self._inflight = None
            self._write_watermark()

    def _dead_letter(self, batch: SubmissionBatch) -> None:
        with open(self.dead_letter_path, "a", encoding="utf-8") as fh:
            fh.write(
                json.dumps(
                    {
                        "attempts": batch.attempt,
                        "records": [
                            {
                                "camera_id": r.camera_id,
                                "timestamp": r.timestamp.isoformat(),
                                "class": r.label.value,
                                "confidence": r.confidence,
                                "lat": r.latitude,
                                "lon": r.longitude,
                            }
                            for r in batch.records
                        ],
                    }
                )
                + "\n"
            )
        self.dead_lettered += len(batch.records)


# -- pipeline ---------------------------------------------------------------------


@dataclass
class PipelineConfig:
    catalogue: list[CameraRecord]
    backend: Backend
    output_dir: Path
    poll_interval_s: float = 60.0
    workers: int = 4
    batch_size: int = 16
    batch_linger_s: float = 2.0
    fetch_timeout_s: float = 10.0
    max_cycles: int | None = None
    sink: RecordSink | None = None
    submit_batch_size: int = 25
    backoff_base_s: float = DEFAULT_BACKOFF_BASE_S
    backoff_cap_s: float = DEFAULT_BACKOFF_CAP_S
    max_attempts: int = DEFAULT_MAX_ATTEMPTS

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class Counters:
    """Monotone stage counters; read under the pipeline lock."""

    fetched: int = 0
    fetch_failures: int = 0
    corrupt_dropped: int = 0
    batched: int = 0
    classified: int = 0
    appended: int = 0

    def snapshot(self) -> dict[str, int]:
        return dict(self.__dict__)


_QUEUE_DONE = object()


class Pipeline:
    """Run handle: start with `start`, stop with `stop`, inspect counters/events."""

    def __init__(self, config: PipelineConfig) -> None:
        self.config = config
        self.backend = config.backend
        self.by_camera = {r.camera_id: r for r in config.catalogue}
        self.writer = RecordWriter(config.output_dir)
        self.sink = config.sink
        self.submitter = (
            Submitter(
                config.sink,
                config.output_dir,
                batch_size=config.submit_batch_size,
                backoff_base_s=config.backoff_base_s,
                backoff_cap_s=config.backoff_cap_s,
                max_attempts=config.max_attempts,
            )
            if config.sink is not None
            else None
        )
        self.counters = Counters()
        self.events: list[tuple[float, str, str]] = []
        self.recent: deque[LabelRecord] = deque(maxlen=10_000)
        self.snapshots: dict[str, tuple[bytes, str]] = {}
        self._lock = threading.Lock()
        self._snapshot_queue: queue.Queue = queue.Queue(maxsize=4 * config.batch_size)
        self._batch_queue: queue.Queue = queue.Queue(maxsize=4)
        self.poller = Poller(
            config.catalogue,
            interval=config.poll_interval_s,
            workers=config.workers,
            sink=self._ingest_sink,
            timeout=config.fetch_timeout_s,
            max_cycles=config.max_cycles,
        )
        self._decode_thread = threading.Thread(target=self._decode_loop, name="roadwatch-decode", daemon=True)
        self._classify_thread = threading.Thread(target=self._classify_loop, name="roadwatch-classify", daemon=True)
        self._stopped = False

    # -- event/counter helpers --

    def _event(self, stage: str, detail: str = "") -> None:
        with self._lock:
            self.events.append((time.monotonic(), stage, detail))

    def event_times(self, stage: str) -> list[float]:
        with self._lock:
            return [t for t, s, _ in self.events if s == stage]

    # -- stage 1: acquisition sink --

    def _ingest_sink(self, result: FetchResult) -> None:
        with self._lock:
            if isinstance(result, Snapshot):
                self.counters.fetched += 1
            else:
                self.counters.fetch_failures += 1
        self._event("acquire_end", result.camera_id)
        self._snapshot_queue.put(result)

    # -- stage 2: decode + resize, with batch assembly --

    def _decode_loop(self) -> None:
        width_height = self.backend.input_dims
        pending: list[tuple[Snapshot, Image]] = []
        deadline: float | None = None
        while True:
            timeout = None
            if pending:
                timeout = max(0.0, (deadline or 0.0) - time.monotonic())
            try:
                item = self._snapshot_queue.get(timeout=timeout)
            except queue.Empty:
                self._flush_batch(pending)
                pending, deadline = [], None
                continue
            if item is _QUEUE_DONE:
                self._flush_batch(pending)
                self._batch_queue.put(_QUEUE_DONE)
                return
            if isinstance(item, FetchFailure):
                continue
            try:
                image = resize(decode_and_check(item.body), width_height)
            except CorruptImageError:
                with self._lock:
                    self.counters.corrupt_dropped += 1
                self._event("corrupt_dropped", item.camera_id)
                continue
            with self._lock:
                self.snapshots[item.camera_id] = (item.body, item.content_type)
            if not pending:
                deadline = time.monotonic() + self.config.batch_linger_s
            pending.append((item, image))
            if len(pending) >= self.config.batch_size:
                self._flush_batch(pending)
                pending, deadline = [], None

    def _flush_batch(self, pending: list[tuple[Snapshot, Image]]) -> None:
        if not pending:
            return
        with self._lock:
            self.counters.batched += len(pending)
        self._batch_queue.put(list(pending))

    # -- stage 3: classification --

    def _classify_loop(self) -> None:
        while True:
            batch = self._batch_queue.get()
            if batch is _QUEUE_DONE:
                return
            self._event("classify_start", f"batch of {len(batch)}")
            snapshots = [s for s, _ in batch]
            images = [img for _, img in batch]
            cameras = [self.by_camera[s.camera_id] for s in snapshots]
            now = datetime.now(timezone.utc).replace(microsecond=0)
            records = classify_batch(self.backend, images, cameras, now)
            records = [replace(r, timestamp=s.fetched_at) for r, s in zip(records, snapshots)]
            with self._lock:
                self.counters.classified += len(records)
            self._event("classify_end", f"batch of {len(batch)}")
            for record in records:
                self._persist(record)

    # -- stage 4: record handling --

    def _persist(self, record: LabelRecord) -> None:
        while True:
            try:
                self.writer.append(record)
                break
            except OSError as exc:
                # Disk trouble: pause acquisition, keep retrying the append.
                logger.error("record append failed (%s); pausing acquisition", exc)
                self.poller.paused.set()
                time.sleep(0.05)
        self.poller.paused.clear()
        with self._lock:
            self.counters.appended += 1
            self.recent.append(record)
        if self.submitter is not None:
            self.submitter.enqueue(record)

    # -- lifecycle --

    def start(self) -> "Pipeline":
        self._decode_thread.start()
        self._classify_thread.start()
        if self.submitter is not None:
            self.submitter.start()
        self.poller.start()
        return self

    def wait_cycles(self, timeout_s: float = 60.0) -> None:
        """Block until the poller finishes its configured max_cycles."""
        self.poller.join(timeout=timeout_s)

    def stop(self, drain_submission_s: float = 0.0) -> None:
        """Graceful stop: drain every stage; completed classifications are kept."""
        if self._stopped:
            return
        self._stopped = True
        self.poller.stop()
        self.poller.join(timeout=30)
        self._snapshot_queue.put(_QUEUE_DONE)
        self._decode_thread.join(timeout=30)
        self._classify_thread.join(timeout=30)
        if self.submitter is not None:
            self.submitter.stop(drain_timeout_s=drain_submission_s)
        self.writer.close()

    # -- reconciliation --

    def reconciliation(self) -> dict[str, int]:
        """Counter identity at quiescence: appended = submitted + pending + dead."""
        counts = self.counters.snapshot()
        if self.submitter is not None:
            counts["submitted"] = self.submitter.submitted
            counts["pending_submission"] = self.submitter.pending
            counts["dead_lettered"] = self.submitter.dead_lettered
        return counts


def run_pipeline(config: PipelineConfig) -> Pipeline:
    """Build and start a pipeline; the handle exposes counters and stop()."""
    return Pipeline(config).start()
