"""Camera catalogue loading and snapshot acquisition.

Cameras come from a pre-assembled delimited-text catalogue (camera id,
snapshot URL, location). A poller fetches every camera once per interval
through a bounded worker pool and emits exactly one Snapshot or
FetchFailure per attempt to a sink that must tolerate concurrent calls.
"""

from __future__ import annotations

import csv
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor, wait
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Callable, Sequence
from urllib.parse import urlparse

import requests

logger = logging.getLogger(__name__)

DEFAULT_TIMEOUT_S = 10.0
DEFAULT_MAX_BYTES = 8 * 1024 * 1024


class CatalogueError(ValueError):
    """The catalogue file is malformed; message carries the offending row."""


@dataclass(frozen=True)
class CameraRecord:
    """One catalogue entry; immutable and freely shareable across threads."""

    camera_id: str
    snapshot_url: str
    latitude: float
    longitude: float
    jurisdiction: str | None = None

    def __post_init__(self) -> None:
        if not self.camera_id:
            raise ValueError("camera_id must be non-empty")
        if not -90.0 <= self.latitude <= 90.0:
            raise ValueError(f"latitude {self.latitude} out of range [-90, 90]")
        if not -180.0 <= self.longitude <= 180.0:
            raise ValueError(f"longitude {self.longitude} out of range [-180, 180]")
        parsed = urlparse(self.snapshot_url)
        if parsed.scheme not in ("http", "https") or not parsed.netloc:
            raise ValueError(f"snapshot_url {self.snapshot_url!r} is not an absolute HTTP URL")


@dataclass(frozen=True)
class Snapshot:
    camera_id: str
    fetched_at: datetime
    body: bytes
    content_type: str


class FailureKind(str, Enum):
    TIMEOUT = "timeout"
    HTTP_ERROR = "http_error"
    CONNECTION = "connection"
    TOO_LARGE = "too_large"


@dataclass(frozen=True)
class FetchFailure:
    camera_id: str
    fetched_at: datetime
    kind: FailureKind
    status: int | None = None


FetchResult = Snapshot | FetchFailure
Sink = Callable[[FetchResult], None]

CATALOGUE_HEADER = ["camera_id", "snapshot_url", "latitude", "longitude", "jurisdiction"]


def load_catalogue(path: str | Path) -> list[CameraRecord]:
    """All catalogue rows, in file order; any invalid row is a hard error."""
    records: list[CameraRecord] = []
    seen: set[str] = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CatalogueError(f"{path}: empty file, expected header {','.join(CATALOGUE_HEADER)}") from None
        if [h.strip() for h in header] != CATALOGUE_HEADER:
            raise CatalogueError(f"{path}: header must be {','.join(CATALOGUE_HEADER)}, got {','.join(header)}")
        for row_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) not in (4, 5):
                raise CatalogueError(f"{path}: row {row_no}: expected 4 or 5 fields, got {len(row)}")
            camera_id, url, lat_text, lon_text = (c.strip() for c in row[:4])
            jurisdiction = row[4].strip() if len(row) == 5 and row[4].strip() else None
            try:
                record = CameraRecord(camera_id, url, float(lat_text), float(lon_text), jurisdiction)
            except ValueError as exc:
                raise CatalogueError(f"{path}: row {row_no}: {exc}") from None
            if record.camera_id in seen:
                raise CatalogueError(f"{path}: row {row_no}: duplicate camera_id {record.camera_id!r}")
            seen.add(record.camera_id)
            records.append(record)
    return records


def _utc_now() -> datetime:
    return datetime.now(timezone.utc).replace(microsecond=0)


def fetch_snapshot(
    record: CameraRecord,
    timeout: float = DEFAULT_TIMEOUT_S,
    max_bytes: int = DEFAULT_MAX_BYTES,
    session: requests.Session | None = None,
) -> FetchResult:
    """One snapshot attempt; network problems come back as FetchFailure values."""
    if timeout <= 0:
        raise ValueError("timeout must be positive")
    fetched_at = _utc_now()
    get = (session or requests).get
    try:
        with get(
            record.snapshot_url,
            timeout=timeout,
            stream=True,
            headers={"Accept": "image/*"},
        ) as response:
            if response.status_code != 200:
                return FetchFailure(record.camera_id, fetched_at, FailureKind.HTTP_ERROR, response.status_code)
            body = b""
            for chunk in response.iter_content(chunk_size=64 * 1024):
                body += chunk
                if len(body) > max_bytes:
                    return FetchFailure(record.camera_id, fetched_at, FailureKind.TOO_LARGE)
            if not body:
                return FetchFailure(record.camera_id, fetched_at, FailureKind.CONNECTION)
            content_type = response.headers.get("Content-Type", "application/octet-stream")
            return Snapshot(record.camera_id, fetched_at, body, content_type)
    except requests.exceptions.Timeout:
        return FetchFailure(record.camera_id, fetched_at, FailureKind.TIMEOUT)
    except requests.exceptions.RequestException:
        return FetchFailure(record.camera_id, fetched_at, FailureKind.CONNECTION)


class Poller:
    """Polls every catalogue camera once per interval with a worker pool.

    Each attempt is delivered to the sink exactly once, from worker threads.
    Per-camera snapshot timestamps are clamped monotone non-decreasing so a
    clock step backwards cannot reorder downstream per-camera views. A sink
    exception stops the poller and is kept as its failure diagnostic.
    """

    def __init__(
        self,
        catalogue: Sequence[CameraRecord],
        interval: float,
        workers: int,
        sink: Sink,
        timeout: float = DEFAULT_TIMEOUT_S,
        max_bytes: int = DEFAULT_MAX_BYTES,
        max_cycles: int | None = None,
    ) -> None:
        if workers < 1:
            raise ValueError("workers must be >= 1")
        if interval < 0:
            raise ValueError("interval must be >= 0")
        self.catalogue = list(catalogue)
        self.interval = interval
        self.workers = workers
        self.sink = sink
        self.timeout = timeout
        self.max_bytes = max_bytes
        self.max_cycles = max_cycles
        self.cycles_completed = 0
        self.emitted = 0
        self.failure: BaseException | None = None
        self.paused = threading.Event()
        self._stop = threading.Event()
        self._last_ts: dict[str, datetime] = {}
        self._lock = threading.Lock()
        self._thread = threading.Thread(target=self._run, name="roadwatch-poller", daemon=True)

    # -- lifecycle --

    def start(self) -> "Poller":
        self._thread.start()
        return self

    def stop(self) -> None:
        """Request a stop; in-flight fetches drain before the poller exits."""
        self._stop.set()

    def join(self, timeout: float | None = None) -> None:
        self._thread.join(timeout)

    @property
    def running(self) -> bool:
        return self._thread.is_alive()

    # -- internals --

    def _clamp_monotone(self, result: FetchResult) -> FetchResult:
        if not isinstance(result, Snapshot):
            return result
        with self._lock:
            last = self._last_ts.get(result.camera_id)
            fetched_at = result.fetched_at if last is None or result.fetched_at >= last else last
            self._last_ts[result.camera_id] = fetched_at
        if fetched_at is result.fetched_at:
            return result
        return Snapshot(result.camera_id, fetched_at, result.body, result.content_type)

    def _attempt(self, record: CameraRecord, session: requests.Session) -> bool:
        if self._stop.is_set():
            return False  # stop drains in-flight fetches; queued ones are skipped
        result = fetch_snapshot(record, self.timeout, self.max_bytes, session)
        result = self._clamp_monotone(result)
        try:
            self.sink(result)
        except BaseException as exc:
            logger.error("sink rejected emission for %s: %s", record.camera_id, exc)
            self.failure = exc
            self._stop.set()
            return False
        with self._lock:
            self.emitted += 1
        return True

    def _run(self) -> None:
        with ThreadPoolExecutor(max_workers=self.workers, thread_name_prefix="roadwatch-fetch") as pool:
            session = requests.Session()
            while not self._stop.is_set():
                if self.paused.is_set():
                    time.sleep(0.01)
                    continue
                started = time.monotonic()
                futures = [pool.submit(self._attempt, record, session) for record in self.catalogue]
                wait(futures)
                if all(f.result() for f in futures):
                    self.cycles_completed += 1
                if self.max_cycles is not None and self.cycles_completed >= self.max_cycles:
                    break
                remaining = self.interval - (time.monotonic() - started)
                if remaining > 0:
                    self._stop.wait(remaining)
            session.close()


def run_poller(
    catalogue: Sequence[CameraRecord],
    interval: float,
    workers: int,
    sink: Sink,
    timeout: float = DEFAULT_TIMEOUT_S,
    max_bytes: int = DEFAULT_MAX_BYTES,
    max_cycles: int | None = None,
) -> Poller:
    """Start a poller; returns the stoppable handle."""
    return Poller(catalogue, interval, workers, sink, timeout, max_bytes, max_cycles).start()
