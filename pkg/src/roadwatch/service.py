"""HTTP API over pipeline state, the review queue and the dataset manifest.

Endpoints (all JSON unless noted):

  GET  /api/records?limit=N   newest label records
  GET  /api/map.geojson       deduplicated camera map (GeoJSON bytes)
  GET  /api/queue             review queue with image URLs and pseudo-labels
  POST /api/verdicts          verdict batch; applies to the manifest
  GET  /api/stats             per-class counts, stage counters, judgment summary
  GET  /images/{id}           stored snapshot bytes

The server is a plain threaded stdlib HTTP server: state reads take a lock
snapshot, verdict posts mutate the manifest atomically. Responses carry
permissive CORS headers so the browser labelling tool can run from a file
or a dev server.
"""

from __future__ import annotations

import json
import logging
import threading
from dataclasses import dataclass, field
from datetime import timedelta
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Callable
from urllib.parse import parse_qs, unquote, urlparse

from .classify import LabelRecord
from .conditions import ClassScheme, RoadCondition
from .dataset import (
    DatasetManifest,
    DuplicateVerdictError,
    PseudoLabelRun,
    ReviewVerdict,
    UnknownImageError,
    VerdictKind,
    apply_verdicts,
    enqueue_pending,
    judgment_summary,
    parse_verdict_batch,
)
from .mapgen import build_layer, emit_geojson
from .pipeline import Pipeline

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class QueueItem:
    image_ref: str
    image_id: str
    pseudo_label: RoadCondition
    confidence: float
    phase: str = ""


@dataclass
class ServiceState:
    """Shared state behind the API; one writer at a time via the lock."""

    scheme: ClassScheme
    manifest: DatasetManifest
    queue: list[QueueItem] = field(default_factory=list)
    images: dict[str, Callable[[], tuple[bytes, str]]] = field(default_factory=dict)
    pipeline: Pipeline | None = None
    records: list[LabelRecord] = field(default_factory=list)
    judgment_log: list[tuple[RoadCondition, VerdictKind]] = field(default_factory=list)
    verdicts_applied: int = 0
    map_stale_after: timedelta = timedelta(minutes=60)
    lock: threading.Lock = field(default_factory=threading.Lock)

    def load_queue_from_run(self, run: PseudoLabelRun, phase: str = "") -> None:
        """Stage a pseudo-label run for review: queue items + pending samples."""
        with self.lock:
            enqueue_pending(self.manifest, run, phase=phase)
            for i, entry in enumerate(run.entries):
                if entry.image_ref in self.manifest.excluded:
                    continue
                image_id = f"q{len(self.queue)}"
                ref = entry.image_ref
                self.queue.append(QueueItem(ref, image_id, entry.label, entry.confidence, phase))
                self.images[image_id] = _file_loader(ref)

    def all_records(self) -> list[LabelRecord]:
        with self.lock:
            if self.pipeline is not None:
                return list(self.pipeline.recent)
            return list(self.records)

    def apply_verdict_batch(self, verdicts: list[ReviewVerdict]) -> int:
        with self.lock:
            pending = self.manifest.pending
            labels = {v.image_ref: pending[v.image_ref].label for v in verdicts if v.image_ref in pending}
            self.manifest = apply_verdicts(self.manifest, verdicts)
            done = {v.image_ref for v in verdicts}
            self.queue = [q for q in self.queue if q.image_ref not in done]
            for v in verdicts:
                if v.kind in (VerdictKind.ACCEPTABLE, VerdictKind.REFUSED):
                    self.judgment_log.append((labels[v.image_ref], v.kind))
            self.verdicts_applied += len(verdicts)
            return len(verdicts)

    def stats(self) -> dict:
        with self.lock:
            counts = self.manifest.class_counts()
            summary = judgment_summary(self.scheme, self.judgment_log)
            payload = {
                "classes": {c.value: counts[c] for c in self.scheme.classes},
                "pending_review": len(self.manifest.pending),
                "queue_length": len(self.queue),
                "verdicts_applied": self.verdicts_applied,
                "judgment": summary.to_dict(),
                "judgment_canonical": summary.canonical_json(),
                "counters": self.pipeline.reconciliation() if self.pipeline else {},
            }
        return payload


def _file_loader(ref: str) -> Callable[[], tuple[bytes, str]]:
    def load() -> tuple[bytes, str]:
        body = Path(ref).read_bytes()
        suffix = Path(ref).suffix.lower()
        content_type = "image/jpeg" if suffix in (".jpg", ".jpeg") else "image/png"
        return body, content_type

    return load


def _record_json(record: LabelRecord) -> dict:
    return {
        "camera_id": record.camera_id,
        "timestamp": record.timestamp.isoformat(),
        "class": record.label.value,
        "confidence": record.confidence,
        "latitude": record.latitude,
        "longitude": record.longitude,
    }


class ApiServer:
    """Threaded HTTP server bound to 127.0.0.1; stop with `stop()`."""

    def __init__(self, state: ServiceState, port: int = 0, host: str = "127.0.0.1") -> None:
        self.state = state
        state_ref = state

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            # -- plumbing --

            def _send(self, status: int, body: bytes, content_type: str = "application/json") -> None:
                self.send_response(status)
                self.send_header("Content-Type", content_type)
                self.send_header("Content-Length", str(len(body)))
                self.send_header("Access-Control-Allow-Origin", "*")
                self.send_header("Access-Control-Allow-Headers", "Content-Type")
                self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
                self.end_headers()
                self.wfile.write(body)

            def _json(self, payload: object, status: int = 200) -> None:
                self._send(status, json.dumps(payload).encode("utf-8"))

            def _error(self, status: int, message: str) -> None:
                self._json({"error": message}, status=status)

            def log_message(self, *args):
                logger.debug("api: %s", args)

            # -- methods --

            def do_OPTIONS(self):  # noqa: N802
                self._send(204, b"", content_type="text/plain")

            def do_GET(self):  # noqa: N802
                url = urlparse(self.path)
                if url.path == "/api/records":
                    params = parse_qs(url.query)
                    try:
                        limit = int(params.get("limit", ["50"])[0])
                    except ValueError:
                        self._error(400, "limit must be an integer")
                        return
                    records = state_ref.all_records()
                    records.sort(key=lambda r: r.timestamp, reverse=True)
                    self._json([_record_json(r) for r in records[:limit]])
                elif url.path == "/api/map.geojson":
                    layer = build_layer(
                        state_ref.all_records(), stale_after=state_ref.map_stale_after
                    )
                    self._send(200, emit_geojson(layer), content_type="application/geo+json")
                elif url.path == "/api/queue":
                    with state_ref.lock:
                        items = [
                            {
                                "image_ref": q.image_ref,
                                "image_url": f"/images/{q.image_id}",
                                "pseudo_label": q.pseudo_label.value,
                                "confidence": q.confidence,
                                "phase": q.phase,
                            }
                            for q in state_ref.queue
                        ]
                    self._json(items)
                elif url.path == "/api/stats":
                    self._json(state_ref.stats())
                elif url.path.startswith("/images/"):
                    image_id = unquote(url.path[len("/images/") :])
                    loader = state_ref.images.get(image_id)
                    if loader is None and state_ref.pipeline is not None:
                        stored = state_ref.pipeline.snapshots.get(image_id)
                        if stored is not None:
                            body, content_type = stored
                            self._send(200, body, content_type=content_type)
                            return
                    if loader is None:
                        self._error(404, f"unknown image {image_id!r}")
                        return
                    try:
                        body, content_type = loader()
                    except OSError as exc:
                        self._error(404, f"image unavailable: {exc}")
                        return
                    self._send(200, body, content_type=content_type)
                else:
                    self._error(404, f"no such endpoint {url.path}")

            def do_POST(self):  # noqa: N802
                url = urlparse(self.path)
                if url.path != "/api/verdicts":
                    self._error(404, f"no such endpoint {url.path}")
                    return
                try:
                    length = int(self.headers.get("Content-Length", "0"))
                    raw = self.rfile.read(length)
                    data = json.loads(raw.decode("utf-8"))
                    verdicts = parse_verdict_batch(data)
                except (ValueError, json.JSONDecodeError) as exc:
                    self._error(400, f"malformed verdict batch: {exc}")
                    return
                try:
                    applied = state_ref.apply_verdict_batch(verdicts)
                except (DuplicateVerdictError, UnknownImageError) as exc:
                    self._error(400, f"verdict batch rejected: {exc}")
                    return
                self._json({"applied": applied})

        self._httpd = ThreadingHTTPServer((host, port), Handler)
        self._httpd.daemon_threads = True
        self._thread = threading.Thread(target=self._httpd.serve_forever, name="roadwatch-api", daemon=True)

    @property
    def port(self) -> int:
        return self._httpd.server_address[1]

    def start(self) -> "ApiServer":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()


def serve_api(state: ServiceState, port: int = 0, host: str = "127.0.0.1") -> ApiServer:
    """Start the API server; returns the handle (its `port` is the bound port)."""
    return ApiServer(state, port=port, host=host).start()
