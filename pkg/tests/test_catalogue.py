"""Catalogue parsing, snapshot fetching and poller behaviour."""

from __future__ import annotations

import threading
import time

import numpy as np
import pytest

from roadwatch.catalogue import (
    CameraRecord,
    CatalogueError,
    FailureKind,
    FetchFailure,
    Snapshot,
    fetch_snapshot,
    load_catalogue,
    run_poller,
)
from roadwatch.imaging import Image, encode_png

from mockcam import MockCameraServer

HEADER = "camera_id,snapshot_url,latitude,longitude,jurisdiction\n"


def png_bytes(seed=0, size=8) -> bytes:
    rng = np.random.default_rng(seed)
    return encode_png(Image(rng.integers(0, 256, (size, size, 3), dtype=np.uint8)))


@pytest.fixture(scope="module")
def server():
    srv = MockCameraServer().start()
    yield srv
    srv.stop()


class TestLoadCatalogue:
    def test_header_only_gives_empty_list(self, tmp_path):
        path = tmp_path / "cams.csv"
        path.write_text(HEADER)
        assert load_catalogue(path) == []

    def test_three_rows_in_order(self, tmp_path):
        path = tmp_path / "cams.csv"
        path.write_text(
            HEADER
            + "c1,http://example.net/a.jpg,45.0,-75.0,on\n"
            + "c2,http://example.net/b.jpg,46.0,-76.0,\n"
            + "c3,http://example.net/c.jpg,47.0,-77.0,qc\n"
        )
        records = load_catalogue(path)
        assert [r.camera_id for r in records] == ["c1", "c2", "c3"]
        assert records[1].jurisdiction is None
        assert records[2].jurisdiction == "qc"

    def test_out_of_range_latitude_names_row(self, tmp_path):
        path = tmp_path / "cams.csv"
        path.write_text(HEADER + "c1,http://example.net/a.jpg,91.0,-75.0,\n")
        with pytest.raises(CatalogueError, match="row 2"):
            load_catalogue(path)

    def test_duplicate_id_named(self, tmp_path):
        path = tmp_path / "cams.csv"
        path.write_text(
            HEADER
            + "c1,http://example.net/a.jpg,45.0,-75.0,\n"
            + "c1,http://example.net/b.jpg,46.0,-76.0,\n"
        )
        with pytest.raises(CatalogueError, match="'c1'"):
            load_catalogue(path)

    def test_malformed_row_names_row(self, tmp_path):
        path = tmp_path / "cams.csv"
        path.write_text(HEADER + "c1,http://example.net/a.jpg\n")
        with pytest.raises(CatalogueError, match="row 2"):
            load_catalogue(path)

    def test_relative_url_rejected(self, tmp_path):
        path = tmp_path / "cams.csv"
        path.write_text(HEADER + "c1,/just/a/path.jpg,45.0,-75.0,\n")
        with pytest.raises(CatalogueError, match="row 2"):
            load_catalogue(path)

    def test_wrong_header_rejected(self, tmp_path):
        path = tmp_path / "cams.csv"
        path.write_text("id,url\nc1,http://example.net\n")
        with pytest.raises(CatalogueError, match="header"):
            load_catalogue(path)


class TestFetchSnapshot:
    def test_small_body(self, server):
        record = server.add_camera("tiny", b"abcd")
        result = fetch_snapshot(record, timeout=5)
        assert isinstance(result, Snapshot)
        assert result.body == b"abcd"
        assert result.content_type == "image/png"
        assert result.fetched_at.tzinfo is not None

    def test_http_404(self, server):
        record = server.add_camera("gone", b"", status=404)
        result = fetch_snapshot(record, timeout=5)
        assert isinstance(result, FetchFailure)
        assert result.kind is FailureKind.HTTP_ERROR
        assert result.status == 404

    def test_unreachable_endpoint(self):
        # RFC 5737 TEST-NET address: connection will not establish.
        record = CameraRecord("x", "http://192.0.2.1:9/snap.jpg", 0.0, 0.0)
        result = fetch_snapshot(record, timeout=0.1)
        assert isinstance(result, FetchFailure)
        assert result.kind in (FailureKind.TIMEOUT, FailureKind.CONNECTION)

    def test_body_over_limit(self, server):
        record = server.add_camera("big", b"x" * 2048)
        result = fetch_snapshot(record, timeout=5, max_bytes=1024)
        assert isinstance(result, FetchFailure)
        assert result.kind is FailureKind.TOO_LARGE

    def test_nonpositive_timeout_rejected(self, server):
        record = server.add_camera("t", b"ok")
        with pytest.raises(ValueError):
            fetch_snapshot(record, timeout=0)


class CollectingSink:
    def __init__(self):
        self.results = []
        self.lock = threading.Lock()

    def __call__(self, result):
        with self.lock:
            self.results.append(result)


class TestPoller:
    def test_zero_cameras_stops_cleanly(self):
        sink = CollectingSink()
        poller = run_poller([], interval=0.01, workers=2, sink=sink, max_cycles=1)
        poller.join(timeout=5)
        assert not poller.running
        assert sink.results == []

    def test_one_cycle_emits_once_per_camera(self, server):
        records = [server.add_camera(f"p{i}", png_bytes(i)) for i in range(5)]
        sink = CollectingSink()
        poller = run_poller(records, interval=0.01, workers=3, sink=sink, max_cycles=1)
        poller.join(timeout=10)
        assert len(sink.results) == 5
        assert {r.camera_id for r in sink.results} == {f"p{i}" for i in range(5)}

    def test_exactly_once_over_cycles(self, server):
        records = [server.add_camera(f"q{i}", b"ok") for i in range(4)]
        sink = CollectingSink()
        poller = run_poller(records, interval=0.0, workers=4, sink=sink, max_cycles=3)
        poller.join(timeout=10)
        assert poller.cycles_completed == 3
        assert len(sink.results) == 12

    def test_worker_bound_respected(self, server):
        server.gauge.peak = 0
        records = [server.add_camera(f"w{i}", b"ok", delay_s=0.05) for i in range(6)]
        sink = CollectingSink()
        poller = run_poller(records, interval=0.0, workers=2, sink=sink, max_cycles=2)
        poller.join(timeout=20)
        assert server.gauge.peak <= 2

    def test_delayed_camera_arrives_last(self, server):
        records = [server.add_camera("slow", b"ok", delay_s=0.5)]
        records += [server.add_camera(f"fast{i}", b"ok") for i in range(4)]
        sink = CollectingSink()
        poller = run_poller(records, interval=0.0, workers=2, sink=sink, max_cycles=1)
        poller.join(timeout=10)
        order = [r.camera_id for r in sink.results]
        assert order[-1] == "slow"
        assert set(order[:4]) == {f"fast{i}" for i in range(4)}

    def test_failure_does_not_suppress_others(self, server):
        records = [server.add_camera("ok1", b"ok"), server.add_camera("err", b"", status=500)]
        records += [server.add_camera("ok2", b"ok")]
        sink = CollectingSink()
        poller = run_poller(records, interval=0.0, workers=2, sink=sink, max_cycles=1)
        poller.join(timeout=10)
        kinds = {r.camera_id: type(r) for r in sink.results}
        assert kinds["err"] is FetchFailure
        assert kinds["ok1"] is Snapshot and kinds["ok2"] is Snapshot

    def test_sink_rejection_stops_poller(self, server):
        records = [server.add_camera(f"s{i}", b"ok") for i in range(3)]

        def bad_sink(result):
            raise RuntimeError("sink full")

        poller = run_poller(records, interval=0.0, workers=2, sink=bad_sink)
        poller.join(timeout=10)
        assert not poller.running
        assert isinstance(poller.failure, RuntimeError)

    def test_per_camera_timestamps_clamped_monotone(self):
        from datetime import datetime, timezone

        from roadwatch.catalogue import Poller, Snapshot

        poller = Poller([], interval=1.0, workers=1, sink=lambda r: None)
        t2 = datetime(2020, 1, 11, 21, 0, 5, tzinfo=timezone.utc)
        t1 = datetime(2020, 1, 11, 21, 0, 0, tzinfo=timezone.utc)  # clock stepped back
        first = poller._clamp_monotone(Snapshot("c1", t2, b"x", "image/png"))
        second = poller._clamp_monotone(Snapshot("c1", t1, b"y", "image/png"))
        other = poller._clamp_monotone(Snapshot("c2", t1, b"z", "image/png"))
        assert first.fetched_at == t2
        assert second.fetched_at == t2, "per-camera timestamps never go backwards"
        assert other.fetched_at == t1, "clamping is per camera"

    def test_stop_drains_in_flight(self, server):
        records = [server.add_camera(f"d{i}", b"ok", delay_s=0.05) for i in range(8)]
        sink = CollectingSink()
        poller = run_poller(records, interval=0.0, workers=2, sink=sink)
        time.sleep(0.12)
        poller.stop()
        poller.join(timeout=10)
        emitted_at_stop = len(sink.results)
        time.sleep(0.1)
        assert len(sink.results) == emitted_at_stop, "no emissions after join"
        assert len(sink.results) >= 2
