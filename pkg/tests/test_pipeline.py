"""Record persistence, submission retry/backoff, and pipeline stage properties."""

from __future__ import annotations

import csv
import threading
import time
from datetime import datetime, timedelta, timezone

import pytest

from roadwatch.classify import ClassDistribution, ConstantBackend, LabelRecord
from roadwatch.conditions import FIVE_CLASS, RoadCondition
from roadwatch.imaging import Image, encode_png
from roadwatch.pipeline import (
    DatabaseSink,
    InMemorySink,
    Pipeline,
    PipelineConfig,
    RecordWriter,
    Submitter,
    read_all_records,
    read_record_csv,
)

from mockcam import MockCameraServer

import numpy as np

NOW = datetime(2020, 1, 11, 21, 0, tzinfo=timezone.utc)


def record(camera_id="c1", minute=0, label=RoadCondition.DRY) -> LabelRecord:
    return LabelRecord(
        camera_id=camera_id,
        timestamp=NOW + timedelta(minutes=minute),
        label=label,
        confidence=0.9,
        latitude=45.0,
        longitude=-75.0,
    )


def png_bytes(seed=0, size=16) -> bytes:
    rng = np.random.default_rng(seed)
    return encode_png(Image(rng.integers(0, 256, (size, size, 3), dtype=np.uint8)))


def dry_backend(input_dims=(32, 32)) -> ConstantBackend:
    return ConstantBackend(
        ClassDistribution(FIVE_CLASS, (0.6, 0.1, 0.1, 0.1, 0.1)), input_dims=input_dims
    )


class TestRecordWriter:
    def test_single_record_row(self, tmp_path):
        writer = RecordWriter(tmp_path)
        writer.append(record())
        writer.close()
        (path,) = tmp_path.glob("labels-*.csv")
        assert path.name == "labels-20200111.csv"
        rows = path.read_text().strip().split("\n")
        assert rows[0] == "image_name,latitude,longitude,class,confidence,timestamp"
        assert len(rows) == 2
        assert len(rows[1].split(",")) == 6

    def test_append_survives_restart(self, tmp_path):
        writer = RecordWriter(tmp_path)
        writer.append(record("a"))
        writer.close()
        writer2 = RecordWriter(tmp_path)
        writer2.append(record("b", minute=1))
        writer2.close()
        records = read_all_records(tmp_path)
        assert [r.camera_id for r in records] == ["a", "b"]

    def test_concurrent_appends_are_not_interleaved(self, tmp_path):
        writer = RecordWriter(tmp_path)
        n_threads, per_thread = 4, 250

        def work(k):
            for i in range(per_thread):
                writer.append(record(f"t{k}-{i}", minute=i % 30))

        threads = [threading.Thread(target=work, args=(k,)) for k in range(n_threads)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        writer.close()
        records = read_all_records(tmp_path)
        assert len(records) == n_threads * per_thread
        assert len({r.camera_id for r in records}) == n_threads * per_thread

    def test_parse_back_round_trip(self, tmp_path):
        writer = RecordWriter(tmp_path)
        original = record("cam-7", label=RoadCondition.SNOW)
        writer.append(original)
        writer.close()
        (path,) = tmp_path.glob("labels-*.csv")
        (back,) = read_record_csv(path)
        assert back == original


class TestSubmitter:
    def make(self, sink, tmp_path, **kw):
        kw.setdefault("backoff_base_s", 0.01)
        kw.setdefault("backoff_cap_s", 0.05)
        return Submitter(sink, tmp_path, **kw)

    def wait_for(self, predicate, timeout=5.0):
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            if predicate():
                return True
            time.sleep(0.01)
        return False

    def test_all_accepted_watermark_matches(self, tmp_path):
        sink = InMemorySink()
        sub = self.make(sink, tmp_path).start()
        for i in range(10):
            sub.enqueue(record(f"c{i}"))
        assert self.wait_for(lambda: sub.submitted == 10)
        sub.stop()
        assert sink.records and len(sink.records) == 10
        assert int(sub.watermark_path.read_text()) == 10

    def test_two_failures_then_success(self, tmp_path):
        sink = InMemorySink(fail_times=2)
        sub = self.make(sink, tmp_path).start()
        sub.enqueue(record())
        assert self.wait_for(lambda: sub.submitted == 1)
        sub.stop()
        assert sink.attempts == 3

    def test_poison_batch_dead_letters_after_max_attempts(self, tmp_path):
        sink = InMemorySink(fail_forever=True)
        sub = self.make(sink, tmp_path, max_attempts=8).start()
        sub.enqueue(record())
        assert self.wait_for(lambda: sub.dead_lettered == 1)
        sub.stop()
        assert sink.attempts == 8
        assert sub.dead_letter_path.exists()
        assert sub.submitted == 0

    def test_backoff_is_exponential_until_cap(self, tmp_path):
        sink = InMemorySink(fail_forever=True)
        times: list[float] = []
        original = sink.submit

        def timed_submit(records):
            times.append(time.monotonic())
            original(records)

        sink.submit = timed_submit
        sub = self.make(sink, tmp_path, backoff_base_s=0.05, backoff_cap_s=1.0, max_attempts=4)
        sub.start()
        sub.enqueue(record())
        assert self.wait_for(lambda: len(times) == 4)
        sub.stop()
        gaps = [b - a for a, b in zip(times, times[1:])]
        assert gaps[0] == pytest.approx(0.05, abs=0.04)
        assert gaps[1] == pytest.approx(0.10, abs=0.05)
        assert gaps[2] == pytest.approx(0.20, abs=0.08)

    def test_recover_resubmits_past_watermark(self, tmp_path):
        sink = InMemorySink()
        sub = self.make(sink, tmp_path).start()
        rows = [record(f"c{i}") for i in range(6)]
        for r in rows[:4]:
            sub.enqueue(r)
        assert self.wait_for(lambda: sub.submitted == 4)
        sub.stop()
        # restart: two unsubmitted rows remain in the log
        sink2 = InMemorySink()
        sub2 = self.make(sink2, tmp_path).start()
        assert sub2.submitted == 4
        sub2.recover(rows)
        assert self.wait_for(lambda: sub2.submitted == 6)
        sub2.stop()
        assert [r.camera_id for r in sink2.records] == ["c4", "c5"]


class TestDatabaseSink:
    def test_sqlite_upsert_idempotent(self, tmp_path):
        sink = DatabaseSink(f"sqlite:///{tmp_path}/records.db")
        rows = [record("a"), record("b", minute=1)]
        sink.submit(rows)
        sink.submit(rows)  # at-least-once delivery must not duplicate
        stored = sink.fetch_all()
        assert len(stored) == 2

    def test_update_on_conflict(self, tmp_path):
        sink = DatabaseSink(f"sqlite:///{tmp_path}/records.db")
        sink.submit([record("a")])
        sink.submit([record("a", label=RoadCondition.SNOW)])
        stored = sink.fetch_all()
        assert len(stored) == 1
        assert stored[0][2] == "snow"


@pytest.fixture()
def server():
    srv = MockCameraServer().start()
    yield srv
    srv.stop()


def build_pipeline(server, tmp_path, n_cameras, batch_size, delays=None, sink=None, **kw):
    cameras = []
    for i in range(n_cameras):
        delay = (delays or {}).get(i, 0.0)
        cameras.append(server.add_camera(f"cam{i}", png_bytes(i), delay_s=delay))
    config = PipelineConfig(
        catalogue=cameras,
        backend=dry_backend(),
        output_dir=tmp_path / "out",
        poll_interval_s=0.05,
        workers=4,
        batch_size=batch_size,
        batch_linger_s=0.2,
        fetch_timeout_s=5.0,
        sink=sink,
        backoff_base_s=0.01,
        backoff_cap_s=0.05,
        **kw,
    )
    return Pipeline(config)


class TestPipeline:
    def test_six_cameras_batch_four_all_classified(self, server, tmp_path):
        pipe = build_pipeline(server, tmp_path, n_cameras=6, batch_size=4, max_cycles=1)
        pipe.start()
        pipe.wait_cycles()
        pipe.stop()
        counts = pipe.counters.snapshot()
        assert counts["fetched"] == 6
        assert counts["classified"] == 6
        assert counts["appended"] == 6
        assert len(read_all_records(tmp_path / "out")) == 6

    def test_overlap_first_batch_classified_before_last_fetch(self, server, tmp_path):
        delays = {4: 0.4, 5: 0.5}
        pipe = build_pipeline(
            server, tmp_path, n_cameras=6, batch_size=4, delays=delays, max_cycles=1
        )
        pipe.start()
        pipe.wait_cycles()
        pipe.stop()
        classify_starts = pipe.event_times("classify_start")
        acquire_ends = pipe.event_times("acquire_end")
        assert classify_starts, "no classification happened"
        assert min(classify_starts) < max(acquire_ends), "stages did not overlap"

    def test_corrupt_body_isolated(self, server, tmp_path):
        cameras = [server.add_camera(f"ok{i}", png_bytes(i)) for i in range(4)]
        cameras.append(server.add_camera("bad", b"this is not an image"))
        config = PipelineConfig(
            catalogue=cameras,
            backend=dry_backend(),
            output_dir=tmp_path / "out",
            poll_interval_s=0.05,
            workers=2,
            batch_size=4,
            batch_linger_s=0.1,
            max_cycles=1,
        )
        pipe = Pipeline(config).start()
        pipe.wait_cycles()
        pipe.stop()
        counts = pipe.counters.snapshot()
        assert counts["corrupt_dropped"] == 1
        assert counts["appended"] == 4

    def test_stop_mid_run_loses_nothing_classified(self, server, tmp_path):
        delays = {i: 0.05 for i in range(8)}
        pipe = build_pipeline(server, tmp_path, n_cameras=8, batch_size=2, delays=delays)
        pipe.start()
        time.sleep(0.5)
        pipe.stop()
        counts = pipe.counters.snapshot()
        rows = read_all_records(tmp_path / "out")
        assert counts["classified"] == counts["appended"] == len(rows)

    def test_stalled_sink_does_not_block_acquisition(self, server, tmp_path):
        sink = InMemorySink(fail_forever=True)
        pipe = build_pipeline(
            server, tmp_path, n_cameras=5, batch_size=2, sink=sink, max_cycles=3
        )
        pipe.start()
        pipe.wait_cycles()
        pipe.stop()
        counts = pipe.reconciliation()
        assert counts["appended"] == 15, "appends must continue while the sink is down"
        assert counts["submitted"] == 0
        assert counts["appended"] == counts["submitted"] + counts["pending_submission"] + counts["dead_lettered"]

    def test_reconciliation_with_healthy_sink(self, server, tmp_path):
        sink = InMemorySink()
        pipe = build_pipeline(server, tmp_path, n_cameras=5, batch_size=2, sink=sink, max_cycles=2)
        pipe.start()
        pipe.wait_cycles()
        pipe.stop(drain_submission_s=5.0)
        counts = pipe.reconciliation()
        assert counts["appended"] == 10
        assert counts["submitted"] == 10
        assert counts["pending_submission"] == 0

    def test_disk_trouble_pauses_acquisition(self, server, tmp_path, monkeypatch):
        pipe = build_pipeline(server, tmp_path, n_cameras=3, batch_size=1, max_cycles=2)
        real_append = pipe.writer.append
        failures = {"left": 3}
        paused_seen = []

        def flaky_append(rec):
            if failures["left"] > 0:
                failures["left"] -= 1
                raise OSError(28, "No space left on device")
            paused_seen.append(pipe.poller.paused.is_set())
            real_append(rec)

        monkeypatch.setattr(pipe.writer, "append", flaky_append)
        pipe.start()
        pipe.wait_cycles()
        pipe.stop()
        assert pipe.counters.appended == 6
        assert paused_seen[0] is True, "acquisition must pause while appends fail"
