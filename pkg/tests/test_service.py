"""HTTP API tests: records, map, queue, verdicts, stats, image serving."""

from __future__ import annotations

import json
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest
import requests

from roadwatch.classify import LabelRecord
from roadwatch.conditions import FIVE_CLASS, RoadCondition
from roadwatch.dataset import (
    DatasetManifest,
    PseudoLabelEntry,
    PseudoLabelRun,
    judgment_summary,
    VerdictKind,
)
from roadwatch.imaging import Image, encode_png
from roadwatch.service import ServiceState, serve_api

NOW = datetime.now(timezone.utc).replace(microsecond=0)


def make_records(n, cameras=None):
    out = []
    for i in range(n):
        out.append(
            LabelRecord(
                camera_id=f"c{i % (cameras or n)}",
                timestamp=NOW - timedelta(seconds=n - i),
                label=RoadCondition.DRY,
                confidence=0.8,
                latitude=45.0 + i * 0.01,
                longitude=-75.0,
            )
        )
    return out


@pytest.fixture()
def api(tmp_path):
    refs = []
    rng = np.random.default_rng(0)
    for i in range(4):
        p = tmp_path / f"img{i}.png"
        p.write_bytes(encode_png(Image(rng.integers(0, 256, (8, 8, 3), dtype=np.uint8))))
        refs.append(str(p))
    run = PseudoLabelRun(
        "mock",
        FIVE_CLASS,
        tuple(
            PseudoLabelEntry(ref, label, conf)
            for ref, label, conf in [
                (refs[0], RoadCondition.DRY, 0.95),
                (refs[1], RoadCondition.WET, 0.80),
                (refs[2], RoadCondition.SNOW, 0.75),
                (refs[3], RoadCondition.DRY, 0.60),
            ]
        ),
    )
    state = ServiceState(scheme=FIVE_CLASS, manifest=DatasetManifest(FIVE_CLASS))
    state.records = make_records(10, cameras=5)
    state.load_queue_from_run(run, phase="test")
    server = serve_api(state, port=0)
    base = f"http://127.0.0.1:{server.port}"
    yield base, state
    server.stop()


class TestRecordsEndpoint:
    def test_limit_returns_newest(self, api):
        base, _ = api
        body = requests.get(f"{base}/api/records?limit=5", timeout=5).json()
        assert len(body) == 5
        times = [r["timestamp"] for r in body]
        assert times == sorted(times, reverse=True)

    def test_bad_limit_is_400(self, api):
        base, _ = api
        assert requests.get(f"{base}/api/records?limit=abc", timeout=5).status_code == 400


class TestMapEndpoint:
    def test_one_feature_per_distinct_camera(self, api):
        base, _ = api
        response = requests.get(f"{base}/api/map.geojson", timeout=5)
        assert response.status_code == 200
        doc = response.json()
        assert doc["type"] == "FeatureCollection"
        assert len(doc["features"]) == 5  # 10 records over 5 cameras


class TestQueueEndpoint:
    def test_queue_items_have_urls_and_labels(self, api):
        base, _ = api
        items = requests.get(f"{base}/api/queue", timeout=5).json()
        assert len(items) == 4
        assert items[0]["image_url"].startswith("/images/")
        assert items[0]["pseudo_label"] in {c.value for c in FIVE_CLASS.classes}

    def test_images_served(self, api):
        base, _ = api
        items = requests.get(f"{base}/api/queue", timeout=5).json()
        img = requests.get(f"{base}{items[0]['image_url']}", timeout=5)
        assert img.status_code == 200
        assert img.headers["Content-Type"] == "image/png"
        assert img.content[:8] == b"\x89PNG\r\n\x1a\n"

    def test_unknown_image_404(self, api):
        base, _ = api
        assert requests.get(f"{base}/images/zzz", timeout=5).status_code == 404


class TestVerdictsEndpoint:
    def test_round_trip_updates_manifest_and_queue(self, api):
        base, state = api
        items = requests.get(f"{base}/api/queue", timeout=5).json()
        batch = [
            {"image_ref": items[0]["image_ref"], "verdict": "acceptable"},
            {"image_ref": items[1]["image_ref"], "verdict": "relabel", "relabel_to": "snow"},
            {"image_ref": items[2]["image_ref"], "verdict": "refused"},
        ]
        response = requests.post(f"{base}/api/verdicts", json=batch, timeout=5)
        assert response.status_code == 200
        assert response.json() == {"applied": 3}
        counts = state.manifest.class_counts()
        assert counts[RoadCondition.DRY] == 1
        assert counts[RoadCondition.SNOW] == 1
        remaining = requests.get(f"{base}/api/queue", timeout=5).json()
        assert len(remaining) == 1

    def test_malformed_body_400_with_diagnostics(self, api):
        base, _ = api
        response = requests.post(f"{base}/api/verdicts", json=[{"image_ref": "x"}], timeout=5)
        assert response.status_code == 400
        assert "missing fields" in response.json()["error"]

    def test_unknown_image_400(self, api):
        base, _ = api
        response = requests.post(
            f"{base}/api/verdicts", json=[{"image_ref": "ghost", "verdict": "acceptable"}], timeout=5
        )
        assert response.status_code == 400

    def test_non_array_body_400(self, api):
        base, _ = api
        response = requests.post(f"{base}/api/verdicts", json={"not": "array"}, timeout=5)
        assert response.status_code == 400


class TestStatsEndpoint:
    def test_stats_shape(self, api):
        base, _ = api
        stats = requests.get(f"{base}/api/stats", timeout=5).json()
        assert set(stats["classes"]) == {c.value for c in FIVE_CLASS.classes}
        assert stats["pending_review"] == 4
        assert stats["queue_length"] == 4
        assert stats["judgment"]["total"] == {"acceptable": 0, "refused": 0}

    def test_judgment_canonical_matches_recomputation(self, api):
        base, state = api
        items = requests.get(f"{base}/api/queue", timeout=5).json()
        batch = [
            {"image_ref": items[0]["image_ref"], "verdict": "acceptable"},
            {"image_ref": items[1]["image_ref"], "verdict": "refused"},
        ]
        requests.post(f"{base}/api/verdicts", json=batch, timeout=5)
        stats = requests.get(f"{base}/api/stats", timeout=5).json()
        expected = judgment_summary(
            FIVE_CLASS,
            [
                (RoadCondition.DRY, VerdictKind.ACCEPTABLE),
                (RoadCondition.WET, VerdictKind.REFUSED),
            ],
        ).canonical_json()
        assert stats["judgment_canonical"] == expected

    def test_cors_headers_present(self, api):
        base, _ = api
        response = requests.get(f"{base}/api/stats", timeout=5)
        assert response.headers["Access-Control-Allow-Origin"] == "*"
        pre = requests.options(f"{base}/api/verdicts", timeout=5)
        assert pre.status_code == 204
        assert "POST" in pre.headers["Access-Control-Allow-Methods"]
