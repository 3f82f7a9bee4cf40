"""Road-condition map generation from label records.

Records collapse to the latest one per camera, optionally clipped to a
bounding region and a staleness window, then render to a GeoJSON
FeatureCollection (coordinates in longitude, latitude order) or to a
self-contained HTML page with an inline legend.
"""

from __future__ import annotations

import html
import json
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from typing import Sequence

from .classify import LabelRecord
from .conditions import ClassScheme, RoadCondition, parse_condition

DEFAULT_STALE_AFTER = timedelta(minutes=60)

# Injective class -> colour mapping; overridable per deployment.
DEFAULT_COLOURS: dict[RoadCondition, str] = {
    RoadCondition.DRY: "#2e7d32",
    RoadCondition.WET: "#1565c0",
    RoadCondition.SNOW: "#ffffff",
    RoadCondition.POOR: "#757575",
    RoadCondition.OFFLINE: "#000000",
    RoadCondition.NON_DRY: "#ef6c00",
}


@dataclass(frozen=True)
class BoundingBox:
    """Inclusive lat/lon region; min corner to max corner."""

    min_lat: float
    min_lon: float
    max_lat: float
    max_lon: float

    def __post_init__(self) -> None:
        if self.min_lat > self.max_lat or self.min_lon > self.max_lon:
            raise ValueError("bounding box corners are inverted")

    def contains(self, lat: float, lon: float) -> bool:
        return self.min_lat <= lat <= self.max_lat and self.min_lon <= lon <= self.max_lon

    @classmethod
    def parse(cls, text: str) -> "BoundingBox":
        """Parse 'lat1,lon1,lat2,lon2' (any corner order)."""
        parts = [float(p) for p in text.split(",")]
        if len(parts) != 4:
            raise ValueError(f"region must be lat1,lon1,lat2,lon2, got {text!r}")
        lat1, lon1, lat2, lon2 = parts
        return cls(min(lat1, lat2), min(lon1, lon2), max(lat1, lat2), max(lon1, lon2))


@dataclass(frozen=True)
class MapFeature:
    longitude: float
    latitude: float
    condition: RoadCondition
    confidence: float
    camera_id: str
    timestamp: datetime


@dataclass(frozen=True)
class MapLayer:
    """Deduplicated, filtered features plus the legend colour mapping."""

    features: tuple[MapFeature, ...]
    legend: dict[RoadCondition, str]
    region: BoundingBox | None = None

    def __post_init__(self) -> None:
        cameras = [f.camera_id for f in self.features]
        if len(set(cameras)) != len(cameras):
            raise ValueError("layer has more than one feature for a camera")
        colours = list(self.legend.values())
        if len(set(colours)) != len(colours):
            raise ValueError("legend colours must be injective")


def build_layer(
    records: Sequence[LabelRecord],
    region: BoundingBox | None = None,
    stale_after: timedelta = DEFAULT_STALE_AFTER,
    now: datetime | None = None,
    colours: dict[RoadCondition, str] | None = None,
    include: Sequence[RoadCondition] | None = None,
) -> MapLayer:
    """Latest record per camera, staleness- and region-filtered.

    `include` restricts the layer to those classes (deployments may hide
    e.g. the poor class); default shows everything.
    """
    now = now or datetime.now(timezone.utc)
    colours = colours or DEFAULT_COLOURS
    newest: dict[str, LabelRecord] = {}
    for record in records:
        cur = newest.get(record.camera_id)
        if cur is None or record.timestamp >= cur.timestamp:
            newest[record.camera_id] = record
    features = []
    for record in newest.values():
        if now - record.timestamp > stale_after:
            continue
        if region is not None and not region.contains(record.latitude, record.longitude):
            continue
        if include is not None and record.label not in include:
            continue
        features.append(
            MapFeature(
                longitude=record.longitude,
                latitude=record.latitude,
                condition=record.label,
                confidence=record.confidence,
                camera_id=record.camera_id,
                timestamp=record.timestamp,
            )
        )
    features.sort(key=lambda f: f.camera_id)
    legend = {cond: colours[cond] for cond in sorted({f.condition for f in features}, key=lambda c: c.value)}
    return MapLayer(tuple(features), legend, region)


def layer_records(layer: MapLayer) -> list[LabelRecord]:
    """The layer's features as label records (rebuild/round-trip support)."""
    return [
        LabelRecord(
            camera_id=f.camera_id,
            timestamp=f.timestamp,
            label=f.condition,
            confidence=f.confidence,
            latitude=f.latitude,
            longitude=f.longitude,
        )
        for f in layer.features
    ]


def emit_geojson(layer: MapLayer) -> bytes:
    """RFC 7946 FeatureCollection; geometry coordinates are [lon, lat]."""
    collection = {
        "type": "FeatureCollection",
        "features": [
            {
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [f.longitude, f.latitude]},
                "properties": {
                    "class": f.condition.value,
                    "confidence": f.confidence,
                    "camera_id": f.camera_id,
                    "timestamp": f.timestamp.isoformat(),
                    "color": layer.legend[f.condition],
                },
            }
            for f in layer.features
        ],
    }
    return json.dumps(collection, indent=2).encode("utf-8")


def parse_geojson(data: bytes) -> list[LabelRecord]:
    """Rebuild label records from an emitted FeatureCollection."""
    doc = json.loads(data.decode("utf-8"))
    if doc.get("type") != "FeatureCollection":
        raise ValueError("not a FeatureCollection")
    records = []
    for feature in doc.get("features", []):
        lon, lat = feature["geometry"]["coordinates"]
        props = feature["properties"]
        records.append(
            LabelRecord(
                camera_id=props["camera_id"],
                timestamp=datetime.fromisoformat(props["timestamp"]),
                label=parse_condition(props["class"]),
                confidence=props["confidence"],
                latitude=lat,
                longitude=lon,
            )
        )
    return records


_HTML_TEMPLATE = """<!DOCTYPE html>
<html lang="en">
<head>
<meta charset="utf-8">
<title>Road conditions</title>
<style>
  body {{ font-family: sans-serif; margin: 1rem; background: #fafafa; }}
  svg {{ border: 1px solid #ccc; background: #eef3f7; }}
  .legend {{ margin-top: .6rem; }}
  .legend span {{ display: inline-flex; align-items: center; margin-right: 1rem; }}
  .swatch {{ width: .9em; height: .9em; border: 1px solid #444; border-radius: 50%;
            display: inline-block; margin-right: .35em; }}
</style>
</head>
<body>
<h1>Road conditions ({count} cameras)</h1>
<svg viewBox="0 0 960 480" width="960" height="480">{markers}</svg>
<div class="legend">{legend}</div>
<script type="application/json" id="layer-data">{data}</script>
</body>
</html>
"""


def emit_html(layer: MapLayer) -> bytes:
    """Self-contained HTML map: equirectangular marker plot plus legend."""
    markers = []
    for f in layer.features:
        x = (f.longitude + 180.0) / 360.0 * 960.0
        y = (90.0 - f.latitude) / 180.0 * 480.0
        colour = layer.legend[f.condition]
        title = html.escape(f"{f.camera_id}: {f.condition.display} ({f.confidence:.2f})")
        markers.append(
            f'<circle cx="{x:.2f}" cy="{y:.2f}" r="4" fill="{colour}" stroke="#333">'
            f"<title>{title}</title></circle>"
        )
    legend = "".join(
        f'<span><span class="swatch" style="background:{colour}"></span>{cond.display}</span>'
        for cond, colour in layer.legend.items()
    )
    page = _HTML_TEMPLATE.format(
        count=len(layer.features),
        markers="".join(markers),
        legend=legend,
        data=emit_geojson(layer).decode("utf-8"),
    )
    return page.encode("utf-8")
