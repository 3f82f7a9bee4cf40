"""Labelled-corpus management: manifests, splits, sensor matching, review.

A manifest tracks labelled samples plus a pending set of pseudo-labelled
candidates awaiting human verdicts. Stratified splitting, sensor-assisted
auto-labelling, pseudo-label runs, review queues, verdict application and
judgment summaries all operate on these types.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import random
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

from .classify import Backend, ClassDistribution
from .conditions import ClassScheme, RoadCondition, parse_condition
from .imaging import CorruptImageError, decode_and_check, rescale_01, resize

logger = logging.getLogger(__name__)

EARTH_RADIUS_KM = 6371.0
DEFAULT_MATCH_RADIUS_KM = 10.0
DEFAULT_MAX_AGE = timedelta(minutes=30)


class Source(str, Enum):
    """How a labelled sample entered the corpus."""

    CHERRY_PICKED = "cherry_picked"
    RANDOM = "random"
    RWIS = "rwis"
    AUGMENTED = "augmented"


class Split(str, Enum):
    TRAIN = "train"
    VALIDATION = "validation"


@dataclass(frozen=True)
class LabelledSample:
    image_ref: str
    label: RoadCondition
    source: Source
    phase: str = ""
    confidence: float | None = None


@dataclass
class DatasetManifest:
    """Labelled samples with split assignments and a pending review set."""

    scheme: ClassScheme
    samples: list[LabelledSample] = field(default_factory=list)
    split: dict[str, Split] = field(default_factory=dict)
    pending: dict[str, LabelledSample] = field(default_factory=dict)
    excluded: set[str] = field(default_factory=set)

    def add(self, sample: LabelledSample) -> None:
        if sample.label not in self.scheme:
            raise ValueError(f"label {sample.label.value!r} not in scheme {self.scheme.name!r}")
        self.samples.append(sample)

    def class_counts(self) -> dict[RoadCondition, int]:
        counts = {c: 0 for c in self.scheme.classes}
        for s in self.samples:
            counts[s.label] += 1
        return counts

    def split_counts(self) -> dict[RoadCondition, tuple[int, int]]:
        """Per class: (train, validation) counts of split-assigned samples."""
        counts = {c: [0, 0] for c in self.scheme.classes}
        for s in self.samples:
            assignment = self.split.get(s.image_ref)
            if assignment is Split.TRAIN:
                counts[s.label][0] += 1
            elif assignment is Split.VALIDATION:
                counts[s.label][1] += 1
        return {c: (t, v) for c, (t, v) in counts.items()}

    def by_split(self, which: Split) -> list[LabelledSample]:
        return [s for s in self.samples if self.split.get(s.image_ref) is which]


# -- manifest file format (JSON lines, one sample per line) --------------------


def _exclusion_log_path(path: str | Path) -> Path:
    return Path(str(path) + ".excluded")


def write_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    """Write samples as JSON lines; refused refs go to a sidecar exclusion log."""
    with open(path, "w", encoding="utf-8") as fh:
        for s in manifest.samples:
            row = {
                "image_ref": s.image_ref,
                "label": s.label.value,
                "source": s.source.value,
                "phase": s.phase,
            }
            if s.confidence is not None:
                row["confidence"] = s.confidence
            assignment = manifest.split.get(s.image_ref)
            if assignment is not None:
                row["split"] = assignment.value
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    if manifest.excluded:
        _exclusion_log_path(path).write_text(
            "".join(f"{ref}\n" for ref in sorted(manifest.excluded)), encoding="utf-8"
        )


def read_manifest(path: str | Path, scheme: ClassScheme | None = None) -> DatasetManifest:
    samples: list[LabelledSample] = []
    split: dict[str, Split] = {}
    labels_seen: set[RoadCondition] = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
                sample = LabelledSample(
                    image_ref=row["image_ref"],
                    label=parse_condition(row["label"]),
                    source=Source(row.get("source", "random")),
                    phase=row.get("phase", ""),
                    confidence=row.get("confidence"),
                )
            except (KeyError, ValueError, json.JSONDecodeError) as exc:
                raise ValueError(f"{path}: line {line_no}: {exc}") from exc
            samples.append(sample)
            labels_seen.add(sample.label)
            if "split" in row:
                split[sample.image_ref] = Split(row["split"])
    if scheme is None:
        scheme = _covering_scheme(labels_seen)
    manifest = DatasetManifest(scheme)
    for s in samples:
        manifest.add(s)
    manifest.split = split
    exclusions = _exclusion_log_path(path)
    if exclusions.exists():
        manifest.excluded = {line for line in exclusions.read_text(encoding="utf-8").splitlines() if line}
    return manifest


def _covering_scheme(labels: set[RoadCondition]) -> ClassScheme:
    from .conditions import FIVE_CLASS, FOUR_CLASS, TWO_CLASS

    for scheme in (TWO_CLASS, FOUR_CLASS, FIVE_CLASS):
        if all(l in scheme for l in labels):
            return scheme
    return FIVE_CLASS


# -- stratified splitting -------------------------------------------------------


def _train_count(class_count: int, ratio: float) -> int:
    # floor(count * ratio) with the ratio read as its decimal literal, so
    # 0.9 of 16065 is floor(14458.5) and not a float-representation casualty.
    return int(Fraction(class_count) * Fraction(str(ratio)))


def stratified_split(manifest: DatasetManifest, train_ratio: float, seed: int) -> DatasetManifest:
    """Assign train/validation per class: floor(count * ratio) to train.

    Membership comes from a per-class seeded shuffle, so the same
    (samples, ratio, seed) triple always produces the same assignment and
    different seeds still produce identical per-class counts.
    """
    if not 0.0 < train_ratio <= 1.0:
        raise ValueError(f"train_ratio must be in (0, 1], got {train_ratio}")
    split: dict[str, Split] = {}
    for condition in manifest.scheme.classes:
        members = [s.image_ref for s in manifest.samples if s.label is condition]
        if not members:
            logger.warning("class %s has no samples; contributes nothing to the split", condition.value)
            continue
        rng = random.Random(f"{seed}:{condition.value}")
        rng.shuffle(members)
        n_train = _train_count(len(members), train_ratio)
        for ref in members[:n_train]:
            split[ref] = Split.TRAIN
        for ref in members[n_train:]:
            split[ref] = Split.VALIDATION
    return replace_split(manifest, split)


def split_fixed_validation(manifest: DatasetManifest, per_class: int, seed: int) -> DatasetManifest:
    """Hold out a fixed number of validation samples per class, rest to train."""
    if per_class < 0:
        raise ValueError("per_class must be >= 0")
    split: dict[str, Split] = {}
    for condition in manifest.scheme.classes:
        members = [s.image_ref for s in manifest.samples if s.label is condition]
        if not members:
            continue
        if per_class > len(members):
            raise ValueError(
                f"class {condition.value} has {len(members)} samples, cannot hold out {per_class}"
            )
        rng = random.Random(f"{seed}:{condition.value}")
        rng.shuffle(members)
        for ref in members[: len(members) - per_class]:
            split[ref] = Split.TRAIN
        for ref in members[len(members) - per_class :]:
            split[ref] = Split.VALIDATION
    return replace_split(manifest, split)


def replace_split(manifest: DatasetManifest, split: dict[str, Split]) -> DatasetManifest:
    out = DatasetManifest(manifest.scheme)
    out.samples = list(manifest.samples)
    out.split = split
    out.pending = dict(manifest.pending)
    out.excluded = set(manifest.excluded)
    return out


# -- sensor (RWIS) matching -----------------------------------------------------


@dataclass(frozen=True)
class RwisObservation:
    """One road-surface sensor report."""

    station_id: str
    latitude: float
    longitude: float
    observed_at: datetime
    road_condition_code: int

    def __post_init__(self) -> None:
        if not -90.0 <= self.latitude <= 90.0:
            raise ValueError(f"latitude {self.latitude} out of range")
        if not -180.0 <= self.longitude <= 180.0:
            raise ValueError(f"longitude {self.longitude} out of range")


def haversine_km(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance on a sphere of radius 6371 km."""
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dphi = p2 - p1
    dlam = math.radians(lon2 - lon1)
    a = math.sin(dphi / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dlam / 2) ** 2
    return 2.0 * EARTH_RADIUS_KM * math.asin(math.sqrt(a))


@dataclass(frozen=True)
class RwisMatch:
    camera_id: str
    observation: RwisObservation
    distance_km: float


def match_rwis(
    cameras: Sequence,
    observations: Sequence[RwisObservation],
    at: datetime,
    radius_km: float = DEFAULT_MATCH_RADIUS_KM,
    max_age: timedelta = DEFAULT_MAX_AGE,
) -> list[RwisMatch]:
    """Nearest fresh observation within `radius_km` of each camera.

    Observations older (or newer) than `max_age` relative to `at` are
    ignored; cameras with no candidate are omitted.
    """
    if radius_km <= 0:
        raise ValueError("radius_km must be positive")
    fresh = [o for o in observations if abs((o.observed_at - at).total_seconds()) <= max_age.total_seconds()]
    matches = []
    for camera in cameras:
        best: tuple[float, RwisObservation] | None = None
        for obs in fresh:
            d = haversine_km(camera.latitude, camera.longitude, obs.latitude, obs.longitude)
            if d <= radius_km and (best is None or d < best[0]):
                best = (d, obs)
        if best is not None:
            matches.append(RwisMatch(camera.camera_id, best[1], best[0]))
    return matches


def read_rwis_csv(path: str | Path) -> list[RwisObservation]:
    """Observations from delimited text: station_id,latitude,longitude,observed_at,code."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        expected = {"station_id", "latitude", "longitude", "observed_at", "code"}
        if reader.fieldnames is None or not expected.issubset(reader.fieldnames):
            raise ValueError(f"{path}: header must contain {sorted(expected)}")
        for row_no, row in enumerate(reader, start=2):
            try:
                out.append(
                    RwisObservation(
                        station_id=row["station_id"],
                        latitude=float(row["latitude"]),
                        longitude=float(row["longitude"]),
                        observed_at=datetime.fromisoformat(row["observed_at"]),
                        road_condition_code=int(row["code"]),
                    )
                )
            except (ValueError, KeyError) as exc:
                raise ValueError(f"{path}: row {row_no}: {exc}") from exc
    return out


# Sensor road-condition codes grouped by surface kind. Deployments can
# override this table (the sensors' own content is noisy), so it is data,
# not logic: load_sensor_code_table reads the same shape from JSON.
DEFAULT_SENSOR_CODE_TABLE: dict[int, str] = {
    1: "dry",
    2: "wet",
    3: "wet",
    4: "wet",
    5: "wet",
    6: "snow",
    7: "unmapped",
    8: "snow",
    15: "wet",
    16: "unmapped",
    18: "snow",
    21: "snow",
    22: "snow",
    23: "snow",
    24: "unmapped",
}


def load_sensor_code_table(path: str | Path) -> dict[int, str]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    table = {}
    for code, kind in data.items():
        if kind not in ("dry", "wet", "snow", "unmapped"):
            raise ValueError(f"sensor code {code}: unknown surface kind {kind!r}")
        table[int(code)] = kind
    return table


def map_sensor_code(
    code: int,
    scheme: ClassScheme,
    table: dict[int, str] | None = None,
) -> RoadCondition | None:
    """Translate a sensor code into a class of `scheme`, or None if unmapped.

    Two-class schemes collapse wet and snow into the non-dry bucket;
    granular schemes keep them distinct.
    """
    kind = (table or DEFAULT_SENSOR_CODE_TABLE).get(code, "unmapped")
    if kind == "unmapped":
        return None
    if kind == "dry":
        return RoadCondition.DRY
    if RoadCondition.NON_DRY in scheme:
        return RoadCondition.NON_DRY
    return RoadCondition.WET if kind == "wet" else RoadCondition.SNOW


# -- pseudo-labelling -----------------------------------------------------------


@dataclass(frozen=True)
class PseudoLabelEntry:
    image_ref: str
    label: RoadCondition
    confidence: float


@dataclass(frozen=True)
class PseudoLabelRun:
    """Bulk classification of unlabelled images, kept as suggestions."""

    backend_name: str
    scheme: ClassScheme
    entries: tuple[PseudoLabelEntry, ...]
    failed: tuple[str, ...] = ()

    def class_counts(self) -> dict[RoadCondition, int]:
        counts = {c: 0 for c in self.scheme.classes}
        for e in self.entries:
            counts[e.label] += 1
        return counts

    def total(self) -> int:
        return len(self.entries) + len(self.failed)


def pseudo_label(
    backend: Backend,
    unlabelled: Sequence[str | Path],
    batch_size: int = 16,
    exclude: set[str] | None = None,
) -> PseudoLabelRun:
    """Classify every image file once; undecodable files land in `failed`.

    Refs in `exclude` (e.g. previously refused images) are skipped entirely.
    """
    entries: list[PseudoLabelEntry] = []
    failed: list[str] = []
    refs = [str(r) for r in unlabelled if exclude is None or str(r) not in exclude]
    for start in range(0, len(refs), batch_size):
        chunk = refs[start : start + batch_size]
        tensors, kept = [], []
        for ref in chunk:
            try:
                img = decode_and_check(Path(ref).read_bytes())
            except (CorruptImageError, OSError):
                failed.append(ref)
                continue
            tensors.append(rescale_01(resize(img, backend.input_dims)))
            kept.append(ref)
        if not tensors:
            continue
        for ref, dist in zip(kept, backend.classify(tensors)):
            entries.append(PseudoLabelEntry(ref, dist.argmax(), dist.confidence))
    return PseudoLabelRun(backend.name, backend.scheme, tuple(entries), tuple(failed))


def run_from_distributions(
    backend_name: str,
    scheme: ClassScheme,
    labelled: Sequence[tuple[str, ClassDistribution]],
) -> PseudoLabelRun:
    """Build a run from already-computed distributions (in-memory path)."""
    entries = tuple(
        PseudoLabelEntry(ref, dist.argmax(), dist.confidence) for ref, dist in labelled
    )
    return PseudoLabelRun(backend_name, scheme, entries)


@dataclass(frozen=True)
class QueueFilter:
    """Selection criteria for building a review queue from a run."""

    classes: tuple[RoadCondition, ...] | None = None
    confidence_range: tuple[float, float] = (0.0, 1.0)
    sample_size: int | None = None
    seed: int = 0


def build_review_queue(run: PseudoLabelRun, filter: QueueFilter) -> list[PseudoLabelEntry]:
    """Filtered entries, seeded-sampled, ordered by class then confidence.

    Grouping review items by suggested class and sorting high-confidence
    first is what makes bulk visual confirmation fast.
    """
    lo, hi = filter.confidence_range
    if not 0.0 <= lo <= hi <= 1.0:
        raise ValueError(f"confidence_range must satisfy 0 <= low <= high <= 1, got {filter.confidence_range}")
    wanted = set(filter.classes) if filter.classes is not None else None
    matches = [
        e
        for e in run.entries
        if (wanted is None or e.label in wanted) and lo <= e.confidence <= hi
    ]
    if filter.sample_size is not None and filter.sample_size < len(matches):
        rng = random.Random(filter.seed)
        matches = rng.sample(matches, filter.sample_size)
    matches.sort(key=lambda e: (run.scheme.index(e.label), -e.confidence, e.image_ref))
    return matches


# -- verdicts and judgment ------------------------------------------------------


class VerdictKind(str, Enum):
    ACCEPTABLE = "acceptable"
    REFUSED = "refused"
    RELABEL = "relabel"
    POOR = "poor"


@dataclass(frozen=True)
class ReviewVerdict:
    image_ref: str
    kind: VerdictKind
    relabel_to: RoadCondition | None = None

    def __post_init__(self) -> None:
        if self.kind is VerdictKind.RELABEL and self.relabel_to is None:
            raise ValueError(f"{self.image_ref}: relabel verdict needs a target class")
        if self.kind is not VerdictKind.RELABEL and self.relabel_to is not None:
            raise ValueError(f"{self.image_ref}: only relabel verdicts carry a target class")


class DuplicateVerdictError(ValueError):
    """One review batch contains two verdicts for the same image."""


class UnknownImageError(KeyError):
    """A verdict references an image that is not pending review."""


def enqueue_pending(manifest: DatasetManifest, run: PseudoLabelRun, phase: str = "") -> None:
    """Stage a run's suggestions as pending samples awaiting verdicts."""
    for e in run.entries:
        if e.image_ref in manifest.excluded:
            continue
        manifest.pending[e.image_ref] = LabelledSample(
            image_ref=e.image_ref,
            label=e.label,
            source=Source.RANDOM,
            phase=phase,
            confidence=e.confidence,
        )


def apply_verdicts(
    manifest: DatasetManifest,
    verdicts: Sequence[ReviewVerdict],
    source: Source = Source.RANDOM,
) -> DatasetManifest:
    """Move pending samples into the corpus according to human verdicts.

    acceptable keeps the pseudo-label; relabel overrides it; poor files the
    sample under the poor class; refused drops it and logs the exclusion so
    later runs do not resurface it.
    """
    seen: set[str] = set()
    for v in verdicts:
        if v.image_ref in seen:
            raise DuplicateVerdictError(f"duplicate verdict for {v.image_ref!r} in one batch")
        seen.add(v.image_ref)
        if v.image_ref not in manifest.pending:
            raise UnknownImageError(f"no pending sample for {v.image_ref!r}")

    out = DatasetManifest(manifest.scheme)
    out.samples = list(manifest.samples)
    out.split = dict(manifest.split)
    out.pending = dict(manifest.pending)
    out.excluded = set(manifest.excluded)
    for v in verdicts:
        pending = out.pending.pop(v.image_ref)
        if v.kind is VerdictKind.REFUSED:
            out.excluded.add(v.image_ref)
            continue
        if v.kind is VerdictKind.ACCEPTABLE:
            label = pending.label
        elif v.kind is VerdictKind.RELABEL:
            label = v.relabel_to
        else:
            label = RoadCondition.POOR
        out.add(replace(pending, label=label, source=source))
    return out


@dataclass(frozen=True)
class JudgmentSummary:
    """Per-class acceptable/refused tallies from a judgment audit."""

    scheme: ClassScheme
    acceptable: dict[RoadCondition, int]
    refused: dict[RoadCondition, int]

    @property
    def total_acceptable(self) -> int:
        return sum(self.acceptable.values())

    @property
    def total_refused(self) -> int:
        return sum(self.refused.values())

    def to_dict(self) -> dict:
        return {
            "per_class": {
                c.value: {
                    "acceptable": self.acceptable.get(c, 0),
                    "refused": self.refused.get(c, 0),
                }
                for c in self.scheme.classes
            },
            "total": {"acceptable": self.total_acceptable, "refused": self.total_refused},
        }

    def canonical_json(self) -> str:
        """Compact JSON with keys in scheme order; clients must match it exactly."""
        return json.dumps(self.to_dict(), separators=(",", ":"))


def judgment_summary(
    scheme: ClassScheme, entries: Iterable[tuple[RoadCondition, VerdictKind]]
) -> JudgmentSummary:
    """Tally audit verdicts per suggested class.

    Judgment audits only distinguish acceptable from refused; relabel/poor
    verdicts do not occur in them.
    """
    acceptable = {c: 0 for c in scheme.classes}
    refused = {c: 0 for c in scheme.classes}
    for condition, kind in entries:
        if condition not in scheme:
            raise ValueError(f"{condition!r} not in scheme {scheme.name!r}")
        if kind is VerdictKind.ACCEPTABLE:
            acceptable[condition] += 1
        elif kind is VerdictKind.REFUSED:
            refused[condition] += 1
        else:
            raise ValueError(f"judgment audits take acceptable/refused only, got {kind.value}")
    return JudgmentSummary(scheme, acceptable, refused)


# -- verdict batch wire format (JSON array) --------------------------------------


def parse_verdict_batch(data: object) -> list[ReviewVerdict]:
    """Validate a decoded JSON verdict batch, with field-level diagnostics."""
    if not isinstance(data, list):
        raise ValueError("verdict batch must be a JSON array")
    out = []
    for i, item in enumerate(data):
        if not isinstance(item, dict):
            raise ValueError(f"item {i}: must be an object")
        missing = [k for k in ("image_ref", "verdict") if k not in item]
        if missing:
            raise ValueError(f"item {i}: missing fields {missing}")
        try:
            kind = VerdictKind(item["verdict"])
        except ValueError:
            raise ValueError(
                f"item {i}: verdict must be one of {[k.value for k in VerdictKind]}, got {item['verdict']!r}"
            ) from None
        relabel_to = None
        if kind is VerdictKind.RELABEL:
            if "relabel_to" not in item:
                raise ValueError(f"item {i}: relabel verdict requires field relabel_to")
            relabel_to = parse_condition(str(item["relabel_to"]))
        out.append(ReviewVerdict(str(item["image_ref"]), kind, relabel_to))
    return out
