"""Command-line entry point: every workflow as a subcommand.

Subcommands: run (live pipeline), fetch (snapshot grab), classify,
split, pseudolabel, verdict-import, report, map, serve, bench. Exit code
0 on success, 1 on a domain error, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path

from .catalogue import CatalogueError, fetch_snapshot, load_catalogue, Snapshot
from .classify import (
    BackendFormatError,
    BaselineTrainer,
    load_external_backend,
    train_baseline,
)
from .conditions import FIVE_CLASS, parse_condition, scheme_by_name
from .dataset import (
    DatasetManifest,
    PseudoLabelEntry,
    PseudoLabelRun,
    apply_verdicts,
    enqueue_pending,
    parse_verdict_batch,
    pseudo_label,
    read_manifest,
    split_fixed_validation,
    stratified_split,
    write_manifest,
)
from .imaging import CorruptImageError, decode_and_check, resize
from .mapgen import BoundingBox, build_layer, emit_geojson, emit_html
from .metrics import ConfusionMatrix, render_report
from .pipeline import (
    DatabaseSink,
    Pipeline,
    PipelineConfig,
    RecordWriter,
    read_all_records,
    read_record_csv,
)
from .service import ServiceState, serve_api
from .synthetic import make_corpus

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


class CliError(Exception):
    """Domain-level failure; message goes to stderr, exit code 1."""


def _load_backend(spec: str, scheme_name: str):
    scheme = scheme_by_name(scheme_name)
    if spec.startswith("synthetic"):
        # e.g. synthetic, synthetic:pool=4 -- train on the colour-field corpus
        pool = 8
        if ":" in spec:
            for part in spec.split(":", 1)[1].split(","):
                key, _, value = part.partition("=")
                if key == "pool":
                    pool = int(value)
                else:
                    raise CliError(f"unknown backend option {key!r}")
        corpus = make_corpus(scheme, per_class=80, seed=1234)
        return train_baseline(corpus, epochs=12, scheme=scheme, pool=pool)
    path = Path(spec)
    try:
        return load_external_backend(path, scheme)
    except (FileNotFoundError, BackendFormatError) as exc:
        raise CliError(str(exc)) from exc


def _image_files(directory: Path) -> list[Path]:
    if not directory.is_dir():
        raise CliError(f"{directory} is not a directory")
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


# -- subcommand implementations ---------------------------------------------------


def cmd_run(args) -> int:
    try:
        catalogue = load_catalogue(args.catalogue)
    except (OSError, CatalogueError) as exc:
        raise CliError(str(exc)) from exc
    backend = _load_backend(args.backend, args.scheme)
    sink = DatabaseSink(args.db_url) if args.db_url else None
    config = PipelineConfig(
        catalogue=catalogue,
        backend=backend,
        output_dir=Path(args.output_dir),
        poll_interval_s=args.interval,
        workers=args.workers,
        batch_size=args.batch_size,
        fetch_timeout_s=args.timeout,
        max_cycles=args.cycles,
        sink=sink,
    )
    pipeline = Pipeline(config).start()
    server = None
    if args.port is not None:
        state = ServiceState(scheme=backend.scheme, manifest=DatasetManifest(backend.scheme), pipeline=pipeline)
        server = serve_api(state, port=args.port)
        print(f"api listening on port {server.port}", flush=True)
    try:
        if args.cycles is not None:
            pipeline.wait_cycles(timeout_s=args.cycles * (args.interval + 60))
        else:
            while pipeline.poller.running:
                time.sleep(0.2)
    except KeyboardInterrupt:
        print("stopping...", file=sys.stderr)
    finally:
        pipeline.stop(drain_submission_s=5.0)
        if server is not None:
            server.stop()
    counts = pipeline.reconciliation()
    print(json.dumps(counts, indent=2))
    return 0


def cmd_fetch(args) -> int:
    try:
        catalogue = load_catalogue(args.catalogue)
    except (OSError, CatalogueError) as exc:
        raise CliError(str(exc)) from exc
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    failures = 0
    for record in catalogue:
        result = fetch_snapshot(record, timeout=args.timeout)
        if isinstance(result, Snapshot):
            suffix = ".jpg" if "jpeg" in result.content_type else ".png"
            (out_dir / f"{record.camera_id}{suffix}").write_bytes(result.body)
        else:
            failures += 1
            print(f"{record.camera_id}: {result.kind.value}", file=sys.stderr)
    print(f"fetched {len(catalogue) - failures}/{len(catalogue)} snapshots into {out_dir}")
    return 0 if failures == 0 else 1


def cmd_classify(args) -> int:
    backend = _load_backend(args.backend, args.scheme)
    files = _image_files(Path(args.images))
    coords = {}
    if args.catalogue:
        coords = {r.camera_id: (r.latitude, r.longitude) for r in load_catalogue(args.catalogue)}
    writer = RecordWriter(Path(args.out))
    now = datetime.now(timezone.utc).replace(microsecond=0)
    from .classify import classify_batch

    @dataclass(frozen=True)
    class _Cam:
        camera_id: str
        latitude: float
        longitude: float

    written = skipped = 0
    for start in range(0, len(files), args.batch_size):
        chunk = files[start : start + args.batch_size]
        images, cams = [], []
        for path in chunk:
            try:
                img = decode_and_check(path.read_bytes())
            except CorruptImageError:
                skipped += 1
                continue
            lat, lon = coords.get(path.stem, (0.0, 0.0))
            images.append(resize(img, backend.input_dims))
            cams.append(_Cam(path.stem, lat, lon))
        for record in classify_batch(backend, images, cams, now):
            writer.append(record)
            written += 1
    writer.close()
    print(f"classified {written} images ({skipped} skipped) -> {args.out}")
    return 0


def cmd_split(args) -> int:
    try:
        manifest = read_manifest(args.manifest)
    except (OSError, ValueError) as exc:
        raise CliError(str(exc)) from exc
    if args.fixed_validation is not None:
        result = split_fixed_validation(manifest, args.fixed_validation, args.seed)
    else:
        if args.ratio is None:
            raise CliError("one of --ratio or --fixed-validation is required")
        result = stratified_split(manifest, args.ratio, args.seed)
    write_manifest(result, args.out)
    counts = result.split_counts()
    table = {c.value: {"train": t, "validation": v} for c, (t, v) in counts.items()}
    print(json.dumps(table, indent=2))
    return 0


def cmd_pseudolabel(args) -> int:
    backend = _load_backend(args.backend, args.scheme)
    files = _image_files(Path(args.images))
    run = pseudo_label(backend, files, batch_size=args.batch_size)
    payload = {
        "backend": run.backend_name,
        "scheme": run.scheme.name,
        "entries": [
            {"image_ref": e.image_ref, "label": e.label.value, "confidence": e.confidence}
            for e in run.entries
        ],
        "failed": list(run.failed),
        "class_counts": {c.value: n for c, n in run.class_counts().items()},
    }
    Path(args.out).write_text(json.dumps(payload, indent=2))
    print(json.dumps(payload["class_counts"], indent=2))
    return 0


def load_run(path: str | Path) -> PseudoLabelRun:
    data = json.loads(Path(path).read_text())
    return PseudoLabelRun(
        backend_name=data["backend"],
        scheme=scheme_by_name(data["scheme"]),
        entries=tuple(
            PseudoLabelEntry(e["image_ref"], parse_condition(e["label"]), e["confidence"])
            for e in data["entries"]
        ),
        failed=tuple(data.get("failed", ())),
    )


def cmd_verdict_import(args) -> int:
    try:
        run = load_run(args.run)
        manifest = read_manifest(args.manifest, scheme=run.scheme)
        verdicts = parse_verdict_batch(json.loads(Path(args.verdicts).read_text()))
    except (OSError, ValueError) as exc:
        raise CliError(str(exc)) from exc
    enqueue_pending(manifest, run, phase=args.phase)
    try:
        manifest = apply_verdicts(manifest, verdicts)
    except (KeyError, ValueError) as exc:
        raise CliError(str(exc)) from exc
    write_manifest(manifest, args.out)
    counts = manifest.class_counts()
    print(json.dumps({c.value: n for c, n in counts.items()}, indent=2))
    return 0


def cmd_report(args) -> int:
    try:
        cm = ConfusionMatrix.from_json(Path(args.matrix).read_text())
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(f"cannot load matrix: {exc}") from exc
    report = render_report(cm, decimals=args.decimals)
    if args.json:
        print(report.to_json())
    else:
        print(report.to_text(), end="")
    return 0


def cmd_map(args) -> int:
    source = Path(getattr(args, "in"))
    try:
        if source.is_dir():
            records = read_all_records(source)
        else:
            records = read_record_csv(source)
    except (OSError, ValueError) as exc:
        raise CliError(str(exc)) from exc
    region = BoundingBox.parse(args.region) if args.region else None
    now = datetime.fromisoformat(args.now) if args.now else None
    layer = build_layer(
        records,
        region=region,
        stale_after=timedelta(minutes=args.stale_after),
        now=now,
    )
    out = Path(args.out)
    payload = emit_html(layer) if out.suffix == ".html" else emit_geojson(layer)
    out.write_bytes(payload)
    print(f"{len(layer.features)} features -> {out}")
    return 0


def cmd_serve(args) -> int:
    scheme = scheme_by_name(args.scheme)
    manifest = read_manifest(args.manifest, scheme=scheme) if args.manifest else DatasetManifest(scheme)
    state = ServiceState(scheme=scheme, manifest=manifest)
    if args.records:
        state.records = read_record_csv(args.records)
    if args.run:
        state.load_queue_from_run(load_run(args.run), phase=args.phase)
    server = serve_api(state, port=args.port)
    print(f"api listening on port {server.port}", flush=True)
    try:
        while True:
            time.sleep(0.5)
    except KeyboardInterrupt:
        server.stop()
    return 0


@dataclass
class EpochResult:
    epoch: int
    train_accuracy: float
    validation_accuracy: float
    duration_ms: float
    cumulative_ms: float


@dataclass
class BenchResult:
    backend: str
    epochs: list[EpochResult]


def run_bench(
    backends: list[str],
    epochs: int,
    seed: int,
    train_per_class: int = 400,
    val_per_class: int = 100,
    scheme=FIVE_CLASS,
) -> list[BenchResult]:
    """Train each named backend variant, timing every epoch.

    Backend names: ``baseline`` or ``baseline:pool=N``; anything else is
    skipped with a warning (not trainable at desk scale).
    """
    train = make_corpus(scheme, per_class=train_per_class, seed=seed)
    val = make_corpus(scheme, per_class=val_per_class, seed=seed + 1)
    results = []
    for name in backends:
        base, _, opts = name.partition(":")
        if base != "baseline":
            print(f"warning: backend {name!r} is not trainable here; skipped", file=sys.stderr)
            continue
        pool = 8
        for part in filter(None, opts.split(",")):
            key, _, value = part.partition("=")
            if key == "pool":
                pool = int(value)
            else:
                raise CliError(f"unknown bench option {key!r} in {name!r}")
        trainer = BaselineTrainer(train, scheme=scheme, pool=pool, seed=seed, name=name)
        rows: list[EpochResult] = []
        cumulative = 0.0
        for epoch in range(1, epochs + 1):
            started = time.perf_counter()
            train_acc = trainer.epoch()
            val_acc = trainer.accuracy_on(val)
            duration_ms = (time.perf_counter() - started) * 1000.0
            cumulative += duration_ms
            rows.append(EpochResult(epoch, train_acc, val_acc, duration_ms, cumulative))
        results.append(BenchResult(name, rows))
    return results


def _bench_tables(results: list[BenchResult]) -> str:
    lines = []
    lines.append("accuracy per epoch (train / validation)")
    header = "epoch  " + "  ".join(f"{r.backend:>24}" for r in results)
    lines.append(header)
    n_epochs = max((len(r.epochs) for r in results), default=0)
    for i in range(n_epochs):
        cells = []
        for r in results:
            e = r.epochs[i]
            cells.append(f"{e.train_accuracy:.3f} / {e.validation_accuracy:.3f}".rjust(24))
        lines.append(f"{i + 1:>5}  " + "  ".join(cells))
    lines.append("")
    lines.append("execution time per epoch (ms, epoch / cumulative)")
    lines.append(header)
    for i in range(n_epochs):
        cells = []
        for r in results:
            e = r.epochs[i]
            cells.append(f"{e.duration_ms:.1f} / {e.cumulative_ms:.1f}".rjust(24))
        lines.append(f"{i + 1:>5}  " + "  ".join(cells))
    return "\n".join(lines)


def cmd_bench(args) -> int:
    results = run_bench(
        backends=args.backends.split(","),
        epochs=args.epochs,
        seed=args.seed,
        train_per_class=args.train_per_class,
        val_per_class=args.val_per_class,
    )
    if args.json:
        payload = [
            {
                "backend": r.backend,
                "epochs": [vars(e) for e in r.epochs],
            }
            for r in results
        ]
        print(json.dumps(payload, indent=2))
    else:
        print(_bench_tables(results))
    return 0


# -- argument surface --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="roadwatch", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the live classification pipeline")
    run.add_argument("--catalogue", required=True)
    run.add_argument("--backend", required=True, help=".rwb model path or synthetic[:pool=N]")
    run.add_argument("--scheme", default="five_class")
    run.add_argument("--output-dir", required=True)
    run.add_argument("--interval", type=float, default=60.0)
    run.add_argument("--workers", type=int, default=4)
    run.add_argument("--timeout", type=float, default=10.0)
    run.add_argument("--batch-size", type=int, default=16)
    run.add_argument("--cycles", type=int, default=None, help="stop after N poll cycles")
    run.add_argument("--port", type=int, default=None, help="also serve the HTTP API")
    run.add_argument(
        "--db-url",
        default=os.environ.get("RW_DB_URL"),
        help="submission database URL (defaults to RW_DB_URL)",
    )
    run.set_defaults(func=cmd_run)

    fetch = sub.add_parser("fetch", help="fetch one snapshot per camera to files")
    fetch.add_argument("--catalogue", required=True)
    fetch.add_argument("--out", required=True)
    fetch.add_argument("--timeout", type=float, default=10.0)
    fetch.set_defaults(func=cmd_fetch)

    classify = sub.add_parser("classify", help="classify a directory of images to a record CSV")
    classify.add_argument("--backend", required=True)
    classify.add_argument("--scheme", default="five_class")
    classify.add_argument("--images", required=True)
    classify.add_argument("--out", required=True, help="output directory for record CSVs")
    classify.add_argument("--catalogue", default=None, help="coordinates source (ids match file stems)")
    classify.add_argument("--batch-size", type=int, default=16)
    classify.set_defaults(func=cmd_classify)

    split = sub.add_parser("split", help="assign a train/validation split in a manifest")
    split.add_argument("--manifest", required=True)
    split.add_argument("--ratio", type=float, default=None)
    split.add_argument("--fixed-validation", type=int, default=None, help="per-class validation count")
    split.add_argument("--seed", type=int, required=True)
    split.add_argument("--out", required=True)
    split.set_defaults(func=cmd_split)

    pseudo = sub.add_parser("pseudolabel", help="pseudo-label a directory of images")
    pseudo.add_argument("--backend", required=True)
    pseudo.add_argument("--scheme", default="five_class")
    pseudo.add_argument("--images", required=True)
    pseudo.add_argument("--out", required=True)
    pseudo.add_argument("--batch-size", type=int, default=16)
    pseudo.set_defaults(func=cmd_pseudolabel)

    verdicts = sub.add_parser("verdict-import", help="apply a verdict batch to a manifest")
    verdicts.add_argument("--manifest", required=True)
    verdicts.add_argument("--run", required=True, help="pseudo-label run JSON")
    verdicts.add_argument("--verdicts", required=True, help="verdict batch JSON array")
    verdicts.add_argument("--phase", default="")
    verdicts.add_argument("--out", required=True)
    verdicts.set_defaults(func=cmd_verdict_import)

    report = sub.add_parser("report", help="classification report from a confusion matrix")
    report.add_argument("--matrix", required=True)
    report.add_argument("--decimals", type=int, default=2)
    report.add_argument("--json", action="store_true")
    report.set_defaults(func=cmd_report)

    map_cmd = sub.add_parser("map", help="build a GeoJSON or HTML map from record CSVs")
    map_cmd.add_argument("--in", required=True, help="record CSV file or directory")
    map_cmd.add_argument("--out", required=True, help=".geojson or .html output")
    map_cmd.add_argument("--region", default=None, help="lat1,lon1,lat2,lon2")
    map_cmd.add_argument("--stale-after", type=float, default=60.0, help="minutes")
    map_cmd.add_argument("--now", default=None, help="ISO timestamp override")
    map_cmd.set_defaults(func=cmd_map)

    serve = sub.add_parser("serve", help="serve the HTTP API over files")
    serve.add_argument("--port", type=int, default=8099)
    serve.add_argument("--scheme", default="five_class")
    serve.add_argument("--manifest", default=None)
    serve.add_argument("--run", default=None, help="pseudo-label run JSON for the review queue")
    serve.add_argument("--records", default=None, help="record CSV for /api/records and the map")
    serve.add_argument("--phase", default="")
    serve.set_defaults(func=cmd_serve)

    bench = sub.add_parser("bench", help="train/validation timing tables for backends")
    bench.add_argument("--backends", default="baseline:pool=8,baseline:pool=2")
    bench.add_argument("--epochs", type=int, default=12)
    bench.add_argument("--seed", type=int, required=True)
    bench.add_argument("--train-per-class", type=int, default=400)
    bench.add_argument("--val-per-class", type=int, default=100)
    bench.add_argument("--json", action="store_true")
    bench.set_defaults(func=cmd_bench)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
