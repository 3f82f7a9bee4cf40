"""roadwatch: near-real-time road condition classification from street cameras.

The package covers the full production loop: catalogue-driven snapshot
ingestion, image integrity checks and resizing, batched classification
through pluggable backends, record persistence and remote submission, and
map generation. Alongside the live pipeline it ships the dataset tooling
used to build labelled corpora: stratified splits, sensor-assisted
auto-labelling, pseudo-labelling runs, review queues and judgment audits.
"""

from .catalogue import (
    CameraRecord,
    CatalogueError,
    FailureKind,
    FetchFailure,
    Snapshot,
    fetch_snapshot,
    load_catalogue,
    run_poller,
)
from .classify import (
    Backend,
    BaselineBackend,
    BaselineTrainer,
    ClassDistribution,
    ConstantBackend,
    LabelRecord,
    classify_batch,
    load_external_backend,
    save_backend,
    train_baseline,
)
from .conditions import (
    FIVE_CLASS,
    FOUR_CLASS,
    SCHEMES,
    TWO_CLASS,
    ClassScheme,
    RoadCondition,
    parse_condition,
    scheme_by_name,
)
from .dataset import (
    DatasetManifest,
    LabelledSample,
    PseudoLabelRun,
    QueueFilter,
    ReviewVerdict,
    RwisObservation,
    Source,
    Split,
    VerdictKind,
    apply_verdicts,
    build_review_queue,
    haversine_km,
    judgment_summary,
    map_sensor_code,
    match_rwis,
    pseudo_label,
    read_manifest,
    split_fixed_validation,
    stratified_split,
    write_manifest,
)
from .imaging import (
    AugmentationConfig,
    CorruptImageError,
    Image,
    augment,
    decode_and_check,
    encode_png,
    rescale_01,
    resize,
)
from .mapgen import BoundingBox, MapLayer, build_layer, emit_geojson, emit_html
from .metrics import (
    ClassificationReport,
    ConfusionMatrix,
    accumulate,
    accuracy,
    f1,
    merge,
    precision,
    recall,
    render_report,
)
from .pipeline import (
    DatabaseSink,
    InMemorySink,
    Pipeline,
    PipelineConfig,
    RecordWriter,
    Submitter,
    read_all_records,
    run_pipeline,
)
from .service import ApiServer, ServiceState, serve_api

__version__ = "0.1.0"
