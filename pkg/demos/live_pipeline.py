"""
Live pipeline against simulated cameras
=======================================

Stands up a local HTTP "camera network", runs the full pipeline over it
(acquire -> integrity check -> batch classify -> persist -> submit), then
renders the resulting records as a self-contained HTML map. The stages run
concurrently: classification of early batches overlaps later fetches.
"""

import tempfile
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np

from roadwatch import (
    CameraRecord,
    FIVE_CLASS,
    InMemorySink,
    Pipeline,
    PipelineConfig,
    build_layer,
    emit_html,
    read_all_records,
    train_baseline,
)
from roadwatch.imaging import encode_png
from roadwatch.synthetic import make_corpus, make_sample

rng = np.random.default_rng(11)

# -- a tiny camera network: one endpoint per simulated camera --
snapshots = {
    f"cam{i:02d}": encode_png(make_sample(FIVE_CLASS.classes[i % 5], rng))
    for i in range(12)
}


class CameraHandler(BaseHTTPRequestHandler):
    def do_GET(self):
        body = snapshots.get(self.path.strip("/"))
        if body is None:
            self.send_error(404)
            return
        self.send_response(200)
        self.send_header("Content-Type", "image/png")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


httpd = ThreadingHTTPServer(("127.0.0.1", 0), CameraHandler)
threading.Thread(target=httpd.serve_forever, daemon=True).start()
port = httpd.server_address[1]
catalogue = [
    CameraRecord(cam, f"http://127.0.0.1:{port}/{cam}", 44.0 + i * 0.8, -79.0 + i * 1.7)
    for i, cam in enumerate(snapshots)
]
print(f"simulating {len(catalogue)} cameras on port {port}")

# -- the pipeline: quick baseline backend, two poll cycles --
backend = train_baseline(make_corpus(FIVE_CLASS, per_class=60, seed=3), epochs=12)
workdir = Path(tempfile.mkdtemp(prefix="roadwatch-live-"))
sink = InMemorySink()
pipeline = Pipeline(
    PipelineConfig(
        catalogue=catalogue,
        backend=backend,
        output_dir=workdir,
        poll_interval_s=0.2,
        workers=4,
        batch_size=4,
        batch_linger_s=0.3,
        max_cycles=2,
        sink=sink,
    )
).start()
pipeline.wait_cycles(timeout_s=30)
pipeline.stop(drain_submission_s=5.0)

counts = pipeline.reconciliation()
print("stage counters at shutdown:")
for key, value in counts.items():
    print(f"  {key:<20} {value}")

# -- map the latest record per camera --
records = read_all_records(workdir)
layer = build_layer(records)
out = workdir / "map.html"
out.write_bytes(emit_html(layer))
print(f"{len(layer.features)} cameras mapped -> {out}")
httpd.shutdown()
