"""
Semi-automated labelling workflow
=================================

The loop that turns unlabelled images into a training corpus:

1. train a quick baseline on what is already labelled,
2. pseudo-label the unlabelled pool with it,
3. review high-confidence suggestions (accept / relabel / poor / refuse),
4. fold the verdicts into the manifest and re-split for the next round.

Everything here runs on the synthetic colour-field corpus, whose generator
labels are ground truth.
"""

import tempfile
from pathlib import Path

import numpy as np

from roadwatch import (
    FIVE_CLASS,
    DatasetManifest,
    QueueFilter,
    ReviewVerdict,
    VerdictKind,
    apply_verdicts,
    build_review_queue,
    judgment_summary,
    pseudo_label,
    stratified_split,
    train_baseline,
    write_manifest,
)
from roadwatch.dataset import enqueue_pending
from roadwatch.imaging import encode_png
from roadwatch.synthetic import make_corpus, make_sample

rng = np.random.default_rng(7)
workdir = Path(tempfile.mkdtemp(prefix="roadwatch-demo-"))

# 1. a baseline trained on the existing labelled corpus
train = make_corpus(FIVE_CLASS, per_class=100, seed=1)
backend = train_baseline(train, epochs=12)
print(f"baseline trained on {len(train)} samples")

# 2. pseudo-label an unlabelled pool (files on disk, like production)
pool = []
truth = {}
for i in range(60):
    condition = FIVE_CLASS.classes[int(rng.integers(0, 5))]
    path = workdir / f"unlabelled-{i}.png"
    path.write_bytes(encode_png(make_sample(condition, rng)))
    pool.append(path)
    truth[str(path)] = condition
run = pseudo_label(backend, pool)
print(f"pseudo-labelled {run.total()} images: "
      + ", ".join(f"{c.value}={n}" for c, n in run.class_counts().items() if n))

# 3. review the highest-confidence suggestions first
queue = build_review_queue(run, QueueFilter(confidence_range=(0.8, 1.0)))
print(f"review queue: {len(queue)} high-confidence suggestions")

manifest = DatasetManifest(FIVE_CLASS)
enqueue_pending(manifest, run, phase="round-2")
verdicts = []
audit = []
for entry in queue:
    actual = truth[entry.image_ref]
    if actual is entry.label:
        verdict = ReviewVerdict(entry.image_ref, VerdictKind.ACCEPTABLE)
    else:
        verdict = ReviewVerdict(entry.image_ref, VerdictKind.RELABEL, actual)
    verdicts.append(verdict)
    audit.append((entry.label, VerdictKind.ACCEPTABLE if actual is entry.label else VerdictKind.REFUSED))
manifest = apply_verdicts(manifest, verdicts)
summary = judgment_summary(FIVE_CLASS, audit)
print(f"judgment: {summary.total_acceptable} acceptable / {summary.total_refused} refused")

# 4. split for the next training round, deterministically
manifest = stratified_split(manifest, train_ratio=0.9, seed=42)
out = workdir / "round2.jsonl"
write_manifest(manifest, out)
counts = manifest.split_counts()
print("next-round split per class (train/validation):")
for condition, (n_train, n_val) in counts.items():
    print(f"  {condition.value:<8} {n_train:>4} / {n_val}")
print(f"manifest written to {out}")
