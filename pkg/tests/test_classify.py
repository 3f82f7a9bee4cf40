"""Backend contract, batched labelling, baseline training and serialization."""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np
import pytest

from roadwatch.classify import (
    BackendFormatError,
    BaselineTrainer,
    BatchMismatchError,
    ClassDistribution,
    ConstantBackend,
    classify_batch,
    load_external_backend,
    save_backend,
    train_baseline,
)
from roadwatch.conditions import FIVE_CLASS, FOUR_CLASS, TWO_CLASS, RoadCondition
from roadwatch.imaging import Image, rescale_01
from roadwatch.synthetic import dark_bright_corpus, make_corpus

NOW = datetime(2020, 1, 11, 21, 0, tzinfo=timezone.utc)


@dataclass(frozen=True)
class FakeCamera:
    camera_id: str
    latitude: float = 45.0
    longitude: float = -75.0


def blank(width=64, height=64) -> Image:
    return Image(np.zeros((height, width, 3), dtype=np.uint8))


class TestClassDistribution:
    def test_probabilities_must_sum_to_one(self):
        with pytest.raises(ValueError):
            ClassDistribution(TWO_CLASS, (0.6, 0.6))

    def test_arity_must_match_scheme(self):
        with pytest.raises(ValueError):
            ClassDistribution(FIVE_CLASS, (0.5, 0.5))

    def test_argmax_tie_breaks_to_lowest_index(self):
        dist = ClassDistribution(FIVE_CLASS, (0.25, 0.25, 0.25, 0.25, 0.0))
        assert dist.argmax() == RoadCondition.DRY
        dist = ClassDistribution(FIVE_CLASS, (0.0, 0.3, 0.3, 0.3, 0.1))
        assert dist.argmax() == RoadCondition.WET

    def test_confidence_is_max_probability(self):
        dist = ClassDistribution(TWO_CLASS, (0.7, 0.3))
        assert dist.confidence == 0.7


class TestClassifyBatch:
    def test_empty_batch(self):
        backend = ConstantBackend(ClassDistribution(TWO_CLASS, (1.0, 0.0)))
        assert classify_batch(backend, [], [], NOW) == []

    def test_constant_backend_three_images(self):
        dist = ClassDistribution(FIVE_CLASS, (0.7, 0.075, 0.075, 0.075, 0.075))
        backend = ConstantBackend(dist)
        cams = [FakeCamera(f"c{i}") for i in range(3)]
        records = classify_batch(backend, [blank()] * 3, cams, NOW)
        assert [r.camera_id for r in records] == ["c0", "c1", "c2"]
        assert all(r.label == RoadCondition.DRY for r in records)
        assert all(r.confidence == 0.7 for r in records)
        assert all(r.timestamp == NOW for r in records)

    def test_length_mismatch(self):
        backend = ConstantBackend(ClassDistribution(TWO_CLASS, (1.0, 0.0)))
        with pytest.raises(BatchMismatchError):
            classify_batch(backend, [blank()], [], NOW)

    def test_wrong_image_dims_names_index(self):
        backend = ConstantBackend(ClassDistribution(TWO_CLASS, (1.0, 0.0)))
        cams = [FakeCamera("a"), FakeCamera("b")]
        with pytest.raises(BatchMismatchError, match="index 1"):
            classify_batch(backend, [blank(), blank(32, 32)], cams, NOW)

    def test_permutation_equivariance(self):
        corpus = make_corpus(FIVE_CLASS, per_class=4, seed=5)
        backend = train_baseline(corpus, epochs=12)
        images = [img for img, _ in corpus[:10]]
        cams = [FakeCamera(f"c{i}") for i in range(10)]
        forward = classify_batch(backend, images, cams, NOW)
        perm = list(reversed(range(10)))
        backward = classify_batch(
            backend, [images[i] for i in perm], [cams[i] for i in perm], NOW
        )
        assert [r.label for r in backward] == [forward[i].label for i in perm]
        assert [r.confidence for r in backward] == [forward[i].confidence for i in perm]


class TestBaselineTraining:
    def test_separable_two_class_reaches_full_training_accuracy(self):
        corpus = dark_bright_corpus(per_class=40, seed=11)
        trainer = BaselineTrainer(corpus)
        acc = 0.0
        for _ in range(20):
            acc = trainer.epoch()
            if acc == 1.0:
                break
        assert acc == 1.0

    def test_five_class_validation_accuracy(self):
        train = make_corpus(FIVE_CLASS, per_class=80, seed=21)
        val = make_corpus(FIVE_CLASS, per_class=20, seed=22)
        trainer = BaselineTrainer(train)
        for _ in range(12):
            trainer.epoch()
        assert trainer.accuracy_on(val) >= 0.95

    def test_empty_training_set_rejected(self):
        with pytest.raises(ValueError):
            train_baseline([])

    def test_single_class_rejected(self):
        samples = [(blank(), RoadCondition.DRY)] * 4
        with pytest.raises(ValueError, match="single class"):
            train_baseline(samples)

    def test_training_is_deterministic(self):
        corpus = make_corpus(FOUR_CLASS, per_class=10, seed=31)
        a = train_baseline(corpus, epochs=5)
        b = train_baseline(corpus, epochs=5)
        assert np.array_equal(a.weights, b.weights)
        assert np.array_equal(a.bias, b.bias)

    def test_scheme_inferred_from_labels(self):
        corpus = dark_bright_corpus(per_class=5, seed=41)
        backend = train_baseline(corpus, epochs=3)
        assert backend.scheme == TWO_CLASS

    def test_distributions_are_normalized(self):
        corpus = make_corpus(FIVE_CLASS, per_class=10, seed=51)
        backend = train_baseline(corpus, epochs=6)
        tensors = [rescale_01(img) for img, _ in corpus[:8]]
        for dist in backend.classify(tensors):
            assert sum(dist.probabilities) == pytest.approx(1.0, abs=1e-9)


class TestSerialization:
    def test_round_trip_agrees_on_random_tensors(self, tmp_path):
        corpus = make_corpus(FIVE_CLASS, per_class=20, seed=61)
        backend = train_baseline(corpus, epochs=12)
        path = tmp_path / "baseline.rwb"
        save_backend(backend, path)
        loaded = load_external_backend(path, FIVE_CLASS)
        rng = np.random.default_rng(62)
        tensors = [rng.random((64, 64, 3)) for _ in range(100)]
        original = backend.classify(tensors)
        reloaded = loaded.classify(tensors)
        for a, b in zip(original, reloaded):
            assert a.probabilities == pytest.approx(b.probabilities, abs=0.0)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_external_backend(tmp_path / "nope.rwb", FIVE_CLASS)

    def test_scheme_class_count_mismatch(self, tmp_path):
        corpus = make_corpus(FOUR_CLASS, per_class=5, seed=71)
        backend = train_baseline(corpus, epochs=2, scheme=FOUR_CLASS)
        path = tmp_path / "four.rwb"
        save_backend(backend, path)
        with pytest.raises(BackendFormatError, match="4 outputs"):
            load_external_backend(path, FIVE_CLASS)

    def test_garbage_file(self, tmp_path):
        path = tmp_path / "junk.rwb"
        path.write_bytes(b"JUNKJUNKJUNK")
        with pytest.raises(BackendFormatError):
            load_external_backend(path, FIVE_CLASS)

    def test_truncated_file(self, tmp_path):
        corpus = make_corpus(FIVE_CLASS, per_class=5, seed=81)
        backend = train_baseline(corpus, epochs=2)
        path = tmp_path / "trunc.rwb"
        save_backend(backend, path)
        data = path.read_bytes()
        path.write_bytes(data[:-16])
        with pytest.raises(BackendFormatError, match="bytes"):
            load_external_backend(path, FIVE_CLASS)
