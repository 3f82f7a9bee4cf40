"""Classification backends and batched labelling.

A backend maps batches of rescaled image tensors to per-class probability
distributions. The package ships two desk-scale backends: a constant one
for wiring tests and a trainable multinomial logistic regression over
mean-pooled colour features. Trained baselines round-trip through a flat
binary interchange format (magic ``RWB1``) described in `save_backend`.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from .conditions import (
    FIVE_CLASS,
    FOUR_CLASS,
    SCHEMES,
    TWO_CLASS,
    ClassScheme,
    RoadCondition,
)
from .imaging import Image, rescale_01

PROBABILITY_TOLERANCE = 1e-6


class BackendFormatError(ValueError):
    """A serialized backend is malformed or disagrees with the requested scheme."""


class BatchMismatchError(ValueError):
    """Batch inputs are misaligned or images do not fit the backend."""


@dataclass(frozen=True)
class ClassDistribution:
    """Per-class probabilities over a scheme's classes, in scheme order."""

    scheme: ClassScheme
    probabilities: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.probabilities) != len(self.scheme):
            raise ValueError(
                f"{len(self.probabilities)} probabilities for {len(self.scheme)}-class scheme"
            )
        if any(p < 0 for p in self.probabilities):
            raise ValueError("probabilities must be non-negative")
        if abs(sum(self.probabilities) - 1.0) > PROBABILITY_TOLERANCE:
            raise ValueError(f"probabilities sum to {sum(self.probabilities)}, not 1")

    def argmax(self) -> RoadCondition:
        """Most probable class; ties resolve to the lowest class index."""
        best = max(range(len(self.probabilities)), key=lambda i: (self.probabilities[i], -i))
        return self.scheme.classes[best]

    @property
    def confidence(self) -> float:
        return max(self.probabilities)


@dataclass(frozen=True)
class LabelRecord:
    """One classification output tied to a camera and time."""

    camera_id: str
    timestamp: datetime
    label: RoadCondition
    confidence: float
    latitude: float
    longitude: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


@runtime_checkable
class Backend(Protocol):
    """The pluggable classifier contract.

    ``classify`` takes rescaled (h, w, 3) float tensors already sized to
    ``input_dims`` and returns one distribution per input, in order.
    Backends with ``thread_safe`` False are serialized by the pipeline.
    """

    name: str
    input_dims: tuple[int, int]  # (width, height)
    scheme: ClassScheme
    thread_safe: bool

    def classify(self, batch: Sequence[np.ndarray]) -> list[ClassDistribution]: ...


@dataclass(frozen=True)
class ConstantBackend:
    """Returns one fixed distribution for every input; wiring-test stand-in."""

    distribution: ClassDistribution
    name: str = "constant"
    input_dims: tuple[int, int] = (64, 64)
    thread_safe: bool = True

    @property
    def scheme(self) -> ClassScheme:
        return self.distribution.scheme

    def classify(self, batch: Sequence[np.ndarray]) -> list[ClassDistribution]:
        return [self.distribution] * len(batch)


def classify_batch(
    backend: Backend,
    images: Sequence[Image],
    records: Sequence,
    now: datetime,
) -> list[LabelRecord]:
    """Label a batch of images, one record per input, order preserved.

    `records` supplies camera identity and location; it must align with
    `images`. Images must already match the backend's input dimensions.
    """
    if len(images) != len(records):
        raise BatchMismatchError(f"{len(images)} images but {len(records)} camera records")
    expected = backend.input_dims
    for i, img in enumerate(images):
        if (img.width, img.height) != expected:
            raise BatchMismatchError(
                f"image at index {i} is {img.width}x{img.height}, backend expects "
                f"{expected[0]}x{expected[1]}"
            )
    if not images:
        return []
    distributions = backend.classify([rescale_01(img) for img in images])
    if len(distributions) != len(images):
        raise BatchMismatchError(
            f"backend {backend.name!r} returned {len(distributions)} outputs for {len(images)} inputs"
        )
    out = []
    for record, dist in zip(records, distributions):
        out.append(
            LabelRecord(
                camera_id=record.camera_id,
                timestamp=now,
                label=dist.argmax(),
                confidence=dist.confidence,
                latitude=record.latitude,
                longitude=record.longitude,
            )
        )
    return out


# -- trainable baseline --------------------------------------------------------


def _mean_pool(tensor: np.ndarray, pool: int) -> np.ndarray:
    """Average a (h, w, 3) tensor into a flat (pool * pool * 3,) feature vector.

    Features are centred to [-1, 1]; without centring, the shared brightness
    component of near-constant scenes dominates the training gradient.
    """
    h, w = tensor.shape[:2]
    if h % pool == 0 and w % pool == 0:
        pooled = tensor.reshape(pool, h // pool, pool, w // pool, 3).mean(axis=(1, 3))
    else:
        rows = np.array_split(tensor, pool, axis=0)
        pooled = np.stack(
            [np.stack([c.mean(axis=(0, 1)) for c in np.array_split(r, pool, axis=1)]) for r in rows]
        )
    return pooled.reshape(-1) * 2.0 - 1.0


def _softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _as_tensor(sample: Image | np.ndarray) -> np.ndarray:
    if isinstance(sample, Image):
        return rescale_01(sample)
    return np.asarray(sample, dtype=np.float64)


class BaselineBackend:
    """Multinomial logistic regression over mean-pooled colour features.

    Small enough to train in seconds on a laptop, yet sufficient to separate
    colour-field corpora; serves as the default pluggable backend for
    pipeline runs that do not bring their own model.
    """

    def __init__(
        self,
        scheme: ClassScheme,
        weights: np.ndarray,
        bias: np.ndarray,
        pool: int = 8,
        input_dims: tuple[int, int] = (64, 64),
        name: str = "baseline",
    ) -> None:
        k = len(scheme)
        weights = np.asarray(weights, dtype=np.float64)
        bias = np.asarray(bias, dtype=np.float64)
        if weights.shape != (k, pool * pool * 3):
            raise ValueError(f"weights must be ({k}, {pool * pool * 3}), got {weights.shape}")
        if bias.shape != (k,):
            raise ValueError(f"bias must be ({k},), got {bias.shape}")
        self.scheme = scheme
        self.weights = weights
        self.bias = bias
        self.pool = pool
        self.input_dims = input_dims
        self.name = name
        self.thread_safe = True

    def features(self, batch: Sequence[np.ndarray]) -> np.ndarray:
        return np.stack([_mean_pool(np.asarray(t, dtype=np.float64), self.pool) for t in batch])

    def classify(self, batch: Sequence[np.ndarray]) -> list[ClassDistribution]:
        if not batch:
            return []
        probs = _softmax(self.features(batch) @ self.weights.T + self.bias)
        return [ClassDistribution(self.scheme, tuple(row)) for row in probs]


class BaselineTrainer:
    """Full-batch gradient descent on the baseline model, one step per epoch."""

    def __init__(
        self,
        train: Sequence[tuple[Image | np.ndarray, RoadCondition]],
        scheme: ClassScheme | None = None,
        lr: float = 0.5,
        pool: int = 8,
        input_dims: tuple[int, int] = (64, 64),
        seed: int = 0,
        name: str = "baseline",
    ) -> None:
        if not train:
            raise ValueError("training set is empty")
        labels = [label for _, label in train]
        present = set(labels)
        if len(present) < 2:
            raise ValueError(f"training set has a single class ({present.pop().value}); need >= 2")
        if scheme is None:
            scheme = _smallest_scheme(present)
        for label in present:
            if label not in scheme:
                raise ValueError(f"label {label.value!r} not in scheme {scheme.name!r}")
        self.scheme = scheme
        self.lr = lr
        self.pool = pool
        self.name = name
        self.backend = BaselineBackend(
            scheme,
            np.zeros((len(scheme), pool * pool * 3)),
            np.zeros(len(scheme)),
            pool=pool,
            input_dims=input_dims,
            name=name,
        )
        self.seed = seed  # reserved for stochastic variants; training is deterministic
        self.features = self.backend.features([_as_tensor(t) for t, _ in train])
        self.targets = np.zeros((len(train), len(scheme)))
        for i, label in enumerate(labels):
            self.targets[i, scheme.index(label)] = 1.0

    def epoch(self) -> float:
        """One gradient step; returns training accuracy after the step."""
        w, b = self.backend.weights, self.backend.bias
        probs = _softmax(self.features @ w.T + b)
        grad_scores = (probs - self.targets) / len(self.features)
        self.backend = BaselineBackend(
            self.scheme,
            w - self.lr * (grad_scores.T @ self.features),
            b - self.lr * grad_scores.sum(axis=0),
            pool=self.backend.pool,
            input_dims=self.backend.input_dims,
            name=self.name,
        )
        return self.training_accuracy()

    def training_accuracy(self) -> float:
        probs = _softmax(self.features @ self.backend.weights.T + self.backend.bias)
        return float((probs.argmax(axis=1) == self.targets.argmax(axis=1)).mean())

    def accuracy_on(self, samples: Sequence[tuple[Image | np.ndarray, RoadCondition]]) -> float:
        if not samples:
            raise ValueError("empty evaluation set")
        feats = self.backend.features([_as_tensor(t) for t, _ in samples])
        probs = _softmax(feats @ self.backend.weights.T + self.backend.bias)
        truth = np.array([self.scheme.index(label) for _, label in samples])
        return float((probs.argmax(axis=1) == truth).mean())


def _smallest_scheme(present: set[RoadCondition]) -> ClassScheme:
    for scheme in (TWO_CLASS, FOUR_CLASS, FIVE_CLASS):
        if all(label in scheme for label in present):
            return scheme
    raise ValueError(f"no standard scheme covers labels {sorted(l.value for l in present)}")


def train_baseline(
    train: Sequence[tuple[Image | np.ndarray, RoadCondition]],
    epochs: int = 12,
    lr: float = 0.5,
    scheme: ClassScheme | None = None,
    pool: int = 8,
    input_dims: tuple[int, int] = (64, 64),
    seed: int = 0,
) -> BaselineBackend:
    """Train the baseline backend; deterministic for a fixed seed and inputs."""
    trainer = BaselineTrainer(train, scheme=scheme, lr=lr, pool=pool, input_dims=input_dims, seed=seed)
    for _ in range(epochs):
        trainer.epoch()
    return trainer.backend


# -- flat interchange format ---------------------------------------------------

_MAGIC = b"RWB1"
_HEADER = struct.Struct("<4sBBHIIII")  # magic, classes, pool, reserved, w, h, classes, features


def save_backend(backend: BaselineBackend, path: str | Path) -> None:
    """Write the baseline's weights in the flat interchange format.

    Layout (all integers little-endian): ``RWB1`` magic, u8 class count,
    u8 pool size, u16 reserved, u32 input width, u32 input height,
    u32 class count (again, as a consistency check), u32 feature count,
    then the row-major float64 weight matrix and the float64 bias vector.
    Weights apply to mean-pooled [0, 1] pixels centred to [-1, 1].
    """
    k, d = backend.weights.shape
    header = _HEADER.pack(
        _MAGIC, k, backend.pool, 0, backend.input_dims[0], backend.input_dims[1], k, d
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(backend.weights.astype("<f8").tobytes(order="C"))
        fh.write(backend.bias.astype("<f8").tobytes())


def load_external_backend(path: str | Path, scheme: ClassScheme) -> BaselineBackend:
    """Load a serialized backend, validating it against the requested scheme."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"backend file not found: {path}")
    raw = path.read_bytes()
    if len(raw) < _HEADER.size or raw[:4] != _MAGIC:
        raise BackendFormatError(f"{path}: not a {_MAGIC.decode()} backend file")
    magic, k8, pool, _, width, height, k32, d = _HEADER.unpack_from(raw)
    if k8 != k32:
        raise BackendFormatError(f"{path}: inconsistent class counts {k8} vs {k32}")
    if k8 != len(scheme):
        raise BackendFormatError(
            f"{path}: model has {k8} outputs but scheme {scheme.name!r} has {len(scheme)} classes"
        )
    expected = _HEADER.size + 8 * (k8 * d + k8)
    if len(raw) != expected:
        raise BackendFormatError(f"{path}: expected {expected} bytes, found {len(raw)}")
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    weights = body[: k8 * d].reshape(k8, d)
    bias = body[k8 * d :]
    return BaselineBackend(scheme, weights, bias, pool=pool, input_dims=(width, height))


def scheme_for_class_count(count: int) -> ClassScheme:
    for scheme in SCHEMES.values():
        if len(scheme) == count:
            return scheme
    raise BackendFormatError(f"no standard scheme with {count} classes")
