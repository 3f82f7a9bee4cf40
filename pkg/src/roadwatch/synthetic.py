"""Synthetic colour-field corpus for desk-scale training and verification.

Each class gets a characteristic base colour; samples are that colour plus
per-pixel uniform noise. The generator's labels are ground truth, which
makes the corpus an oracle for backend training, pseudo-labelling and
benchmark tests.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .conditions import ClassScheme, RoadCondition
from .imaging import Image

BASE_COLOURS: dict[RoadCondition, tuple[int, int, int]] = {
    RoadCondition.DRY: (198, 178, 148),
    RoadCondition.WET: (58, 72, 112),
    RoadCondition.SNOW: (235, 235, 242),
    RoadCondition.OFFLINE: (8, 8, 8),
    RoadCondition.POOR: (120, 118, 122),
    RoadCondition.NON_DRY: (80, 95, 130),
}


def make_sample(
    condition: RoadCondition,
    rng: np.random.Generator,
    size: tuple[int, int] = (64, 64),
    noise: int = 25,
) -> Image:
    """One noisy colour-field image for the given class."""
    w, h = size
    base = np.array(BASE_COLOURS[condition], dtype=np.int16)
    jitter = rng.integers(-noise, noise + 1, size=(h, w, 3), dtype=np.int16)
    return Image(np.clip(base + jitter, 0, 255).astype(np.uint8))


def make_corpus(
    scheme: ClassScheme,
    per_class: int,
    seed: int,
    size: tuple[int, int] = (64, 64),
    noise: int = 25,
) -> list[tuple[Image, RoadCondition]]:
    """A balanced labelled corpus: `per_class` samples for every scheme class.

    Sample order interleaves classes and the whole list is shuffled
    deterministically by `seed`.
    """
    rng = np.random.default_rng(seed)
    samples = [
        (make_sample(condition, rng, size=size, noise=noise), condition)
        for _ in range(per_class)
        for condition in scheme.classes
    ]
    rng.shuffle(samples)  # type: ignore[arg-type]
    return samples


def dark_bright_corpus(per_class: int, seed: int, size: tuple[int, int] = (64, 64)) -> list[tuple[Image, RoadCondition]]:
    """A linearly separable two-class set: near-black vs near-white fields."""
    rng = np.random.default_rng(seed)
    out: list[tuple[Image, RoadCondition]] = []
    w, h = size
    for _ in range(per_class):
        dark = rng.integers(0, 40, size=(h, w, 3), dtype=np.int16)
        bright = rng.integers(215, 256, size=(h, w, 3), dtype=np.int16)
        out.append((Image(dark.astype(np.uint8)), RoadCondition.NON_DRY))
        out.append((Image(bright.astype(np.uint8)), RoadCondition.DRY))
    return out


def class_counts(samples: Sequence[tuple[Image, RoadCondition]]) -> dict[RoadCondition, int]:
    counts: dict[RoadCondition, int] = {}
    for _, condition in samples:
        counts[condition] = counts.get(condition, 0) + 1
    return counts
