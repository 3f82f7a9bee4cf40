"""Confusion-matrix accumulation and evaluation metrics.

Per-class precision, recall and F1 are computed one-vs-rest from a K-by-K
matrix of true-versus-predicted counts; accuracy is the diagonal share.
Values are kept at full precision internally and rounded half-away-from-zero
only when a report is rendered.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Iterable

import numpy as np

from .conditions import ClassScheme, RoadCondition, parse_condition, scheme_by_name


class SchemeMismatchError(ValueError):
    """A class does not belong to the matrix's scheme, or schemes differ."""


class EmptyMatrixError(ValueError):
    """A ratio metric was requested from a matrix with no observations."""


def round_half_away(value: float, decimals: int = 2) -> float:
    """Round to `decimals` places, ties away from zero, on the exact binary value."""
    quantum = Decimal(1).scaleb(-decimals)
    return float(Decimal(value).quantize(quantum, rounding=ROUND_HALF_UP))


class MetricValue(float):
    """A float metric; ``undefined`` is True when the denominator was zero."""

    undefined: bool

    def __new__(cls, value: float, undefined: bool = False) -> "MetricValue":
        obj = super().__new__(cls, value)
        obj.undefined = undefined
        return obj


@dataclass
class ConfusionMatrix:
    """K-by-K counts; rows are true classes, columns are predicted classes.

    Row/column order follows the scheme's fixed class order.
    """

    scheme: ClassScheme
    counts: np.ndarray

    def __post_init__(self) -> None:
        k = len(self.scheme)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape != (k, k):
            raise ValueError(f"counts must be {k}x{k} for scheme {self.scheme.name!r}")
        if (self.counts < 0).any():
            raise ValueError("counts must be non-negative")

    @classmethod
    def empty(cls, scheme: ClassScheme) -> "ConfusionMatrix":
        k = len(scheme)
        return cls(scheme, np.zeros((k, k), dtype=np.int64))

    @classmethod
    def from_pairs(
        cls, scheme: ClassScheme, pairs: Iterable[tuple[RoadCondition, RoadCondition]]
    ) -> "ConfusionMatrix":
        cm = cls.empty(scheme)
        for truth, predicted in pairs:
            cm.add(truth, predicted)
        return cm

    @classmethod
    def from_table(
        cls, scheme: ClassScheme, table: dict[RoadCondition, dict[RoadCondition, int]]
    ) -> "ConfusionMatrix":
        """Build from a nested ``{true: {predicted: count}}`` mapping."""
        cm = cls.empty(scheme)
        for truth, row in table.items():
            i = scheme.index(truth)
            for predicted, n in row.items():
                cm.counts[i, scheme.index(predicted)] += n
        return cm

    def add(self, truth: RoadCondition, predicted: RoadCondition) -> "ConfusionMatrix":
        """Record one observation; exactly one cell is incremented."""
        try:
            i, j = self.scheme.index(truth), self.scheme.index(predicted)
        except ValueError as exc:
            raise SchemeMismatchError(str(exc)) from None
        self.counts[i, j] += 1
        return self

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def support(self, condition: RoadCondition) -> int:
        return int(self.counts[self.scheme.index(condition)].sum())

    def copy(self) -> "ConfusionMatrix":
        return ConfusionMatrix(self.scheme, self.counts.copy())

    def to_json(self) -> str:
        return json.dumps(
            {
                "scheme": self.scheme.name,
                "classes": [c.value for c in self.scheme.classes],
                "counts": self.counts.tolist(),
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "ConfusionMatrix":
        data = json.loads(text)
        scheme = scheme_by_name(data["scheme"])
        counts = np.asarray(data["counts"], dtype=np.int64)
        if "classes" in data:
            listed = tuple(parse_condition(c) for c in data["classes"])
            if listed != scheme.classes:
                order = [scheme.classes.index(c) for c in listed]
                counts = counts[np.ix_(order, order)]  # reorder into scheme order
        return cls(scheme, counts)


def accumulate(cm: ConfusionMatrix, truth: RoadCondition, predicted: RoadCondition) -> ConfusionMatrix:
    """Record one (truth, predicted) observation into `cm`."""
    return cm.add(truth, predicted)


def merge(a: ConfusionMatrix, b: ConfusionMatrix) -> ConfusionMatrix:
    """Combine two matrices accumulated over disjoint shards."""
    if a.scheme != b.scheme:
        raise SchemeMismatchError(f"cannot merge schemes {a.scheme.name!r} and {b.scheme.name!r}")
    return ConfusionMatrix(a.scheme, a.counts + b.counts)


def _ratio(numerator: int, denominator: int) -> MetricValue:
    if denominator == 0:
        return MetricValue(0.0, undefined=True)
    return MetricValue(numerator / denominator)


def precision(cm: ConfusionMatrix, condition: RoadCondition) -> MetricValue:
    """TP / (TP + FP): the class column's diagonal share."""
    j = cm.scheme.index(condition)
    return _ratio(int(cm.counts[j, j]), int(cm.counts[:, j].sum()))


def recall(cm: ConfusionMatrix, condition: RoadCondition) -> MetricValue:
    """TP / (TP + FN): the class row's diagonal share."""
    i = cm.scheme.index(condition)
    return _ratio(int(cm.counts[i, i]), int(cm.counts[i].sum()))


def f1(cm: ConfusionMatrix, condition: RoadCondition) -> MetricValue:
    """Harmonic mean of precision and recall."""
    p, r = precision(cm, condition), recall(cm, condition)
    if p + r == 0.0:
        return MetricValue(0.0, undefined=p.undefined or r.undefined)
    return MetricValue(2.0 * p * r / (p + r), undefined=p.undefined or r.undefined)


def accuracy(cm: ConfusionMatrix) -> float:
    """Diagonal count over total count."""
    total = cm.total
    if total == 0:
        raise EmptyMatrixError("accuracy of an empty matrix is undefined")
    return float(np.trace(cm.counts)) / total


@dataclass(frozen=True)
class ReportRow:
    condition: RoadCondition
    precision: float
    recall: float
    f1: float
    support: int
    undefined: frozenset[str]


@dataclass(frozen=True)
class ClassificationReport:
    """Per-class precision/recall/F1/support plus overall accuracy."""

    scheme: ClassScheme
    rows: tuple[ReportRow, ...]
    accuracy: float
    total: int
    decimals: int

    def to_text(self) -> str:
        width = max(len(r.condition.display) for r in self.rows)
        out = io.StringIO()
        out.write(f"{'':{width}}  precision  recall  f1-score  support\n")
        for r in self.rows:
            out.write(
                f"{r.condition.display:{width}}  {r.precision:9.{self.decimals}f}"
                f"  {r.recall:6.{self.decimals}f}  {r.f1:8.{self.decimals}f}  {r.support:7d}\n"
            )
        out.write(f"\naccuracy: {self.accuracy_percent:.1f}%  ({self.total} samples)\n")
        return out.getvalue()

    @property
    def accuracy_percent(self) -> float:
        return round_half_away(self.accuracy * 100.0, 1)

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme.name,
            "classes": {
                r.condition.value: {
                    "precision": r.precision,
                    "recall": r.recall,
                    "f1": r.f1,
                    "support": r.support,
                    **({"undefined": sorted(r.undefined)} if r.undefined else {}),
                }
                for r in self.rows
            },
            "accuracy": self.accuracy_percent,
            "total": self.total,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        lines = ["class,precision,recall,f1,support"]
        for r in self.rows:
            lines.append(f"{r.condition.value},{r.precision},{r.recall},{r.f1},{r.support}")
        lines.append(f"accuracy,{self.accuracy_percent},,,{self.total}")
        return "\n".join(lines) + "\n"


def render_report(cm: ConfusionMatrix, decimals: int = 2) -> ClassificationReport:
    """Compute a classification report, rounding half-away-from-zero for display."""
    if cm.total == 0:
        raise EmptyMatrixError("cannot report on an empty matrix")
    rows = []
    for condition in cm.scheme.classes:
        p, r, f = precision(cm, condition), recall(cm, condition), f1(cm, condition)
        flags = frozenset(
            name for name, metric in (("precision", p), ("recall", r), ("f1", f)) if metric.undefined
        )
        rows.append(
            ReportRow(
                condition=condition,
                precision=round_half_away(p, decimals),
                recall=round_half_away(r, decimals),
                f1=round_half_away(f, decimals),
                support=cm.support(condition),
                undefined=flags,
            )
        )
    return ClassificationReport(
        scheme=cm.scheme,
        rows=tuple(rows),
        accuracy=accuracy(cm),
        total=cm.total,
        decimals=decimals,
    )
