"""Road condition labels and the fixed classification schemes."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class RoadCondition(str, Enum):
    """A road surface condition label."""

    DRY = "dry"
    WET = "wet"
    SNOW = "snow"
    OFFLINE = "offline"
    POOR = "poor"
    NON_DRY = "non_dry"  # coarse bucket for wet/snow/slush/ice in the two-class scheme

    def __str__(self) -> str:
        return self.value

    @property
    def display(self) -> str:
        """Human-facing name, e.g. ``Non-dry``."""
        if self is RoadCondition.NON_DRY:
            return "Non-dry"
        return self.value.capitalize()


def parse_condition(text: str) -> RoadCondition:
    """Parse a condition label from user-facing text (case-insensitive)."""
    key = text.strip().lower().replace("-", "_").replace(" ", "_")
    try:
        return RoadCondition(key)
    except ValueError:
        valid = ", ".join(c.value for c in RoadCondition)
        raise ValueError(f"unknown road condition {text!r} (expected one of: {valid})") from None


@dataclass(frozen=True)
class ClassScheme:
    """An ordered set of output classes.

    The class order is fixed: it is the argmax tie-breaking order and the
    row/column order of confusion matrices built for the scheme.
    """

    name: str
    classes: tuple[RoadCondition, ...]

    def __post_init__(self) -> None:
        if len(set(self.classes)) != len(self.classes):
            raise ValueError("scheme classes must be distinct")
        if not self.classes:
            raise ValueError("scheme needs at least one class")

    def __len__(self) -> int:
        return len(self.classes)

    def __contains__(self, condition: object) -> bool:
        return condition in self.classes

    def index(self, condition: RoadCondition) -> int:
        try:
            return self.classes.index(condition)
        except ValueError:
            raise ValueError(f"{condition!r} is not a class of scheme {self.name!r}") from None


TWO_CLASS = ClassScheme("two_class", (RoadCondition.DRY, RoadCondition.NON_DRY))
FOUR_CLASS = ClassScheme(
    "four_class",
    (RoadCondition.DRY, RoadCondition.WET, RoadCondition.SNOW, RoadCondition.OFFLINE),
)
FIVE_CLASS = ClassScheme(
    "five_class",
    (RoadCondition.DRY, RoadCondition.WET, RoadCondition.SNOW, RoadCondition.OFFLINE, RoadCondition.POOR),
)

SCHEMES: dict[str, ClassScheme] = {s.name: s for s in (TWO_CLASS, FOUR_CLASS, FIVE_CLASS)}


def scheme_by_name(name: str) -> ClassScheme:
    try:
        return SCHEMES[name]
    except KeyError:
        raise ValueError(f"unknown scheme {name!r} (expected one of: {', '.join(SCHEMES)})") from None
