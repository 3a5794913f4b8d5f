"""Seven-concern taxonomy, DP levels, scenarios, and the matching rule.

The concern list is a fixed catalog: seven user privacy concerns, each with
a stable integer id, a short abbreviation, and the user-facing sentence
shown in the concern picker. Concerns 1-4 express distrust of the
organization holding raw data; selecting any of them forces local DP.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import Iterable

from .errors import MalformedInputError, MalformedSelectionError, ValidationError


@dataclass(frozen=True, slots=True)
class Concern:
    id: int
    abbreviation: str
    description: str


_CONCERNS: tuple[Concern, ...] = (
    Concern(1, "Hack", "My data will be hacked by hackers."),
    Concern(2, "Law", "My data will be forcibly acquired by the government."),
    Concern(
        3,
        "Organization",
        "My data will be stolen by unrelated employees in the organization.",
    ),
    Concern(4, "Disclosure", "My data will be disclosed to others by the organization."),
    Concern(
        5,
        "Analyst",
        "My data will be accessed by the data analysts in the organization.",
    ),
    Concern(
        6,
        "Graphs",
        "The graphs and tables generated by the organization will reveal my data.",
    ),
    Concern(
        7,
        "Share",
        "The organization will reveal my data when sharing the processed dataset "
        "with others.",
    ),
)

ALL_CONCERN_IDS = frozenset(c.id for c in _CONCERNS)

# Selecting any of these means the user does not trust the organization with
# raw data, so noise must be added before the data leaves the device.
LOCAL_TRIGGER_IDS = frozenset({1, 2, 3, 4})


def list_concerns() -> list[Concern]:
    """Return the seven concerns in catalog order (ids 1..7)."""
    return list(_CONCERNS)


def get_concern(concern_id: int) -> Concern:
    for c in _CONCERNS:
        if c.id == concern_id:
            return c
    raise MalformedSelectionError(f"unknown concern id {concern_id!r}")


class DpLevel(enum.Enum):
    """Which side of the pipeline adds the noise.

    Local DP perturbs on the user's device, so it is strictly stricter than
    central DP, where the organization holds raw data and noises outputs.
    """

    LOCAL = "local"
    CENTRAL = "central"

    @property
    def strictness(self) -> int:
        return 2 if self is DpLevel.LOCAL else 1


@dataclass(frozen=True, slots=True)
class ConcernSet:
    """A user's selection: a subset of the seven concern ids (may be empty)."""

    ids: frozenset[int]

    def __post_init__(self) -> None:
        bad = set(self.ids) - ALL_CONCERN_IDS
        if bad:
            raise MalformedSelectionError(
                f"concern ids outside 1..7: {sorted(bad)!r}"
            )

    @classmethod
    def of(cls, ids: Iterable[int]) -> "ConcernSet":
        collected = set()
        for raw in ids:
            if isinstance(raw, bool) or not isinstance(raw, int):
                raise MalformedSelectionError(f"concern id must be an integer, got {raw!r}")
            collected.add(raw)
        return cls(frozenset(collected))

    def __iter__(self):
        return iter(sorted(self.ids))

    def __contains__(self, concern_id: int) -> bool:
        return concern_id in self.ids


def match_dp_level(selection: ConcernSet | Iterable[int]) -> DpLevel:
    """Map a concern selection to the DP level that addresses it.

    Local DP iff the selection contains any of concerns 1-4; everything
    else, including the empty selection, is served by central DP.
    """
    if not isinstance(selection, ConcernSet):
        selection = ConcernSet.of(selection)
    if selection.ids & LOCAL_TRIGGER_IDS:
        return DpLevel.LOCAL
    return DpLevel.CENTRAL


class ScenarioKind(enum.Enum):
    SALARY_NUMERIC = "salary"
    LOCATION_GEO = "location"


@dataclass(frozen=True, slots=True)
class NumericDomain:
    """Closed clamp interval for numeric data, with display units."""

    lo: float
    hi: float
    unit: str = "USD/year"

    def __post_init__(self) -> None:
        if not (self.lo < self.hi):
            raise ValidationError(f"numeric domain needs lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, x: float) -> bool:
        return self.lo <= x <= self.hi


@dataclass(frozen=True, slots=True)
class CellGrid:
    """Finite grid of named cells used for location reports."""

    cells: tuple[str, ...]
    rows: int | None = None
    cols: int | None = None

    def __post_init__(self) -> None:
        if len(self.cells) < 2:
            raise ValidationError("cell grid needs at least 2 cells")
        if len(set(self.cells)) != len(self.cells):
            raise ValidationError("cell names must be unique")
        if (self.rows is None) != (self.cols is None):
            raise ValidationError("rows and cols must be given together")
        if self.rows is not None and self.rows * self.cols != len(self.cells):
            raise ValidationError("rows * cols must equal the cell count")

    @property
    def k(self) -> int:
        return len(self.cells)

    def index(self, cell: str) -> int:
        try:
            return self.cells.index(cell)
        except ValueError:
            raise MalformedInputError(f"unknown cell {cell!r}") from None

    def contains(self, cell: str) -> bool:
        return cell in self.cells


@dataclass(frozen=True, slots=True)
class Scenario:
    """A data-request scenario: what is collected and over which domain."""

    kind: ScenarioKind
    domain: NumericDomain | CellGrid

    def __post_init__(self) -> None:
        if self.kind is ScenarioKind.SALARY_NUMERIC and not isinstance(
            self.domain, NumericDomain
        ):
            raise ValidationError("salary scenario needs a numeric domain")
        if self.kind is ScenarioKind.LOCATION_GEO and not isinstance(self.domain, CellGrid):
            raise ValidationError("location scenario needs a cell grid")


def concern_catalog_lines() -> list[str]:
    """Machine-readable catalog: one JSON record per concern."""
    return [
        json.dumps(
            {"id": c.id, "abbreviation": c.abbreviation, "description": c.description},
            ensure_ascii=False,
        )
        for c in _CONCERNS
    ]


def write_concern_catalog(path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in concern_catalog_lines():
            fh.write(line + "\n")
