"""Registry of the seventeen communication designs.

The manifest pins one design per cell of the 4x4 space (four categories
times salary/location crossed with local/central DP) plus one extra
input/output variant on the salary local-DP cell, giving nine salary and
eight location designs. Cells may be declared absent in the manifest; the
shipped manifest declares none.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from importlib import resources

from .concerns import DpLevel, ScenarioKind
from .errors import NotFoundError, RegistryLoadError

EXPECTED_TOTAL = 17
EXPECTED_BY_SCENARIO = {ScenarioKind.SALARY_NUMERIC: 9, ScenarioKind.LOCATION_GEO: 8}

PAYLOAD_KINDS = ("text", "trials", "distribution", "dotplot", "cell_probs", "storyboard")


class Category(enum.Enum):
    TEXT = "text"
    INPUT_OUTPUT = "input_output"
    PROB_DIST = "prob_dist"
    STORYBOARD = "storyboard"


@dataclass(frozen=True, slots=True)
class DesignDescriptor:
    design_id: str
    scenario: ScenarioKind
    dp_level: DpLevel
    category: Category
    title: str
    payload_kind: str
    extra: bool = False
    presentation: str | None = None

    def to_dict(self) -> dict:
        out = {
            "design_id": self.design_id,
            "scenario": self.scenario.value,
            "dp_level": self.dp_level.value,
            "category": self.category.value,
            "title": self.title,
            "payload_kind": self.payload_kind,
            "extra": self.extra,
        }
        if self.presentation is not None:
            out["presentation"] = self.presentation
        return out


class DesignRegistry:
    """Immutable after load; validates the manifest invariants."""

    def __init__(self, designs: list[DesignDescriptor], absent_cells: list[tuple]):
        self._designs = tuple(designs)
        self._by_id = {d.design_id: d for d in designs}
        self._absent = {tuple(c) for c in absent_cells}
        self._validate()

    def _validate(self) -> None:
        if len(self._by_id) != len(self._designs):
            raise RegistryLoadError("duplicate design ids in manifest")
        if len(self._designs) != EXPECTED_TOTAL:
            raise RegistryLoadError(
                f"manifest must hold {EXPECTED_TOTAL} designs, found {len(self._designs)}"
            )
        for scenario, expected in EXPECTED_BY_SCENARIO.items():
            got = sum(1 for d in self._designs if d.scenario is scenario)
            if got != expected:
                raise RegistryLoadError(
                    f"expected {expected} {scenario.value} designs, found {got}"
                )
        for scenario in ScenarioKind:
            for dp_level in DpLevel:
                for category in Category:
                    cell = (scenario.value, dp_level.value, category.value)
                    covered = any(
                        d.scenario is scenario
                        and d.dp_level is dp_level
                        and d.category is category
                        for d in self._designs
                    )
                    if not covered and cell not in self._absent:
                        raise RegistryLoadError(f"design-space cell {cell} uncovered")

    def list_designs(self) -> list[DesignDescriptor]:
        return list(self._designs)

    def get(self, design_id: str) -> DesignDescriptor:
        try:
            return self._by_id[design_id]
        except KeyError:
            raise NotFoundError(f"unknown design {design_id!r}") from None

    def for_cell(self, scenario: ScenarioKind, dp_level: DpLevel) -> list[DesignDescriptor]:
        return [
            d for d in self._designs if d.scenario is scenario and d.dp_level is dp_level
        ]


def _parse_descriptor(raw: dict) -> DesignDescriptor:
    try:
        payload_kind = raw["payload_kind"]
        if payload_kind not in PAYLOAD_KINDS:
            raise ValueError(f"unknown payload kind {payload_kind!r}")
        return DesignDescriptor(
            design_id=str(raw["design_id"]),
            scenario=ScenarioKind(raw["scenario"]),
            dp_level=DpLevel(raw["dp_level"]),
            category=Category(raw["category"]),
            title=str(raw["title"]),
            payload_kind=payload_kind,
            extra=bool(raw.get("extra", False)),
            presentation=raw.get("presentation"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise RegistryLoadError(f"malformed design entry: {exc}") from exc


def load_registry_text(text: str) -> DesignRegistry:
    try:
        manifest = json.loads(text)
        entries = manifest["designs"]
        absent = manifest.get("absent_cells", [])
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise RegistryLoadError(f"malformed manifest: {exc}") from exc
    if not isinstance(entries, list):
        raise RegistryLoadError("manifest 'designs' must be a list")
    return DesignRegistry([_parse_descriptor(e) for e in entries], absent)


def load_registry(path: str | None = None) -> DesignRegistry:
    if path is None:
        text = (
            resources.files("dpcomm").joinpath("design_data/designs.json").read_text("utf-8")
        )
    else:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    return load_registry_text(text)


_default_registry: DesignRegistry | None = None


def default_registry() -> DesignRegistry:
    global _default_registry
    if _default_registry is None:
        _default_registry = load_registry()
    return _default_registry


def list_designs(registry: DesignRegistry | None = None) -> list[DesignDescriptor]:
    return (registry or default_registry()).list_designs()
