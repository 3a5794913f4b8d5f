"""Service configuration, loadable from a YAML file."""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

import yaml

from .concerns import CellGrid, NumericDomain, Scenario, ScenarioKind
from .errors import ValidationError

_DEFAULT_CELLS = tuple(f"C{i}" for i in range(1, 10))


@dataclass(frozen=True)
class ServiceConfig:
    # Privacy parameters
    epsilon: float = 1.0
    central_total_epsilon: float = 10.0
    # Salary scenario clamp range
    salary_lo: float = 0.0
    salary_hi: float = 1_000_000.0
    salary_unit: str = "USD/year"
    # Location scenario grid
    grid_cells: tuple[str, ...] = _DEFAULT_CELLS
    grid_rows: int = 3
    grid_cols: int = 3
    # Illustration defaults
    trial_count: int = 5
    ball_count: int = 20
    distribution_bins: int = 10
    example_salary: float = 52_000.0
    example_cell: str = "C5"
    example_dataset_size: int = 200
    # None means every notification draws a fresh entropy seed at assembly.
    illustration_seed: int | None = None
    # Service plumbing
    storage_path: str | None = None
    snapshot_interval: int = 100
    bind_address: str = "127.0.0.1:8000"
    operator_token: str = "change-me"

    def __post_init__(self) -> None:
        if self.epsilon <= 0:
            raise ValidationError("epsilon must be positive")
        if self.trial_count < 1 or self.ball_count < 2 or self.distribution_bins < 1:
            raise ValidationError("illustration counts out of range")
        if self.example_cell not in self.grid_cells:
            raise ValidationError("example_cell must be one of grid_cells")
        if not (self.salary_lo <= self.example_salary <= self.salary_hi):
            raise ValidationError("example_salary must lie inside the clamp range")

    def salary_scenario(self) -> Scenario:
        return Scenario(
            ScenarioKind.SALARY_NUMERIC,
            NumericDomain(self.salary_lo, self.salary_hi, self.salary_unit),
        )

    def location_scenario(self) -> Scenario:
        return Scenario(
            ScenarioKind.LOCATION_GEO,
            CellGrid(tuple(self.grid_cells), rows=self.grid_rows, cols=self.grid_cols),
        )

    def scenario(self, kind: ScenarioKind) -> Scenario:
        if kind is ScenarioKind.SALARY_NUMERIC:
            return self.salary_scenario()
        return self.location_scenario()

    @classmethod
    def from_file(cls, path: str) -> "ServiceConfig":
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh) or {}
        if not isinstance(raw, dict):
            raise ValidationError(f"config file {path} is not a mapping")
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: dict) -> "ServiceConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        if "grid_cells" in raw and raw["grid_cells"] is not None:
            raw = dict(raw)
            raw["grid_cells"] = tuple(raw["grid_cells"])
        return cls(**raw)

    def with_overrides(self, **kwargs) -> "ServiceConfig":
        return replace(self, **kwargs)
