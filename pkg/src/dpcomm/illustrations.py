"""Machine-renderable illustration payloads for the design registry.

Payloads carry data and presentation tags only; drawing belongs to the
client. Repeated trials and distributions are seeded and reproducible;
dotplots and cell probabilities are closed-form and fully deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .concerns import CellGrid, ConcernSet, DpLevel, NumericDomain, Scenario, ScenarioKind
from .config import ServiceConfig
from .errors import MalformedInputError, ValidationError
from .mechanisms import (
    BudgetLedger,
    LAPLACE_MECHANISM_ID,
    MechanismParams,
    RR_MECHANISM_ID,
    central_answer_query,
    histogram_true_counts,
    laplace_noise_array,
    numeric_bin_edges,
    rr_probabilities,
    rr_sample_indices,
)
from .registry import DesignDescriptor
from .rng import fresh_seed
from .storyboard import build_storyboard
from .templates import TemplateRepository, default_repository, render_text_description

# The synthetic example datasets behind distribution payloads are pinned to
# one stream so regenerating a payload only redraws the noise.
_DATASET_SEED = 424242


@dataclass(frozen=True, slots=True)
class TrialsPayload:
    example_input: float | str
    outputs: tuple
    mechanism_id: str
    seed: int
    epsilon: float

    def to_dict(self) -> dict:
        return {
            "kind": "trials",
            "example_input": self.example_input,
            "outputs": list(self.outputs),
            "mechanism_id": self.mechanism_id,
            "seed": self.seed,
            "epsilon": self.epsilon,
        }


@dataclass(frozen=True, slots=True)
class DistributionPayload:
    bins: tuple[dict, ...]
    true_counts: tuple[int, ...]
    noisy_counts: tuple[float, ...]
    epsilon: float
    seed: int

    def to_dict(self) -> dict:
        return {
            "kind": "distribution",
            "bins": list(self.bins),
            "true_counts": list(self.true_counts),
            "noisy_counts": list(self.noisy_counts),
            "epsilon": self.epsilon,
            "seed": self.seed,
        }


@dataclass(frozen=True, slots=True)
class DotplotPayload:
    ball_positions: tuple[float, ...]
    reference_value: float
    n: int
    center: float
    scale: float
    unit: str

    def to_dict(self) -> dict:
        return {
            "kind": "dotplot",
            "ball_positions": list(self.ball_positions),
            "reference_value": self.reference_value,
            "n": self.n,
            "center": self.center,
            "scale": self.scale,
            "unit": self.unit,
        }


@dataclass(frozen=True, slots=True)
class CellProbPayload:
    true_cell: str
    cells: tuple[tuple[str, float], ...]
    presentation: str
    epsilon: float
    rows: int | None
    cols: int | None

    def to_dict(self) -> dict:
        out = {
            "kind": "cell_probs",
            "true_cell": self.true_cell,
            "cells": [{"cell": c, "probability": p} for c, p in self.cells],
            "presentation": self.presentation,
            "epsilon": self.epsilon,
        }
        if self.rows is not None:
            out["rows"] = self.rows
            out["cols"] = self.cols
        return out


def generate_repeated_trials(
    input_value, scenario: Scenario, params: MechanismParams, n: int, seed: int | None = None
) -> TrialsPayload:
    """Perturb the same example input n times with the local-DP mechanism."""
    if n < 1:
        raise ValidationError("trial count must be >= 1")
    if seed is None:
        seed = fresh_seed()
    domain = params.domain
    if scenario.kind is ScenarioKind.SALARY_NUMERIC:
        if not isinstance(domain, NumericDomain):
            raise MalformedInputError("salary trials need numeric params")
        if not isinstance(input_value, (int, float)) or not math.isfinite(input_value):
            raise MalformedInputError(f"example input must be finite, got {input_value!r}")
        if not domain.contains(input_value):
            raise MalformedInputError("example input outside the clamp interval")
        if math.isinf(params.epsilon):
            outputs = tuple(float(input_value) for _ in range(n))
        else:
            if params.epsilon == 0:
                raise MalformedInputError("epsilon must be positive for numeric noise")
            scale = params.sensitivity / params.epsilon
            outputs = tuple(
                float(v) for v in input_value + laplace_noise_array(scale, n, seed)
            )
        return TrialsPayload(float(input_value), outputs, LAPLACE_MECHANISM_ID, seed,
                             params.epsilon)
    if not isinstance(domain, CellGrid):
        raise MalformedInputError("location trials need cell-grid params")
    true_index = domain.index(input_value)
    if math.isinf(params.epsilon):
        outputs = tuple(input_value for _ in range(n))
    else:
        idx = rr_sample_indices(true_index, domain.k, params.epsilon, n, seed)
        outputs = tuple(domain.cells[int(i)] for i in idx)
    return TrialsPayload(input_value, outputs, RR_MECHANISM_ID, seed, params.epsilon)


def generate_distribution(
    dataset,
    scenario: Scenario,
    params: MechanismParams,
    seed: int | None = None,
    bins=None,
    ledger: BudgetLedger | None = None,
) -> DistributionPayload:
    """True per-bin counts next to one noisy release of the same histogram."""
    if len(dataset) == 0:
        raise ValidationError("distribution illustration needs a non-empty dataset")
    if seed is None:
        seed = fresh_seed()
    domain = params.domain
    if isinstance(domain, NumericDomain):
        if bins is None:
            raise ValidationError("numeric distribution needs bins")
        edges = numeric_bin_edges(domain, bins) if isinstance(bins, int) else list(bins)
    else:
        edges = None
    true_counts, bin_desc = histogram_true_counts(dataset, domain, edges)
    if ledger is None:
        # Illustration mode runs on example data; give the query its own
        # throwaway budget.
        ledger = BudgetLedger(params.epsilon if math.isfinite(params.epsilon) else 1.0)
    answer = central_answer_query(
        dataset, "histogram", params, ledger, seed=seed, bins=edges
    )
    return DistributionPayload(
        bins=tuple(bin_desc),
        true_counts=tuple(true_counts),
        noisy_counts=tuple(answer.value),
        epsilon=params.epsilon,
        seed=seed,
    )


def laplace_quantile(p: float, center: float, scale: float) -> float:
    """Inverse CDF of the double-exponential distribution."""
    if not 0.0 < p < 1.0:
        raise ValidationError("quantile level must be in (0, 1)")
    if p < 0.5:
        return center + scale * math.log(2.0 * p)
    return center - scale * math.log(2.0 * (1.0 - p))


def laplace_quantile_positions(center: float, scale: float, n: int) -> list[float]:
    """Ball positions at the ((i - 0.5) / n)-quantiles, i = 1..n."""
    if n < 2:
        raise ValidationError("dotplot needs at least 2 balls")
    return [laplace_quantile((i - 0.5) / n, center, scale) for i in range(1, n + 1)]


def generate_dotplot(
    input_value: float, scenario: Scenario, params: MechanismParams, n_balls: int
) -> DotplotPayload:
    """Quantile dotplot of the noisy-output distribution for one input.

    Fully deterministic: ball i sits at the ((i - 0.5) / n)-quantile of the
    double-exponential law centered at the input. The reference value is the
    distribution's median, which equals the input.
    """
    if scenario.kind is not ScenarioKind.SALARY_NUMERIC:
        raise MalformedInputError("dotplot illustrations need a numeric scenario")
    domain = params.domain
    if not isinstance(domain, NumericDomain):
        raise MalformedInputError("dotplot needs numeric params")
    if not isinstance(input_value, (int, float)) or not math.isfinite(input_value):
        raise MalformedInputError(f"input must be finite, got {input_value!r}")
    if not domain.contains(input_value):
        raise MalformedInputError("input outside the clamp interval")
    if math.isinf(params.epsilon):
        scale = 0.0
    else:
        if params.epsilon == 0:
            raise MalformedInputError("epsilon must be positive for numeric noise")
        scale = params.sensitivity / params.epsilon
    positions = (
        [float(input_value)] * n_balls
        if scale == 0.0
        else laplace_quantile_positions(float(input_value), scale, n_balls)
    )
    if n_balls < 2:
        raise ValidationError("dotplot needs at least 2 balls")
    return DotplotPayload(
        ball_positions=tuple(positions),
        reference_value=float(input_value),
        n=n_balls,
        center=float(input_value),
        scale=scale,
        unit=domain.unit,
    )


def generate_cell_probs(
    true_cell: str, params: MechanismParams, presentation: str = "table"
) -> CellProbPayload:
    """Exact randomized-response output distribution for one true cell."""
    grid = params.domain
    if not isinstance(grid, CellGrid):
        raise MalformedInputError("cell probabilities need a cell-grid domain")
    if presentation not in ("table", "pie", "map"):
        raise ValidationError(f"unknown presentation {presentation!r}")
    true_index = grid.index(true_cell)
    p_keep, p_other = rr_probabilities(grid.k, params.epsilon)
    cells = tuple(
        (cell, p_keep if i == true_index else p_other)
        for i, cell in enumerate(grid.cells)
    )
    return CellProbPayload(
        true_cell=true_cell,
        cells=cells,
        presentation=presentation,
        epsilon=params.epsilon,
        rows=grid.rows,
        cols=grid.cols,
    )


def example_salary_dataset(config: ServiceConfig) -> list[float]:
    """Deterministic synthetic salaries spanning the clamp range."""
    from .rng import uniforms

    n = config.example_dataset_size
    u = uniforms(_DATASET_SEED, 2 * n)
    # Average of two uniforms gives a triangular bulk, more plausible than
    # a flat spread.
    mix = (u[0::2] + u[1::2]) / 2.0
    lo, hi = config.salary_lo, config.salary_hi
    return [float(lo + m * (hi - lo)) for m in mix]


def example_location_dataset(config: ServiceConfig) -> list[str]:
    """Deterministic synthetic visits, skewed so some cells dominate."""
    from .rng import uniforms

    cells = tuple(config.grid_cells)
    k = len(cells)
    u = uniforms(_DATASET_SEED + 1, config.example_dataset_size)
    idx = np.minimum((np.asarray(u) ** 2 * k).astype(int), k - 1)
    return [cells[int(i)] for i in idx]


def build_design_payload(
    descriptor: DesignDescriptor,
    config: ServiceConfig,
    seed: int | None = None,
    template_repo: TemplateRepository | None = None,
    selection: ConcernSet | None = None,
) -> dict:
    """Assemble the serialized payload for one registry design.

    The returned mapping is the envelope served by the payload endpoints:
    the payload fields plus design id, category, scenario, and DP level.
    """
    scenario = config.scenario(descriptor.scenario)
    kind = descriptor.payload_kind
    if seed is None and kind in ("trials", "distribution"):
        seed = fresh_seed()

    if kind == "text":
        repo = template_repo or default_repository()
        chosen = selection if selection is not None else ConcernSet.of(range(1, 8))
        body = {
            "kind": "text",
            "text": render_text_description(
                descriptor.scenario, descriptor.dp_level, chosen, repo
            ),
        }
    elif kind == "trials":
        if descriptor.scenario is ScenarioKind.SALARY_NUMERIC:
            params = MechanismParams.for_numeric(scenario.domain, config.epsilon)
            example = config.example_salary
        else:
            params = MechanismParams.for_cells(scenario.domain, config.epsilon)
            example = config.example_cell
        body = generate_repeated_trials(
            example, scenario, params, config.trial_count, seed
        ).to_dict()
    elif kind == "distribution":
        if descriptor.scenario is ScenarioKind.SALARY_NUMERIC:
            params = MechanismParams.for_numeric(scenario.domain, config.epsilon)
            dataset = example_salary_dataset(config)
            bins = config.distribution_bins
        else:
            params = MechanismParams.for_cells(scenario.domain, config.epsilon)
            dataset = example_location_dataset(config)
            bins = None
        body = generate_distribution(dataset, scenario, params, seed, bins=bins).to_dict()
    elif kind == "dotplot":
        body = _dotplot_body(descriptor, config)
    elif kind == "cell_probs":
        params = MechanismParams.for_cells(scenario.domain, config.epsilon)
        body = generate_cell_probs(
            config.example_cell, params, descriptor.presentation or "table"
        ).to_dict()
    elif kind == "storyboard":
        body = build_storyboard(descriptor.scenario, descriptor.dp_level).to_dict()
    else:  # pragma: no cover - registry validates payload kinds
        raise ValidationError(f"unknown payload kind {kind!r}")

    body.update(
        {
            "design_id": descriptor.design_id,
            "title": descriptor.title,
            "category": descriptor.category.value,
            "scenario": descriptor.scenario.value,
            "dp_level": descriptor.dp_level.value,
        }
    )
    return body


def _dotplot_body(descriptor: DesignDescriptor, config: ServiceConfig) -> dict:
    """Dotplot flavors: local output law, or the noisy-answer law of a query."""
    eps = config.epsilon
    n = config.ball_count
    if descriptor.scenario is ScenarioKind.SALARY_NUMERIC:
        domain = config.salary_scenario().domain
        if descriptor.dp_level is DpLevel.LOCAL:
            scenario = config.salary_scenario()
            params = MechanismParams.for_numeric(domain, eps)
            return generate_dotplot(config.example_salary, scenario, params, n).to_dict()
        # Central: distribution of the noisy average-salary answer.
        dataset = example_salary_dataset(config)
        center = float(np.clip(np.asarray(dataset), domain.lo, domain.hi).mean())
        scale = (domain.width / len(dataset)) / eps
        unit = domain.unit
    else:
        # Central location: distribution of one cell's noisy visitor count.
        dataset = example_location_dataset(config)
        center = float(sum(1 for c in dataset if c == config.example_cell))
        scale = 1.0 / eps
        unit = "visits"
    positions = laplace_quantile_positions(center, scale, n)
    return DotplotPayload(
        ball_positions=tuple(positions),
        reference_value=center,
        n=n,
        center=center,
        scale=scale,
        unit=unit,
    ).to_dict()
