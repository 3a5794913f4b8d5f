"""The DP mechanisms the notifications describe.

Local side: Laplace perturbation for clamped numeric values and k-ary
randomized response for grid cells. Central side: noisy answers to count,
mean, and histogram queries against raw records, with sequential-composition
budget accounting.

Noise conventions
-----------------
* Numeric values use zero-centered double-exponential (Laplace) noise of
  scale ``sensitivity / epsilon``; outputs are deliberately NOT re-clamped,
  since clamping after noising would break the privacy argument.
* Randomized response keeps the true cell with probability
  ``e^eps / (e^eps + k - 1)`` and otherwise emits one of the k-1 other
  cells uniformly.
* ``epsilon = inf`` is a no-privacy limit allowed only when the params are
  built with ``limit_mode=True``; ``epsilon = 0`` is meaningful for
  randomized response only (uniform output).
"""

from __future__ import annotations

import math
import threading
import uuid
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .concerns import CellGrid, NumericDomain
from .errors import (
    BudgetExhaustedError,
    ClampViolationError,
    MalformedInputError,
    UndefinedQueryError,
    ValidationError,
)
from .rng import fresh_seed, uniforms

LAPLACE_MECHANISM_ID = "laplace"
RR_MECHANISM_ID = "rr"


@dataclass(frozen=True, slots=True)
class MechanismParams:
    """Privacy parameter, sensitivity, and domain for one mechanism instance.

    For clamped numeric domains the sensitivity is pinned to the clamp
    width; use the ``for_numeric`` / ``for_cells`` constructors.
    """

    epsilon: float
    sensitivity: float
    domain: NumericDomain | CellGrid
    limit_mode: bool = False

    def __post_init__(self) -> None:
        eps = self.epsilon
        if math.isnan(eps) or eps < 0:
            raise ValidationError(f"epsilon must be >= 0, got {eps!r}")
        if math.isinf(eps) and not self.limit_mode:
            raise ValidationError("epsilon = inf requires limit_mode=True")
        if math.isnan(self.sensitivity) or self.sensitivity < 0:
            raise ValidationError(f"sensitivity must be >= 0, got {self.sensitivity!r}")
        if isinstance(self.domain, NumericDomain) and self.sensitivity != self.domain.width:
            raise ValidationError(
                "numeric sensitivity must equal the clamp width "
                f"({self.domain.width}), got {self.sensitivity}"
            )

    @classmethod
    def for_numeric(
        cls, domain: NumericDomain, epsilon: float, limit_mode: bool = False
    ) -> "MechanismParams":
        return cls(epsilon=epsilon, sensitivity=domain.width, domain=domain,
                   limit_mode=limit_mode)

    @classmethod
    def for_cells(
        cls, grid: CellGrid, epsilon: float, limit_mode: bool = False
    ) -> "MechanismParams":
        return cls(epsilon=epsilon, sensitivity=1.0, domain=grid, limit_mode=limit_mode)


@dataclass(frozen=True, slots=True)
class NoiseSample:
    """One perturbation: what went in, what came out, and how."""

    input_value: float | str
    output_value: float | str
    mechanism_id: str
    seed: int | None

    def to_dict(self) -> dict:
        return {
            "input_value": self.input_value,
            "output_value": self.output_value,
            "mechanism_id": self.mechanism_id,
            "seed": self.seed,
        }


def laplace_noise_array(scale: float, count: int, seed: int, start: int = 0) -> np.ndarray:
    """Vectorized zero-centered Laplace noise from the portable stream.

    Draw ``i`` consumes uniform index ``start + i``. The inverse-CDF
    transform below is mirrored exactly by the browser client.
    """
    u = uniforms(seed, count, start)
    v = u - 0.5
    return np.where(v >= 0.0, -scale * np.log1p(-2.0 * v), scale * np.log1p(2.0 * v))


def laplace_perturb(
    x: float, params: MechanismParams, seed: int | None = None
) -> NoiseSample:
    """Perturb a clamped numeric value with calibrated Laplace noise.

    The input must lie inside the clamp interval; the output is returned
    as-is (it may land outside the interval and illustrations must show
    that honestly).
    """
    domain = params.domain
    if not isinstance(domain, NumericDomain):
        raise MalformedInputError("laplace_perturb needs a numeric domain")
    if not isinstance(x, (int, float)) or isinstance(x, bool) or not math.isfinite(x):
        raise MalformedInputError(f"input value must be a finite number, got {x!r}")
    if not domain.contains(x):
        raise ClampViolationError(
            f"value {x} outside clamp interval [{domain.lo}, {domain.hi}]"
        )
    if math.isinf(params.epsilon):
        return NoiseSample(x, float(x), LAPLACE_MECHANISM_ID, seed)
    if params.epsilon == 0:
        raise MalformedInputError("epsilon must be positive for numeric noise")
    if seed is None:
        seed = fresh_seed()
    scale = params.sensitivity / params.epsilon
    noise = float(laplace_noise_array(scale, 1, seed)[0])
    return NoiseSample(x, x + noise, LAPLACE_MECHANISM_ID, seed)


def rr_keep_probability(k: int, epsilon: float) -> float:
    """Probability that randomized response reports the true cell."""
    if k < 2:
        raise ValidationError("randomized response needs k >= 2")
    if math.isinf(epsilon):
        return 1.0
    e = math.exp(epsilon)
    return e / (e + k - 1)


def rr_probabilities(k: int, epsilon: float) -> tuple[float, float]:
    """(keep probability, per-other-cell probability) for k-ary RR."""
    p_keep = rr_keep_probability(k, epsilon)
    if math.isinf(epsilon):
        return 1.0, 0.0
    return p_keep, (1.0 - p_keep) / (k - 1)


def rr_sample_indices(
    true_index: int, k: int, epsilon: float, count: int, seed: int
) -> np.ndarray:
    """Vectorized k-ary randomized response, returning cell indices.

    Sample ``i`` consumes uniform indices ``2i`` (keep decision) and
    ``2i + 1`` (alternative choice); the browser client mirrors this layout.
    """
    p_keep, _ = rr_probabilities(k, epsilon)
    u = uniforms(seed, 2 * count)
    keep = u[0::2] < p_keep
    alt = np.minimum((u[1::2] * (k - 1)).astype(np.int64), k - 2)
    others = np.where(alt >= true_index, alt + 1, alt)
    return np.where(keep, true_index, others)


def rr_perturb(v: str, params: MechanismParams, seed: int | None = None) -> NoiseSample:
    """Report the true cell with calibrated probability, else a random other."""
    grid = params.domain
    if not isinstance(grid, CellGrid):
        raise MalformedInputError("rr_perturb needs a cell-grid domain")
    if not grid.contains(v):
        raise MalformedInputError(f"unknown cell {v!r}")
    true_index = grid.index(v)
    if math.isinf(params.epsilon):
        return NoiseSample(v, v, RR_MECHANISM_ID, seed)
    if seed is None:
        seed = fresh_seed()
    out_index = int(rr_sample_indices(true_index, grid.k, params.epsilon, 1, seed)[0])
    return NoiseSample(v, grid.cells[out_index], RR_MECHANISM_ID, seed)


@dataclass(frozen=True, slots=True)
class LedgerEntry:
    query_id: str
    epsilon: float


class BudgetLedger:
    """Sequential-composition accounting for central queries.

    Debits are linearizable: a charge either atomically reserves its epsilon
    or fails without side effects, so the remaining budget can never go
    negative no matter how calls interleave.
    """

    def __init__(self, total_epsilon: float):
        if math.isnan(total_epsilon) or total_epsilon <= 0:
            raise ValidationError(f"total_epsilon must be positive, got {total_epsilon!r}")
        self.total_epsilon = total_epsilon
        self._entries: list[LedgerEntry] = []
        self._spent = 0.0
        self._lock = threading.Lock()

    @property
    def entries(self) -> tuple[LedgerEntry, ...]:
        with self._lock:
            return tuple(self._entries)

    @property
    def spent(self) -> float:
        with self._lock:
            return self._spent

    @property
    def remaining(self) -> float:
        with self._lock:
            return self.total_epsilon - self._spent

    def charge(self, query_id: str, epsilon: float) -> None:
        if math.isnan(epsilon) or epsilon <= 0 or math.isinf(epsilon):
            raise ValidationError(f"charged epsilon must be positive and finite, got {epsilon!r}")
        with self._lock:
            new_spent = self._spent + epsilon
            if new_spent > self.total_epsilon:
                raise BudgetExhaustedError(
                    f"epsilon {epsilon} exceeds remaining budget "
                    f"{self.total_epsilon - self._spent}"
                )
            self._spent = new_spent
            self._entries.append(LedgerEntry(query_id, epsilon))

    def to_dict(self) -> dict:
        return {
            "total_epsilon": self.total_epsilon,
            "entries": [
                {"query_id": e.query_id, "epsilon": e.epsilon} for e in self.entries
            ],
            "remaining": self.remaining,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "BudgetLedger":
        ledger = cls(payload["total_epsilon"])
        for entry in payload.get("entries", []):
            ledger.charge(entry["query_id"], entry["epsilon"])
        return ledger


@dataclass(frozen=True, slots=True)
class QueryAnswer:
    """Noisy answer to one central query, plus the accounting trail."""

    query: str
    value: float | list[float]
    epsilon_spent: float
    query_id: str
    seed: int | None
    bins: list | None = None

    def to_dict(self) -> dict:
        out = {
            "query": self.query,
            "value": self.value,
            "epsilon_spent": self.epsilon_spent,
            "query_id": self.query_id,
            "seed": self.seed,
        }
        if self.bins is not None:
            out["bins"] = self.bins
        return out


def numeric_bin_edges(domain: NumericDomain, n_bins: int) -> list[float]:
    """Equal-width edges that partition the clamp interval exactly."""
    if n_bins < 1:
        raise ValidationError("need at least one bin")
    edges = np.linspace(domain.lo, domain.hi, n_bins + 1)
    edges[0], edges[-1] = domain.lo, domain.hi
    return [float(e) for e in edges]


def _validate_edges(domain: NumericDomain, edges: Sequence[float]) -> None:
    if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])):
        raise ValidationError("bin edges must be strictly increasing")
    if edges[0] != domain.lo or edges[-1] != domain.hi:
        raise ValidationError("bin edges must cover the clamp interval exactly")


def histogram_true_counts(
    dataset: Sequence, domain: NumericDomain | CellGrid, edges: Sequence[float] | None = None
) -> tuple[list[int], list]:
    """True per-bin counts plus the bin description, no noise.

    Numeric bins follow half-open convention with the last bin closed, so
    the edges partition the whole clamp interval.
    """
    if isinstance(domain, NumericDomain):
        if edges is None:
            raise ValidationError("numeric histogram needs bin edges")
        _validate_edges(domain, edges)
        values = _checked_numeric(dataset, domain)
        counts, _ = np.histogram(values, bins=np.asarray(edges, dtype=np.float64))
        bins = [
            {"label": f"{lo:g}-{hi:g}", "lo": float(lo), "hi": float(hi)}
            for lo, hi in zip(edges, edges[1:])
        ]
        return [int(c) for c in counts], bins
    for v in dataset:
        if not domain.contains(v):
            raise MalformedInputError(f"unknown cell {v!r} in dataset")
    counts = [sum(1 for v in dataset if v == cell) for cell in domain.cells]
    return counts, [{"label": cell} for cell in domain.cells]


def _checked_numeric(dataset: Sequence, domain: NumericDomain) -> np.ndarray:
    values = np.asarray(list(dataset), dtype=np.float64)
    if values.size and (not np.all(np.isfinite(values))):
        raise MalformedInputError("dataset contains non-finite values")
    if values.size and (values.min() < domain.lo or values.max() > domain.hi):
        raise MalformedInputError("dataset contains values outside the clamp interval")
    return values


def central_answer_query(
    dataset: Sequence,
    query: str,
    params: MechanismParams,
    ledger: BudgetLedger,
    seed: int | None = None,
    bins: Sequence[float] | None = None,
    query_id: str | None = None,
) -> QueryAnswer:
    """Answer a count / mean / histogram query with calibrated noise.

    The ledger is debited before any answer is computed; if the budget
    cannot cover ``params.epsilon`` the query is withheld and the ledger is
    left untouched. Count and histogram answers add noise of scale
    ``1/epsilon`` per released number; mean answers use the clamped-sum
    sensitivity ``width / n``.
    """
    if query not in ("count", "mean", "histogram"):
        raise ValidationError(f"unknown query {query!r}")
    eps = params.epsilon
    no_noise = math.isinf(eps)
    if query == "mean" and len(dataset) == 0:
        raise UndefinedQueryError("mean over an empty dataset is undefined")
    if query_id is None:
        query_id = uuid.uuid4().hex
    if not no_noise:
        ledger.charge(query_id, eps)
    epsilon_spent = 0.0 if no_noise else eps
    if seed is None:
        seed = fresh_seed()

    if query == "count":
        true_value = float(len(dataset))
        noisy = true_value if no_noise else true_value + float(
            laplace_noise_array(1.0 / eps, 1, seed)[0]
        )
        return QueryAnswer("count", noisy, epsilon_spent, query_id, seed)

    if query == "mean":
        domain = params.domain
        if not isinstance(domain, NumericDomain):
            raise MalformedInputError("mean query needs a numeric domain")
        values = _checked_numeric(dataset, domain)
        clamped = np.clip(values, domain.lo, domain.hi)
        true_value = float(clamped.mean())
        if no_noise:
            return QueryAnswer("mean", true_value, epsilon_spent, query_id, seed)
        scale = (domain.width / len(values)) / eps
        noisy = true_value + float(laplace_noise_array(scale, 1, seed)[0])
        return QueryAnswer("mean", noisy, epsilon_spent, query_id, seed)

    true_counts, bin_desc = histogram_true_counts(dataset, params.domain, bins)
    if no_noise:
        noisy_counts = [float(c) for c in true_counts]
    else:
        noise = laplace_noise_array(1.0 / eps, len(true_counts), seed)
        noisy_counts = [float(c + n) for c, n in zip(true_counts, noise)]
    return QueryAnswer("histogram", noisy_counts, epsilon_spent, query_id, seed, bins=bin_desc)
