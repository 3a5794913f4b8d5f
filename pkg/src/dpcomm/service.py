"""Session-oriented consent service: the pipeline end to end.

A session walks a fixed state machine:

    created -> concerns_submitted -> notified -> consented | declined

Concern selection fixes the DP level, the notification bundle is assembled
once and frozen, data is accepted only after granted consent, and ratings
are accepted from the notified state onward. Local-DP sessions never hold a
raw value: the client perturbs on-device and the server rejects raw-flagged
submissions outright. Central-DP raw values go to the protected store,
readable only by the central query path and the token-gated export.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterator

from .concerns import (
    CellGrid,
    ConcernSet,
    DpLevel,
    NumericDomain,
    ScenarioKind,
    match_dp_level,
)
from .config import ServiceConfig
from .errors import (
    AuthorizationError,
    LocalDpViolationError,
    NotFoundError,
    StateTransitionError,
    ValidationError,
)
from .illustrations import build_design_payload
from .mechanisms import BudgetLedger, MechanismParams, QueryAnswer, central_answer_query
from .registry import Category, DesignRegistry, default_registry
from .rng import fresh_seed
from .storage import RecordLog
from .storyboard import build_storyboard
from .templates import TemplateRepository, default_repository, render_text_description

RATING_ITEMS = ("clarity", "persuasiveness")

# Local-DP submissions cannot be range-checked (the noise is unbounded), but
# values this many noise scales outside the clamp range are implausible.
PLAUSIBILITY_SCALES = 50.0


class SessionState(enum.Enum):
    CREATED = "created"
    CONCERNS_SUBMITTED = "concerns_submitted"
    NOTIFIED = "notified"
    CONSENTED = "consented"
    DECLINED = "declined"

    @property
    def order(self) -> int:
        return _STATE_ORDER[self]


_STATE_ORDER = {
    SessionState.CREATED: 0,
    SessionState.CONCERNS_SUBMITTED: 1,
    SessionState.NOTIFIED: 2,
    SessionState.CONSENTED: 3,
    SessionState.DECLINED: 3,
}


@dataclass
class SessionRecord:
    session_id: str
    scenario: ScenarioKind
    state: SessionState = SessionState.CREATED
    selection: frozenset[int] | None = None
    dp_level: DpLevel | None = None
    notification_id: str | None = None
    bundle_json: str | None = None
    consent: str = "pending"
    submitted_data: dict | None = None
    ratings: list[dict] = field(default_factory=list)
    timestamps: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        """Full serialization used by snapshots."""
        return {
            "session_id": self.session_id,
            "scenario": self.scenario.value,
            "state": self.state.value,
            "selection": sorted(self.selection) if self.selection is not None else None,
            "dp_level": self.dp_level.value if self.dp_level else None,
            "notification_id": self.notification_id,
            "bundle_json": self.bundle_json,
            "consent": self.consent,
            "submitted_data": self.submitted_data,
            "ratings": list(self.ratings),
            "timestamps": dict(self.timestamps),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "SessionRecord":
        return cls(
            session_id=raw["session_id"],
            scenario=ScenarioKind(raw["scenario"]),
            state=SessionState(raw["state"]),
            selection=(
                frozenset(raw["selection"]) if raw["selection"] is not None else None
            ),
            dp_level=DpLevel(raw["dp_level"]) if raw["dp_level"] else None,
            notification_id=raw["notification_id"],
            bundle_json=raw["bundle_json"],
            consent=raw["consent"],
            submitted_data=raw["submitted_data"],
            ratings=list(raw["ratings"]),
            timestamps=dict(raw["timestamps"]),
        )

    def to_api_dict(self) -> dict:
        out = self.to_dict()
        out.pop("bundle_json", None)
        return out

    def to_export_dict(self) -> dict:
        return self.to_api_dict()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def apply_event(sessions: dict[str, SessionRecord], event: dict) -> None:
    """Apply one event to the in-memory session map.

    The live mutation path and startup replay both run through here, so a
    reloaded store always reconstructs the same records.
    """
    etype = event["type"]
    if etype == "session_created":
        record = SessionRecord(
            session_id=event["session_id"], scenario=ScenarioKind(event["scenario"])
        )
        record.timestamps["created"] = event["at"]
        sessions[record.session_id] = record
        return
    record = sessions[event["session_id"]]
    if etype == "concerns_submitted":
        record.selection = frozenset(event["selected"])
        record.dp_level = DpLevel(event["dp_level"])
        record.state = SessionState.CONCERNS_SUBMITTED
        record.timestamps["concerns_submitted"] = event["at"]
    elif etype == "notified":
        record.notification_id = event["notification_id"]
        record.bundle_json = event["bundle_json"]
        record.state = SessionState.NOTIFIED
        record.timestamps["notified"] = event["at"]
    elif etype == "consent_recorded":
        record.consent = event["decision"]
        record.state = (
            SessionState.CONSENTED
            if event["decision"] == "granted"
            else SessionState.DECLINED
        )
        record.timestamps["consent"] = event["at"]
    elif etype == "data_submitted":
        record.submitted_data = {
            "storage": event["storage"],
            "perturbation": event["perturbation"],
        }
        if "value" in event:
            record.submitted_data["value"] = event["value"]
        record.timestamps["data_submitted"] = event["at"]
    elif etype == "rating_recorded":
        record.ratings.append(
            {
                "item": event["item"],
                "score": event["score"],
                "design_id": event["design_id"],
            }
        )
    else:
        raise ValidationError(f"unknown event type {etype!r}")


class SessionService:
    """Serves concurrent sessions; per-session operations are serialized."""

    def __init__(
        self,
        config: ServiceConfig | None = None,
        registry: DesignRegistry | None = None,
        template_repo: TemplateRepository | None = None,
    ):
        self.config = config or ServiceConfig()
        self.registry = registry or default_registry()
        self.templates = template_repo or default_repository()
        self.store = RecordLog(self.config.storage_path, self.config.snapshot_interval)
        self.ledger = BudgetLedger(self.config.central_total_epsilon)
        self._sessions: dict[str, SessionRecord] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._global_lock = threading.Lock()
        self._bundle_cache: dict[tuple, tuple[str, str]] = {}
        self._restore()
        self.store.snapshot_provider = self._snapshot_state

    def _restore(self) -> None:
        snapshot, events = self.store.load()
        if snapshot is not None:
            for raw in snapshot["sessions"]:
                record = SessionRecord.from_dict(raw)
                self._sessions[record.session_id] = record
        for event in events:
            apply_event(self._sessions, event)

    def _snapshot_state(self) -> dict:
        return {"sessions": [r.to_dict() for r in self._sessions.values()]}

    def _lock_for(self, session_id: str) -> threading.Lock:
        with self._global_lock:
            try:
                return self._locks[session_id]
            except KeyError:
                raise NotFoundError(f"unknown session {session_id!r}") from None

    def _record(self, session_id: str) -> SessionRecord:
        try:
            return self._sessions[session_id]
        except KeyError:
            raise NotFoundError(f"unknown session {session_id!r}") from None

    def _emit(self, event: dict) -> None:
        apply_event(self._sessions, event)
        self.store.append(event)

    # -- pipeline operations -------------------------------------------------

    def create_session(self, scenario: ScenarioKind | str) -> SessionRecord:
        if isinstance(scenario, str):
            try:
                scenario = ScenarioKind(scenario)
            except ValueError:
                raise ValidationError(f"unknown scenario {scenario!r}") from None
        session_id = uuid.uuid4().hex
        with self._global_lock:
            self._locks[session_id] = threading.Lock()
        self._emit(
            {
                "type": "session_created",
                "session_id": session_id,
                "scenario": scenario.value,
                "at": _now(),
            }
        )
        return self._record(session_id)

    def submit_concerns(self, session_id: str, selection) -> SessionRecord:
        concern_set = (
            selection if isinstance(selection, ConcernSet) else ConcernSet.of(selection)
        )
        with self._lock_for(session_id):
            record = self._record(session_id)
            if record.state is not SessionState.CREATED:
                raise StateTransitionError(
                    f"concerns already submitted (state {record.state.value})"
                )
            level = match_dp_level(concern_set)
            self._emit(
                {
                    "type": "concerns_submitted",
                    "session_id": session_id,
                    "selected": sorted(concern_set.ids),
                    "dp_level": level.value,
                    "at": _now(),
                }
            )
            return record

    def get_notification(self, session_id: str) -> tuple[str, SessionRecord]:
        """Assemble (once) and return the frozen notification bundle JSON."""
        with self._lock_for(session_id):
            record = self._record(session_id)
            if record.state.order < SessionState.CONCERNS_SUBMITTED.order:
                raise StateTransitionError("concerns must be submitted first")
            if record.bundle_json is None:
                bundle_json, notification_id = self._assemble_bundle(record)
                self._emit(
                    {
                        "type": "notified",
                        "session_id": session_id,
                        "notification_id": notification_id,
                        "bundle_json": bundle_json,
                        "at": _now(),
                    }
                )
            return record.bundle_json, record

    def _assemble_bundle(self, record: SessionRecord) -> tuple[str, str]:
        selection = ConcernSet(record.selection)
        cache_key = (record.scenario, record.dp_level, tuple(sorted(record.selection)))
        if self.config.illustration_seed is not None:
            cached = self._bundle_cache.get(cache_key)
            if cached is not None:
                return cached
        base_seed = (
            self.config.illustration_seed
            if self.config.illustration_seed is not None
            else fresh_seed()
        )
        text = render_text_description(
            record.scenario, record.dp_level, selection, self.templates
        )
        storyboard = build_storyboard(record.scenario, record.dp_level).to_dict()
        illustrations = []
        extras = [
            d
            for d in self.registry.for_cell(record.scenario, record.dp_level)
            if d.category in (Category.INPUT_OUTPUT, Category.PROB_DIST)
        ]
        for i, descriptor in enumerate(extras):
            illustrations.append(
                build_design_payload(
                    descriptor,
                    self.config,
                    seed=(base_seed + i) % (1 << 53),
                    template_repo=self.templates,
                    selection=selection,
                )
            )
        bundle = {
            "scenario": record.scenario.value,
            "dp_level": record.dp_level.value,
            "selection": sorted(record.selection),
            "text": text,
            "storyboard": storyboard,
            "illustrations": illustrations,
        }
        core = json.dumps(bundle, ensure_ascii=False)
        notification_id = hashlib.sha256(core.encode("utf-8")).hexdigest()[:16]
        bundle["notification_id"] = notification_id
        bundle_json = json.dumps(bundle, ensure_ascii=False)
        result = (bundle_json, notification_id)
        if self.config.illustration_seed is not None:
            self._bundle_cache[cache_key] = result
        return result

    def submit_consent(self, session_id: str, decision: str) -> SessionRecord:
        if decision not in ("granted", "declined"):
            raise ValidationError(f"decision must be granted or declined, got {decision!r}")
        with self._lock_for(session_id):
            record = self._record(session_id)
            if record.state is not SessionState.NOTIFIED:
                raise StateTransitionError(
                    f"consent not acceptable in state {record.state.value}"
                )
            self._emit(
                {
                    "type": "consent_recorded",
                    "session_id": session_id,
                    "decision": decision,
                    "at": _now(),
                }
            )
            return record

    def submit_data(self, session_id: str, value, perturbation: str) -> SessionRecord:
        if perturbation not in ("raw", "perturbed"):
            raise ValidationError(
                f"perturbation flag must be raw or perturbed, got {perturbation!r}"
            )
        with self._lock_for(session_id):
            record = self._record(session_id)
            if record.state is not SessionState.CONSENTED:
                raise StateTransitionError(
                    f"data not acceptable in state {record.state.value}"
                )
            if record.submitted_data is not None:
                raise StateTransitionError("data already submitted for this session")
            if record.dp_level is DpLevel.LOCAL:
                self._accept_local(record, value, perturbation)
            else:
                self._accept_central(record, value, perturbation)
            return record

    def _accept_local(self, record: SessionRecord, value, perturbation: str) -> None:
        if perturbation == "raw":
            # Do not echo the value anywhere: it must not be persisted or logged.
            raise LocalDpViolationError(
                "local-DP session requires client-side perturbation; raw submissions "
                "are rejected"
            )
        domain = self.config.scenario(record.scenario).domain
        if isinstance(domain, NumericDomain):
            if not isinstance(value, (int, float)) or isinstance(value, bool) or not math.isfinite(value):
                raise ValidationError("perturbed numeric value must be a finite number")
            envelope = PLAUSIBILITY_SCALES * (domain.width / self.config.epsilon)
            if not (domain.lo - envelope <= value <= domain.hi + envelope):
                raise ValidationError("value implausibly far outside the clamp range")
            stored = float(value)
        else:
            if value not in domain.cells:
                raise ValidationError("perturbed cell must belong to the grid")
            stored = value
        self._emit(
            {
                "type": "data_submitted",
                "session_id": record.session_id,
                "storage": "inline",
                "perturbation": "perturbed",
                "value": stored,
                "at": _now(),
            }
        )

    def _accept_central(self, record: SessionRecord, value, perturbation: str) -> None:
        if perturbation != "raw":
            raise ValidationError(
                "central-DP sessions store the raw value; submit with the raw flag"
            )
        domain = self.config.scenario(record.scenario).domain
        if isinstance(domain, NumericDomain):
            if not isinstance(value, (int, float)) or isinstance(value, bool) or not math.isfinite(value):
                raise ValidationError("raw numeric value must be a finite number")
            if not domain.contains(value):
                raise ValidationError("raw value outside the scenario domain")
            stored = float(value)
        else:
            if value not in domain.cells:
                raise ValidationError("raw cell must belong to the grid")
            stored = value
        # Raw value goes to the protected store only, never to the event log.
        self.store.append_protected(
            {
                "session_id": record.session_id,
                "scenario": record.scenario.value,
                "value": stored,
            }
        )
        self._emit(
            {
                "type": "data_submitted",
                "session_id": record.session_id,
                "storage": "protected",
                "perturbation": "raw",
                "at": _now(),
            }
        )

    def submit_rating(self, session_id: str, item: str, score: int, design_id: str) -> SessionRecord:
        if item not in RATING_ITEMS:
            raise ValidationError(f"rating item must be one of {RATING_ITEMS}")
        if isinstance(score, bool) or not isinstance(score, int) or not 1 <= score <= 5:
            raise ValidationError("score must be an integer from 1 to 5")
        self.registry.get(design_id)  # raises NotFoundError for unknown designs
        with self._lock_for(session_id):
            record = self._record(session_id)
            if record.state.order < SessionState.NOTIFIED.order:
                raise StateTransitionError(
                    f"ratings not acceptable in state {record.state.value}"
                )
            self._emit(
                {
                    "type": "rating_recorded",
                    "session_id": session_id,
                    "item": item,
                    "score": score,
                    "design_id": design_id,
                    "at": _now(),
                }
            )
            return record

    # -- operator surface ----------------------------------------------------

    def _check_token(self, token: str) -> None:
        if token != self.config.operator_token:
            raise AuthorizationError("bad operator token")

    def export_records(
        self,
        token: str,
        scenario: ScenarioKind | str | None = None,
        include_protected: bool = False,
    ) -> Iterator[dict]:
        """Stream session records; central raw values only on request."""
        self._check_token(token)
        if isinstance(scenario, str):
            scenario = ScenarioKind(scenario)
        protected: dict[str, object] = {}
        if include_protected:
            for entry in self.store.load_protected():
                protected[entry["session_id"]] = entry["value"]
        for record in list(self._sessions.values()):
            if scenario is not None and record.scenario is not scenario:
                continue
            out = record.to_export_dict()
            if include_protected and record.session_id in protected:
                out["protected_value"] = protected[record.session_id]
            yield out

    def answer_query(
        self,
        scenario: ScenarioKind | str,
        query: str,
        epsilon: float | None = None,
        seed: int | None = None,
        bins=None,
    ) -> QueryAnswer:
        """Run a central query over the protected store, debiting the ledger.

        This is the only read path for raw central-DP values.
        """
        if isinstance(scenario, str):
            scenario = ScenarioKind(scenario)
        eps = epsilon if epsilon is not None else self.config.epsilon
        domain = self.config.scenario(scenario).domain
        values = [
            entry["value"]
            for entry in self.store.load_protected()
            if entry["scenario"] == scenario.value
        ]
        if isinstance(domain, NumericDomain):
            params = MechanismParams.for_numeric(domain, eps)
            if query == "histogram" and bins is None:
                bins_spec = self.config.distribution_bins
                from .mechanisms import numeric_bin_edges

                bins = numeric_bin_edges(domain, bins_spec)
        else:
            params = MechanismParams.for_cells(domain, eps)
        return central_answer_query(values, query, params, self.ledger, seed=seed, bins=bins)

    # -- misc ----------------------------------------------------------------

    def get_session(self, session_id: str) -> SessionRecord:
        return self._record(session_id)

    def design_payload(self, design_id: str, seed: int | None = None) -> dict:
        descriptor = self.registry.get(design_id)
        return build_design_payload(
            descriptor, self.config, seed=seed, template_repo=self.templates
        )
