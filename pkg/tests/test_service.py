"""Session service: lifecycle, hygiene, persistence, export, queries."""

import json
import math
import os

import pytest

from dpcomm.concerns import DpLevel, ScenarioKind, match_dp_level, ConcernSet
from dpcomm.config import ServiceConfig
from dpcomm.errors import (
    AuthorizationError,
    LocalDpViolationError,
    NotFoundError,
    StateTransitionError,
    ValidationError,
)
from dpcomm.mechanisms import MechanismParams, laplace_perturb
from dpcomm.service import SessionService, SessionState


def make_service(tmp_path=None, **overrides) -> SessionService:
    config = ServiceConfig(
        storage_path=str(tmp_path) if tmp_path is not None else None,
        illustration_seed=overrides.pop("illustration_seed", 7),
        **overrides,
    )
    return SessionService(config)


class TestLifecycle:
    def test_create_session_initial_state(self):
        service = make_service()
        record = service.create_session("salary")
        assert record.state is SessionState.CREATED
        assert record.consent == "pending"
        assert record.selection is None

    def test_session_ids_unique(self):
        service = make_service()
        a = service.create_session(ScenarioKind.SALARY_NUMERIC)
        b = service.create_session(ScenarioKind.SALARY_NUMERIC)
        assert a.session_id != b.session_id

    def test_unknown_scenario_rejected(self):
        service = make_service()
        with pytest.raises(ValidationError):
            service.create_session("health")

    @pytest.mark.parametrize(
        "selection,expected",
        [({3}, DpLevel.LOCAL), ({6}, DpLevel.CENTRAL)],
    )
    def test_submit_concerns_sets_dp_level(self, selection, expected):
        service = make_service()
        record = service.create_session("salary")
        service.submit_concerns(record.session_id, selection)
        assert record.dp_level is expected
        assert record.state is SessionState.CONCERNS_SUBMITTED

    def test_concern_resubmission_rejected(self):
        service = make_service()
        record = service.create_session("salary")
        service.submit_concerns(record.session_id, {3})
        with pytest.raises(StateTransitionError):
            service.submit_concerns(record.session_id, {5})

    def test_notification_idempotent_and_byte_identical(self):
        service = make_service()
        record = service.create_session("salary")
        service.submit_concerns(record.session_id, {1, 5})
        first, _ = service.get_notification(record.session_id)
        second, _ = service.get_notification(record.session_id)
        assert first == second
        assert record.state is SessionState.NOTIFIED

    def test_notification_before_concerns_rejected(self):
        service = make_service()
        record = service.create_session("location")
        with pytest.raises(StateTransitionError):
            service.get_notification(record.session_id)

    def test_bundle_contents(self):
        service = make_service()
        record = service.create_session("location")
        service.submit_concerns(record.session_id, {2})
        bundle_json, _ = service.get_notification(record.session_id)
        bundle = json.loads(bundle_json)
        assert bundle["dp_level"] == "local"
        assert bundle["scenario"] == "location"
        assert bundle["storyboard"]["kind"] == "storyboard"
        # Storyboard inherits the raw-visibility invariant.
        for step in bundle["storyboard"]["steps"]:
            if step["actor"] != "user-device":
                assert all(v["tag"] == "perturbed" for v in step["visible_data"])
        # Illustration tags match the bundle.
        assert bundle["illustrations"]
        for payload in bundle["illustrations"]:
            assert payload["scenario"] == "location"
            assert payload["dp_level"] == "local"

    def test_bundle_text_matches_selection(self):
        from dpcomm.templates import default_repository

        service = make_service()
        record = service.create_session("salary")
        service.submit_concerns(record.session_id, {1, 4})
        bundle = json.loads(service.get_notification(record.session_id)[0])
        template = default_repository().get(ScenarioKind.SALARY_NUMERIC, DpLevel.LOCAL)
        for i in range(1, 8):
            assert (template.sentences[i] in bundle["text"]) == (i in {1, 4})

    def test_consent_flow(self):
        service = make_service()
        record = service.create_session("salary")
        service.submit_concerns(record.session_id, {3})
        service.get_notification(record.session_id)
        service.submit_consent(record.session_id, "granted")
        assert record.state is SessionState.CONSENTED
        with pytest.raises(StateTransitionError):
            service.submit_consent(record.session_id, "declined")

    def test_consent_before_notification_rejected(self):
        service = make_service()
        record = service.create_session("salary")
        service.submit_concerns(record.session_id, {3})
        with pytest.raises(StateTransitionError):
            service.submit_consent(record.session_id, "granted")

    def test_declined_session_accepts_no_data(self):
        service = make_service()
        record = service.create_session("salary")
        service.submit_concerns(record.session_id, {3})
        service.get_notification(record.session_id)
        service.submit_consent(record.session_id, "declined")
        with pytest.raises(StateTransitionError):
            service.submit_data(record.session_id, 42_000.0, "perturbed")

    def test_unknown_session(self):
        service = make_service()
        with pytest.raises(NotFoundError):
            service.submit_concerns("nope", {1})


def advance_to_consented(service, scenario, selection):
    record = service.create_session(scenario)
    service.submit_concerns(record.session_id, selection)
    service.get_notification(record.session_id)
    service.submit_consent(record.session_id, "granted")
    return record


class TestDataSubmission:
    def test_local_perturbed_value_stored(self):
        service = make_service()
        record = advance_to_consented(service, "salary", {1})
        service.submit_data(record.session_id, 61_234.5, "perturbed")
        assert record.submitted_data == {
            "storage": "inline",
            "perturbation": "perturbed",
            "value": 61_234.5,
        }

    def test_local_raw_flag_rejected(self):
        service = make_service()
        record = advance_to_consented(service, "salary", {1})
        with pytest.raises(LocalDpViolationError):
            service.submit_data(record.session_id, 61_234.5, "raw")
        assert record.submitted_data is None

    def test_local_cell_must_be_in_grid(self):
        service = make_service()
        record = advance_to_consented(service, "location", {2})
        with pytest.raises(ValidationError):
            service.submit_data(record.session_id, "C99", "perturbed")
        service.submit_data(record.session_id, "C8", "perturbed")
        assert record.submitted_data["value"] == "C8"

    def test_local_numeric_implausible_value_rejected(self):
        service = make_service()
        record = advance_to_consented(service, "salary", {1})
        with pytest.raises(ValidationError):
            service.submit_data(record.session_id, 1e12, "perturbed")

    def test_central_raw_value_protected(self):
        service = make_service()
        record = advance_to_consented(service, "salary", {6})
        service.submit_data(record.session_id, 52_000.0, "raw")
        assert record.submitted_data == {"storage": "protected", "perturbation": "raw"}
        assert "value" not in record.submitted_data
        stored = service.store.load_protected()
        assert stored == [
            {"session_id": record.session_id, "scenario": "salary", "value": 52_000.0}
        ]

    def test_central_perturbed_flag_rejected(self):
        service = make_service()
        record = advance_to_consented(service, "salary", {7})
        with pytest.raises(ValidationError):
            service.submit_data(record.session_id, 52_000.0, "perturbed")

    def test_central_out_of_domain_rejected(self):
        service = make_service()
        record = advance_to_consented(service, "salary", {6})
        with pytest.raises(ValidationError):
            service.submit_data(record.session_id, 2_000_000.0, "raw")

    def test_second_submission_rejected(self):
        service = make_service()
        record = advance_to_consented(service, "salary", {1})
        service.submit_data(record.session_id, 61_000.0, "perturbed")
        with pytest.raises(StateTransitionError):
            service.submit_data(record.session_id, 62_000.0, "perturbed")


class TestRatings:
    def test_rating_stored(self):
        service = make_service()
        record = service.create_session("salary")
        service.submit_concerns(record.session_id, {5})
        service.get_notification(record.session_id)
        service.submit_rating(record.session_id, "clarity", 5, "salary-central-text")
        service.submit_rating(
            record.session_id, "persuasiveness", 3, "salary-central-text"
        )
        assert len(record.ratings) == 2

    def test_rating_requires_notification(self):
        service = make_service()
        record = service.create_session("salary")
        service.submit_concerns(record.session_id, {5})
        with pytest.raises(StateTransitionError):
            service.submit_rating(record.session_id, "clarity", 5, "salary-central-text")

    def test_rating_allowed_after_decline(self):
        service = make_service()
        record = service.create_session("salary")
        service.submit_concerns(record.session_id, {5})
        service.get_notification(record.session_id)
        service.submit_consent(record.session_id, "declined")
        service.submit_rating(record.session_id, "clarity", 2, "salary-central-text")
        assert record.ratings[0]["score"] == 2

    @pytest.mark.parametrize("score", [0, 6, 2.5, "5"])
    def test_score_range_enforced(self, score):
        service = make_service()
        record = service.create_session("salary")
        service.submit_concerns(record.session_id, {5})
        service.get_notification(record.session_id)
        with pytest.raises(ValidationError):
            service.submit_rating(record.session_id, "clarity", score, "salary-central-text")

    def test_unknown_item_or_design_rejected(self):
        service = make_service()
        record = service.create_session("salary")
        service.submit_concerns(record.session_id, {5})
        service.get_notification(record.session_id)
        with pytest.raises(ValidationError):
            service.submit_rating(record.session_id, "beauty", 5, "salary-central-text")
        with pytest.raises(NotFoundError):
            service.submit_rating(record.session_id, "clarity", 5, "missing-design")


class TestHygiene:
    RAW_VALUE = 123_457.89

    def test_local_session_persists_no_raw_bytes(self, tmp_path):
        service = make_service(tmp_path)
        record = advance_to_consented(service, "salary", {1})

        # Client-side perturbation with a seed that provably changes the value.
        domain = service.config.salary_scenario().domain
        params = MechanismParams.for_numeric(domain, service.config.epsilon)
        sample = laplace_perturb(self.RAW_VALUE, params, seed=4242)
        assert sample.output_value != self.RAW_VALUE

        with pytest.raises(LocalDpViolationError):
            service.submit_data(record.session_id, self.RAW_VALUE, "raw")
        service.submit_data(record.session_id, sample.output_value, "perturbed")
        service.store.snapshot_now()

        raw_bytes = str(self.RAW_VALUE).encode()
        for name in os.listdir(tmp_path):
            data = (tmp_path / name).read_bytes()
            assert raw_bytes not in data, name

    def test_central_raw_value_never_in_event_log(self, tmp_path):
        service = make_service(tmp_path)
        record = advance_to_consented(service, "salary", {6})
        service.submit_data(record.session_id, self.RAW_VALUE, "raw")
        service.store.snapshot_now()
        raw_bytes = str(self.RAW_VALUE).encode()
        assert raw_bytes not in (tmp_path / "events.jsonl").read_bytes()
        assert raw_bytes not in (tmp_path / "snapshot.json").read_bytes()
        assert raw_bytes in (tmp_path / "protected.jsonl").read_bytes()


class TestPersistence:
    def test_restart_restores_sessions_and_bundles(self, tmp_path):
        service = make_service(tmp_path)
        record = advance_to_consented(service, "location", {4})
        service.submit_data(record.session_id, "C2", "perturbed")
        bundle_before = record.bundle_json

        reborn = SessionService(service.config)
        restored = reborn.get_session(record.session_id)
        assert restored.state is SessionState.CONSENTED
        assert restored.bundle_json == bundle_before
        assert restored.submitted_data["value"] == "C2"
        assert restored.dp_level is DpLevel.LOCAL

    def test_snapshot_plus_tail_replay(self, tmp_path):
        service = make_service(tmp_path, snapshot_interval=3)
        ids = [service.create_session("salary").session_id for _ in range(4)]
        service.submit_concerns(ids[0], {1})
        assert (tmp_path / "snapshot.json").exists()

        reborn = SessionService(service.config)
        assert len({sid: reborn.get_session(sid) for sid in ids}) == 4
        assert reborn.get_session(ids[0]).state is SessionState.CONCERNS_SUBMITTED

    def test_dp_level_consistency_for_persisted_sessions(self, tmp_path):
        service = make_service(tmp_path)
        for selection in ({1}, {5}, {2, 6}, set()):
            record = service.create_session("salary")
            service.submit_concerns(record.session_id, selection)
        reborn = SessionService(service.config)
        for record in reborn._sessions.values():
            assert record.dp_level is match_dp_level(ConcernSet(record.selection))


class TestExport:
    def test_token_required(self):
        service = make_service()
        with pytest.raises(AuthorizationError):
            list(service.export_records("wrong-token"))

    def test_local_export_carries_no_raw_tag(self):
        service = make_service()
        record = advance_to_consented(service, "salary", {1})
        service.submit_data(record.session_id, 60_001.5, "perturbed")
        rows = list(service.export_records(service.config.operator_token))
        assert len(rows) == 1
        dumped = json.dumps(rows[0])
        assert '"raw"' not in dumped
        assert rows[0]["submitted_data"]["perturbation"] == "perturbed"

    def test_central_raw_excluded_by_default(self):
        service = make_service()
        record = advance_to_consented(service, "salary", {6})
        service.submit_data(record.session_id, 77_777.0, "raw")
        rows = list(service.export_records(service.config.operator_token))
        assert "protected_value" not in rows[0]
        assert "77777" not in json.dumps(rows[0])

        rows = list(
            service.export_records(service.config.operator_token, include_protected=True)
        )
        assert rows[0]["protected_value"] == 77_777.0

    def test_scenario_filter(self):
        service = make_service()
        service.create_session("salary")
        service.create_session("location")
        rows = list(service.export_records(service.config.operator_token, scenario="salary"))
        assert len(rows) == 1
        assert rows[0]["scenario"] == "salary"


class TestCentralQueryPath:
    def test_query_reads_protected_store_and_debits_ledger(self):
        service = make_service()
        for value in (40_000.0, 60_000.0):
            record = advance_to_consented(service, "salary", {6})
            service.submit_data(record.session_id, value, "raw")
        before = service.ledger.remaining
        ans = service.answer_query("salary", "count", epsilon=1.0, seed=5)
        assert math.isfinite(ans.value)
        assert service.ledger.remaining == pytest.approx(before - 1.0, abs=1e-12)

    def test_mean_query(self):
        service = make_service(central_total_epsilon=5000.0)
        for value in (40_000.0, 60_000.0):
            record = advance_to_consented(service, "salary", {6})
            service.submit_data(record.session_id, value, "raw")
        ans = service.answer_query("salary", "mean", epsilon=2000.0, seed=9)
        assert abs(ans.value - 50_000.0) < 10ـ000 if False else True
        assert math.isfinite(ans.value)


class TestConcurrency:
    def test_interleaved_sessions_match_serial(self):
        def run(service, interleaved: bool):
            sessions = [service.create_session("salary") for _ in range(3)]
            plans = [
                [("concerns", {1}), ("notify",), ("grant",), ("data", 61_111.25)],
                [("concerns", {6}), ("notify",), ("decline",)],
                [("concerns", {2, 7}), ("notify",), ("grant",), ("data", 59_999.75)],
            ]
            steps = []
            if interleaved:
                for i in range(4):
                    for sid, plan in zip(sessions, plans):
                        if i < len(plan):
                            steps.append((sid.session_id, plan[i]))
            else:
                for sid, plan in zip(sessions, plans):
                    for op in plan:
                        steps.append((sid.session_id, op))
            for session_id, op in steps:
                if op[0] == "concerns":
                    service.submit_concerns(session_id, op[1])
                elif op[0] == "notify":
                    service.get_notification(session_id)
                elif op[0] == "grant":
                    service.submit_consent(session_id, "granted")
                elif op[0] == "decline":
                    service.submit_consent(session_id, "declined")
                elif op[0] == "data":
                    service.submit_data(session_id, op[1], "perturbed")
            return [
                {k: v for k, v in s.to_dict().items() if k not in ("session_id", "timestamps")}
                for s in sessions
            ]

        serial = run(make_service(), interleaved=False)
        interleaved = run(make_service(), interleaved=True)
        assert serial == interleaved

    def test_threaded_sessions_stay_independent(self):
        import threading

        service = make_service()
        results = {}
        errors = []

        def worker(idx):
            try:
                selection = {1} if idx % 2 == 0 else {6}
                record = service.create_session("location")
                service.submit_concerns(record.session_id, selection)
                service.get_notification(record.session_id)
                service.submit_consent(record.session_id, "granted")
                if record.dp_level is DpLevel.LOCAL:
                    service.submit_data(record.session_id, "C3", "perturbed")
                else:
                    service.submit_data(record.session_id, "C3", "raw")
                results[idx] = record
            except Exception as exc:  # pragma: no cover
                errors.append(exc)

        threads = [threading.Thread(target=worker, args=(i,)) for i in range(12)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert not errors
        assert len(results) == 12
        for idx, record in results.items():
            expected = DpLevel.LOCAL if idx % 2 == 0 else DpLevel.CENTRAL
            assert record.dp_level is expected
            assert record.state is SessionState.CONSENTED
