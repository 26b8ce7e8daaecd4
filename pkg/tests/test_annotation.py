import pytest
from fastapi.testclient import TestClient

from sdohx.annotation import StudyStore, create_app, load_questionnaire, validate_answers
from sdohx.annotation.study import StudyError
from sdohx.backends import RuleMockBackend
from sdohx.pipeline import TaskSpec, run_batch
from sdohx.synth import GeneratorSpec, generate_corpus

STUDY_FACTORS = (
    "adverse_childhood_experience",
    "alcohol_problem",
    "exposure_to_disaster",
    "mental_health_problem",
)


class FakeClock:
    def __init__(self, start=1_000_000.0):
        self.now = start

    def __call__(self):
        return self.now

    def advance(self, seconds):
        self.now += seconds


@pytest.fixture(scope="module")
def study_world(registry):
    spec = GeneratorSpec(seed=23, n_incidents=7, factor_ids=STUDY_FACTORS)
    records, _ = generate_corpus(spec, registry)
    by_id = {r.incident_id: r for r in records}
    backends = {"default": RuleMockBackend(registry=registry)}
    tasks = [TaskSpec(r.incident_id, f, "multistage") for r in records for f in STUDY_FACTORS]
    traces = {
        (t.incident_id, t.factor_id): t
        for t in run_batch(tasks, by_id, registry, backends)
    }
    return by_id, traces


@pytest.fixture()
def make_client(registry, study_world, tmp_path):
    def factory(clock=None, store_path=None):
        records, traces = study_world
        store = StudyStore(store_path or tmp_path / "study.db")
        app = create_app(records, registry, traces, store, clock=clock or FakeClock())
        return TestClient(app)

    return factory


def create_study(client, records, min_gap=0.0, **overrides):
    body = {
        "factors": list(STUDY_FACTORS),
        "incidents": sorted(records)[:7],
        "min_arm_gap_seconds": min_gap,
        "seed": 3,
    }
    body.update(overrides)
    response = client.post("/api/studies", json=body)
    assert response.status_code == 201, response.text
    return response.json()["study_id"]


def open_session(client, study_id, annotator, arm):
    response = client.post(
        f"/api/studies/{study_id}/sessions", json={"annotator_id": annotator, "arm": arm}
    )
    assert response.status_code == 201, response.text
    return response.json()


class TestStudyCreation:
    def test_item_count(self, make_client, study_world):
        records, _ = study_world
        client = make_client()
        study_id = create_study(client, records)
        session = open_session(client, study_id, "ann-1", "control")
        assert session["total_items"] == 28  # 4 factors x 7 incidents

    def test_dangling_incident_listed(self, make_client, study_world):
        records, _ = study_world
        client = make_client()
        response = client.post(
            "/api/studies",
            json={"factors": list(STUDY_FACTORS), "incidents": ["ghost-incident"]},
        )
        assert response.status_code == 400
        body = response.json()
        assert body["code"] == "invalid_study"
        assert "ghost-incident" in body["message"]

    def test_missing_trace_rejected(self, registry, study_world, tmp_path):
        records, traces = study_world
        partial = dict(list(traces.items())[:-1])  # drop one pair
        store = StudyStore(tmp_path / "partial.db")
        client = TestClient(create_app(records, registry, partial, store, clock=FakeClock()))
        response = client.post(
            "/api/studies",
            json={"factors": list(STUDY_FACTORS), "incidents": sorted(records)[:7]},
        )
        assert response.status_code == 400
        assert "no trace" in response.json()["message"]

    def test_same_seed_same_item_order(self, make_client, study_world):
        records, _ = study_world
        client = make_client()
        study_id = create_study(client, records)
        orders = []
        for arm_suffix in ("a", "b"):
            session = open_session(client, study_id, "same-annotator", "control")
            # drain by answering everything; collect the served order
            sid = session["session_id"]
            order = []
            while True:
                item = client.get(f"/api/sessions/{sid}/next").json()
                if item["done"]:
                    break
                order.append((item["incident_id"], item["factor_id"]))
                client.post(
                    f"/api/sessions/{sid}/decision",
                    json={
                        "incident_id": item["incident_id"],
                        "factor_id": item["factor_id"],
                        "decision": True,
                    },
                )
            orders.append(order)
        assert orders[0] == orders[1]


class TestSessionFlow:
    def test_control_items_have_no_highlights(self, make_client, study_world):
        records, _ = study_world
        client = make_client()
        study_id = create_study(client, records)
        sid = open_session(client, study_id, "ann-c", "control")["session_id"]
        item = client.get(f"/api/sessions/{sid}/next").json()
        assert item["arm"] == "control"
        assert item["highlights"] == []

    def test_intervention_highlights_equal_trace_verified(self, make_client, study_world):
        records, traces = study_world
        clock = FakeClock()
        client = make_client(clock=clock)
        study_id = create_study(client, records)
        control = open_session(client, study_id, "ann-i", "control")["session_id"]
        while True:
            item = client.get(f"/api/sessions/{control}/next").json()
            if item["done"]:
                break
            client.post(
                f"/api/sessions/{control}/decision",
                json={
                    "incident_id": item["incident_id"],
                    "factor_id": item["factor_id"],
                    "decision": False,
                },
            )
        sid = open_session(client, study_id, "ann-i", "intervention")["session_id"]
        seen = 0
        while True:
            item = client.get(f"/api/sessions/{sid}/next").json()
            if item["done"]:
                break
            trace = traces[(item["incident_id"], item["factor_id"])]
            expected = {(r.report, r.index) for r in trace.verified}
            got = {(h["report"], h["index"]) for h in item["highlights"]}
            assert got == expected
            for h in item["highlights"]:
                report_text = (
                    records[item["incident_id"]].cme_report
                    if h["report"] == "cme"
                    else records[item["incident_id"]].le_report
                )
                assert report_text[h["char_start"] : h["char_end"]] == h["text"]
            seen += 1
            client.post(
                f"/api/sessions/{sid}/decision",
                json={
                    "incident_id": item["incident_id"],
                    "factor_id": item["factor_id"],
                    "decision": True,
                },
            )
        assert seen == 28

    def test_serve_then_submit_positive_elapsed(self, make_client, study_world, registry, tmp_path):
        records, traces = study_world
        clock = FakeClock()
        store_path = tmp_path / "timing.db"
        client = make_client(clock=clock, store_path=store_path)
        study_id = create_study(client, records)
        sid = open_session(client, study_id, "ann-t", "control")["session_id"]
        item = client.get(f"/api/sessions/{sid}/next").json()
        clock.advance(42.5)
        response = client.post(
            f"/api/sessions/{sid}/decision",
            json={
                "incident_id": item["incident_id"],
                "factor_id": item["factor_id"],
                "decision": True,
            },
        )
        assert response.status_code == 200
        store = StudyStore(store_path)
        event = store.events_for_session(sid)[0]
        assert event["submitted_at"] - event["served_at"] == pytest.approx(42.5)

    def test_repeat_next_keeps_first_serve_time(self, make_client, study_world, tmp_path):
        records, _ = study_world
        clock = FakeClock()
        store_path = tmp_path / "reserve.db"
        client = make_client(clock=clock, store_path=store_path)
        study_id = create_study(client, records)
        sid = open_session(client, study_id, "ann-r", "control")["session_id"]
        first = client.get(f"/api/sessions/{sid}/next").json()
        served_at = clock.now
        clock.advance(30)
        again = client.get(f"/api/sessions/{sid}/next").json()
        assert (again["incident_id"], again["factor_id"]) == (
            first["incident_id"],
            first["factor_id"],
        )
        store = StudyStore(store_path)
        serve = store.get_serve(sid, first["incident_id"], first["factor_id"])
        assert serve["served_at"] == pytest.approx(served_at)

    def test_double_submit_conflict(self, make_client, study_world):
        records, _ = study_world
        client = make_client()
        study_id = create_study(client, records)
        sid = open_session(client, study_id, "ann-d", "control")["session_id"]
        item = client.get(f"/api/sessions/{sid}/next").json()
        body = {
            "incident_id": item["incident_id"],
            "factor_id": item["factor_id"],
            "decision": True,
        }
        assert client.post(f"/api/sessions/{sid}/decision", json=body).status_code == 200
        duplicate = client.post(f"/api/sessions/{sid}/decision", json=body)
        assert duplicate.status_code == 409
        assert duplicate.json()["code"] == "duplicate_decision"

    def test_unserved_item_ordering_error(self, make_client, study_world):
        records, _ = study_world
        client = make_client()
        study_id = create_study(client, records)
        sid = open_session(client, study_id, "ann-u", "control")["session_id"]
        item = client.get(f"/api/sessions/{sid}/next").json()
        wrong = {
            "incident_id": next(i for i in records if i != item["incident_id"]),
            "factor_id": item["factor_id"],
            "decision": True,
        }
        response = client.post(f"/api/sessions/{sid}/decision", json=wrong)
        assert response.status_code == 409
        assert response.json()["code"] in ("out_of_order", "not_served")

    def test_done_after_last_item(self, make_client, study_world):
        records, _ = study_world
        client = make_client()
        study_id = create_study(client, records)
        sid = open_session(client, study_id, "ann-f", "control")["session_id"]
        for _ in range(28):
            item = client.get(f"/api/sessions/{sid}/next").json()
            client.post(
                f"/api/sessions/{sid}/decision",
                json={
                    "incident_id": item["incident_id"],
                    "factor_id": item["factor_id"],
                    "decision": True,
                },
            )
        assert client.get(f"/api/sessions/{sid}/next").json()["done"] is True


class TestArmGating:
    def test_intervention_locked_until_control_done(self, make_client, study_world):
        records, _ = study_world
        client = make_client()
        study_id = create_study(client, records, min_gap=0.0)
        sid = open_session(client, study_id, "gated", "intervention")["session_id"]
        response = client.get(f"/api/sessions/{sid}/next")
        assert response.status_code == 409
        assert response.json()["code"] == "arm_locked"

    def test_min_gap_enforced_with_unlock_time(self, make_client, study_world):
        records, _ = study_world
        clock = FakeClock()
        client = make_client(clock=clock)
        study_id = create_study(client, records, min_gap=24 * 3600.0)
        control = open_session(client, study_id, "gapped", "control")["session_id"]
        while True:
            item = client.get(f"/api/sessions/{control}/next").json()
            if item["done"]:
                break
            client.post(
                f"/api/sessions/{control}/decision",
                json={
                    "incident_id": item["incident_id"],
                    "factor_id": item["factor_id"],
                    "decision": True,
                },
            )
        control_done_at = clock.now
        sid = open_session(client, study_id, "gapped", "intervention")["session_id"]
        locked = client.get(f"/api/sessions/{sid}/next")
        assert locked.status_code == 409
        assert locked.json()["unlock_at"] == pytest.approx(control_done_at + 24 * 3600.0)
        clock.advance(24 * 3600.0 + 1)
        assert client.get(f"/api/sessions/{sid}/next").status_code == 200


class TestQuestionnaire:
    def _complete_session(self, client, study_id, annotator, arm="control"):
        sid = open_session(client, study_id, annotator, arm)["session_id"]
        while True:
            item = client.get(f"/api/sessions/{sid}/next").json()
            if item["done"]:
                return sid
            client.post(
                f"/api/sessions/{sid}/decision",
                json={
                    "incident_id": item["incident_id"],
                    "factor_id": item["factor_id"],
                    "decision": True,
                },
            )

    def test_valid_submission(self, make_client, study_world):
        records, _ = study_world
        client = make_client()
        study_id = create_study(client, records)
        sid = self._complete_session(client, study_id, "q-ann")
        answers = {f"Q{i}": 3 for i in range(1, 7)} | {"Q7": 2, "Q8": 1, "Q9": 2} | {
            f"Q{i}": 4 for i in range(10, 13)
        }
        response = client.post(f"/api/sessions/{sid}/questionnaire", json={"answers": answers})
        assert response.status_code == 200

    def test_incomplete_session_rejected(self, make_client, study_world):
        records, _ = study_world
        client = make_client()
        study_id = create_study(client, records)
        sid = open_session(client, study_id, "q-early", "control")["session_id"]
        answers = {f"Q{i}": 1 for i in range(1, 13)}
        response = client.post(f"/api/sessions/{sid}/questionnaire", json={"answers": answers})
        assert response.status_code == 409

    def test_out_of_range_and_missing_rejected(self, make_client, study_world):
        records, _ = study_world
        client = make_client()
        study_id = create_study(client, records)
        sid = self._complete_session(client, study_id, "q-bad")
        bad_range = {f"Q{i}": 3 for i in range(1, 13)} | {"Q7": 3}  # Q7 is yes/no
        response = client.post(f"/api/sessions/{sid}/questionnaire", json={"answers": bad_range})
        assert response.status_code == 400
        missing = {f"Q{i}": 2 for i in range(1, 12)}  # Q12 absent
        response = client.post(f"/api/sessions/{sid}/questionnaire", json={"answers": missing})
        assert response.status_code == 400
        assert "Q12" in response.json()["message"]

    def test_validate_answers_helper(self):
        questions = load_questionnaire()
        assert len(questions) == 12
        good = {f"Q{i}": 1 for i in range(1, 13)}
        assert validate_answers(good, questions) == good
        with pytest.raises(StudyError):
            validate_answers(good | {"Q1": 0}, questions)
        with pytest.raises(StudyError):
            validate_answers(good | {"Q1": True}, questions)


class TestPersistence:
    def test_restart_loses_nothing(self, registry, study_world, tmp_path):
        records, traces = study_world
        store_path = tmp_path / "durable.db"
        clock = FakeClock()
        client = TestClient(
            create_app(records, registry, traces, StudyStore(store_path), clock=clock)
        )
        study_id = create_study(client, records)
        sid = open_session(client, study_id, "ann-p", "control")["session_id"]
        item = client.get(f"/api/sessions/{sid}/next").json()
        client.post(
            f"/api/sessions/{sid}/decision",
            json={
                "incident_id": item["incident_id"],
                "factor_id": item["factor_id"],
                "decision": True,
            },
        )
        # new process: fresh store handle over the same file
        reopened = StudyStore(store_path)
        assert reopened.get_study(study_id) is not None
        events = reopened.events_for_session(sid)
        assert len(events) == 1
        assert events[0]["incident_id"] == item["incident_id"]
