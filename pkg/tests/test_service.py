"""Live survey service: HTTP API, event sourcing, replay, concurrency."""

import json
import threading

import numpy as np
import pytest
from fastapi.testclient import TestClient

from gbs.core import gbs_gradient, sgd_update
from gbs.service import SessionConfig, SessionStore, create_app
from gbs.service.store import ConflictError


@pytest.fixture()
def client(tmp_path):
    app = create_app(str(tmp_path))
    with TestClient(app) as c:
        c.app = app
        yield c


def make_session(client, k=4, **config):
    body = {
        "schema": {"attributes": [f"attr_{i}" for i in range(k)]},
        "config": {"seed": 7, **config},
    }
    resp = client.post("/sessions", json=body)
    assert resp.status_code == 201, resp.text
    return resp.json()


def answer_one(client, sid, rid, choice="z1"):
    q = client.get(f"/sessions/{sid}/respondents/{rid}/question").json()
    ack = client.post(
        f"/sessions/{sid}/respondents/{rid}/choice",
        json={"question_token": q["question_token"], "choice": choice},
    )
    assert ack.status_code == 200, ack.text
    return q, ack.json()


class TestSessionLifecycle:
    def test_create_starts_near_half(self, client):
        created = make_session(client, k=10)
        state = client.get(f"/sessions/{created['session_id']}/state").json()
        assert state["status"] == "active"
        assert state["k"] == 10
        pi = np.asarray(state["pi"])
        assert np.all((pi > 0.4) & (pi < 0.6))
        assert state["question_count"] == 0

    def test_duplicate_attribute_rejected(self, client):
        body = {"schema": {"attributes": ["a", "a"]}, "config": {}}
        assert client.post("/sessions", json=body).status_code == 422

    def test_empty_schema_rejected(self, client):
        body = {"schema": {"attributes": []}, "config": {}}
        assert client.post("/sessions", json=body).status_code == 422

    def test_same_seed_same_initial_logits(self, client):
        a = make_session(client, k=6)
        b = make_session(client, k=6)
        sa = client.get(f"/sessions/{a['session_id']}/state").json()
        sb = client.get(f"/sessions/{b['session_id']}/state").json()
        assert sa["pi"] == sb["pi"]

    def test_unknown_session_404(self, client):
        assert client.get("/sessions/nope/state").status_code == 404

    def test_status_transitions(self, client):
        created = make_session(client)
        sid = created["session_id"]
        rid = client.post(f"/sessions/{sid}/respondents", json={}).json()["respondent_id"]
        resp = client.post(f"/sessions/{sid}/status", json={"status": "suspended"})
        assert resp.json()["status"] == "suspended"
        q = client.get(f"/sessions/{sid}/respondents/{rid}/question")
        assert q.status_code == 409
        client.post(f"/sessions/{sid}/status", json={"status": "active"})
        assert client.get(f"/sessions/{sid}/respondents/{rid}/question").status_code == 200


class TestQuestionFlow:
    def test_differ_count_follows_the_law(self, client):
        # near pi = 0.5 the pair differs on nearly every attribute; a tiny
        # stepsize keeps pi pinned at its initial values while we sample
        created = make_session(client, k=10, skip_identical=False, eta=1e-9)
        sid = created["session_id"]
        diffs = []
        for _ in range(3):
            rid = client.post(f"/sessions/{sid}/respondents", json={}).json()["respondent_id"]
            for _ in range(10):
                q, _ = answer_one(client, sid, rid)
                diffs.append(sum(a != b for a, b in zip(q["z1"], q["z2"])))
        state = client.get(f"/sessions/{sid}/state").json()
        pi = np.asarray(state["pi"])
        expected = float(np.sum(1 - np.abs(2 * pi - 1)))
        assert np.mean(diffs) > 0.8 * 10  # close to K, nowhere near K/2
        assert abs(np.mean(diffs) - expected) < 2.0

    def test_second_fetch_conflicts(self, client):
        created = make_session(client)
        sid = created["session_id"]
        rid = client.post(f"/sessions/{sid}/respondents", json={}).json()["respondent_id"]
        assert client.get(f"/sessions/{sid}/respondents/{rid}/question").status_code == 200
        assert client.get(f"/sessions/{sid}/respondents/{rid}/question").status_code == 409

    def test_unknown_respondent_404(self, client):
        created = make_session(client)
        sid = created["session_id"]
        assert client.get(f"/sessions/{sid}/respondents/r99/question").status_code == 404

    def test_refetch_after_answer_progresses(self, client):
        created = make_session(client, n_q=3)
        sid = created["session_id"]
        rid = client.post(f"/sessions/{sid}/respondents", json={}).json()["respondent_id"]
        for i in range(3):
            q, ack = answer_one(client, sid, rid)
            assert q["answered"] == i
            assert ack["answered"] == i + 1
        assert ack["done"]
        assert client.get(f"/sessions/{sid}/respondents/{rid}/question").status_code == 409


class TestSubmit:
    def test_update_is_exactly_eta_times_gradient(self, client):
        created = make_session(client, k=3, eta=0.7, skip_identical=False)
        sid = created["session_id"]
        rid = client.post(f"/sessions/{sid}/respondents", json={}).json()["respondent_id"]
        store: SessionStore = client.app.state.store
        phi_before = store.get(sid).phi.copy()
        answer_one(client, sid, rid, choice="z2")
        log = client.get(f"/sessions/{sid}/export").text.strip().splitlines()
        event = json.loads(log[-1])
        assert event["type"] == "choice" and event["y"] == 0
        expected = sgd_update(
            phi_before, gbs_gradient(0, np.asarray(event["u"])), 0.7
        )
        assert event["phi_after"] == expected.tolist()
        assert store.get(sid).phi.tolist() == expected.tolist()

    def test_duplicate_submission_idempotent(self, client):
        created = make_session(client)
        sid = created["session_id"]
        rid = client.post(f"/sessions/{sid}/respondents", json={}).json()["respondent_id"]
        q = client.get(f"/sessions/{sid}/respondents/{rid}/question").json()
        body = {"question_token": q["question_token"], "choice": "z1"}
        first = client.post(f"/sessions/{sid}/respondents/{rid}/choice", json=body).json()
        state1 = client.get(f"/sessions/{sid}/state").json()
        again = client.post(f"/sessions/{sid}/respondents/{rid}/choice", json=body).json()
        state2 = client.get(f"/sessions/{sid}/state").json()
        assert again["duplicate"] and not first["duplicate"]
        assert again["step"] == first["step"]
        assert state1["question_count"] == state2["question_count"] == 1
        assert state1["pi"] == state2["pi"]

    def test_stale_token_rejected_without_state_change(self, client):
        created = make_session(client)
        sid = created["session_id"]
        rid = client.post(f"/sessions/{sid}/respondents", json={}).json()["respondent_id"]
        client.get(f"/sessions/{sid}/respondents/{rid}/question")
        before = client.get(f"/sessions/{sid}/state").json()
        resp = client.post(
            f"/sessions/{sid}/respondents/{rid}/choice",
            json={"question_token": "bogus", "choice": "z1"},
        )
        assert resp.status_code == 409
        after = client.get(f"/sessions/{sid}/state").json()
        assert before["pi"] == after["pi"]
        assert before["question_count"] == after["question_count"]


class TestEventSourcing:
    def test_replay_reproduces_logits_bit_exactly(self, client):
        created = make_session(client, k=5, eta=1.3)
        sid = created["session_id"]
        store: SessionStore = client.app.state.store
        rng = np.random.default_rng(0)
        for _ in range(3):
            rid = client.post(f"/sessions/{sid}/respondents", json={}).json()["respondent_id"]
            for _ in range(4):
                answer_one(client, sid, rid, choice="z1" if rng.uniform() < 0.5 else "z2")
        live_phi = store.get(sid).phi.copy()
        store.drop_cached(sid)
        replayed = store.get(sid).phi
        assert np.array_equal(live_phi, replayed)

    def test_crash_between_requests_resumes(self, client):
        created = make_session(client, n_q=4)
        sid = created["session_id"]
        store: SessionStore = client.app.state.store
        rid = client.post(f"/sessions/{sid}/respondents", json={}).json()["respondent_id"]
        answer_one(client, sid, rid)
        # crash with a pending question outstanding
        q1 = client.get(f"/sessions/{sid}/respondents/{rid}/question").json()
        store.drop_cached(sid)
        # respondent retries: same draw index -> identical question and token
        q2 = client.get(f"/sessions/{sid}/respondents/{rid}/question").json()
        assert q1["question_token"] == q2["question_token"]
        assert q1["z1"] == q2["z1"] and q1["z2"] == q2["z2"]
        ack = client.post(
            f"/sessions/{sid}/respondents/{rid}/choice",
            json={"question_token": q2["question_token"], "choice": "z2"},
        ).json()
        assert ack["answered"] == 2

    def test_duplicate_detected_across_crash(self, client):
        created = make_session(client)
        sid = created["session_id"]
        store: SessionStore = client.app.state.store
        rid = client.post(f"/sessions/{sid}/respondents", json={}).json()["respondent_id"]
        q, first = answer_one(client, sid, rid)
        store.drop_cached(sid)
        again = client.post(
            f"/sessions/{sid}/respondents/{rid}/choice",
            json={"question_token": q["question_token"], "choice": "z1"},
        ).json()
        assert again["duplicate"]
        assert client.get(f"/sessions/{sid}/state").json()["question_count"] == 1

    def test_export_contains_all_events(self, client):
        created = make_session(client, n_q=2)
        sid = created["session_id"]
        for _ in range(2):
            rid = client.post(f"/sessions/{sid}/respondents", json={}).json()["respondent_id"]
            answer_one(client, sid, rid)
            answer_one(client, sid, rid, choice="z2")
        lines = [json.loads(l) for l in
                 client.get(f"/sessions/{sid}/export").text.strip().splitlines()]
        kinds = [l["type"] for l in lines]
        assert kinds.count("respondent") == 2
        assert kinds.count("choice") == 4
        steps = [l["step"] for l in lines if l["type"] == "choice"]
        assert steps == sorted(steps) == [1, 2, 3, 4]


class TestConcurrency:
    def test_serialized_updates_exactly_once(self, client):
        created = make_session(client, k=4, n_q=5, skip_identical=False)
        sid = created["session_id"]
        store: SessionStore = client.app.state.store
        rids = [
            client.post(f"/sessions/{sid}/respondents", json={}).json()["respondent_id"]
            for _ in range(8)
        ]
        errors = []

        def flow(rid):
            try:
                for _ in range(5):
                    answer_one(client, sid, rid)
            except Exception as exc:  # pragma: no cover
                errors.append(exc)

        threads = [threading.Thread(target=flow, args=(rid,)) for rid in rids]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert not errors
        state = client.get(f"/sessions/{sid}/state").json()
        assert state["question_count"] == 40
        # the realized event order replays to the same logits
        live_phi = store.get(sid).phi.copy()
        store.drop_cached(sid)
        assert np.array_equal(store.get(sid).phi, live_phi)


class TestPolicyMode:
    def test_requires_covariate_dim_and_covariates(self, client):
        body = {"schema": {"attributes": ["a", "b"]}, "config": {"mode": "policy"}}
        assert client.post("/sessions", json=body).status_code == 422
        created = make_session(client, k=2, mode="policy", covariate_dim=3)
        sid = created["session_id"]
        assert client.post(f"/sessions/{sid}/respondents", json={}).status_code == 422
        ok = client.post(f"/sessions/{sid}/respondents",
                         json={"covariates": [1.0, 2.0, 3.0]})
        assert ok.status_code == 200

    def test_policy_flow_and_replay(self, client):
        created = make_session(client, k=3, mode="policy", covariate_dim=2, n_q=3)
        sid = created["session_id"]
        store: SessionStore = client.app.state.store
        for cov in ([1.0, 0.5], [4.0, 2.0]):
            rid = client.post(f"/sessions/{sid}/respondents",
                              json={"covariates": cov}).json()["respondent_id"]
            for _ in range(3):
                answer_one(client, sid, rid)
        live_hash = store.get(sid).policy.checkpoint_hash()
        store.drop_cached(sid)
        assert store.get(sid).policy.checkpoint_hash() == live_hash
        state = client.get(f"/sessions/{sid}/state").json()
        assert state["mode"] == "policy"
        assert state["pi"] is None and state["extracted_product"] is None
        assert state["question_count"] == 6


class TestSkipIdentical:
    def test_auto_answers_recorded_and_served_pairs_differ(self, tmp_path):
        # huge logit spread makes identical pairs the common case
        store = SessionStore(str(tmp_path))
        session = store.create(
            ["a", "b"], SessionConfig(seed=3, phi_init_std=8.0, eta=1e-9,
                                      skip_identical=True, n_q=10)
        )
        rid = session.add_respondent()
        human = 0
        for _ in range(10):
            q = session.next_question(rid)
            assert q["z1"] != q["z2"], "identical pairs must be skipped"
            assert q["answered"] == human
            session.submit_choice(rid, q["question_token"], "z1")
            human += 1
        events = [json.loads(l) for l in session.export_text().strip().splitlines()]
        autos = [e for e in events if e["type"] == "choice" and e["auto"]]
        humans = [e for e in events if e["type"] == "choice" and not e["auto"]]
        # at pi = (0.16, 0.02) roughly two thirds of draws are identical
        assert autos, "expected auto-answered identical pairs"
        assert len(humans) == 10
        # and replay still reproduces the state
        phi_live = session.phi.copy()
        store.drop_cached(session.session_id)
        assert np.array_equal(store.get(session.session_id).phi, phi_live)

    def test_identical_pairs_served_when_disabled(self, tmp_path):
        store = SessionStore(str(tmp_path))
        session = store.create(
            ["a", "b"], SessionConfig(seed=3, phi_init_std=8.0, skip_identical=False)
        )
        rid = session.add_respondent()
        served_identical = False
        for _ in range(6):
            q = session.next_question(rid)
            if q["z1"] == q["z2"]:
                served_identical = True
            session.submit_choice(rid, q["question_token"], "z1")
        assert served_identical


class TestAuth:
    def test_token_enforced_when_required(self, client):
        created = make_session(client, require_token=True)
        sid = created["session_id"]
        token = created["token"]
        assert client.get(f"/sessions/{sid}/state").status_code == 401
        assert client.get(f"/sessions/{sid}/export").status_code == 401
        ok = client.get(f"/sessions/{sid}/state",
                        headers={"Authorization": f"Bearer {token}"})
        assert ok.status_code == 200
        # respondent endpoints stay open
        assert client.post(f"/sessions/{sid}/respondents", json={}).status_code == 200
