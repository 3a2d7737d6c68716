import pytest
from fastapi.testclient import TestClient

from lexrag.config import ApiConfig
from lexrag.engine import LegalEngine
from lexrag.api import STATUS_BY_CODE, create_app
from lexrag.errors import ERROR_CODES
from lexrag.kg import Triple

from test_engine import engine_config

TOKENS = {
    "tok-consultant": "Consultant",
    "tok-advisor": "Advisor",
    "tok-paralegal": "Paralegal",
    "tok-admin": "Admin",
}


def auth(token):
    return {"Authorization": f"Bearer {token}"}


@pytest.fixture
def client(fixture_docs, fixture_gazetteer, fixture_triples):
    engine = LegalEngine(engine_config())
    engine.set_gazetteer(fixture_gazetteer)
    engine.ingest_documents(fixture_docs)
    engine.ingest_triples(Triple(h, r, t) for h, r, t in fixture_triples)
    config = ApiConfig(auth_tokens=dict(TOKENS), engine=engine.config)
    app = create_app(engine, config)
    with TestClient(app, raise_server_exceptions=False) as c:
        c.engine = engine
        yield c


def post_query(client, text="What damages follow a breach of contract?"):
    response = client.post("/v1/query", json={"text": text}, headers=auth("tok-consultant"))
    assert response.status_code == 200, response.text
    return response.json()


class TestHealthAndAuth:
    def test_healthz_public(self, client):
        response = client.get("/v1/healthz")
        assert response.status_code == 200
        assert response.json()["status"] == "ok"

    def test_missing_token_401(self, client):
        response = client.post("/v1/query", json={"text": "x"})
        assert response.status_code == 401
        assert response.json()["code"] == "auth_missing"

    def test_unknown_token_401(self, client):
        response = client.post("/v1/query", json={"text": "x"}, headers=auth("nope"))
        assert response.status_code == 401
        assert response.json()["code"] == "auth_invalid"

    def test_wrong_role_403(self, client):
        reply = post_query(client)
        response = client.post(
            f"/v1/cases/{reply['case_id']}/review",
            json={"verdict": "approve"},
            headers=auth("tok-paralegal"),
        )
        assert response.status_code == 403
        assert response.json()["code"] == "role_forbidden"


class TestQuery:
    def test_happy_path_shape(self, client):
        reply = post_query(client)
        assert set(reply) >= {"case_id", "answer", "citations", "abstained", "scores", "gate"}
        assert reply["abstained"] is False
        gates = reply["gate"]["questions"][0]
        assert len(gates["g"]) == 4
        assert sum(gates["g"]) == pytest.approx(1.0, abs=1e-9)
        assert gates["active"]

    def test_empty_text_rejected(self, client):
        response = client.post("/v1/query", json={"text": ""}, headers=auth("tok-consultant"))
        assert response.status_code == 400
        assert response.json()["code"] == "validation_error"

    def test_unknown_body_keys_rejected(self, client):
        response = client.post(
            "/v1/query", json={"text": "x", "surprise": 1}, headers=auth("tok-consultant")
        )
        assert response.status_code == 400

    def test_case_retrievable_after_query(self, client):
        reply = post_query(client)
        response = client.get(f"/v1/cases/{reply['case_id']}", headers=auth("tok-advisor"))
        assert response.status_code == 200
        assert response.json()["case_id"] == reply["case_id"]

    def test_unknown_case_404(self, client):
        response = client.get("/v1/cases/case-9999", headers=auth("tok-advisor"))
        assert response.status_code == 404
        assert response.json()["code"] == "not_found"


class TestReviewFinalizeFlow:
    def test_full_flow(self, client):
        reply = post_query(client)
        case_id = reply["case_id"]

        queue = client.get("/v1/review/queue", headers=auth("tok-advisor")).json()
        assert case_id in [item["case_id"] for item in queue["items"]]

        review = client.post(
            f"/v1/cases/{case_id}/review",
            json={"verdict": "approve", "notes": "fine"},
            headers=auth("tok-advisor"),
        )
        assert review.status_code == 200
        assert review.json()["state"] == "ParalegalFinalize"

        finalize = client.post(
            f"/v1/cases/{case_id}/finalize",
            json={"template_id": "identity"},
            headers=auth("tok-paralegal"),
        )
        assert finalize.status_code == 200
        assert finalize.json()["state"] == "Released"
        assert finalize.json()["document"]["text"] == reply["answer"]

    def test_finalize_before_approval_409(self, client):
        reply = post_query(client)
        response = client.post(
            f"/v1/cases/{reply['case_id']}/finalize",
            json={},
            headers=auth("tok-paralegal"),
        )
        assert response.status_code == 409
        assert response.json()["code"] == "illegal_transition"

    def test_revise_verdict(self, client):
        reply = post_query(client)
        response = client.post(
            f"/v1/cases/{reply['case_id']}/review",
            json={"verdict": "revise", "notes": "needs citations"},
            headers=auth("tok-advisor"),
        )
        assert response.json()["state"] == "Revise"


class TestFeedback:
    FULL = {"relevance": 1.0, "accuracy": 1.0, "compliance": 0.75, "satisfaction": 0.5}

    def test_accepted(self, client):
        reply = post_query(client)
        response = client.post(
            "/v1/feedback",
            json={"case_id": reply["case_id"], **self.FULL},
            headers=auth("tok-advisor"),
        )
        assert response.status_code == 200
        body = response.json()
        assert body["status"] == "accepted"
        assert body["reward"] == pytest.approx(0.25 * (1.0 + 1.0 + 0.75 + 0.5))

    def test_bad_role_403(self, client):
        reply = post_query(client)
        response = client.post(
            "/v1/feedback",
            json={"case_id": reply["case_id"], **self.FULL},
            headers=auth("tok-consultant"),
        )
        assert response.status_code == 403

    def test_out_of_range_rejected(self, client):
        reply = post_query(client)
        response = client.post(
            "/v1/feedback",
            json={"case_id": reply["case_id"], **{**self.FULL, "relevance": 1.5}},
            headers=auth("tok-advisor"),
        )
        assert response.status_code == 400

    def test_unknown_label_held(self, client):
        reply = post_query(client)
        response = client.post(
            "/v1/feedback",
            json={"case_id": reply["case_id"], "qualitative_label": "kinda ok"},
            headers=auth("tok-paralegal"),
        )
        assert response.status_code == 200
        assert response.json()["status"] == "held"

    def test_qualitative_plus_numeric(self, client):
        reply = post_query(client)
        response = client.post(
            "/v1/feedback",
            json={
                "case_id": reply["case_id"],
                "qualitative_label": "high relevance",
                "accuracy": 1.0,
                "compliance": 1.0,
                "satisfaction": 1.0,
            },
            headers=auth("tok-advisor"),
        )
        assert response.json()["status"] == "accepted"


class TestMetricsAndAdmin:
    def test_metrics_shape(self, client):
        post_query(client)
        response = client.get("/v1/metrics", headers=auth("tok-advisor"))
        body = response.json()
        assert set(body) >= {
            "n_feedback",
            "mean_reward",
            "policy_version",
            "abstention_rate_window",
        }

    def test_experts_listing(self, client):
        response = client.get("/v1/experts", headers=auth("tok-consultant"))
        body = response.json()
        assert [e["id"] for e in body["experts"]] == [1, 2, 3, 4]

    def test_update_policy_requires_admin(self, client):
        response = client.post(
            "/v1/admin/update-policy", json={"force": True}, headers=auth("tok-advisor")
        )
        assert response.status_code == 403

    def test_update_policy_flow(self, client):
        reply = post_query(client)
        client.post(
            "/v1/feedback",
            json={"case_id": reply["case_id"], **TestFeedback.FULL},
            headers=auth("tok-advisor"),
        )
        response = client.post(
            "/v1/admin/update-policy", json={"force": True}, headers=auth("tok-admin")
        )
        assert response.status_code == 200
        assert response.json()["updated"] is True
        assert client.get("/v1/healthz").json()["policy_version"] == 1

    def test_policy_version_visible_in_metrics(self, client):
        response = client.get("/v1/metrics", headers=auth("tok-admin"))
        assert response.json()["policy_version"] == 0


class TestErrorContract:
    def test_all_mapped_codes_are_declared(self):
        assert set(STATUS_BY_CODE) <= ERROR_CODES

    def test_error_bodies_carry_code(self, client):
        cases = [
            client.post("/v1/query", json={"text": "x"}),
            client.get("/v1/cases/none", headers=auth("tok-advisor")),
            client.post("/v1/query", json={}, headers=auth("tok-consultant")),
        ]
        for response in cases:
            assert response.status_code >= 400
            assert response.json()["code"] in ERROR_CODES

    def test_journal_records_mutations(self, client):
        post_query(client)
        actions = [e["action"] for e in client.engine.journal]
        assert "query" in actions
