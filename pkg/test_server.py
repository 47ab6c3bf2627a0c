import pytest

pytest.importorskip("httpx")
from fastapi.testclient import TestClient

import server


@pytest.fixture
def client(tmp_path, monkeypatch):
    monkeypatch.setattr(server, "OUT_DIR", tmp_path / "api")
    return TestClient(server.app)


def test_health(client):
    body = client.get("/health").json()
    assert body["status"] == "ok"
    assert body["version"]


def test_profile_endpoint(client, tmp_path):
    resp = client.post("/profile", json={"dimension": 2, "points": 5, "sources": ["exact", "lower_bound"]})
    assert resp.status_code == 200
    body = resp.json()
    assert body["success"] is True
    rows = body["result"]["rows"]
    assert len(rows) == 5
    assert set(rows[0]) == {"lambda", "exact_d2", "lower_bound_d2"}
    assert (tmp_path / "api" / "profile_d2.json").exists()


def test_profile_validation_error(client):
    resp = client.post("/profile", json={"dimension": 2, "sources": ["guess"]})
    assert resp.status_code == 422


def test_unsupported_profile_is_bad_request(client):
    resp = client.post("/profile", json={"dimension": 3, "sources": ["exact"]})
    assert resp.status_code == 400


def test_oracle_endpoint(client):
    resp = client.post("/oracle", json={"dimension": 2, "grid_n": 3, "ks": [1, 2]})
    assert resp.status_code == 200
    rows = resp.json()["result"]["rows"]
    assert [row["k"] for row in rows] == [1, 2]
