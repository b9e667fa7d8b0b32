import pytest
from fastapi.testclient import TestClient

from hchain.service.app import create_app


@pytest.fixture
def client():
    return TestClient(create_app())


def config_for(tmp_path, **extra):
    return {"data_dir": str(tmp_path / "data"), **extra}


def test_health(client):
    response = client.get("/health")
    assert response.status_code == 200
    body = response.json()
    assert body["status"] == "ok"


def test_demo_endpoint(client, tmp_path):
    response = client.post("/demo", json={"config": config_for(tmp_path)})
    assert response.status_code == 200
    body = response.json()
    assert body["status"] == "ok"
    assert body["data"]["report"]["ledger_entries"] == 4
    assert (tmp_path / "data" / "chain.jsonl").exists()


def test_attack_endpoint(client, tmp_path):
    response = client.post(
        "/attack", json={"kind": "tamper", "config": config_for(tmp_path)}
    )
    body = response.json()
    assert body["status"] == "ok"
    assert body["data"]["expected_stage"] == "integrity"
    assert body["data"]["stored_attacked"] == 0


def test_attack_unknown_kind_is_config_error(client, tmp_path):
    response = client.post(
        "/attack", json={"kind": "ddos", "config": config_for(tmp_path)}
    )
    assert response.status_code == 200
    assert response.json()["status"] == "config_error"


def test_access_flow(client, tmp_path):
    config = config_for(tmp_path)
    assert client.post("/demo", json={"config": config}).json()["status"] == "ok"

    denied = client.post(
        "/access",
        json={"action": "read", "patient": "patient-001", "grantee": "specialist", "config": config},
    ).json()
    assert denied["status"] == "contract_rejection"
    assert denied["detail"] == "access denied"

    granted = client.post(
        "/access",
        json={"action": "grant", "patient": "patient-001", "grantee": "specialist", "config": config},
    ).json()
    assert granted["status"] == "ok"

    read = client.post(
        "/access",
        json={"action": "read", "patient": "patient-001", "grantee": "specialist", "config": config},
    ).json()
    assert read["status"] == "ok"
    assert read["data"]["entries"] == 4
    assert read["data"]["decryptable_readings"] == 20


def test_verify_endpoint(client, tmp_path):
    config = config_for(tmp_path)
    client.post("/demo", json={"config": config})
    body = client.post("/chain/verify", json={"config": config}).json()
    assert body["status"] == "ok"
    assert body["data"]["blocks"] == 8


def test_verify_missing_chain_is_io_error(client, tmp_path):
    body = client.post("/chain/verify", json={"config": config_for(tmp_path)}).json()
    assert body["status"] == "io_error"


def test_bench_endpoint_small(client, tmp_path):
    body = client.post(
        "/bench",
        json={"sizes": [1000], "reps": 3, "config": config_for(tmp_path)},
    ).json()
    assert body["status"] == "ok"
    assert len(body["data"]["rows"]) == 1
    assert (tmp_path / "data" / "bench.csv").exists()


def test_validation_error_is_422(client, tmp_path):
    response = client.post("/bench", json={"reps": 1, "config": config_for(tmp_path)})
    assert response.status_code == 422


def test_master_key_must_be_hex(client, tmp_path):
    response = client.post(
        "/demo", json={"config": config_for(tmp_path, master_key="nothex")}
    )
    assert response.status_code == 200
    assert response.json()["status"] == "config_error"
