"""Reward-service facade tests against the in-process engine."""

import pytest
from fastapi.testclient import TestClient

from costforge.gateway import BackendRef, Gateway
from costforge.rewards import RewardConfig, score_rollout
from costforge.service import config_hash, create_app
from costforge.structures import StructureKind

CFG = RewardConfig()

REF_TARGET = (
    "<reasoning>Step 1: ref-1\nStep 2: ref-2</reasoning>"
    "<answer>| Company | Year |\n| A | 2020 |</answer>"
)

JUDGE_SCRIPT = [
    {"match": "ref-", "response": "CONSISTENT", "repeat": True},
    {"match": "Candidate:", "response": "Score: 70", "repeat": True},
]


def fresh_judge():
    gw = Gateway()
    gw.register_scripted_backend("judge", JUDGE_SCRIPT)
    return BackendRef(gateway=gw, tag="judge")


@pytest.fixture()
def client():
    return TestClient(create_app(CFG, fresh_judge()), raise_server_exceptions=False)


def reward_body(rollout, group_id=None):
    return {
        "question": "q",
        "gold_answer": "g",
        "reference_target": REF_TARGET,
        "rollout": rollout,
        "structure_kind": "table",
        "group_id": group_id,
    }


GOOD_ROLLOUT = (
    "<reasoning>Step 1: p1\nStep 2: p2</reasoning>"
    "<answer>| Company | Year |\n| B | 2021 |</answer>"
)


def test_healthz_reports_config(client):
    resp = client.get("/healthz")
    assert resp.status_code == 200
    assert resp.json()["status"] == "ok"
    assert resp.json()["config"]["alpha"] == 0.3
    assert resp.headers["X-CostForge-Config-Hash"] == config_hash(CFG)


def test_reward_matches_in_process(client):
    resp = client.post("/v1/reward", json=reward_body(GOOD_ROLLOUT, group_id="g1"))
    assert resp.status_code == 200
    payload = resp.json()
    breakdown, audit = score_rollout(GOOD_ROLLOUT, REF_TARGET, StructureKind.TABLE, fresh_judge(), CFG)
    assert payload["breakdown"] == breakdown.to_record()
    assert payload["audit"] == [{"label": a.label, "call_id": a.call_id} for a in audit]
    assert payload["group_id"] == "g1"
    assert resp.headers["X-CostForge-Config-Hash"] == config_hash(CFG)


def test_reward_missing_tags_is_200(client):
    resp = client.post("/v1/reward", json=reward_body("no tags"))
    assert resp.status_code == 200
    breakdown = resp.json()["breakdown"]
    assert breakdown["format"] == 0.0
    assert breakdown["gamma"] == 1.0
    assert breakdown["answer_empty"] is True


def test_reward_empty_answer_section(client):
    rollout = "<reasoning>Step 1: x</reasoning><answer></answer>"
    resp = client.post("/v1/reward", json=reward_body(rollout))
    assert resp.status_code == 200
    breakdown = resp.json()["breakdown"]
    assert breakdown["answer"] == 0.0
    assert breakdown["answer_empty"] is True


def test_batch_endpoint(client):
    bodies = [reward_body(GOOD_ROLLOUT), reward_body("no tags")]
    resp = client.post("/v1/reward/batch", json=bodies)
    assert resp.status_code == 200
    results = resp.json()
    assert len(results) == 2
    assert results[0]["breakdown"]["format"] == 1.0
    assert results[1]["breakdown"]["format"] == 0.0


def test_advantages_endpoint(client):
    resp = client.post("/v1/advantages", json={"rewards": [0.0, 1.0]})
    assert resp.status_code == 200
    assert resp.json()["advantages"] == [-1.0, 1.0]
    resp = client.post("/v1/advantages", json={"rewards": [5.0, 5.0, 5.0]})
    assert resp.json()["advantages"] == [0.0, 0.0, 0.0]


def test_advantages_group_too_small(client):
    resp = client.post("/v1/advantages", json={"rewards": []})
    assert resp.status_code == 422
    assert resp.json()["error"] == "GroupTooSmall"


def test_malformed_body_is_400(client):
    resp = client.post("/v1/reward", json={"rollout": "x"})
    assert resp.status_code == 400


def test_bad_reference_target_is_422(client):
    body = reward_body(GOOD_ROLLOUT)
    body["reference_target"] = "no tags in the reference"
    resp = client.post("/v1/reward", json=body)
    assert resp.status_code == 422


def test_unknown_kind_is_422(client):
    body = reward_body(GOOD_ROLLOUT)
    body["structure_kind"] = "triple"
    resp = client.post("/v1/reward", json=body)
    assert resp.status_code == 422


def test_judge_unavailable_is_503():
    gw = Gateway(max_attempts=2, sleeper=lambda s: None)
    gw.register_scripted_backend("judge", [{"fail": True, "repeat": True}])
    app = create_app(CFG, BackendRef(gateway=gw, tag="judge"))
    client = TestClient(app, raise_server_exceptions=False)
    resp = client.post("/v1/reward", json=reward_body(GOOD_ROLLOUT))
    assert resp.status_code == 503
    assert resp.json()["error"] == "BackendUnavailable"


def test_statelessness_order_independent():
    bodies = [reward_body(GOOD_ROLLOUT), reward_body("no tags"), reward_body(REF_TARGET)]
    first = TestClient(create_app(CFG, fresh_judge()), raise_server_exceptions=False)
    forward = [first.post("/v1/reward", json=b).json() for b in bodies]
    second = TestClient(create_app(CFG, fresh_judge()), raise_server_exceptions=False)
    backward = [second.post("/v1/reward", json=b).json() for b in reversed(bodies)]
    assert forward == list(reversed(backward))
