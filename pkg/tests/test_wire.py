"""Golden request/response fixtures: the wire formats must match byte-exact."""

from __future__ import annotations

import json
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from maskmanip.detect import (
    Detection,
    NOISE_FREE,
    OracleDetector,
    detect_request_body,
    parse_detect_response,
)
from maskmanip.policy import build_policy
from maskmanip.server import SessionService, create_app
from tests.make_wire_fixtures import WIRE_POLICY, fixture_image

FIXTURES = Path(__file__).parent / "fixtures"


def _golden(name: str) -> bytes:
    return (FIXTURES / name).read_bytes()


def test_detect_request_bytes():
    body = detect_request_body(
        fixture_image(),
        ["An image of a red disc", "An image of a blue square"],
    )
    assert body == _golden("detect_request.json")


def test_detect_request_schema():
    payload = json.loads(_golden("detect_request.json"))
    assert set(payload) == {"image_png_b64", "queries"}
    assert isinstance(payload["image_png_b64"], str)
    assert payload["queries"] == [
        "An image of a red disc",
        "An image of a blue square",
    ]


def test_detect_response_parses_field_exact():
    detections = parse_detect_response(json.loads(_golden("detect_response.json")))
    assert detections == [
        Detection((3.0, 4.5, 17.0, 20.25), 0.875, 0),
        Detection((0.0, 0.0, 2.0, 2.0), 0.25, 1),
    ]


@pytest.fixture()
def wire_client(split, world_config):
    model = build_policy(WIRE_POLICY, 0)
    detector = OracleDetector(noise=NOISE_FREE, config=world_config)
    service = SessionService(model, split, world_config, detector)
    return TestClient(create_app(service)), service


def test_serve_golden_flow(wire_client):
    client, service = wire_client
    created = client.post(
        "/session", json={"seed": 424242, "distractors": 3, "split": "seen"}
    )
    assert created.content == _golden("serve_session.json")
    sid = created.json()["id"]

    request_body = json.loads(_golden("serve_task_text_request.json"))
    task = client.post(f"/session/{sid}/task/text", json=request_body)
    assert task.content == _golden("serve_task_text.json")

    click = client.post(
        f"/session/{sid}/task/click", json={"skill": "pick", "primary": [20, 31]}
    )
    assert click.content == _golden("serve_task_click.json")

    roll = client.post(f"/session/{sid}/rollout", json={"max_steps": 2})
    assert roll.content == _golden("serve_rollout.json")
