from __future__ import annotations

import base64
import io
import json
import threading

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from maskmanip.detect import NOISE_FREE, OracleDetector
from maskmanip.masks import centroid
from maskmanip.policy import PolicyConfig, build_policy
from maskmanip.server import SessionService, create_app
from maskmanip.world import ground_truth_bbox

TINY48 = PolicyConfig(
    image_size=48,
    history_len=2,
    conv_widths=(6, 8, 8),
    embed_dim=16,
    token_count=4,
    transformer_layers=1,
    transformer_heads=2,
    bins=16,
    verb_embed_dim=8,
)


@pytest.fixture()
def service(split, world_config):
    model = build_policy(TINY48, 0)
    detector = OracleDetector(noise=NOISE_FREE, config=world_config)
    return SessionService(
        model, split, world_config, detector, checkpoint_fingerprint="cafebabe"
    )


@pytest.fixture()
def client(service):
    return TestClient(create_app(service))


def _decode_frame(b64: str) -> np.ndarray:
    with Image.open(io.BytesIO(base64.b64decode(b64))) as img:
        return np.asarray(img.convert("RGB"))


def test_healthz(client):
    body = client.get("/healthz").json()
    assert body["status"] == "ok"
    assert body["checkpoint"] == "cafebabe"


def test_create_session_contract(client, world_config):
    resp = client.post("/session", json={"seed": 5, "distractors": 3, "split": "seen"})
    assert resp.status_code == 200
    body = resp.json()
    assert set(body) == {"id", "frame_png_b64", "w", "h"}
    assert body["w"] == world_config.width and body["h"] == world_config.height
    frame = _decode_frame(body["frame_png_b64"])
    assert frame.shape == (48, 48, 3)


def test_same_seed_same_frame(client):
    a = client.post("/session", json={"seed": 9, "distractors": 2, "split": "seen"}).json()
    b = client.post("/session", json={"seed": 9, "distractors": 2, "split": "seen"}).json()
    assert a["id"] != b["id"]
    assert a["frame_png_b64"] == b["frame_png_b64"]


def test_bad_config(client):
    resp = client.post("/session", json={"seed": 1, "distractors": 9, "split": "seen"})
    assert resp.status_code == 400
    assert resp.json()["error"] == "bad_config"
    resp = client.post("/session", json={"seed": 1, "distractors": 2, "split": "marsian"})
    assert resp.status_code == 400


def test_text_task_and_rollout(client, service, world_config):
    sid = client.post(
        "/session", json={"seed": 3, "distractors": 3, "split": "seen"}
    ).json()["id"]
    scene = service.get(sid).scene
    target = scene.objects[1].description
    resp = client.post(f"/session/{sid}/task/text", json={"text": f"pick {target}"})
    assert resp.status_code == 200
    body = resp.json()
    assert body["verb"] == 0
    truth = centroid(ground_truth_bbox(scene, target, world_config))
    assert body["mask"] == [{"x": truth[0], "y": truth[1], "v": 1.0}]

    roll = client.post(f"/session/{sid}/rollout", json={"max_steps": 4})
    assert roll.status_code == 200
    out = roll.json()
    assert set(out) == {"success", "frames", "actions"}
    assert len(out["frames"]) == len(out["actions"]) + 1
    assert all(len(a) == 7 for a in out["actions"])
    assert out["success"] is False  # untrained tiny policy


def test_move_near_task_has_two_mask_pixels(client, service):
    sid = client.post(
        "/session", json={"seed": 3, "distractors": 3, "split": "seen"}
    ).json()["id"]
    scene = service.get(sid).scene
    a, b = scene.objects[1].description, scene.objects[2].description
    body = client.post(
        f"/session/{sid}/task/text", json={"text": f"move {a} near {b}"}
    ).json()
    assert body["verb"] == 1
    values = sorted(px["v"] for px in body["mask"])
    assert values == [0.5, 1.0]


def test_unknown_object_is_typed_no_detection(client):
    sid = client.post(
        "/session", json={"seed": 3, "distractors": 2, "split": "seen"}
    ).json()["id"]
    body = client.post(
        f"/session/{sid}/task/text", json={"text": "pick pink unicorn"}
    ).json()
    assert body["error"] == "no_detection"
    assert body["mask"] == []


def test_unknown_template_rejected(client):
    sid = client.post(
        "/session", json={"seed": 3, "distractors": 2, "split": "seen"}
    ).json()["id"]
    resp = client.post(f"/session/{sid}/task/text", json={"text": "wave at the cat"})
    assert resp.status_code == 400
    assert resp.json()["error"] == "unknown_template"


def test_click_task_arity_and_bounds(client):
    sid = client.post(
        "/session", json={"seed": 4, "distractors": 2, "split": "seen"}
    ).json()["id"]
    ok = client.post(
        f"/session/{sid}/task/click", json={"skill": "pick", "primary": [20, 31]}
    )
    assert ok.json()["mask"] == [{"x": 20, "y": 31, "v": 1.0}]
    arity = client.post(
        f"/session/{sid}/task/click", json={"skill": "move_near", "primary": [20, 31]}
    )
    assert arity.status_code == 400 and arity.json()["error"] == "arity_mismatch"
    oob = client.post(
        f"/session/{sid}/task/click", json={"skill": "pick", "primary": [99, 0]}
    )
    assert oob.status_code == 400 and oob.json()["error"] == "out_of_bounds"
    off_object = client.post(
        f"/session/{sid}/task/click", json={"skill": "pick", "primary": [0, 0]}
    )
    assert off_object.status_code == 200  # misplaced clicks are accepted


def test_rollout_before_task(client):
    sid = client.post(
        "/session", json={"seed": 4, "distractors": 2, "split": "seen"}
    ).json()["id"]
    resp = client.post(f"/session/{sid}/rollout", json={"max_steps": 3})
    assert resp.status_code == 409
    assert resp.json()["error"] == "task_unset"


def test_unknown_session_404(client):
    assert client.post("/session/nope/rollout", json={"max_steps": 1}).status_code == 404


def test_click_equals_text_when_clicking_detected_centroid(client, service, world_config):
    """Click and text modalities meet the identical policy path."""
    sid_a = client.post(
        "/session", json={"seed": 8, "distractors": 2, "split": "seen"}
    ).json()["id"]
    sid_b = client.post(
        "/session", json={"seed": 8, "distractors": 2, "split": "seen"}
    ).json()["id"]
    scene = service.get(sid_a).scene
    target = scene.objects[1].description
    text_mask = client.post(
        f"/session/{sid_a}/task/text", json={"text": f"pick {target}"}
    ).json()["mask"]
    px = text_mask[0]
    click_mask = client.post(
        f"/session/{sid_b}/task/click",
        json={"skill": "pick", "primary": [px["x"], px["y"]]},
    ).json()["mask"]
    assert click_mask == text_mask
    roll_a = client.post(f"/session/{sid_a}/rollout", json={"max_steps": 6}).json()
    roll_b = client.post(f"/session/{sid_b}/rollout", json={"max_steps": 6}).json()
    assert roll_a == roll_b


def test_cloned_sessions_roll_identically(client, service):
    payload = {"seed": 12, "distractors": 3, "split": "seen"}
    sid_a = client.post("/session", json=payload).json()["id"]
    sid_b = client.post("/session", json=payload).json()["id"]
    target = service.get(sid_a).scene.objects[1].description
    for sid in (sid_a, sid_b):
        client.post(f"/session/{sid}/task/text", json={"text": f"pick {target}"})
    roll_a = client.post(f"/session/{sid_a}/rollout", json={"max_steps": 5}).json()
    roll_b = client.post(f"/session/{sid_b}/rollout", json={"max_steps": 5}).json()
    assert roll_a == roll_b


def test_interleaved_sessions_do_not_interfere(client, service):
    """Interleaved operation equals serial execution."""
    payload = {"seed": 21, "distractors": 2, "split": "seen"}
    serial_sid = client.post("/session", json=payload).json()["id"]
    target = service.get(serial_sid).scene.objects[1].description
    client.post(f"/session/{serial_sid}/task/text", json={"text": f"pick {target}"})
    serial = client.post(f"/session/{serial_sid}/rollout", json={"max_steps": 4}).json()

    sid_x = client.post("/session", json=payload).json()["id"]
    sid_y = client.post("/session", json={"seed": 99, "distractors": 3, "split": "seen"}).json()["id"]
    other = service.get(sid_y).scene.objects[1].description
    client.post(f"/session/{sid_x}/task/text", json={"text": f"pick {target}"})
    client.post(f"/session/{sid_y}/task/text", json={"text": f"pick {other}"})
    client.post(f"/session/{sid_y}/rollout", json={"max_steps": 2})
    interleaved = client.post(f"/session/{sid_x}/rollout", json={"max_steps": 4}).json()
    assert interleaved == serial


def test_busy_rejected_on_concurrent_rollout(service, client):
    sid = client.post(
        "/session", json={"seed": 4, "distractors": 2, "split": "seen"}
    ).json()["id"]
    session = service.get(sid)
    target = session.scene.objects[1].description
    client.post(f"/session/{sid}/task/text", json={"text": f"pick {target}"})
    acquired = session.lock.acquire(blocking=False)
    assert acquired
    try:
        resp = client.post(f"/session/{sid}/rollout", json={"max_steps": 2})
        assert resp.status_code == 409
        assert resp.json()["error"] == "busy"
    finally:
        session.lock.release()


def test_service_refuses_no_mask_policy(split, world_config, small_dataset):
    from maskmanip.training import baseline_config

    config = baseline_config(small_dataset, TINY48)
    baseline = build_policy(config, 0)
    with pytest.raises(ValueError):
        SessionService(baseline, split, world_config)
