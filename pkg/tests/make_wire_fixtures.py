"""Regenerate the golden wire fixtures under tests/fixtures/.

Run from the repo root after any deliberate wire-format change:

    python3 tests/make_wire_fixtures.py

The fixtures freeze exact request/response bytes for the detector client
and the serve endpoints; tests compare byte-for-byte.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from fastapi.testclient import TestClient

from maskmanip.detect import NOISE_FREE, OracleDetector, detect_request_body
from maskmanip.policy import PolicyConfig, build_policy
from maskmanip.server import SessionService, create_app
from maskmanip.world.catalog import default_split
from maskmanip.world.config import WorldConfig

FIXTURES = Path(__file__).parent / "fixtures"

WIRE_POLICY = PolicyConfig(
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


def fixture_image() -> np.ndarray:
    """4x4 deterministic RGB gradient."""
    base = np.arange(4 * 4 * 3, dtype=np.uint8).reshape(4, 4, 3)
    return base * 5


def make_detect_fixtures() -> None:
    body = detect_request_body(fixture_image(), ["An image of a red disc", "An image of a blue square"])
    (FIXTURES / "detect_request.json").write_bytes(body)

    response = {
        "detections": [
            {"bbox": [3.0, 4.5, 17.0, 20.25], "score": 0.875, "query_index": 0},
            {"bbox": [0.0, 0.0, 2.0, 2.0], "score": 0.25, "query_index": 1},
        ]
    }
    (FIXTURES / "detect_response.json").write_bytes(
        json.dumps(response, separators=(",", ":"), sort_keys=True).encode()
    )


def make_serve_fixtures() -> None:
    config = WorldConfig()
    split = default_split(0)
    model = build_policy(WIRE_POLICY, 0)
    detector = OracleDetector(noise=NOISE_FREE, config=config)
    service = SessionService(model, split, config, detector)
    client = TestClient(create_app(service))

    created = client.post(
        "/session", json={"seed": 424242, "distractors": 3, "split": "seen"}
    )
    (FIXTURES / "serve_session.json").write_bytes(created.content)
    sid = created.json()["id"]

    scene = service.get(sid).scene
    target = scene.objects[1].description
    task = client.post(f"/session/{sid}/task/text", json={"text": f"pick {target}"})
    (FIXTURES / "serve_task_text.json").write_bytes(task.content)
    (FIXTURES / "serve_task_text_request.json").write_bytes(
        json.dumps({"text": f"pick {target}"}, separators=(",", ":")).encode()
    )

    click = client.post(
        f"/session/{sid}/task/click", json={"skill": "pick", "primary": [20, 31]}
    )
    (FIXTURES / "serve_task_click.json").write_bytes(click.content)

    roll = client.post(f"/session/{sid}/rollout", json={"max_steps": 2})
    (FIXTURES / "serve_rollout.json").write_bytes(roll.content)


def main() -> None:
    FIXTURES.mkdir(exist_ok=True)
    make_detect_fixtures()
    make_serve_fixtures()
    for path in sorted(FIXTURES.iterdir()):
        print(f"{path.name}: {path.stat().st_size} bytes")


if __name__ == "__main__":
    main()
