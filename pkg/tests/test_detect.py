from __future__ import annotations

import json
import math
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest
from hypothesis import given, strategies as st

from maskmanip.detect import (
    DEFAULT_NOISE,
    Detection,
    DetectorNoise,
    MalformedResponse,
    NOISE_FREE,
    NoDetection,
    OracleDetector,
    PromptCatalog,
    TransportError,
    build_prompt,
    detect_request_body,
    oracle_detect,
    prompt_description,
    remote_detect,
    select_detection,
)
from maskmanip.instructions import Instruction, Skill
from maskmanip.world import ground_truth_bbox, render, sample_scene


@pytest.fixture()
def pick_scene(split, world_config):
    return sample_scene(
        Instruction(Skill.PICK, ("red disc",)), split, 2, seed=21, config=world_config
    )


def test_build_prompt_prefix():
    assert build_prompt("banana") == "An image of a banana"
    catalog = PromptCatalog({"coke can": "red can of soda"})
    assert build_prompt("coke can", catalog) == "An image of a red can of soda"
    with pytest.raises(ValueError):
        build_prompt("")


def test_prompt_catalog_file_format(tmp_path):
    text = "coke can -> red can of soda\n# comment\nbanana -> banana\n"
    path = tmp_path / "prompts.txt"
    path.write_text(text)
    catalog = PromptCatalog.load(path)
    assert catalog.phrase("coke can") == "red can of soda"
    assert catalog.phrase("unlisted thing") == "unlisted thing"
    assert prompt_description("An image of a red can of soda", catalog) == "coke can"
    with pytest.raises(ValueError):
        PromptCatalog.from_text("no arrow here")


def test_oracle_noise_free_exact(pick_scene, world_config):
    image = render(pick_scene, world_config)
    prompts = [build_prompt("red disc")]
    dets = oracle_detect(pick_scene, image, prompts, NOISE_FREE, seed=5, config=world_config)
    assert len(dets) == 1
    truth = ground_truth_bbox(pick_scene, "red disc", world_config)
    assert dets[0].bbox == tuple(float(v) for v in truth)
    assert dets[0].score == NOISE_FREE.score_mean_hit
    assert dets[0].query_index == 0


def test_oracle_miss_prob_one(pick_scene, world_config):
    image = render(pick_scene, world_config)
    noise = DetectorNoise(miss_prob=1.0, score_mean_hit=0.8)
    dets = oracle_detect(
        pick_scene, image, [build_prompt("red disc")], noise, seed=5, config=world_config
    )
    assert dets == []


def test_oracle_deterministic_given_seed(pick_scene, world_config):
    image = render(pick_scene, world_config)
    prompts = [build_prompt("red disc")]
    a = oracle_detect(pick_scene, image, prompts, DEFAULT_NOISE, seed=9, config=world_config)
    b = oracle_detect(pick_scene, image, prompts, DEFAULT_NOISE, seed=9, config=world_config)
    assert a == b
    c = oracle_detect(pick_scene, image, prompts, DEFAULT_NOISE, seed=10, config=world_config)
    assert a != c


def test_oracle_jitter_matches_half_normal_mean(pick_scene, world_config):
    """Monte-Carlo: mean |corner displacement| of N(0, 2) is 2*sqrt(2/pi)."""
    image = render(pick_scene, world_config)
    noise = DetectorNoise(jitter_sigma=2.0, score_mean_hit=0.8)
    truth = np.array(ground_truth_bbox(pick_scene, "red disc", world_config), float)
    prompts = [build_prompt("red disc")]
    displacements = []
    for seed in range(1000):
        (det,) = oracle_detect(
            pick_scene, image, prompts, noise, seed=seed, config=world_config
        )
        displacements.extend(np.abs(np.array(det.bbox) - truth))
    expected = 2.0 * math.sqrt(2.0 / math.pi)
    assert abs(float(np.mean(displacements)) - expected) < 0.12


def test_oracle_unknown_description_raises(pick_scene, world_config):
    from maskmanip.world import NoMatch

    image = render(pick_scene, world_config)
    with pytest.raises(NoMatch):
        oracle_detect(
            pick_scene, image, [build_prompt("unicorn")], NOISE_FREE, 0,
            config=world_config,
        )


def test_select_detection_basic():
    high = Detection((0, 0, 5, 5), 0.9, 0)
    low = Detection((1, 1, 6, 6), 0.4, 0)
    assert select_detection([high, low], 0.5) is high
    with pytest.raises(NoDetection):
        select_detection([low], 0.5)
    with pytest.raises(NoDetection):
        select_detection([], 0.0)


def test_select_detection_tie_breaks_against_sorted_oracle():
    """Brute-force oracle: full sort by (-score, area, y0, x0)."""
    rng = np.random.default_rng(0)
    for _ in range(200):
        dets = []
        for _ in range(rng.integers(1, 8)):
            x0, y0 = rng.integers(0, 20, 2)
            w, h = rng.integers(0, 10, 2)
            score = float(rng.choice([0.2, 0.5, 0.8]))
            dets.append(Detection((x0, y0, x0 + w, y0 + h), score, 0))
        threshold = 0.3
        survivors = [d for d in dets if d.score >= threshold]
        if not survivors:
            with pytest.raises(NoDetection):
                select_detection(dets, threshold)
            continue
        oracle = sorted(
            survivors, key=lambda d: (-d.score, d.area, d.bbox[1], d.bbox[0])
        )[0]
        assert select_detection(dets, threshold) == oracle


def test_select_detection_area_tie():
    small = Detection((0, 0, 4, 5), 0.8, 0)  # area 30
    large = Detection((0, 0, 4, 9), 0.8, 0)  # area 50
    assert select_detection([large, small], 0.1) is small


@given(
    st.lists(
        st.tuples(
            st.integers(0, 40), st.integers(0, 40),
            st.integers(0, 7), st.integers(0, 7),
            st.floats(0, 1, allow_nan=False),
        ),
        max_size=8,
    ),
    st.floats(0, 1, allow_nan=False),
    st.floats(0, 1, allow_nan=False),
)
def test_threshold_monotonicity(raw, t1, t2):
    dets = [
        Detection((x, y, x + w, y + h), round(score, 3), 0)
        for x, y, w, h, score in raw
    ]
    lo, hi = min(t1, t2), max(t1, t2)
    survivors_lo = {id(d) for d in dets if d.score >= lo}
    survivors_hi = {id(d) for d in dets if d.score >= hi}
    assert survivors_hi <= survivors_lo


def test_detection_validation():
    with pytest.raises(ValueError):
        Detection((5, 0, 1, 0), 0.5, 0)
    with pytest.raises(ValueError):
        Detection((0, 0, 1, 1), 1.5, 0)


class _StubHandler(BaseHTTPRequestHandler):
    response_payload: dict = {}
    last_request: dict = {}

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        body = self.rfile.read(length)
        _StubHandler.last_request = {"path": self.path, "body": body}
        payload = json.dumps(self.response_payload).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@pytest.fixture()
def stub_server():
    server = HTTPServer(("127.0.0.1", 0), _StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}"
    server.shutdown()


def test_remote_detect_loopback(stub_server, pick_scene, world_config):
    image = render(pick_scene, world_config)
    _StubHandler.response_payload = {
        "detections": [
            {"bbox": [1.0, 2.0, 3.0, 4.0], "score": 0.75, "query_index": 0}
        ]
    }
    dets = remote_detect(stub_server, image, ["An image of a red disc"])
    assert dets == [Detection((1.0, 2.0, 3.0, 4.0), 0.75, 0)]
    # wire request shape is exactly the documented one
    sent = json.loads(_StubHandler.last_request["body"])
    assert set(sent) == {"image_png_b64", "queries"}
    assert sent["queries"] == ["An image of a red disc"]
    assert _StubHandler.last_request["path"] == "/detect"
    assert _StubHandler.last_request["body"] == detect_request_body(
        image, ["An image of a red disc"]
    )


def test_remote_detect_malformed(stub_server, pick_scene, world_config):
    image = render(pick_scene, world_config)
    _StubHandler.response_payload = {
        "detections": [{"bbox": [1, 2, 3, 4], "query_index": 0}]  # missing score
    }
    with pytest.raises(MalformedResponse):
        remote_detect(stub_server, image, ["q"])
    _StubHandler.response_payload = {"nope": []}
    with pytest.raises(MalformedResponse):
        remote_detect(stub_server, image, ["q"])


def test_remote_detect_unreachable(pick_scene, world_config):
    image = render(pick_scene, world_config)
    with pytest.raises(TransportError):
        remote_detect("http://127.0.0.1:9", image, ["q"], timeout=0.5)


def test_detector_wrapper_is_frozen(pick_scene, world_config):
    detector = OracleDetector(noise=DEFAULT_NOISE, config=world_config)
    image = render(pick_scene, world_config)
    prompts = [build_prompt("red disc")]
    assert detector.detect(pick_scene, image, prompts, 3) == detector.detect(
        pick_scene, image, prompts, 3
    )
