"""Open-vocabulary detector contract.

The policy never sees a detector's internals, only (box, score, query)
detections. Two interchangeable sources exist: a frozen in-simulator
oracle with a configurable noise model, and a wire client for an external
detector service. Neither has trainable state.
"""

from __future__ import annotations

import base64
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np
import requests

from .world.config import WorldConfig
from .world.render import NoMatch, ground_truth_bbox
from .world.scene import SceneState

PROMPT_PREFIX = "An image of a "

SCORE_SIGMA = 0.05


class DetectError(Exception):
    """Base class for detector failures."""


class NoDetection(DetectError):
    """Every detection fell below the score threshold."""


class TransportError(DetectError):
    """The remote detector endpoint could not be reached."""


class MalformedResponse(DetectError):
    """The remote detector returned an invalid payload."""


@dataclass(frozen=True)
class Detection:
    bbox: tuple[float, float, float, float]  # x0, y0, x1, y1 inclusive pixels
    score: float
    query_index: int

    def __post_init__(self) -> None:
        x0, y0, x1, y1 = self.bbox
        if x0 > x1 or y0 > y1:
            raise ValueError(f"degenerate bbox {self.bbox}")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")

    @property
    def area(self) -> float:
        x0, y0, x1, y1 = self.bbox
        return (x1 - x0 + 1) * (y1 - y0 + 1)


@dataclass(frozen=True)
class DetectorNoise:
    """Imperfection model for the oracle detector.

    All-zeros means perfect localization with deterministic scores.
    """

    jitter_sigma: float = 0.0
    miss_prob: float = 0.0
    false_positive_prob: float = 0.0
    score_mean_hit: float = 1.0
    score_mean_miss: float = 0.0

    def __post_init__(self) -> None:
        if self.jitter_sigma < 0:
            raise ValueError("jitter_sigma must be >= 0")
        for name in ("miss_prob", "false_positive_prob", "score_mean_hit", "score_mean_miss"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")


def _is_exact(noise: "DetectorNoise") -> bool:
    """All error channels off: boxes are exact, score equals its mean."""
    return (
        noise.jitter_sigma == 0
        and noise.miss_prob == 0
        and noise.false_positive_prob == 0
    )


DEFAULT_NOISE = DetectorNoise(
    jitter_sigma=1.5,
    miss_prob=0.02,
    false_positive_prob=0.02,
    score_mean_hit=0.8,
    score_mean_miss=0.45,
)

NOISE_FREE = DetectorNoise()


class PromptCatalog:
    """Optional description -> detector phrase overrides.

    Lookups fall back to the raw description when no override exists.
    File format: one ``description -> phrase`` mapping per line.
    """

    def __init__(self, overrides: dict[str, str] | None = None):
        self.overrides = dict(overrides or {})

    def phrase(self, description: str) -> str:
        return self.overrides.get(description, description)

    def description_for(self, phrase: str) -> str:
        for desc, over in self.overrides.items():
            if over == phrase:
                return desc
        return phrase

    @classmethod
    def from_text(cls, text: str) -> "PromptCatalog":
        overrides = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "->" not in stripped:
                raise ValueError(f"line {lineno}: expected 'description -> phrase'")
            desc, _, phrase = stripped.partition("->")
            overrides[desc.strip()] = phrase.strip()
        return cls(overrides)

    @classmethod
    def load(cls, path: str | Path) -> "PromptCatalog":
        return cls.from_text(Path(path).read_text())


EMPTY_CATALOG = PromptCatalog()


def build_prompt(description: str, catalog: PromptCatalog = EMPTY_CATALOG) -> str:
    """Detector query for an object description."""
    if not description or not description.strip():
        raise ValueError("empty object description")
    return PROMPT_PREFIX + catalog.phrase(description)


def prompt_description(prompt: str, catalog: PromptCatalog = EMPTY_CATALOG) -> str:
    """Inverse of build_prompt: recover the scene description."""
    if not prompt.startswith(PROMPT_PREFIX):
        raise ValueError(f"prompt does not start with {PROMPT_PREFIX!r}")
    return catalog.description_for(prompt[len(PROMPT_PREFIX):])


class Detector(Protocol):
    def detect(
        self,
        scene: SceneState,
        image: np.ndarray,
        prompts: Sequence[str],
        seed: int,
    ) -> list[Detection]: ...


def _clipped_normal(rng: np.random.Generator, mean: float, sigma: float) -> float:
    return float(np.clip(rng.normal(mean, sigma), 0.0, 1.0))


def oracle_detect(
    scene: SceneState,
    image: np.ndarray,
    prompts: Sequence[str],
    noise: DetectorNoise = NOISE_FREE,
    seed: int = 0,
    catalog: PromptCatalog = EMPTY_CATALOG,
    config: WorldConfig = WorldConfig(),
) -> list[Detection]:
    """Detect prompted objects from ground truth, with modeled errors.

    Per prompt: miss entirely with miss_prob, otherwise emit the true box
    with per-corner Gaussian jitter and a hit-level score; additionally
    emit a random other object's box at a miss-level score with
    false_positive_prob. Deterministic given the seed; frozen (never
    trained).
    """
    h, w = image.shape[:2]
    rng = np.random.default_rng(seed)
    exact = _is_exact(noise)
    detections: list[Detection] = []
    for qi, prompt in enumerate(prompts):
        description = prompt_description(prompt, catalog)
        bbox = ground_truth_bbox(scene, description, config)  # NoMatch propagates
        if rng.random() >= noise.miss_prob:
            x0, y0, x1, y1 = (float(v) for v in bbox)
            if noise.jitter_sigma > 0:
                jit = rng.normal(0.0, noise.jitter_sigma, size=4)
                x0, y0, x1, y1 = x0 + jit[0], y0 + jit[1], x1 + jit[2], y1 + jit[3]
            x0, x1 = sorted((min(max(x0, 0.0), w - 1.0), min(max(x1, 0.0), w - 1.0)))
            y0, y1 = sorted((min(max(y0, 0.0), h - 1.0), min(max(y1, 0.0), h - 1.0)))
            score = (
                noise.score_mean_hit
                if exact
                else _clipped_normal(rng, noise.score_mean_hit, SCORE_SIGMA)
            )
            detections.append(
                Detection(bbox=(x0, y0, x1, y1), score=score, query_index=qi)
            )
        if noise.false_positive_prob > 0 and rng.random() < noise.false_positive_prob:
            others = [
                o.description
                for o in scene.objects
                if o.description != description
            ]
            if others:
                pick = others[int(rng.integers(len(others)))]
                fp_bbox = ground_truth_bbox(scene, pick, config)
                detections.append(
                    Detection(
                        bbox=tuple(float(v) for v in fp_bbox),
                        score=_clipped_normal(rng, noise.score_mean_miss, SCORE_SIGMA),
                        query_index=qi,
                    )
                )
    return detections


class OracleDetector:
    """Frozen ground-truth detector with a noise model."""

    def __init__(
        self,
        noise: DetectorNoise = NOISE_FREE,
        catalog: PromptCatalog = EMPTY_CATALOG,
        config: WorldConfig = WorldConfig(),
    ):
        self.noise = noise
        self.catalog = catalog
        self.config = config

    def detect(
        self,
        scene: SceneState,
        image: np.ndarray,
        prompts: Sequence[str],
        seed: int,
    ) -> list[Detection]:
        return oracle_detect(
            scene, image, prompts, self.noise, seed, self.catalog, self.config
        )


def image_to_png_b64(image: np.ndarray) -> str:
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(image).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def detect_request_body(image: np.ndarray, prompts: Sequence[str]) -> bytes:
    """Canonical wire request for POST {endpoint}/detect."""
    payload = {"image_png_b64": image_to_png_b64(image), "queries": list(prompts)}
    return json.dumps(payload, separators=(",", ":"), sort_keys=True).encode()


def parse_detect_response(payload: object) -> list[Detection]:
    """Validate a /detect response payload into Detections."""
    if not isinstance(payload, dict) or "detections" not in payload:
        raise MalformedResponse("missing 'detections' field")
    raw = payload["detections"]
    if not isinstance(raw, list):
        raise MalformedResponse("'detections' is not a list")
    out = []
    for i, item in enumerate(raw):
        if not isinstance(item, dict):
            raise MalformedResponse(f"detection {i} is not an object")
        try:
            bbox = item["bbox"]
            score = item["score"]
            query_index = item["query_index"]
        except KeyError as missing:
            raise MalformedResponse(f"detection {i} missing {missing}") from None
        if not isinstance(bbox, list) or len(bbox) != 4:
            raise MalformedResponse(f"detection {i} bbox must be [x0,y0,x1,y1]")
        try:
            out.append(
                Detection(
                    bbox=tuple(float(v) for v in bbox),
                    score=float(score),
                    query_index=int(query_index),
                )
            )
        except (TypeError, ValueError) as bad:
            raise MalformedResponse(f"detection {i}: {bad}") from None
    return out


def remote_detect(
    endpoint: str,
    image: np.ndarray,
    prompts: Sequence[str],
    timeout: float = 10.0,
) -> list[Detection]:
    """Query an external detector service over the wire protocol."""
    url = endpoint.rstrip("/") + "/detect"
    body = detect_request_body(image, prompts)
    try:
        resp = requests.post(
            url,
            data=body,
            headers={"Content-Type": "application/json"},
            timeout=timeout,
        )
    except requests.Timeout as exc:
        raise TransportError(f"timed out after {timeout}s: {exc}") from exc
    except requests.RequestException as exc:
        raise TransportError(str(exc)) from exc
    if resp.status_code != 200:
        raise MalformedResponse(f"HTTP {resp.status_code}: {resp.text[:200]}")
    try:
        payload = resp.json()
    except ValueError as exc:
        raise MalformedResponse(f"response is not JSON: {exc}") from exc
    return parse_detect_response(payload)


class RemoteDetector:
    """Wire client wrapper matching the Detector protocol.

    The scene argument is ignored; only the image and prompts go over the
    wire.
    """

    def __init__(self, endpoint: str, timeout: float = 10.0):
        self.endpoint = endpoint
        self.timeout = timeout

    def detect(
        self,
        scene: SceneState,
        image: np.ndarray,
        prompts: Sequence[str],
        seed: int,
    ) -> list[Detection]:
        return remote_detect(self.endpoint, image, prompts, self.timeout)


def select_detection(
    detections: Sequence[Detection], threshold: float
) -> Detection:
    """Best surviving detection after the universal score threshold.

    Ties on score break toward smaller box area, then smaller (y0, x0).
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold {threshold} outside [0, 1]")
    survivors = [d for d in detections if d.score >= threshold]
    if not survivors:
        raise NoDetection(f"no detection at or above threshold {threshold}")
    return min(
        survivors,
        key=lambda d: (-d.score, d.area, d.bbox[1], d.bbox[0]),
    )


DEFAULT_THRESHOLD = 0.3
