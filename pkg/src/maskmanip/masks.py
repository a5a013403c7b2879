"""Single-pixel location masks.

The conditioning channel is zero everywhere except one pixel at 1.0 (the
target) and, for two-object skills, one pixel at 0.5 (the secondary
object). The mask is computed once from the first frame of an episode and
reused verbatim for every later timestep.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .detect import (
    DEFAULT_THRESHOLD,
    EMPTY_CATALOG,
    Detection,
    Detector,
    PromptCatalog,
    build_prompt,
    select_detection,
)
from .instructions import Instruction
from .world.config import WorldConfig
from .world.render import ground_truth_bbox, object_pixel_mask
from .world.scene import SceneState

MASK_VALUES = (0.0, 0.5, 1.0)

# near/far boundary for off-object perturbations, in pixels
D_NEAR = 4.0


class MaskError(ValueError):
    """Mask construction/perturbation failure."""


class OutOfBounds(MaskError):
    """A mask pixel lies outside the image."""


class NoRoom(MaskError):
    """No pixel satisfies the requested perturbation region."""


@dataclass(frozen=True)
class ObjectMask:
    """Validated single-channel mask; values is a read-only (h, w) array."""

    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=np.float32)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)
        if arr.ndim != 2:
            raise MaskError(f"mask must be 2D, got shape {arr.shape}")
        allowed = np.isin(arr, MASK_VALUES)
        if not allowed.all():
            bad = arr[~allowed].flat[0]
            raise MaskError(f"mask contains value {bad!r} outside {{0, 0.5, 1}}")
        if (arr == 1.0).sum() > 1:
            raise MaskError("more than one pixel at 1.0")
        if (arr == 0.5).sum() > 1:
            raise MaskError("more than one pixel at 0.5")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def pixel_of(self, value: float) -> tuple[int, int] | None:
        """(col, row) of the pixel holding ``value``, if any."""
        rows, cols = np.nonzero(self.values == value)
        if len(rows) == 0:
            return None
        return (int(cols[0]), int(rows[0]))

    @property
    def primary(self) -> tuple[int, int] | None:
        return self.pixel_of(1.0)

    @property
    def secondary(self) -> tuple[int, int] | None:
        return self.pixel_of(0.5)

    def nonzero_pixels(self) -> list[tuple[int, int, float]]:
        """(col, row, value) triples, primary first."""
        out = []
        for value in (1.0, 0.5):
            px = self.pixel_of(value)
            if px is not None:
                out.append((px[0], px[1], value))
        return out

    def to_bytes(self) -> bytes:
        """Row-major 8-bit plane: {0, 0.5, 1.0} -> {0, 128, 255}."""
        coded = np.zeros(self.values.shape, dtype=np.uint8)
        coded[self.values == 0.5] = 128
        coded[self.values == 1.0] = 255
        return coded.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes, width: int, height: int) -> "ObjectMask":
        coded = np.frombuffer(data, dtype=np.uint8).reshape(height, width)
        values = np.zeros((height, width), dtype=np.float32)
        values[coded == 128] = 0.5
        values[coded == 255] = 1.0
        if not np.isin(coded, (0, 128, 255)).all():
            raise MaskError("mask plane contains bytes outside {0, 128, 255}")
        return cls(values)


def centroid(bbox: Sequence[float]) -> tuple[int, int]:
    """Center pixel (col, row) of a bbox; floored midpoint per axis."""
    x0, y0, x1, y1 = bbox
    return (int(np.floor((x0 + x1) / 2.0)), int(np.floor((y0 + y1) / 2.0)))


def encode_mask(
    primary: tuple[int, int],
    secondary: tuple[int, int] | None,
    width: int,
    height: int,
) -> ObjectMask:
    """Mask with primary := 1.0 and optional secondary := 0.5.

    The primary value is written last, so coinciding pixels read 1.0.
    """
    values = np.zeros((height, width), dtype=np.float32)
    for name, px in (("secondary", secondary), ("primary", primary)):
        if px is None:
            continue
        col, row = px
        if not (0 <= col < width and 0 <= row < height):
            raise OutOfBounds(f"{name} pixel {px} outside {width}x{height}")
        values[row, col] = 1.0 if name == "primary" else 0.5
    return ObjectMask(values)


def first_frame_mask(
    scene0: SceneState,
    image0: np.ndarray,
    instr: Instruction,
    detector: Detector,
    threshold: float = DEFAULT_THRESHOLD,
    seed: int = 0,
    catalog: PromptCatalog = EMPTY_CATALOG,
) -> tuple[ObjectMask, list[Detection]]:
    """Detect the instruction's objects once and encode the episode mask.

    Returns the mask together with the raw detections for auditing.
    Raises NoDetection when any queried object fails to clear the
    threshold; callers decide episode-level handling.
    """
    prompts = [build_prompt(desc, catalog) for desc in instr.objects]
    detections = detector.detect(scene0, image0, prompts, seed)
    h, w = image0.shape[:2]
    pixels: list[tuple[int, int]] = []
    for qi in range(len(prompts)):
        per_query = [d for d in detections if d.query_index == qi]
        best = select_detection(per_query, threshold)  # NoDetection propagates
        pixels.append(centroid(best.bbox))
    mask = encode_mask(
        pixels[0], pixels[1] if len(pixels) > 1 else None, width=w, height=h
    )
    return mask, detections


class PerturbMode(Enum):
    CENTROID = "centroid"
    ON_OBJECT_OFF_CENTER = "on_object_off_center"
    OFF_OBJECT_NEAR = "off_object_near"
    OFF_OBJECT_FAR = "off_object_far"


def _distance_to_member(member: np.ndarray) -> np.ndarray:
    """Per-pixel Euclidean distance to the nearest member pixel."""
    h, w = member.shape
    rows, cols = np.nonzero(member)
    points = np.stack([rows, cols], axis=1).astype(np.float64)
    rr, cc = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    grid = np.stack([rr.ravel(), cc.ravel()], axis=1).astype(np.float64)
    diff = grid[:, None, :] - points[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2)).min(axis=1)
    return dist.reshape(h, w)


def perturb_mask(
    mask: ObjectMask,
    scene: SceneState,
    target_description: str,
    mode: PerturbMode,
    seed: int = 0,
    config: WorldConfig = WorldConfig(),
    d_near: float = D_NEAR,
) -> ObjectMask:
    """Relocate the 1.0 pixel per the localization-noise study modes.

    Centroid is the identity; the other modes move the target pixel to a
    uniformly random pixel of the mode's region, measured against the
    target's true rendered extent. The 0.5 pixel is untouched.
    """
    if mask.primary is None:
        raise MaskError("mask has no 1.0 pixel to perturb")
    if mode is PerturbMode.CENTROID:
        return mask

    idx = scene.find(target_description)
    member = object_pixel_mask(scene, idx, config)
    if not member.any():
        raise NoRoom("target renders no pixels")
    true_centroid = centroid(ground_truth_bbox(scene, target_description, config))

    if mode is PerturbMode.ON_OBJECT_OFF_CENTER:
        region = member.copy()
        col, row = true_centroid
        region[row, col] = False
    else:
        dist = _distance_to_member(member)
        if mode is PerturbMode.OFF_OBJECT_NEAR:
            region = (~member) & (dist > 0) & (dist <= d_near)
        else:
            region = (~member) & (dist > d_near)

    rows, cols = np.nonzero(region)
    if len(rows) == 0:
        raise NoRoom(f"no pixel available for mode {mode.value}")
    rng = np.random.default_rng(seed)
    pick = int(rng.integers(len(rows)))
    new_primary = (int(cols[pick]), int(rows[pick]))

    h, w = mask.shape
    return encode_mask(new_primary, mask.secondary, width=w, height=h)
