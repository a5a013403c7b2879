"""Deterministic top-down rasterizer.

Everything is computed from shape membership tests evaluated at pixel
centers, so rendered geometry and the ground-truth boxes derived from it
agree exactly. Pixel (row r, col c) samples world point
((c + 0.5) / W, (r + 0.5) / H); world x runs right, y runs down.
"""

from __future__ import annotations

import math

import numpy as np

from .catalog import COLORS, RING_INNER_FRACTION
from .config import WorldConfig
from .scene import ObjectState, Pose, SceneState

BACKGROUND_TEXTURES = (
    "plain",
    "checker-2",
    "checker-3",
    "checker-4",
    "stripes-h",
    "stripes-v",
    "dots",
    "noise-a",
    "noise-b",
)

_BASE_GRAY = 105
_DARK, _LIGHT = 95, 117
_HELD_RING_COLOR = (255, 255, 255)
_GRIPPER_COLOR = (236, 236, 236)


class AmbiguousMatch(ValueError):
    """Two scene objects share the queried description."""


class NoMatch(ValueError):
    """No scene object has the queried description."""


def _pixel_centers(width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    xs = (np.arange(width, dtype=np.float64) + 0.5) / width
    ys = (np.arange(height, dtype=np.float64) + 0.5) / height
    return np.meshgrid(xs, ys)


def _convex_polygon(px, py, vertices) -> np.ndarray:
    inside = np.ones(px.shape, dtype=bool)
    n = len(vertices)
    for k in range(n):
        x1, y1 = vertices[k]
        x2, y2 = vertices[(k + 1) % n]
        cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
        inside &= cross >= 0
    return inside


def _regular_polygon_vertices(n: int, radius: float, phase: float) -> list[tuple[float, float]]:
    return [
        (radius * math.cos(phase + 2 * math.pi * k / n),
         radius * math.sin(phase + 2 * math.pi * k / n))
        for k in range(n)
    ]


def shape_membership(
    obj: ObjectState, width: int, height: int
) -> np.ndarray:
    """Boolean (height, width) array of pixels inside the object.

    Side pose squashes the vertical extent 2:1 so pose is visible from
    above.
    """
    px, py = _pixel_centers(width, height)
    cx, cy = obj.center
    r = obj.radius
    dx = px - cx
    dy = py - cy
    if obj.pose is Pose.SIDE:
        dy = dy * 2.0
    dist = np.hypot(dx, dy)
    cat = obj.spec.category

    if cat == "disc":
        return dist <= r
    if cat == "square":
        return np.maximum(np.abs(dx), np.abs(dy)) <= 0.8 * r
    if cat == "triangle":
        verts = _regular_polygon_vertices(3, r, -math.pi / 2)
        return _convex_polygon(dx, dy, verts)
    if cat == "star":
        theta = np.arctan2(dy, dx)
        phase = (theta + math.pi / 2) % (2 * math.pi / 5)
        t = np.abs(phase - math.pi / 5) / (math.pi / 5)
        limit = 0.45 * r + (r - 0.45 * r) * t
        return dist <= limit
    if cat == "ring":
        return (dist <= r) & (dist >= RING_INNER_FRACTION * r)
    if cat == "bar":
        return (np.abs(dx) <= r) & (np.abs(dy) <= 0.38 * r)
    if cat == "cross":
        horiz = (np.abs(dx) <= r) & (np.abs(dy) <= 0.3 * r)
        vert = (np.abs(dx) <= 0.3 * r) & (np.abs(dy) <= r)
        return horiz | vert
    if cat == "pentagon":
        verts = _regular_polygon_vertices(5, r, -math.pi / 2)
        return _convex_polygon(dx, dy, verts)
    if cat == "hexagon":
        verts = _regular_polygon_vertices(6, r, 0.0)
        return _convex_polygon(dx, dy, verts)
    if cat == "diamond":
        return np.abs(dx) + np.abs(dy) <= r
    raise ValueError(f"unhandled shape {cat!r}")


def background_image(texture: str, width: int, height: int) -> np.ndarray:
    """Deterministic (height, width, 3) uint8 background."""
    rows = np.arange(height)[:, None]
    cols = np.arange(width)[None, :]
    if texture == "plain":
        gray = np.full((height, width), _BASE_GRAY)
    elif texture.startswith("checker-"):
        cell = int(texture.split("-", 1)[1])
        if cell < 1:
            raise ValueError(f"bad checker cell in {texture!r}")
        gray = np.where(((rows // cell) + (cols // cell)) % 2 == 0, _DARK, _LIGHT)
    elif texture == "stripes-h":
        gray = np.where((rows // 3) % 2 == 0, _DARK, _LIGHT)
    elif texture == "stripes-v":
        gray = np.where((cols // 3) % 2 == 0, _DARK, _LIGHT)
    elif texture == "dots":
        gray = np.full((height, width), _BASE_GRAY - 5)
        dot = ((rows % 6) < 2) & ((cols % 6) < 2)
        gray = np.where(dot, _LIGHT + 8, gray)
    elif texture.startswith("noise-"):
        seed = sum(texture.encode()) * 7919
        rng = np.random.default_rng(seed)
        gray = rng.integers(_DARK - 3, _LIGHT + 4, size=(height, width))
    else:
        raise ValueError(f"unknown background texture {texture!r}")
    gray = np.broadcast_to(np.asarray(gray), (height, width))
    return np.repeat(gray.astype(np.uint8)[:, :, None], 3, axis=2)


def render(state: SceneState, config: WorldConfig = WorldConfig()) -> np.ndarray:
    """Render the scene to (height, width, 3) uint8 RGB."""
    w, h = config.width, config.height
    image = background_image(state.background, w, h).copy()
    held = state.gripper.holding

    order = [i for i in range(len(state.objects)) if i != held]
    if held is not None:
        order.append(held)
    for idx in order:
        obj = state.objects[idx]
        member = shape_membership(obj, w, h)
        image[member] = COLORS[obj.spec.color]
        if idx == held:
            # 1-px visual grasp cue around the held object
            px, py = _pixel_centers(w, h)
            dist = np.hypot(px - obj.center[0], py - obj.center[1])
            ring = (dist > obj.radius) & (dist <= obj.radius + 1.0 / w)
            image[ring] = _HELD_RING_COLOR

    # gripper marker: radius encodes z; open = outline, closed = filled
    g = state.gripper
    px, py = _pixel_centers(w, h)
    dist_px = np.hypot((px - g.x) * w, (py - g.y) * h)
    radius_px = 1.5 + g.z * 3.5
    if g.aperture >= 0.5:
        marker = np.abs(dist_px - radius_px) <= 0.75
    else:
        marker = dist_px <= radius_px
    image[marker] = _GRIPPER_COLOR
    return image


def object_pixel_mask(
    state: SceneState, index: int, config: WorldConfig = WorldConfig()
) -> np.ndarray:
    """Rendered extent of one object (its own membership, no overdraw)."""
    return shape_membership(state.objects[index], config.width, config.height)


def ground_truth_bbox(
    state: SceneState, description: str, config: WorldConfig = WorldConfig()
) -> tuple[int, int, int, int]:
    """Tight inclusive pixel bbox (x0, y0, x1, y1) of the described object."""
    matches = [
        i for i, o in enumerate(state.objects) if o.description == description
    ]
    if not matches:
        raise NoMatch(f"no object described as {description!r}")
    if len(matches) > 1:
        raise AmbiguousMatch(f"{len(matches)} objects described as {description!r}")
    member = object_pixel_mask(state, matches[0], config)
    if not member.any():
        raise NoMatch(f"{description!r} renders no pixels at this resolution")
    rows = np.any(member, axis=1).nonzero()[0]
    cols = np.any(member, axis=0).nonzero()[0]
    return (int(cols[0]), int(rows[0]), int(cols[-1]), int(rows[-1]))
