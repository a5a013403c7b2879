"""Scene state, sampling, step dynamics, and per-skill success criteria.

States are immutable values; ``step`` is a pure transition so simulations
can run concurrently with independent seeds. Within one step the order of
effects is: gripper motion (held object tracking), grip transitions
(grasp/release), then roll accumulation and pose flips.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Sequence

import numpy as np

from ..instructions import Instruction, Skill
from .catalog import RING_INNER_FRACTION, CatalogSplit, ObjectSpec
from .config import WorldConfig


class SceneError(ValueError):
    """Base class for scene construction/query failures."""


class DuplicateDescription(SceneError):
    """Two instruction slots resolve to the same object description."""


class PlacementFailure(SceneError):
    """Rejection sampling could not place all objects without overlap."""


class UnknownDescription(SceneError):
    """A description resolves to no catalog entry."""


class MissingObject(SceneError):
    """A described object is absent from the scene."""


class Pose(Enum):
    UPRIGHT = "upright"
    SIDE = "side"


@dataclass(frozen=True)
class Action:
    """7-DoF delta action; every component is clipped-valid in [-1, 1].

    dpitch/dyaw are accepted and ignored by the dynamics; they exist to
    keep the 7-DoF interface shape. grip >= 0 commands open, < 0 close.
    """

    dx: float = 0.0
    dy: float = 0.0
    dz: float = 0.0
    droll: float = 0.0
    dpitch: float = 0.0
    dyaw: float = 0.0
    grip: float = 1.0

    def __post_init__(self) -> None:
        for name, value in self.as_dict().items():
            if not -1.0 <= value <= 1.0:
                raise ValueError(f"action component {name}={value} outside [-1, 1]")
            if not math.isfinite(value):
                raise ValueError(f"non-finite action component {name}")

    def as_dict(self) -> dict[str, float]:
        return {
            "dx": self.dx,
            "dy": self.dy,
            "dz": self.dz,
            "droll": self.droll,
            "dpitch": self.dpitch,
            "dyaw": self.dyaw,
            "grip": self.grip,
        }

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.dx, self.dy, self.dz, self.droll, self.dpitch, self.dyaw, self.grip],
            dtype=np.float64,
        )

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "Action":
        vals = [float(v) for v in values]
        if len(vals) != 7:
            raise ValueError(f"expected 7 action components, got {len(vals)}")
        return cls(*vals)


ACTION_DIM = 7


@dataclass(frozen=True)
class ObjectState:
    spec: ObjectSpec
    center: tuple[float, float]
    pose: Pose
    inside_of: int | None = None
    initial_pose: Pose = Pose.UPRIGHT
    was_held: bool = False

    @property
    def description(self) -> str:
        return self.spec.description

    @property
    def radius(self) -> float:
        return self.spec.size

    @property
    def inner_radius(self) -> float:
        if not self.spec.is_container:
            raise ValueError(f"{self.description} is not a container")
        return self.spec.size * RING_INNER_FRACTION


@dataclass(frozen=True)
class GripperState:
    x: float = 0.5
    y: float = 0.5
    z: float = 0.7
    aperture: float = 1.0
    holding: int | None = None
    cumulative_roll: float = 0.0

    @property
    def xy(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class SceneState:
    objects: tuple[ObjectState, ...]
    gripper: GripperState = GripperState()
    background: str = "plain"
    rng_seed: int = 0

    def find(self, description: str) -> int:
        matches = [i for i, o in enumerate(self.objects) if o.description == description]
        if not matches:
            raise MissingObject(f"no object described as {description!r}")
        return matches[0]

    def descriptions(self) -> list[str]:
        return [o.description for o in self.objects]


def _dist(a: tuple[float, float], b: tuple[float, float]) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def _place_objects(
    specs: list[ObjectSpec],
    rng: np.random.Generator,
    max_attempts: int = 1000,
) -> list[tuple[float, float]]:
    """Rejection-sample non-overlapping centers, fully on the table."""
    centers: list[tuple[float, float]] = []
    for spec in specs:
        margin = spec.size
        for attempt in range(max_attempts + 1):
            if attempt == max_attempts:
                raise PlacementFailure(
                    f"could not place {spec.description!r} after {max_attempts} attempts"
                )
            cand = (
                float(rng.uniform(margin, 1.0 - margin)),
                float(rng.uniform(margin, 1.0 - margin)),
            )
            ok = all(
                _dist(cand, c) >= spec.size + s.size
                for c, s in zip(centers, specs)
            )
            if ok:
                centers.append(cand)
                break
    return centers


def _resolve(split: CatalogSplit, description: str) -> ObjectSpec:
    try:
        return split.find(description)
    except KeyError:
        raise UnknownDescription(f"{description!r} is not in the catalog") from None


def sample_scene(
    instr: Instruction,
    split: CatalogSplit,
    n_distractors: int,
    seed: int,
    config: WorldConfig = WorldConfig(),
    distractor_pool: Sequence[ObjectSpec] | None = None,
) -> SceneState:
    """Sample a scene for an instruction plus 2..4 seen-pool distractors.

    Deterministic given the seed. KnockOver targets start Upright,
    PlaceUpright targets start Side, PlaceInto second objects must be
    containers. Distractor descriptions are distinct from the instruction
    objects and from each other.
    """
    if not 2 <= n_distractors <= 4:
        raise SceneError(f"n_distractors must be in [2, 4], got {n_distractors}")
    if len(set(instr.objects)) != len(instr.objects):
        raise DuplicateDescription(f"repeated description in {instr.objects!r}")

    specs = [_resolve(split, desc) for desc in instr.objects]
    if instr.skill is Skill.PLACE_INTO and not specs[1].is_container:
        raise SceneError(
            f"place-into second object {specs[1].description!r} is not a container"
        )

    rng = np.random.default_rng(seed)
    pool = list(distractor_pool) if distractor_pool is not None else list(split.seen)
    pool = [s for s in pool if s.description not in instr.objects]
    if len(pool) < n_distractors:
        raise SceneError("distractor pool too small")
    picks = rng.choice(len(pool), size=n_distractors, replace=False)
    specs = specs + [pool[i] for i in picks]

    centers = _place_objects(specs, rng)

    objects = []
    for i, (spec, center) in enumerate(zip(specs, centers)):
        pose = Pose.UPRIGHT
        if i == 0 and instr.skill is Skill.PLACE_UPRIGHT:
            pose = Pose.SIDE
        objects.append(
            ObjectState(spec=spec, center=center, pose=pose, initial_pose=pose)
        )
    return SceneState(
        objects=tuple(objects),
        gripper=GripperState(),
        background=config.background,
        rng_seed=seed,
    )


def sample_free_scene(
    split: CatalogSplit,
    n_objects: int,
    seed: int,
    config: WorldConfig = WorldConfig(),
    pool_name: str = "seen",
) -> SceneState:
    """Sample an instruction-free scene (used by the rollout service).

    Always includes one container, and gives each non-container object a
    seeded 30% chance of starting on its side so every skill has a
    possible target.
    """
    if n_objects < 1:
        raise SceneError("need at least one object")
    rng = np.random.default_rng(seed)
    pool = list(split.pool(pool_name))
    containers = [s for s in pool if s.is_container]
    others = [s for s in pool if not s.is_container]
    if not containers and pool_name != "seen":
        containers = [s for s in split.seen if s.is_container]
    if not containers or len(others) < n_objects - 1:
        raise SceneError("pool cannot fill the scene")
    specs = [containers[int(rng.integers(len(containers)))]]
    picks = rng.choice(len(others), size=n_objects - 1, replace=False)
    chosen = [others[i] for i in picks]
    seen_desc = {specs[0].description}
    for spec in chosen:
        if spec.description in seen_desc:
            continue
        seen_desc.add(spec.description)
        specs.append(spec)
    centers = _place_objects(specs, rng)
    objects = []
    for spec, center in zip(specs, centers):
        pose = Pose.UPRIGHT
        if not spec.is_container and rng.random() < 0.3:
            pose = Pose.SIDE
        objects.append(
            ObjectState(spec=spec, center=center, pose=pose, initial_pose=pose)
        )
    return SceneState(
        objects=tuple(objects),
        gripper=GripperState(),
        background=config.background,
        rng_seed=seed,
    )


def _clip01(v: float) -> float:
    return min(1.0, max(0.0, v))


def step(state: SceneState, action: Action, config: WorldConfig = WorldConfig()) -> SceneState:
    """Advance the scene by one action. All actions are legal; motion clips."""
    g = state.gripper
    objects = list(state.objects)

    # gripper motion; a held object tracks the gripper in (x, y)
    gx = _clip01(g.x + action.dx * config.delta_xy)
    gy = _clip01(g.y + action.dy * config.delta_xy)
    gz = _clip01(g.z + action.dz * config.delta_z)
    holding = g.holding
    roll_acc = g.cumulative_roll
    if holding is not None:
        objects[holding] = replace(objects[holding], center=(gx, gy))

    # grip transitions
    if action.grip < 0 and holding is None and gz < config.z_grasp:
        dists = [_dist((gx, gy), o.center) for o in objects]
        nearest = int(np.argmin(dists)) if dists else None
        if nearest is not None and dists[nearest] <= config.r_grasp:
            holding = nearest
            target = objects[nearest]
            # picking a container leaves its contents behind on the table
            for j, other in enumerate(objects):
                if other.inside_of == nearest:
                    objects[j] = replace(other, inside_of=None)
            objects[nearest] = replace(
                target, center=(gx, gy), inside_of=None, was_held=True
            )
            roll_acc = 0.0
    elif action.grip >= 0 and holding is not None:
        dropped = objects[holding]
        inside: int | None = None
        best = math.inf
        for j, other in enumerate(objects):
            if j == holding or not other.spec.is_container:
                continue
            d = _dist(dropped.center, other.center)
            if d <= other.inner_radius and d < best:
                inside, best = j, d
        objects[holding] = replace(dropped, inside_of=inside)
        holding = None
        roll_acc = 0.0

    # contact-gated roll accumulation and pose flips
    in_contact = holding is not None or any(
        _dist((gx, gy), o.center) <= config.r_contact
        for i, o in enumerate(objects)
        if i != holding
    )
    if in_contact:
        roll_acc += abs(action.droll) * config.delta_roll
    else:
        roll_acc = 0.0
    if roll_acc >= config.theta_flip:
        if holding is not None and objects[holding].pose is Pose.SIDE:
            objects[holding] = replace(objects[holding], pose=Pose.UPRIGHT)
        for i, obj in enumerate(objects):
            if i == holding or obj.pose is not Pose.UPRIGHT:
                continue
            if _dist((gx, gy), obj.center) <= config.r_contact:
                objects[i] = replace(obj, pose=Pose.SIDE)
        roll_acc = 0.0

    gripper = GripperState(
        x=gx,
        y=gy,
        z=gz,
        aperture=1.0 if action.grip >= 0 else 0.0,
        holding=holding,
        cumulative_roll=roll_acc,
    )
    return replace(state, objects=tuple(objects), gripper=gripper)


def check_success(
    state: SceneState, instr: Instruction, config: WorldConfig = WorldConfig()
) -> bool:
    """Score the instruction against the current state."""
    target_idx = state.find(instr.target)
    target = state.objects[target_idx]
    g = state.gripper

    if instr.skill is Skill.PICK:
        return g.holding == target_idx and g.z >= config.z_lift
    if instr.skill is Skill.MOVE_NEAR:
        dest = state.objects[state.find(instr.secondary)]
        return (
            target.was_held
            and g.holding != target_idx
            and _dist(target.center, dest.center) <= config.r_near
        )
    if instr.skill is Skill.KNOCK_OVER:
        return target.pose is Pose.SIDE and target.initial_pose is Pose.UPRIGHT
    if instr.skill is Skill.PLACE_UPRIGHT:
        return target.pose is Pose.UPRIGHT and target.initial_pose is Pose.SIDE
    if instr.skill is Skill.PLACE_INTO:
        container_idx = state.find(instr.secondary)
        return target.inside_of == container_idx
    raise ValueError(f"unhandled skill {instr.skill}")
