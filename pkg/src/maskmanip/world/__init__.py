"""Deterministic 2D tabletop simulator."""

from .catalog import (
    COLORS,
    CONTAINER_SHAPE,
    RING_INNER_FRACTION,
    SHAPES,
    SPLIT_NAMES,
    CatalogSplit,
    ObjectSpec,
    default_split,
    full_catalog,
    make_spec,
)
from .config import WorldConfig
from .expert import Infeasible, expert_action, expert_rollout
from .render import (
    BACKGROUND_TEXTURES,
    AmbiguousMatch,
    NoMatch,
    background_image,
    ground_truth_bbox,
    object_pixel_mask,
    render,
    shape_membership,
)
from .scene import (
    ACTION_DIM,
    Action,
    DuplicateDescription,
    GripperState,
    MissingObject,
    ObjectState,
    PlacementFailure,
    Pose,
    SceneError,
    SceneState,
    UnknownDescription,
    check_success,
    sample_free_scene,
    sample_scene,
    step,
)

__all__ = [
    "ACTION_DIM",
    "Action",
    "AmbiguousMatch",
    "BACKGROUND_TEXTURES",
    "COLORS",
    "CONTAINER_SHAPE",
    "CatalogSplit",
    "DuplicateDescription",
    "GripperState",
    "Infeasible",
    "MissingObject",
    "NoMatch",
    "ObjectSpec",
    "ObjectState",
    "PlacementFailure",
    "Pose",
    "RING_INNER_FRACTION",
    "SHAPES",
    "SPLIT_NAMES",
    "SceneError",
    "SceneState",
    "UnknownDescription",
    "WorldConfig",
    "background_image",
    "check_success",
    "default_split",
    "expert_action",
    "expert_rollout",
    "full_catalog",
    "ground_truth_bbox",
    "make_spec",
    "object_pixel_mask",
    "render",
    "sample_free_scene",
    "sample_scene",
    "shape_membership",
    "step",
]
