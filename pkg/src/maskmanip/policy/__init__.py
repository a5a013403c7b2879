"""Mask-conditioned policy network, action codec, and checkpoints."""

from .actions import (
    ActMode,
    act,
    discretize,
    select_tokens,
    tokens_to_action,
    undiscretize,
)
from .checkpoint import (
    CheckpointError,
    CorruptFile,
    VersionMismatch,
    checkpoint_bytes,
    checkpoint_fingerprint,
    load_checkpoint,
    load_checkpoint_bytes,
    save_checkpoint,
)
from .config import POLICY_SIZES, PolicyConfig, sized_config
from .model import Policy, ShapeMismatch, build_policy, desc_indices

__all__ = [
    "ActMode",
    "CheckpointError",
    "CorruptFile",
    "POLICY_SIZES",
    "Policy",
    "PolicyConfig",
    "ShapeMismatch",
    "VersionMismatch",
    "act",
    "build_policy",
    "checkpoint_bytes",
    "checkpoint_fingerprint",
    "desc_indices",
    "discretize",
    "load_checkpoint",
    "load_checkpoint_bytes",
    "save_checkpoint",
    "select_tokens",
    "sized_config",
    "tokens_to_action",
    "undiscretize",
]
