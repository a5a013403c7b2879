"""Uniform action discretization and policy action selection."""

from __future__ import annotations

from enum import Enum

import numpy as np
import torch

from ..world.scene import ACTION_DIM, Action
from .model import Policy


def discretize(action: Action | np.ndarray, bins: int) -> np.ndarray:
    """Per-dimension uniform binning of [-1, 1] values.

    token = min(bins - 1, floor((v + 1) / 2 * bins)).
    """
    values = action.as_array() if isinstance(action, Action) else np.asarray(action)
    tokens = np.floor((values + 1.0) / 2.0 * bins)
    return np.minimum(bins - 1, tokens).astype(np.int64)


def undiscretize(tokens: np.ndarray, bins: int) -> np.ndarray:
    """Bin centers: v = -1 + (t + 0.5) * 2 / bins."""
    tokens = np.asarray(tokens)
    if tokens.min() < 0 or tokens.max() > bins - 1:
        raise ValueError(f"tokens outside [0, {bins - 1}]")
    return -1.0 + (tokens + 0.5) * (2.0 / bins)


def tokens_to_action(tokens: np.ndarray, bins: int) -> Action:
    return Action.from_array(undiscretize(tokens, bins))


class ActMode(Enum):
    GREEDY = "greedy"
    SAMPLE = "sample"


def select_tokens(
    logits: np.ndarray, mode: ActMode = ActMode.GREEDY, seed: int = 0
) -> np.ndarray:
    """Per-dimension token choice from (7, bins) logits.

    Greedy breaks ties toward the lowest bin index; Sample draws from the
    per-dimension categorical, deterministically given the seed.
    """
    if logits.ndim != 2 or logits.shape[0] != ACTION_DIM:
        raise ValueError(f"expected (7, bins) logits, got {logits.shape}")
    if mode is ActMode.GREEDY:
        return np.argmax(logits, axis=1).astype(np.int64)
    rng = np.random.default_rng(seed)
    shifted = logits - logits.max(axis=1, keepdims=True)
    probs = np.exp(shifted)
    probs /= probs.sum(axis=1, keepdims=True)
    return np.array(
        [rng.choice(logits.shape[1], p=probs[d]) for d in range(ACTION_DIM)],
        dtype=np.int64,
    )


def act(
    model: Policy,
    frames: torch.Tensor,
    verb: torch.Tensor,
    mode: ActMode = ActMode.GREEDY,
    seed: int = 0,
    desc_idx: torch.Tensor | None = None,
) -> Action:
    """One environment action from a single-sample frame history."""
    with torch.no_grad():
        logits = model(frames, verb, desc_idx)
    tokens = select_tokens(logits[0].double().numpy(), mode, seed)
    return tokens_to_action(tokens, model.config.bins)
