"""Behavioral cloning: loss, gradients, and the optimization loop.

The objective is the mean (over batch and the 7 action dimensions) of the
negative log-likelihood of the demonstrated action tokens. Training is
single-threaded over the model with seeded shuffling, so loss traces are
bit-reproducible for a fixed seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Any

import numpy as np
import torch
import torch.nn.functional as F

from .data import DemoDataset
from .policy.actions import discretize
from .policy.checkpoint import save_checkpoint
from .policy.config import PolicyConfig
from .policy.model import Policy, build_policy, desc_indices


class NonFiniteLoss(RuntimeError):
    """Training aborted on a non-finite loss value."""


@dataclass(frozen=True)
class OptimConfig:
    learning_rate: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    steps: int = 20_000
    log_every: int = 100
    checkpoint_every: int = 5_000

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "OptimConfig":
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        unknown = set(data) - set(known)
        if unknown:
            raise ValueError(f"unknown optimizer config keys: {sorted(unknown)}")
        return cls(**known)


class FrameBatcher:
    """Random (episode, t) samples assembled into history-stacked batches.

    Frames are kept as uint8 and converted per batch. Histories shorter
    than H repeat the episode's first frame; the first-frame mask is
    replicated onto every history frame of a mask policy.
    """

    def __init__(self, dataset: DemoDataset, config: PolicyConfig):
        if len(dataset) == 0:
            raise ValueError("dataset is empty")
        size = config.image_size
        if (dataset.world_config.width, dataset.world_config.height) != (size, size):
            raise ValueError(
                f"dataset frames are {dataset.world_config.width}x"
                f"{dataset.world_config.height}, policy expects {size}x{size}"
            )
        self.config = config
        self.frames = [np.stack(ep.frames) for ep in dataset.episodes]
        self.masks = [ep.mask.values for ep in dataset.episodes]
        self.verbs = np.array([ep.verb for ep in dataset.episodes], dtype=np.int64)
        self.tokens = [
            np.stack([discretize(a, config.bins) for a in ep.actions])
            for ep in dataset.episodes
        ]
        if config.desc_vocab:
            self.desc_idx = desc_indices(
                config, [ep.instruction.objects for ep in dataset.episodes]
            ).numpy()
        else:
            self.desc_idx = None
        self.index = np.array(
            [(e, t) for e, ep in enumerate(dataset.episodes) for t in range(ep.length)],
            dtype=np.int64,
        )

    def __len__(self) -> int:
        return len(self.index)

    def gather(self, rows: np.ndarray) -> dict[str, torch.Tensor]:
        cfg = self.config
        h = cfg.history_len
        n = len(rows)
        frames = np.empty(
            (n, h, cfg.in_channels, cfg.image_size, cfg.image_size), dtype=np.float32
        )
        targets = np.empty((n, 7), dtype=np.int64)
        verbs = np.empty(n, dtype=np.int64)
        descs = np.empty((n, 2), dtype=np.int64) if self.desc_idx is not None else None
        for row, (e, t) in enumerate(self.index[rows]):
            eps_frames = self.frames[e]
            picks = np.clip(np.arange(t - h + 1, t + 1), 0, None)
            rgb = eps_frames[picks].astype(np.float32) / 255.0  # (H, S, S, 3)
            frames[row, :, :3] = rgb.transpose(0, 3, 1, 2)
            if cfg.use_mask:
                frames[row, :, 3] = self.masks[e][None, :, :]
            targets[row] = self.tokens[e][t]
            verbs[row] = self.verbs[e]
            if descs is not None:
                descs[row] = self.desc_idx[e]
        batch = {
            "frames": torch.from_numpy(frames),
            "verb": torch.from_numpy(verbs),
            "targets": torch.from_numpy(targets),
        }
        if descs is not None:
            batch["desc_idx"] = torch.from_numpy(descs)
        return batch


def bc_loss(model: Policy, batch: dict[str, torch.Tensor]) -> torch.Tensor:
    """Mean over batch and the 7 dimensions of -log softmax(logits)[target]."""
    if len(batch["frames"]) == 0:
        raise ValueError("empty batch")
    logits = model(batch["frames"], batch["verb"], batch.get("desc_idx"))
    b, dims, bins = logits.shape
    return F.cross_entropy(logits.reshape(b * dims, bins), batch["targets"].reshape(-1))


def grad(model: Policy, batch: dict[str, torch.Tensor]) -> dict[str, torch.Tensor]:
    """Reverse-mode derivatives of bc_loss for every trainable tensor."""
    model.zero_grad(set_to_none=True)
    loss = bc_loss(model, batch)
    names, params = zip(*[(n, p) for n, p in model.named_parameters()])
    grads = torch.autograd.grad(loss, params, allow_unused=False)
    return dict(zip(names, grads))


@dataclass
class TrainResult:
    model: Policy
    trace: list[tuple[int, float]]  # (step, loss) every log_every steps
    final_loss: float


def train(
    dataset: DemoDataset,
    policy_config: PolicyConfig,
    optim_config: OptimConfig = OptimConfig(),
    seed: int = 0,
    out_path: str | Path | None = None,
    progress: bool = False,
) -> TrainResult:
    """Train a policy on the dataset with seeded, single-threaded numerics."""
    torch.set_num_threads(1)
    batcher = FrameBatcher(dataset, policy_config)
    model = build_policy(policy_config, seed=seed)
    model.train()
    optimizer = torch.optim.Adam(
        model.parameters(),
        lr=optim_config.learning_rate,
        betas=(optim_config.beta1, optim_config.beta2),
        eps=optim_config.eps,
    )
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(batcher))
    cursor = 0
    trace: list[tuple[int, float]] = []
    last = math.nan
    for step_idx in range(optim_config.steps):
        if cursor + optim_config.batch_size > len(order):
            order = rng.permutation(len(batcher))
            cursor = 0
        rows = order[cursor : cursor + optim_config.batch_size]
        cursor += optim_config.batch_size
        batch = batcher.gather(rows)
        loss = bc_loss(model, batch)
        value = float(loss.detach())
        if not math.isfinite(value):
            raise NonFiniteLoss(f"loss became {value} at step {step_idx}")
        optimizer.zero_grad(set_to_none=True)
        loss.backward()
        optimizer.step()
        last = value
        if step_idx % optim_config.log_every == 0:
            trace.append((step_idx, value))
            if progress:
                print(f"step {step_idx}: loss {value:.4f}", flush=True)
        if (
            out_path is not None
            and optim_config.checkpoint_every > 0
            and step_idx > 0
            and step_idx % optim_config.checkpoint_every == 0
        ):
            model.eval()
            save_checkpoint(model, out_path)
            model.train()
    trace.append((optim_config.steps, last))
    model.eval()
    if out_path is not None:
        save_checkpoint(model, out_path)
    return TrainResult(model=model, trace=trace, final_loss=last)


def baseline_config(
    dataset: DemoDataset, base: PolicyConfig | None = None
) -> PolicyConfig:
    """No-mask variant of a policy config for the same dataset.

    Identical architecture minus the mask channel; instruction
    conditioning instead adds a per-object-description embedding (table
    over the training descriptions) to the verb embedding. Descriptions
    unseen at eval map to the table's mean row - the baseline has no
    grounding for them.
    """
    base = base or PolicyConfig()
    return PolicyConfig.from_dict(
        {
            **base.to_dict(),
            "use_mask": False,
            "desc_vocab": dataset.descriptions(),
        }
    )


def train_baseline_no_mask(
    dataset: DemoDataset,
    policy_config: PolicyConfig | None = None,
    optim_config: OptimConfig = OptimConfig(),
    seed: int = 0,
    out_path: str | Path | None = None,
    progress: bool = False,
) -> TrainResult:
    config = baseline_config(dataset, policy_config)
    return train(dataset, config, optim_config, seed, out_path, progress)


def finite_difference_check(
    model: Policy,
    batch: dict[str, torch.Tensor],
    n_params: int = 50,
    h: float = 1e-3,
    seed: int = 0,
) -> float:
    """Worst relative error of autograd vs central differences (float64).

    The oracle side perturbs randomly chosen scalar parameters one at a
    time and differences the loss; it never touches autograd.
    """
    model = model.double()
    batch = {
        k: v.double() if v.is_floating_point() else v for k, v in batch.items()
    }
    analytic = grad(model, batch)
    rng = np.random.default_rng(seed)
    names = list(analytic)
    worst = 0.0
    with torch.no_grad():
        for _ in range(n_params):
            name = names[int(rng.integers(len(names)))]
            param = dict(model.named_parameters())[name]
            flat = param.view(-1)
            idx = int(rng.integers(flat.numel()))
            original = flat[idx].item()
            flat[idx] = original + h
            up = float(bc_loss(model, batch))
            flat[idx] = original - h
            down = float(bc_loss(model, batch))
            flat[idx] = original
            numeric = (up - down) / (2 * h)
            exact = float(analytic[name].view(-1)[idx])
            scale = max(abs(exact), abs(numeric), 1e-8)
            worst = max(worst, abs(exact - numeric) / scale)
    return worst
