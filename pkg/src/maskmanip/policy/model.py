"""Mask-conditioned policy network.

Per frame: a strided conv backbone whose blocks are FiLM-modulated by the
verb embedding, a learned spatial position embedding, and spatial-softmax
token attention that compresses the feature grid into a few tokens. The
tokens of the recent frame history pass through a small causal transformer
(tokens attend within their frame and to earlier frames), and the pooled
final-frame representation feeds seven independent bin-logit heads, one
per action dimension.

FiLM uses (1 + gamma) * h + beta with zero-initialized generators, so at
initialization the conditioning is exactly the identity. Action heads are
zero-initialized, so initial logits are uniform.

A single mask pixel would wash out after three stride-2 convolutions, so
mask policies re-append the max-pooled mask plane to the features at
every scale (object identity still enters through the mask alone).
"""

from __future__ import annotations

import math

import torch
import torch.nn as nn
import torch.nn.functional as F

from .config import PolicyConfig

# bump when the computation graph changes shape or wiring
ARCH_REVISION = 2


class ShapeMismatch(ValueError):
    """Input tensor shapes disagree with the policy configuration."""


class FilmConvBlock(nn.Module):
    """Stride-2 conv + feature-wise affine conditioning + GELU.

    The smooth activation keeps the whole network C-infinity, which the
    finite-difference gradient gate relies on.
    """

    def __init__(self, in_channels: int, out_channels: int, cond_dim: int):
        super().__init__()
        self.conv = nn.Conv2d(in_channels, out_channels, 3, stride=2, padding=1)
        self.gamma = nn.Linear(cond_dim, out_channels)
        self.beta = nn.Linear(cond_dim, out_channels)
        nn.init.zeros_(self.gamma.weight)
        nn.init.zeros_(self.gamma.bias)
        nn.init.zeros_(self.beta.weight)
        nn.init.zeros_(self.beta.bias)

    def forward(self, x: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        h = self.conv(x)
        g = self.gamma(cond)[:, :, None, None]
        b = self.beta(cond)[:, :, None, None]
        return F.gelu((1.0 + g) * h + b)


class TokenAttention(nn.Module):
    """K spatial softmax maps pooling a feature grid into K tokens."""

    def __init__(self, feat_channels: int, num_tokens: int):
        super().__init__()
        self.num_tokens = num_tokens
        self.score = nn.Conv2d(feat_channels, num_tokens, kernel_size=1)

    def attention_maps(self, feat: torch.Tensor) -> torch.Tensor:
        """(B, C, h, w) -> (B, K, h*w); each map sums to 1."""
        logits = self.score(feat).flatten(2)
        return F.softmax(logits, dim=-1)

    def forward(self, feat: torch.Tensor) -> torch.Tensor:
        alpha = self.attention_maps(feat)  # (B, K, P)
        flat = feat.flatten(2)  # (B, C, P)
        return torch.einsum("bkp,bcp->bkc", alpha, flat)


class CausalFrameAttention(nn.Module):
    """Multi-head attention where tokens see their own and earlier frames."""

    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.heads = heads
        self.head_dim = dim // heads
        self.qkv = nn.Linear(dim, 3 * dim)
        self.out = nn.Linear(dim, dim)

    def forward(self, x: torch.Tensor, allowed: torch.Tensor) -> torch.Tensor:
        b, t, d = x.shape
        qkv = self.qkv(x).reshape(b, t, 3, self.heads, self.head_dim)
        q, k, v = qkv.permute(2, 0, 3, 1, 4)  # (B, heads, T, head_dim)
        scores = (q @ k.transpose(-2, -1)) / math.sqrt(self.head_dim)
        scores = scores.masked_fill(~allowed, float("-inf"))
        attn = F.softmax(scores, dim=-1)
        mixed = (attn @ v).transpose(1, 2).reshape(b, t, d)
        return self.out(mixed)


class TransformerBlock(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = CausalFrameAttention(dim, heads)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(
            nn.Linear(dim, 4 * dim), nn.GELU(), nn.Linear(4 * dim, dim)
        )

    def forward(self, x: torch.Tensor, allowed: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.norm1(x), allowed)
        x = x + self.mlp(self.norm2(x))
        return x


class Policy(nn.Module):
    """Frame history + verb index -> 7 x bins action logits."""

    def __init__(self, config: PolicyConfig):
        super().__init__()
        self.config = config
        cond_dim = config.verb_embed_dim
        self.verb_embed = nn.Embedding(config.num_verbs, cond_dim)
        if config.desc_vocab:
            self.desc_embed = nn.Embedding(len(config.desc_vocab), cond_dim)
        else:
            self.desc_embed = None

        extra = 1 if config.use_mask else 0
        blocks = []
        in_ch = config.in_channels
        for out_ch in config.conv_widths:
            blocks.append(FilmConvBlock(in_ch, out_ch, cond_dim))
            in_ch = out_ch + extra
        self.blocks = nn.ModuleList(blocks)

        grid = config.feature_grid
        feat_ch = config.conv_widths[-1] + extra
        self.pos_embed = nn.Parameter(torch.randn(1, feat_ch, grid, grid) * 0.02)
        self.token_attn = TokenAttention(feat_ch, config.token_count)
        self.token_proj = nn.Linear(feat_ch, config.embed_dim)
        self.frame_pos = nn.Parameter(
            torch.randn(config.history_len, config.embed_dim) * 0.02
        )
        self.transformer = nn.ModuleList(
            TransformerBlock(config.embed_dim, config.transformer_heads)
            for _ in range(config.transformer_layers)
        )
        self.final_norm = nn.LayerNorm(config.embed_dim)
        self.heads = nn.ModuleList(
            nn.Linear(config.embed_dim, config.bins) for _ in range(7)
        )
        for head in self.heads:
            nn.init.zeros_(head.weight)
            nn.init.zeros_(head.bias)

        allowed = self._frame_causal_mask(config.history_len, config.token_count)
        self.register_buffer("allowed_attention", allowed, persistent=False)

    @staticmethod
    def _frame_causal_mask(history_len: int, token_count: int) -> torch.Tensor:
        frame_of = torch.arange(history_len).repeat_interleave(token_count)
        return frame_of[None, :] <= frame_of[:, None]

    def conditioning(
        self, verb: torch.Tensor, desc_idx: torch.Tensor | None
    ) -> torch.Tensor:
        """FiLM conditioning vector for a batch.

        ``desc_idx`` is only legal for no-mask policies: (B, 2) rows of
        vocabulary indices with -1 marking an absent second slot and -2 an
        out-of-vocabulary description (mapped to the table's mean row).
        """
        cond = self.verb_embed(verb)
        if self.desc_embed is None:
            if desc_idx is not None:
                raise ShapeMismatch("mask policies take no description indices")
            return cond
        if desc_idx is None:
            raise ShapeMismatch("no-mask policies need description indices")
        table = self.desc_embed.weight
        mean_row = table.mean(dim=0)
        lookup = torch.where(desc_idx >= 0, desc_idx, 0)
        emb = self.desc_embed(lookup)
        emb = torch.where((desc_idx == -2)[:, :, None], mean_row, emb)
        present = (desc_idx != -1).float()[:, :, None]
        pooled = (emb * present).sum(dim=1) / present.sum(dim=1).clamp(min=1.0)
        return cond + pooled

    def forward(
        self,
        frames: torch.Tensor,
        verb: torch.Tensor,
        desc_idx: torch.Tensor | None = None,
    ) -> torch.Tensor:
        """frames (B, H, C, S, S) in [0, 1]; verb (B,) -> logits (B, 7, bins)."""
        cfg = self.config
        if frames.ndim != 5 or frames.shape[1:] != (
            cfg.history_len,
            cfg.in_channels,
            cfg.image_size,
            cfg.image_size,
        ):
            raise ShapeMismatch(
                f"expected (B, {cfg.history_len}, {cfg.in_channels}, "
                f"{cfg.image_size}, {cfg.image_size}), got {tuple(frames.shape)}"
            )
        b, h = frames.shape[:2]
        cond = self.conditioning(verb, desc_idx)

        x = frames.reshape(b * h, cfg.in_channels, cfg.image_size, cfg.image_size)
        cond_rep = cond.repeat_interleave(h, dim=0)
        mask_plane = x[:, 3:4] if cfg.use_mask else None
        for block in self.blocks:
            x = block(x, cond_rep)
            if mask_plane is not None:
                mask_plane = F.max_pool2d(mask_plane, kernel_size=2, stride=2)
                x = torch.cat([x, mask_plane], dim=1)
        x = x + self.pos_embed
        tokens = self.token_proj(self.token_attn(x))  # (B*H, K, d)
        tokens = tokens.reshape(b, h, cfg.token_count, cfg.embed_dim)
        tokens = tokens + self.frame_pos[None, :, None, :]
        tokens = tokens.reshape(b, h * cfg.token_count, cfg.embed_dim)

        for block in self.transformer:
            tokens = block(tokens, self.allowed_attention)
        tokens = self.final_norm(tokens)
        pooled = tokens[:, -cfg.token_count :, :].mean(dim=1)  # final frame
        logits = torch.stack([head(pooled) for head in self.heads], dim=1)
        return logits

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())


def build_policy(config: PolicyConfig, seed: int = 0) -> Policy:
    """Deterministically initialized policy."""
    generator_state = torch.random.get_rng_state()
    torch.manual_seed(seed)
    try:
        model = Policy(config)
    finally:
        torch.random.set_rng_state(generator_state)
    model.eval()
    return model


def desc_indices(
    config: PolicyConfig, descriptions: list[tuple[str, ...]]
) -> torch.Tensor:
    """Vocabulary indices for a batch of instruction object tuples.

    Unknown descriptions map to -2 (mean-embedding fallback at eval);
    absent second slots map to -1.
    """
    vocab = {desc: i for i, desc in enumerate(config.desc_vocab)}
    out = torch.full((len(descriptions), 2), -1, dtype=torch.long)
    for row, descs in enumerate(descriptions):
        for slot, desc in enumerate(descs[:2]):
            out[row, slot] = vocab.get(desc, -2)
    return out
