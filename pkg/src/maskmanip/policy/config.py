"""Policy architecture hyperparameters."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Any

from ..instructions import NUM_SKILLS


@dataclass(frozen=True)
class PolicyConfig:
    image_size: int = 48
    history_len: int = 4
    conv_widths: tuple[int, ...] = (16, 32, 32)
    embed_dim: int = 64
    token_count: int = 8
    transformer_layers: int = 2
    transformer_heads: int = 4
    bins: int = 64
    verb_embed_dim: int = 16
    # mask policy: 4th input channel carries the location mask.
    # no-mask baseline: use_mask off, object identity instead enters the
    # FiLM conditioning through a per-description embedding table.
    use_mask: bool = True
    desc_vocab: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        positive = {
            "image_size": self.image_size,
            "history_len": self.history_len,
            "embed_dim": self.embed_dim,
            "token_count": self.token_count,
            "transformer_layers": self.transformer_layers,
            "transformer_heads": self.transformer_heads,
            "verb_embed_dim": self.verb_embed_dim,
        }
        for name, value in positive.items():
            if value < 1:
                raise ValueError(f"{name} must be positive, got {value}")
        if not self.conv_widths or any(wd < 1 for wd in self.conv_widths):
            raise ValueError("conv_widths must be positive")
        if self.bins < 2:
            raise ValueError(f"bins must be >= 2, got {self.bins}")
        if self.token_count * self.history_len > 256:
            raise ValueError("token_count * history_len must be <= 256")
        if self.embed_dim % self.transformer_heads != 0:
            raise ValueError("embed_dim must divide evenly across heads")
        if self.image_size % (2 ** len(self.conv_widths)) != 0:
            raise ValueError("image_size must be divisible by 2^len(conv_widths)")
        if not self.use_mask and not self.desc_vocab:
            raise ValueError("a no-mask policy needs a description vocabulary")
        object.__setattr__(self, "conv_widths", tuple(self.conv_widths))
        object.__setattr__(self, "desc_vocab", tuple(self.desc_vocab))

    @property
    def in_channels(self) -> int:
        return 4 if self.use_mask else 3

    @property
    def feature_grid(self) -> int:
        return self.image_size // (2 ** len(self.conv_widths))

    @property
    def num_verbs(self) -> int:
        return NUM_SKILLS

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["conv_widths"] = list(self.conv_widths)
        data["desc_vocab"] = list(self.desc_vocab)
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "PolicyConfig":
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        unknown = set(data) - set(known)
        if unknown:
            raise ValueError(f"unknown policy config keys: {sorted(unknown)}")
        if "conv_widths" in known:
            known["conv_widths"] = tuple(known["conv_widths"])
        if "desc_vocab" in known:
            known["desc_vocab"] = tuple(known["desc_vocab"])
        return cls(**known)


# three sizes for the capacity ablation; L is the default scale
POLICY_SIZES = {
    "S": dict(conv_widths=(8, 12, 12), embed_dim=32, token_count=4,
              transformer_layers=1, transformer_heads=2),
    "M": dict(conv_widths=(12, 20, 20), embed_dim=48, token_count=6,
              transformer_layers=1, transformer_heads=4),
    "L": dict(conv_widths=(16, 32, 32), embed_dim=64, token_count=8,
              transformer_layers=2, transformer_heads=4),
}


def sized_config(size: str, **overrides: Any) -> PolicyConfig:
    if size not in POLICY_SIZES:
        raise ValueError(f"size must be one of {sorted(POLICY_SIZES)}")
    params = dict(POLICY_SIZES[size])
    params.update(overrides)
    return PolicyConfig(**params)
