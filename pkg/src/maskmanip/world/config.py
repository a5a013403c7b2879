"""Simulator thresholds and renderer settings."""

from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import Any


@dataclass(frozen=True)
class WorldConfig:
    # per-step motion maxima (table-width fractions / radians)
    delta_xy: float = 0.06
    delta_z: float = 0.12
    delta_roll: float = 0.5
    # interaction thresholds
    r_grasp: float = 0.06
    r_contact: float = 0.08
    r_near: float = 0.125
    z_grasp: float = 0.15
    z_lift: float = 0.6
    theta_flip: float = 1.2
    # episode cap
    t_max: int = 60
    # rendering
    width: int = 48
    height: int = 48
    background: str = "plain"
    # catalog split
    split_seed: int = 0

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "WorldConfig":
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        unknown = set(data) - set(known)
        if unknown:
            raise ValueError(f"unknown world config keys: {sorted(unknown)}")
        return cls(**known)
