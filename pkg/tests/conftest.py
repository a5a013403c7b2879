from __future__ import annotations

import pytest

from maskmanip.data import SkewConfig, generate_demos
from maskmanip.detect import DEFAULT_NOISE
from maskmanip.world.catalog import default_split
from maskmanip.world.config import WorldConfig


@pytest.fixture(scope="session")
def split():
    return default_split(0)


@pytest.fixture(scope="session")
def world_config():
    return WorldConfig()


@pytest.fixture(scope="session")
def small_dataset(split, world_config):
    """3 core + 3 pick-only objects, 2 episodes per cell (36 episodes)."""
    skew = SkewConfig(
        core_objects=tuple(s.description for s in split.seen[:3]),
        pick_only_objects=tuple(s.description for s in split.seen[3:6]),
        episodes_per_cell=2,
    )
    return generate_demos(world_config, skew, split, DEFAULT_NOISE, seed=11)
