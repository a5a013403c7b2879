"""Object catalog: shapes x colors, with seen/unseen evaluation splits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SHAPES = (
    "disc",
    "square",
    "triangle",
    "star",
    "ring",  # the only container
    "bar",
    "cross",
    "pentagon",
    "hexagon",
    "diamond",
)

CONTAINER_SHAPE = "ring"

COLORS = {
    "red": (220, 50, 47),
    "green": (64, 176, 72),
    "blue": (58, 98, 222),
    "yellow": (228, 208, 56),
    "orange": (238, 140, 36),
    "purple": (146, 66, 198),
    "cyan": (60, 200, 206),
    "magenta": (216, 76, 176),
}

# Fixed per-shape footprint (fraction of table width). Containers are kept
# large so their inner radius comfortably admits other objects.
SHAPE_SIZES = {
    "disc": 0.080,
    "square": 0.072,
    "triangle": 0.088,
    "star": 0.100,
    "ring": 0.110,
    "bar": 0.092,
    "cross": 0.096,
    "pentagon": 0.076,
    "hexagon": 0.084,
    "diamond": 0.068,
}

SIZE_MIN, SIZE_MAX = 0.04, 0.12

# Annulus inner radius as a fraction of the ring's outer radius.
RING_INNER_FRACTION = 0.55


@dataclass(frozen=True)
class ObjectSpec:
    category: str
    color: str
    size: float
    is_container: bool

    def __post_init__(self) -> None:
        if self.category not in SHAPES:
            raise ValueError(f"unknown shape {self.category!r}")
        if self.color not in COLORS:
            raise ValueError(f"unknown color {self.color!r}")
        if not SIZE_MIN <= self.size <= SIZE_MAX:
            raise ValueError(f"size {self.size} outside [{SIZE_MIN}, {SIZE_MAX}]")
        if self.is_container != (self.category == CONTAINER_SHAPE):
            raise ValueError("is_container is true exactly for ring shapes")

    @property
    def description(self) -> str:
        return f"{self.color} {self.category}"


def make_spec(category: str, color: str) -> ObjectSpec:
    return ObjectSpec(
        category=category,
        color=color,
        size=SHAPE_SIZES[category],
        is_container=category == CONTAINER_SHAPE,
    )


def full_catalog() -> list[ObjectSpec]:
    """All shape x color combinations, in a fixed order."""
    return [make_spec(shape, color) for shape in SHAPES for color in COLORS]


@dataclass(frozen=True)
class CatalogSplit:
    """Three pairwise-disjoint evaluation classes of (category, color) specs."""

    seen: tuple[ObjectSpec, ...]
    unseen_seen_category: tuple[ObjectSpec, ...]
    unseen_category: tuple[ObjectSpec, ...]

    def __post_init__(self) -> None:
        groups = (self.seen, self.unseen_seen_category, self.unseen_category)
        keys = [(s.category, s.color) for group in groups for s in group]
        if len(keys) != len(set(keys)):
            raise ValueError("split classes overlap")
        seen_cats = {s.category for s in self.seen}
        held_cats = {s.category for s in self.unseen_category}
        if seen_cats & held_cats:
            raise ValueError("unseen_category shares a category with seen")
        usc_cats = {s.category for s in self.unseen_seen_category}
        if not usc_cats <= seen_cats:
            raise ValueError("unseen_seen_category must reuse seen categories")

    def pool(self, name: str) -> tuple[ObjectSpec, ...]:
        try:
            return getattr(self, name)
        except AttributeError:
            raise ValueError(f"unknown split {name!r}") from None

    def find(self, description: str) -> ObjectSpec:
        for group in (self.seen, self.unseen_seen_category, self.unseen_category):
            for spec in group:
                if spec.description == description:
                    return spec
        raise KeyError(description)


SPLIT_NAMES = ("seen", "unseen_seen_category", "unseen_category")


def default_split(seed: int = 0) -> CatalogSplit:
    """Deterministic 48 / 16 / 16 split of the 80-spec catalog.

    Two whole non-container shapes are held out as unseen categories; each
    remaining shape additionally holds out two colors as unseen objects of a
    seen category. The container shape always stays seen so place-into
    scenes exist in every split class.
    """
    rng = np.random.default_rng(seed)
    holdable = [s for s in SHAPES if s != CONTAINER_SHAPE]
    held_shapes = set(rng.choice(holdable, size=2, replace=False).tolist())

    seen: list[ObjectSpec] = []
    unseen_seen_cat: list[ObjectSpec] = []
    unseen_cat: list[ObjectSpec] = []
    colors = list(COLORS)
    for shape in SHAPES:
        if shape in held_shapes:
            unseen_cat.extend(make_spec(shape, c) for c in colors)
            continue
        held_colors = set(rng.choice(colors, size=2, replace=False).tolist())
        for color in colors:
            spec = make_spec(shape, color)
            (unseen_seen_cat if color in held_colors else seen).append(spec)
    return CatalogSplit(tuple(seen), tuple(unseen_seen_cat), tuple(unseen_cat))
