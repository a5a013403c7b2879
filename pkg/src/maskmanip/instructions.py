"""Templated manipulation instructions.

An instruction is one of five verb templates plus one or two object
descriptions filling its slots. The verb alone conditions the policy (via
``verb_index``); object identity is deliberately withheld from the language
side and reaches the policy only through the location mask.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum


class Skill(IntEnum):
    PICK = 0
    MOVE_NEAR = 1
    KNOCK_OVER = 2
    PLACE_UPRIGHT = 3
    PLACE_INTO = 4


@dataclass(frozen=True)
class SkillTemplate:
    skill: Skill
    arity: int
    pattern: str  # "{x}" / "{y}" mark the object slots


TEMPLATES: dict[Skill, SkillTemplate] = {
    Skill.PICK: SkillTemplate(Skill.PICK, 1, "pick {x}"),
    Skill.MOVE_NEAR: SkillTemplate(Skill.MOVE_NEAR, 2, "move {x} near {y}"),
    Skill.KNOCK_OVER: SkillTemplate(Skill.KNOCK_OVER, 1, "knock {x} over"),
    Skill.PLACE_UPRIGHT: SkillTemplate(Skill.PLACE_UPRIGHT, 1, "place {x} upright"),
    Skill.PLACE_INTO: SkillTemplate(Skill.PLACE_INTO, 2, "place {x} into {y}"),
}

NUM_SKILLS = len(TEMPLATES)

# Words reserved by the five patterns; canonical object descriptions avoid
# all of them.
TEMPLATE_KEYWORDS = frozenset(
    ["pick", "move", "near", "knock", "over", "place", "upright", "into"]
)

SKILL_NAMES = {s: s.name.lower() for s in Skill}
SKILLS_BY_NAME = {name: s for s, name in SKILL_NAMES.items()}


class InstructionError(ValueError):
    """Base class for instruction parsing/validation failures."""


class UnknownTemplate(InstructionError):
    """No skill template pattern matches the sentence."""


class EmptySlot(InstructionError):
    """A matched template leaves an object slot empty."""


@dataclass(frozen=True)
class Instruction:
    skill: Skill
    objects: tuple[str, ...]

    def __post_init__(self) -> None:
        template = TEMPLATES[self.skill]
        if len(self.objects) != template.arity:
            raise EmptySlot(
                f"{SKILL_NAMES[self.skill]} takes {template.arity} object(s), "
                f"got {len(self.objects)}"
            )
        for obj in self.objects:
            if not obj or not obj.strip():
                raise EmptySlot(f"empty object description in {self.objects!r}")

    @property
    def template(self) -> SkillTemplate:
        return TEMPLATES[self.skill]

    @property
    def target(self) -> str:
        return self.objects[0]

    @property
    def secondary(self) -> str | None:
        return self.objects[1] if len(self.objects) > 1 else None


def is_canonical_description(text: str) -> bool:
    """True when no template keyword occurs inside the description."""
    return bool(text) and not (set(text.split()) & TEMPLATE_KEYWORDS)


def _check_slot(slot: str, allowed: frozenset[str] = frozenset()) -> str:
    """Validate one slot fill: nonempty, no template keywords.

    ``allowed`` exempts the separator word when every possible split traps
    it inside a slot (the documented fallback for 'near'/'into').
    """
    if not slot:
        raise EmptySlot("empty object slot")
    stray = (set(slot.split()) & TEMPLATE_KEYWORDS) - allowed
    if stray:
        raise UnknownTemplate(f"template keyword {sorted(stray)[0]!r} inside a slot")
    return slot


def _split_on_separator(tokens: list[str], separator: str) -> tuple[str, str]:
    """Split slot tokens around ``separator``.

    Prefers the unique split that leaves the separator out of both slots;
    when every split traps it inside a slot, falls back to the earliest
    separator occurrence (greedy tie-break) and exempts it from the
    keyword check.
    """
    positions = [i for i, tok in enumerate(tokens) if tok == separator]
    valid = [i for i in positions if 0 < i < len(tokens) - 1]
    if not valid:
        if positions:
            raise EmptySlot(f"empty slot around {separator!r}")
        raise UnknownTemplate(f"missing {separator!r} separator")
    keyword_free = [
        i
        for i in valid
        if separator not in tokens[:i] and separator not in tokens[i + 1 :]
    ]
    split_at = keyword_free[0] if keyword_free else valid[0]
    allowed = frozenset() if keyword_free else frozenset([separator])
    x = _check_slot(" ".join(tokens[:split_at]), allowed)
    y = _check_slot(" ".join(tokens[split_at + 1 :]), allowed)
    return x, y


def parse_instruction(text: str) -> Instruction:
    """Parse a lowercase sentence into a skill and its object slots.

    Raises UnknownTemplate when no pattern matches and EmptySlot when a
    matched pattern leaves a slot blank.
    """
    tokens = text.split()
    if not tokens:
        raise UnknownTemplate("empty sentence")
    head, rest = tokens[0], tokens[1:]

    if head == "pick":
        if not rest:
            raise EmptySlot("pick needs an object")
        return Instruction(Skill.PICK, (_check_slot(" ".join(rest)),))

    if head == "move":
        x, y = _split_on_separator(rest, "near")
        return Instruction(Skill.MOVE_NEAR, (x, y))

    if head == "knock":
        if not rest or rest[-1] != "over":
            raise UnknownTemplate("knock sentence must end with 'over'")
        if len(rest) == 1:
            raise EmptySlot("knock needs an object")
        return Instruction(Skill.KNOCK_OVER, (_check_slot(" ".join(rest[:-1])),))

    if head == "place":
        if rest and rest[-1] == "upright" and "into" not in rest[:-1]:
            if len(rest) == 1:
                raise EmptySlot("place upright needs an object")
            return Instruction(
                Skill.PLACE_UPRIGHT, (_check_slot(" ".join(rest[:-1])),)
            )
        x, y = _split_on_separator(rest, "into")
        return Instruction(Skill.PLACE_INTO, (x, y))

    raise UnknownTemplate(f"no template matches {text!r}")


def render_instruction(instr: Instruction) -> str:
    """Deterministic inverse of parse_instruction."""
    template = TEMPLATES[instr.skill]
    if template.arity == 1:
        return template.pattern.format(x=instr.objects[0])
    return template.pattern.format(x=instr.objects[0], y=instr.objects[1])


def verb_index(instr: Instruction) -> int:
    """Embedding-table row for the instruction's verb (0..4).

    Object descriptions are deliberately absent from the result: the policy
    receives object identity only through the mask channel.
    """
    return int(instr.skill)
