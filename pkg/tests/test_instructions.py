from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from maskmanip.instructions import (
    EmptySlot,
    Instruction,
    InstructionError,
    Skill,
    TEMPLATES,
    TEMPLATE_KEYWORDS,
    UnknownTemplate,
    is_canonical_description,
    parse_instruction,
    render_instruction,
    verb_index,
)

SAFE_WORDS = [
    "red", "blue", "green", "yellow", "disc", "star", "cup", "banana",
    "toy", "whale", "can", "bowl", "small", "shiny", "plastic", "ring",
]

descriptions = st.lists(st.sampled_from(SAFE_WORDS), min_size=1, max_size=3).map(
    " ".join
)


def instructions():
    one = st.tuples(
        st.sampled_from([Skill.PICK, Skill.KNOCK_OVER, Skill.PLACE_UPRIGHT]),
        descriptions,
    ).map(lambda t: Instruction(t[0], (t[1],)))
    two = st.tuples(
        st.sampled_from([Skill.MOVE_NEAR, Skill.PLACE_INTO]),
        descriptions,
        descriptions,
    ).map(lambda t: Instruction(t[0], (t[1], t[2])))
    return st.one_of(one, two)


def test_template_table():
    assert len(TEMPLATES) == 5
    assert TEMPLATES[Skill.PICK].arity == 1
    assert TEMPLATES[Skill.KNOCK_OVER].arity == 1
    assert TEMPLATES[Skill.PLACE_UPRIGHT].arity == 1
    assert TEMPLATES[Skill.MOVE_NEAR].arity == 2
    assert TEMPLATES[Skill.PLACE_INTO].arity == 2


def test_parse_move_near():
    instr = parse_instruction("move yellow banana near cup")
    assert instr.skill is Skill.MOVE_NEAR
    assert instr.objects == ("yellow banana", "cup")


def test_parse_pick():
    instr = parse_instruction("pick coke can")
    assert instr.skill is Skill.PICK
    assert instr.objects == ("coke can",)


def test_parse_unknown_template():
    with pytest.raises(UnknownTemplate):
        parse_instruction("wave at the cat")


def test_parse_remaining_templates():
    assert parse_instruction("knock green can over").skill is Skill.KNOCK_OVER
    assert parse_instruction("place cup upright").skill is Skill.PLACE_UPRIGHT
    instr = parse_instruction("place apple into red bowl")
    assert instr.skill is Skill.PLACE_INTO
    assert instr.objects == ("apple", "red bowl")


def test_render_fixed_patterns():
    assert render_instruction(Instruction(Skill.PICK, ("apple",))) == "pick apple"
    assert (
        render_instruction(Instruction(Skill.PLACE_INTO, ("apple", "red bowl")))
        == "place apple into red bowl"
    )
    assert (
        render_instruction(Instruction(Skill.KNOCK_OVER, ("green can",)))
        == "knock green can over"
    )


def test_empty_slots():
    with pytest.raises(EmptySlot):
        parse_instruction("pick")
    with pytest.raises(EmptySlot):
        parse_instruction("move near cup")
    with pytest.raises(EmptySlot):
        parse_instruction("move cup near")
    with pytest.raises(EmptySlot):
        parse_instruction("knock over")
    with pytest.raises(EmptySlot):
        Instruction(Skill.PICK, ("",))
    with pytest.raises(EmptySlot):
        Instruction(Skill.MOVE_NEAR, ("cup",))


def test_separator_fallback_is_earliest():
    # no keyword-free split exists; the earliest separator wins
    instr = parse_instruction("move a near b near c")
    assert instr.objects == ("a", "b near c")
    instr = parse_instruction("place a into b into c")
    assert instr.objects == ("a", "b into c")
    # a keyword-free split is preferred over an earlier trapped one
    instr = parse_instruction("move near toy near cup")
    assert instr.objects == ("near toy", "cup")


def test_non_separator_keywords_rejected():
    with pytest.raises(UnknownTemplate):
        parse_instruction("pick move it")
    with pytest.raises(UnknownTemplate):
        parse_instruction("move pick thing near cup")


@given(instructions())
def test_round_trip(instr):
    assert parse_instruction(render_instruction(instr)) == instr


@given(descriptions, descriptions)
def test_verb_index_is_object_blind(a, b):
    for skill in (Skill.PICK, Skill.KNOCK_OVER, Skill.PLACE_UPRIGHT):
        assert verb_index(Instruction(skill, (a,))) == int(skill)
    for skill in (Skill.MOVE_NEAR, Skill.PLACE_INTO):
        if a != b:
            assert verb_index(Instruction(skill, (a, b))) == int(skill)


def test_verb_index_values():
    assert verb_index(Instruction(Skill.PICK, ("whale toy",))) == 0
    assert verb_index(Instruction(Skill.PICK, ("coke can",))) == 0
    assert verb_index(Instruction(Skill.MOVE_NEAR, ("a", "b"))) == 1
    assert verb_index(Instruction(Skill.PLACE_INTO, ("a", "b"))) == 4


@given(
    st.lists(
        st.sampled_from(SAFE_WORDS + sorted(TEMPLATE_KEYWORDS)),
        min_size=1,
        max_size=6,
    ).map(" ".join)
)
def test_parser_totality(sentence):
    """Every sentence either parses or raises a typed error, never both."""
    try:
        instr = parse_instruction(sentence)
    except InstructionError:
        return
    assert isinstance(instr, Instruction)
    assert len(instr.objects) == TEMPLATES[instr.skill].arity


def test_is_canonical_description():
    assert is_canonical_description("red disc")
    assert not is_canonical_description("near miss")
    assert not is_canonical_description("")
