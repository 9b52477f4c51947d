"""Word-piece vocabulary tests."""

from __future__ import annotations

import pytest

from deskvla.instructions import canonical_instruction
from deskvla.llm import PARAPHRASE_TEMPLATES
from deskvla.text import ACT_ID, PAD_ID, UNK_ID, Vocab, word_pieces
from deskvla.trajectories import COLORS, GOALS, SHAPES


def test_word_pieces_strips_punctuation_and_case():
    assert word_pieces("Move the RED cube!") == ["move", "the", "red", "cube"]
    assert word_pieces("  (left)  bin,  ") == ["left", "bin"]
    assert word_pieces("") == []


def test_special_ids_are_stable():
    v = Vocab()
    assert v.id_to_word[PAD_ID] == "[PAD]"
    assert v.id_to_word[UNK_ID] == "[UNK]"
    assert v.id_to_word[ACT_ID] == "[ACT]"


def test_encode_decode_round_trip():
    v = Vocab()
    ids = v.encode("move the red block to the left edge.")
    assert UNK_ID not in ids
    assert v.decode(ids) == "move the red block to the left edge"


def test_unknown_words_map_to_unk():
    v = Vocab()
    ids = v.encode("defenestrate the xylophone")
    assert ids[0] == UNK_ID
    assert ids[-1] == UNK_ID
    assert ids[1] != UNK_ID  # "the" is known


def test_reserved_tail_size_and_decode():
    v = Vocab(base_size=1024)
    assert v.size == 1024 + 256
    assert v.token_map.action_token_offset == 1024
    assert v.decode([1024, 1279]) == "<act:0> <act:255>"


def test_full_instruction_coverage():
    # Every word any instruction provider can emit must be in-vocabulary,
    # otherwise distinct paraphrases would collapse onto [UNK].
    v = Vocab()
    for color in COLORS:
        for shape in SHAPES:
            obj = f"{color} {shape}"
            for goal in GOALS:
                texts = [canonical_instruction({"object": obj, "goal": goal})]
                texts += [t.format(obj=obj, goal=goal) for t in PARAPHRASE_TEMPLATES]
                for text in texts:
                    assert UNK_ID not in v.encode(text), text


def test_word_list_capacity_check():
    with pytest.raises(ValueError, match="exceeds"):
        Vocab(words=[f"w{i}" for i in range(1030)], base_size=1024)


def test_config_round_trip():
    v = Vocab(words=["alpha", "beta"], base_size=512)
    back = Vocab.from_config(v.to_config())
    assert back.size == v.size
    assert back.encode("alpha beta") == v.encode("alpha beta")
    assert back.word_to_id == v.word_to_id
