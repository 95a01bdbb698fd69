import pytest

from hmmguide.constraints import GapWindow
from hmmguide.errors import InputError
from hmmguide.tokenizer import (
    EOS_ID,
    PAD_ID,
    SPACE_ID,
    UNK_ID,
    WordTokenizer,
    parse_constraint_json,
)


@pytest.fixture
def tok():
    return WordTokenizer.from_texts(["the cat sat", "the dog ran in the park"])


def test_reserved_ids_fixed(tok):
    assert (EOS_ID, PAD_ID, UNK_ID, SPACE_ID) == (0, 1, 2, 3)
    assert tok.vocab_size == 4 + 7  # cat dog in park ran sat the


def test_encode_decode_roundtrip(tok):
    ids = tok.encode("the dog sat in the park")
    assert SPACE_ID in ids
    assert tok.decode(ids) == "the dog sat in the park"


def test_unknown_words_map_to_unk(tok):
    ids = tok.encode("the zebra sat")
    assert UNK_ID in ids


def test_strict_encode_raises(tok):
    with pytest.raises(InputError) as err:
        tok.encode("the zebra sat", strict=True)
    assert "zebra" in str(err.value)


def test_normalization(tok):
    assert tok.encode("The CAT!") == tok.encode("the cat")


def test_pad_to_shape(tok):
    ids = tok.encode("the cat")
    padded = tok.pad_to(ids, 8)
    assert len(padded) == 8
    assert padded.count(EOS_ID) == 1
    cut = padded.index(EOS_ID)
    assert all(t == PAD_ID for t in padded[cut + 1 :])
    assert tok.decode(padded) == "the cat"


def test_pad_to_truncates(tok):
    ids = tok.encode("the dog ran in the park")
    padded = tok.pad_to(ids, 4)
    assert len(padded) == 4
    assert tok.decode(padded) == "the dog"


def test_save_load_roundtrip(tok, tmp_path):
    path = tmp_path / "vocab.txt"
    tok.save(path)
    loaded = WordTokenizer.load(path)
    assert loaded.vocab_size == tok.vocab_size
    text = "the dog sat"
    assert loaded.encode(text) == tok.encode(text)


def test_parse_constraint_json(tok):
    spec = parse_constraint_json(
        {
            "keyphrases": [["cat", "dog"], ["park"]],
            "ordered_segments": [
                {"text": "the dog", "gap_after": {"min": 1, "max": 2}},
                "park",
            ],
            "word_length": {"min": 2, "max": 6},
            "end_phrase": "the park",
            "forbidden": ["sat"],
            "horizon": 16,
        },
        tok,
    )
    assert spec.horizon == 16
    assert len(spec.keyphrase_groups) == 2
    assert spec.ordered_segments[0].gap_after == GapWindow(1, 2)
    assert spec.word_length == (2, 6)
    assert spec.vocab_size == tok.vocab_size


def test_parse_constraint_unknown_word(tok):
    with pytest.raises(InputError):
        parse_constraint_json({"keyphrases": [["zebra"]]}, tok)


def test_parse_constraint_bad_shape(tok):
    with pytest.raises(InputError):
        parse_constraint_json(["not", "an", "object"], tok)
