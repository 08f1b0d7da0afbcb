import numpy as np
import pytest
from hypothesis import given, strategies as st

from kgpool.encoder import (PAD, UNK, BiLSTM, CharEncoder, Vocabulary, encode_sequence,
                            encode_with_chars, load_embeddings, write_embeddings)
from kgpool.errors import ConfigError, EncodingError, ParseError


@pytest.fixture
def vocab():
    return Vocabulary.random(["a", "b", "c", "Cat", "cat"], 4, np.random.default_rng(0))


def test_load_two_lines(tmp_path):
    p = tmp_path / "v.txt"
    p.write_text("cat 0.1 0.2 0.3\ndog 1 2 3\n", encoding="utf-8")
    v = load_embeddings(p, 3)
    assert len(v) == 4
    assert v.embeddings.data[v.lookup("cat")].tolist() == [0.1, 0.2, 0.3]
    assert {UNK, PAD} <= set(v.tokens)
    assert not v.embeddings.data[v.pad].any()


def test_load_wrong_width_names_line(tmp_path):
    p = tmp_path / "v.txt"
    p.write_text("cat 0.1 0.2\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="line 1"):
        load_embeddings(p, 3)


def test_load_rejects_bad_values_and_duplicates(tmp_path):
    p = tmp_path / "v.txt"
    p.write_text("cat 0.1 x 0.3\n", encoding="utf-8")
    with pytest.raises(ParseError, match="line 1"):
        load_embeddings(p, 3)
    p.write_text("cat 1 2 3\ncat 1 2 3\n", encoding="utf-8")
    with pytest.raises(ParseError, match="line 2"):
        load_embeddings(p, 3)


def test_embeddings_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    vecs = rng.normal(size=(3, 5))
    write_embeddings(tmp_path / "v.txt", ["x", "y", "zé"], vecs)
    v = load_embeddings(tmp_path / "v.txt", 5)
    np.testing.assert_array_equal(v.embeddings.data[:3], vecs)


def test_lookup_falls_back_to_lowercase_then_unk(vocab):
    assert vocab.lookup("Cat") != vocab.lookup("cat")
    assert vocab.lookup("A") == vocab.lookup("a")
    assert vocab.lookup("zebra") == vocab.unk


def test_output_length(vocab):
    lstm = BiLSTM(4, 50, np.random.default_rng(0))
    assert encode_sequence(["a"], lstm, vocab).shape == (1, 100)


@given(st.lists(st.sampled_from(["a", "b", "c", "zz"]), min_size=1, max_size=12))
def test_dimension_independent_of_length(tokens):
    v = Vocabulary.random(["a", "b", "c"], 4, np.random.default_rng(0))
    lstm = BiLSTM(4, 7, np.random.default_rng(1))
    out = encode_sequence(tokens, lstm, v)
    assert out.shape == (1, 14)
    np.testing.assert_array_equal(out.data, encode_sequence(tokens, lstm, v).data)


def test_zero_weights_give_zero_vector(vocab):
    lstm = BiLSTM(4, 6, rng=None)
    assert not encode_sequence(["a", "b", "c"], lstm, vocab).data.any()


def test_reversal_changes_output(vocab):
    lstm = BiLSTM(4, 5, np.random.default_rng(2))
    fwd = encode_sequence(["a", "b", "c"], lstm, vocab).data
    rev = encode_sequence(["c", "b", "a"], lstm, vocab).data
    assert np.abs(fwd - rev).max() > 1e-6
    same = encode_sequence(["a", "a", "a"], lstm, vocab).data
    np.testing.assert_array_equal(same, encode_sequence(["a", "a", "a"][::-1], lstm, vocab).data)


def test_empty_sequence_raises(vocab):
    with pytest.raises(EncodingError):
        encode_sequence([], BiLSTM(4, 2, None), vocab)


def test_chars_disabled_matches_words_only(vocab):
    lstm = BiLSTM(4, 5, np.random.default_rng(2))
    a = encode_with_chars(["a", "b"], lstm, None, vocab).data
    np.testing.assert_array_equal(a, encode_sequence(["a", "b"], lstm, vocab).data)


def test_char_part_shape():
    chars = CharEncoder("abc", 4, 8, np.random.default_rng(0))
    assert chars.encode_tokens(["a"]).shape == (1, 16)


def test_casing_visible_only_through_chars():
    rng = np.random.default_rng(3)
    # "Paris" is not in the vocabulary, so both casings share the "paris" row
    v = Vocabulary.random(["paris", "is", "big"], 4, rng)
    assert v.lookup("Paris") == v.lookup("paris")
    chars = CharEncoder("PARISparisbg", 3, 8, rng)
    lstm = BiLSTM(4 + chars.out_dim, 5, rng)
    upper = encode_with_chars(["Paris", "is", "big"], lstm, chars, v).data
    lower = encode_with_chars(["paris", "is", "big"], lstm, chars, v).data
    assert np.abs(upper - lower).max() > 1e-8
    words = BiLSTM(4, 5, np.random.default_rng(4))
    np.testing.assert_array_equal(encode_sequence(["Paris"], words, v).data,
                                  encode_sequence(["paris"], words, v).data)


def test_vocab_needs_special_tokens():
    with pytest.raises(ConfigError):
        Vocabulary(["a"], np.zeros((1, 2)))
    with pytest.raises(ConfigError):
        Vocabulary.build(["a", "b"], np.zeros((2, 2))).__class__(["a"], np.zeros((2, 2)))


def test_digest_depends_on_tokens_only():
    a = Vocabulary.build(["x", "y"], np.zeros((2, 2)))
    b = Vocabulary.build(["x", "y"], np.ones((2, 2)))
    c = Vocabulary.build(["y", "x"], np.zeros((2, 2)))
    assert a.digest() == b.digest() != c.digest()
