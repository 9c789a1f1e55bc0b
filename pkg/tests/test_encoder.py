"""Tokenizer, input assembly, batching, and encoder forward-pass properties.

The load-bearing oracle here is pad invariance: encoding a batch of
different-length sentences must give each sample exactly the states it gets
when encoded alone.
"""

import numpy as np
import pytest

import catsent.numerics as nx
from catsent.data import CategorySchema
from catsent.encoder import (EncoderConfig, Vocabulary, assemble_input,
                             batch_inputs, encode, encode_batch,
                             encoder_param_names, init_encoder_params,
                             tokenize, word_tokens)
from catsent.errors import ConfigurationError

SCHEMA = CategorySchema(("food", "service"))
TEXTS = ["the food was great", "service terrible honestly",
         "we waited a long-time for the food"]
VOCAB = Vocabulary.build(TEXTS, SCHEMA)
CONFIG = EncoderConfig(layers=2, heads=2, d=8, ff=16, max_len=32, dropout=0.1)


def make_params(seed=0):
    return init_encoder_params(CONFIG, len(VOCAB), SCHEMA.n_cat + 1,
                               np.random.default_rng(seed))


def enc_input(text):
    return assemble_input(tokenize(text, VOCAB), SCHEMA, VOCAB, CONFIG.max_len)


def test_word_tokens():
    assert word_tokens("The Food, was GREAT!") == ["the", "food", "was", "great"]
    assert word_tokens("long-time wait") == ["long-time", "wait"]
    assert word_tokens("") == []


def test_vocabulary_unknown_maps_to_unk():
    assert VOCAB.id("zebra") == VOCAB.id("[UNK]")
    assert VOCAB.id("food") != VOCAB.id("[UNK]")


def test_vocabulary_includes_category_names():
    v = Vocabulary.build([], CategorySchema(("location-1 price",)))
    assert v.id("location-1") != v.id("[UNK]")
    assert v.id("price") != v.id("[UNK]")


def test_assemble_layout():
    enc = enc_input("the food was great")
    ids = enc.token_ids
    assert ids[enc.cls_pos] == VOCAB.id("[CLS]")
    s0, s1 = enc.sent_span
    assert ids[s0:s1] == tokenize("the food was great", VOCAB)
    assert ids[s1] == VOCAB.id("[SEP]")
    # one category span + closing SEP per category, in schema order
    assert len(enc.sep_positions) == 2 and len(enc.cat_spans) == 2
    for (a, b), sep, cat in zip(enc.cat_spans, enc.sep_positions,
                                SCHEMA.categories):
        assert ids[a:b] == tokenize(cat, VOCAB)
        assert ids[sep] == VOCAB.id("[SEP]")
        assert sep == b
    # segments: 0 for sentence+CLS+SEP, i for category block i
    assert enc.segment_ids[:s1 + 1] == [0] * (s1 + 1)
    for i, ((a, b), sep) in enumerate(zip(enc.cat_spans, enc.sep_positions), 1):
        assert enc.segment_ids[a:sep + 1] == [i] * (sep + 1 - a)


def test_assemble_truncates_sentence_not_categories():
    long_text = " ".join(["word"] * 100)
    enc = assemble_input(tokenize(long_text, VOCAB), SCHEMA, VOCAB, 16)
    assert len(enc.token_ids) <= 16
    for (a, b), cat in zip(enc.cat_spans, SCHEMA.categories):
        assert enc.token_ids[a:b] == tokenize(cat, VOCAB)


def test_assemble_rejects_impossible_budget():
    with pytest.raises(ConfigurationError):
        assemble_input([1, 2], SCHEMA, VOCAB, 6)


def test_batch_layout_and_masks():
    batch = batch_inputs([enc_input(t) for t in TEXTS], VOCAB)
    widths = [len(tokenize(t, VOCAB)) for t in TEXTS]
    assert batch.sent_width == max(widths)
    for b, w in enumerate(widths):
        assert batch.sent_mask[b, :w].all() and not batch.sent_mask[b, w:].any()
        assert batch.mask[b, 1 + w:1 + batch.sent_width].sum() == 0
        # positions continue unpadded across the pad gap
        tail_start = 1 + batch.sent_width
        assert batch.position_ids[b, tail_start] == 1 + w


def test_pad_invariance():
    """Batched states match single-sample states despite different padding."""
    params = make_params()
    inputs = [enc_input(t) for t in TEXTS]
    batch = batch_inputs(inputs, VOCAB)
    bs = encode_batch(batch, params, CONFIG)
    for b, (enc, text) in enumerate(zip(inputs, TEXTS)):
        single = encode(enc, params, CONFIG, VOCAB)
        L = len(tokenize(text, VOCAB))
        assert np.allclose(bs.h_cls.data[b], single.h_cls.data, atol=1e-12, rtol=0)
        assert np.allclose(bs.H_sent.data[b, :L], single.H_sent.data,
                           atol=1e-12, rtol=0)
        assert np.allclose(bs.H_sep.data[b], single.H_sep.data, atol=1e-12, rtol=0)
        for got, want in zip(bs.H_cat, single.H_cat):
            assert np.allclose(got.data[b], want.data, atol=1e-12, rtol=0)


def test_encode_deterministic_in_eval_mode():
    params = make_params()
    a = encode(enc_input(TEXTS[0]), params, CONFIG, VOCAB)
    b = encode(enc_input(TEXTS[0]), params, CONFIG, VOCAB)
    assert np.array_equal(a.h_cls.data, b.h_cls.data)


def test_train_mode_requires_rng():
    params = make_params()
    batch = batch_inputs([enc_input(TEXTS[0])], VOCAB)
    with pytest.raises(ConfigurationError):
        encode_batch(batch, params, CONFIG, train_mode=True)


def test_sequence_length_guard():
    params = make_params()
    tiny = EncoderConfig(layers=1, heads=2, d=8, ff=16, max_len=8, dropout=0.0)
    batch = batch_inputs([enc_input(TEXTS[2])], VOCAB)
    with pytest.raises(ConfigurationError):
        encode_batch(batch, params, tiny)


def test_config_validation():
    with pytest.raises(ConfigurationError):
        EncoderConfig(d=10, heads=4)
    with pytest.raises(ConfigurationError):
        EncoderConfig(layers=0)


def test_param_names_cover_init():
    params = make_params()
    assert sorted(params) == sorted(encoder_param_names(CONFIG))


def test_encoder_gradients_flow_to_embeddings():
    params = make_params()
    tape = nx.Tape()
    st = encode(enc_input(TEXTS[0]), params, CONFIG, VOCAB, tape=tape)
    loss = nx.reduce_sum(st.h_cls, tape=tape)
    plist = list(params.values())
    tape.backward(loss, plist)
    assert any(np.abs(p.grad).sum() > 0 for p in plist)
    # only embedding rows of used tokens receive gradient
    used = set(enc_input(TEXTS[0]).token_ids)
    rows = np.abs(params["tok_emb"].grad).sum(axis=1)
    for tok_id in range(len(VOCAB)):
        if tok_id not in used:
            assert rows[tok_id] == 0.0
