"""Tokenization, category-name-augmented input assembly, transformer encoder.

Input layout per sample:

    [CLS] sentence tokens [SEP] cat1 tokens [SEP] ... catN tokens [SEP]

The encoder output is sliced into four state groups: the [CLS] state, the
sentence states, one separator state per category (the [SEP] closing that
category's span), and each category's token states.

Batches pad the sentence span to a common width; padded positions are
excluded from attention and keep the per-sample (unpadded) position ids, so
a batched forward is numerically identical to per-sample forwards.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .data import CategorySchema
from .errors import ConfigurationError
from .numerics import NdArray, Tape

PAD, UNK, CLS, SEP = "[PAD]", "[UNK]", "[CLS]", "[SEP]"
SPECIAL_TOKENS = [PAD, UNK, CLS, SEP]

_TOKEN_RE = re.compile(r"[a-z0-9]+(?:-[a-z0-9]+)*")


@dataclass(frozen=True)
class Vocabulary:
    token_to_id: dict[str, int]

    def __post_init__(self):
        ids = sorted(self.token_to_id.values())
        if ids != list(range(len(ids))):
            raise ConfigurationError("vocabulary ids are not dense from 0")
        for tok in SPECIAL_TOKENS:
            if tok not in self.token_to_id:
                raise ConfigurationError(f"special token {tok} missing from vocabulary")

    def __len__(self) -> int:
        return len(self.token_to_id)

    def id(self, token: str) -> int:
        return self.token_to_id.get(token, self.token_to_id[UNK])

    @classmethod
    def build(cls, texts, schema: CategorySchema) -> "Vocabulary":
        """Vocabulary over all words in ``texts`` plus the category names."""
        tok_map = {tok: i for i, tok in enumerate(SPECIAL_TOKENS)}
        words = []
        for cat in schema.categories:
            words.extend(word_tokens(cat))
        for text in texts:
            words.extend(word_tokens(text))
        for w in sorted(set(words)):
            if w not in tok_map:
                tok_map[w] = len(tok_map)
        return cls(tok_map)


def word_tokens(text: str) -> list[str]:
    """Lowercase whitespace/punctuation split; hyphenated words stay whole."""
    return _TOKEN_RE.findall(text.lower())


def tokenize(text: str, vocab: Vocabulary) -> list[int]:
    return [vocab.id(w) for w in word_tokens(text)]


@dataclass(frozen=True)
class EncodedInput:
    token_ids: list[int]
    segment_ids: list[int]
    attention_mask: list[int]
    cls_pos: int
    sent_span: tuple[int, int]           # [start, end) of sentence tokens
    sep_positions: list[int]             # the [SEP] after each category
    cat_spans: list[tuple[int, int]]
    n_cat: int


def category_token_ids(schema: CategorySchema, vocab: Vocabulary) -> list[list[int]]:
    return [tokenize(cat, vocab) for cat in schema.categories]


def assemble_input(sentence_ids: list[int], schema: CategorySchema,
                   vocab: Vocabulary, max_len: int) -> EncodedInput:
    """Build the [CLS] sentence [SEP] cat1 [SEP] ... layout.

    The sentence is right-truncated to fit; category names never are.
    """
    cat_ids = category_token_ids(schema, vocab)
    fixed = 2 + sum(len(c) + 1 for c in cat_ids)  # CLS + sent-SEP + cats
    if fixed >= max_len:
        raise ConfigurationError(
            f"category names need {fixed} positions, max_len={max_len} leaves no room")
    sent = list(sentence_ids[: max_len - fixed])

    ids = [vocab.id(CLS)] + sent + [vocab.id(SEP)]
    segs = [0] * len(ids)
    sent_span = (1, 1 + len(sent))
    sep_positions, cat_spans = [], []
    for i, c in enumerate(cat_ids, start=1):
        cat_spans.append((len(ids), len(ids) + len(c)))
        ids.extend(c)
        ids.append(vocab.id(SEP))
        sep_positions.append(len(ids) - 1)
        segs.extend([i] * (len(c) + 1))
    return EncodedInput(
        token_ids=ids,
        segment_ids=segs,
        attention_mask=[1] * len(ids),
        cls_pos=0,
        sent_span=sent_span,
        sep_positions=sep_positions,
        cat_spans=cat_spans,
        n_cat=schema.n_cat,
    )


@dataclass
class BatchEncoding:
    """Samples stacked on a shared layout (sentence span padded to a width)."""

    token_ids: np.ndarray        # [B, T] int
    position_ids: np.ndarray     # [B, T] int, per-sample unpadded positions
    segment_ids: np.ndarray      # [B, T] int
    mask: np.ndarray             # [B, T] float, 0 on pads
    sent_width: int
    sent_mask: np.ndarray        # [B, W] float
    sep_positions: list[int]
    cat_spans: list[tuple[int, int]]
    n_cat: int


def batch_inputs(inputs: list[EncodedInput], vocab: Vocabulary) -> BatchEncoding:
    """Stack inputs over one schema; pads go at the end of the sentence span."""
    n_cat = inputs[0].n_cat
    cat_lens = [b - a for a, b in inputs[0].cat_spans]
    width = max(e.sent_span[1] - e.sent_span[0] for e in inputs)
    tail = 1 + sum(l + 1 for l in cat_lens)  # sent-SEP + category blocks
    T = 1 + width + tail
    B = len(inputs)
    pad_id = vocab.id(PAD)

    ids = np.full((B, T), pad_id, dtype=np.int64)
    pos = np.zeros((B, T), dtype=np.int64)
    seg = np.zeros((B, T), dtype=np.int64)
    mask = np.zeros((B, T), dtype=np.float64)
    sent_mask = np.zeros((B, width), dtype=np.float64)

    # shared tail layout indices
    tail_start = 1 + width
    sep_positions, cat_spans = [], []
    cursor = tail_start + 1
    for lc in cat_lens:
        cat_spans.append((cursor, cursor + lc))
        cursor += lc
        sep_positions.append(cursor)
        cursor += 1

    for b, enc in enumerate(inputs):
        s0, s1 = enc.sent_span
        L = s1 - s0
        sent = enc.token_ids[s0:s1]
        ids[b, 0] = enc.token_ids[enc.cls_pos]
        ids[b, 1:1 + L] = sent
        ids[b, tail_start:] = enc.token_ids[s1:]
        seg[b, tail_start:] = enc.segment_ids[s1:]
        # unpadded position ids: pads keep position 0, every real token gets
        # the position it would have without padding
        pos[b, 0] = 0
        pos[b, 1:1 + L] = np.arange(1, 1 + L)
        pos[b, tail_start:] = np.arange(1 + L, 1 + L + tail)
        mask[b, 0] = 1.0
        mask[b, 1:1 + L] = 1.0
        mask[b, tail_start:] = 1.0
        sent_mask[b, :L] = 1.0

    return BatchEncoding(ids, pos, seg, mask, width, sent_mask,
                         sep_positions, cat_spans, n_cat)


# ---------------------------------------------------------------------------
# encoder parameters and forward pass
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EncoderConfig:
    layers: int = 2
    heads: int = 4
    d: int = 64
    ff: int = 256
    max_len: int = 128
    dropout: float = 0.1

    def __post_init__(self):
        if self.d % self.heads != 0:
            raise ConfigurationError(f"d={self.d} not divisible by heads={self.heads}")
        if min(self.layers, self.heads, self.d, self.ff, self.max_len) <= 0:
            raise ConfigurationError("all encoder dimensions must be positive")


def init_encoder_params(config: EncoderConfig, vocab_size: int, n_segments: int,
                        rng: np.random.Generator) -> dict[str, NdArray]:
    d, ff = config.d, config.ff

    def normal(*shape):
        return NdArray(rng.normal(0.0, 0.02, size=shape))

    params = {
        "tok_emb": normal(vocab_size, d),
        "pos_emb": normal(config.max_len, d),
        "seg_emb": normal(n_segments, d),
        "emb_ln_g": NdArray(np.ones(d)),
        "emb_ln_b": NdArray(np.zeros(d)),
    }
    for l in range(config.layers):
        p = f"l{l}."
        for name in ("wq", "wk", "wv", "wo"):
            params[p + name] = normal(d, d)
            params[p + name.replace("w", "b")] = NdArray(np.zeros(d))
        params[p + "ln1_g"] = NdArray(np.ones(d))
        params[p + "ln1_b"] = NdArray(np.zeros(d))
        params[p + "w1"] = normal(d, ff)
        params[p + "c1"] = NdArray(np.zeros(ff))
        params[p + "w2"] = normal(ff, d)
        params[p + "c2"] = NdArray(np.zeros(d))
        params[p + "ln2_g"] = NdArray(np.ones(d))
        params[p + "ln2_b"] = NdArray(np.zeros(d))
    return params


@dataclass
class BatchStates:
    """Encoder output views for a batch (leading axis B on every array)."""

    h_cls: NdArray               # [B, d]
    H_sent: NdArray              # [B, W, d]
    sent_mask: np.ndarray        # [B, W]
    H_sep: NdArray               # [B, n_cat, d]
    H_cat: list[NdArray]         # each [B, L_cat_i, d]
    n_cat: int


@dataclass
class EncoderStates:
    """Encoder output views for a single sample."""

    h_cls: NdArray               # [d]
    H_sent: NdArray              # [L_sent, d]
    H_sep: NdArray               # [n_cat, d]
    H_cat: list[NdArray]         # each [L_cat_i, d]

    @property
    def n_cat(self) -> int:
        return self.H_sep.shape[0]

    @property
    def sent_mask(self):
        return None


def _linear(x: NdArray, w: NdArray, b: NdArray, tape) -> NdArray:
    return nx.add(nx.matmul(x, w, tape), b, tape)


def _self_attention(x: NdArray, params, prefix: str, config: EncoderConfig,
                    key_mask: np.ndarray, tape) -> NdArray:
    B, T, d = x.shape
    h = config.heads
    dh = d // h

    def split_heads(t):
        t = nx.reshape(t, (B, T, h, dh), tape)
        return nx.transpose(t, (0, 2, 1, 3), tape)   # [B, h, T, dh]

    q = split_heads(_linear(x, params[prefix + "wq"], params[prefix + "bq"], tape))
    k = split_heads(_linear(x, params[prefix + "wk"], params[prefix + "bk"], tape))
    v = split_heads(_linear(x, params[prefix + "wv"], params[prefix + "bv"], tape))

    scores = nx.scale(nx.matmul(q, nx.transpose(k, (0, 1, 3, 2), tape), tape),
                      1.0 / np.sqrt(dh), tape)
    weights = nx.masked_softmax(scores, key_mask[:, None, None, :], tape)
    ctx = nx.matmul(weights, v, tape)                # [B, h, T, dh]
    ctx = nx.transpose(ctx, (0, 2, 1, 3), tape)
    ctx = nx.reshape(ctx, (B, T, d), tape)
    return _linear(ctx, params[prefix + "wo"], params[prefix + "bo"], tape)


def encode_batch(batch: BatchEncoding, params: dict[str, NdArray],
                 config: EncoderConfig, train_mode: bool = False,
                 rng: np.random.Generator | None = None,
                 tape: Tape | None = None) -> BatchStates:
    """Run the transformer; slice final states into the four groups."""
    if batch.token_ids.shape[1] > config.max_len:
        raise ConfigurationError(
            f"sequence length {batch.token_ids.shape[1]} exceeds position table {config.max_len}")
    drop = config.dropout if train_mode else 0.0
    if drop > 0.0 and rng is None:
        raise ConfigurationError("train_mode encoding needs an RNG for dropout")

    x = nx.add(nx.add(nx.take(params["tok_emb"], batch.token_ids, 0, tape),
                      nx.take(params["pos_emb"], batch.position_ids, 0, tape), tape),
               nx.take(params["seg_emb"], batch.segment_ids, 0, tape), tape)
    x = nx.layer_norm(x, params["emb_ln_g"], params["emb_ln_b"], tape=tape)
    x = nx.dropout(x, drop, rng, tape)

    for l in range(config.layers):
        p = f"l{l}."
        att = _self_attention(x, params, p, config, batch.mask, tape)
        att = nx.dropout(att, drop, rng, tape)
        x = nx.layer_norm(nx.add(x, att, tape),
                          params[p + "ln1_g"], params[p + "ln1_b"], tape=tape)
        ffn = _linear(nx.gelu(_linear(x, params[p + "w1"], params[p + "c1"], tape), tape),
                      params[p + "w2"], params[p + "c2"], tape)
        ffn = nx.dropout(ffn, drop, rng, tape)
        x = nx.layer_norm(nx.add(x, ffn, tape),
                          params[p + "ln2_g"], params[p + "ln2_b"], tape=tape)

    B, T, d = x.shape
    W = batch.sent_width
    h_cls = nx.reshape(nx.take(x, [0], 1, tape), (B, d), tape)
    H_sent = nx.take(x, list(range(1, 1 + W)), 1, tape)
    H_sep = nx.take(x, batch.sep_positions, 1, tape)
    H_cat = [nx.take(x, list(range(a, b)), 1, tape) for a, b in batch.cat_spans]
    return BatchStates(h_cls, H_sent, batch.sent_mask, H_sep, H_cat, batch.n_cat)


def encode(enc_input: EncodedInput, params: dict[str, NdArray], config: EncoderConfig,
           vocab: Vocabulary, train_mode: bool = False,
           rng: np.random.Generator | None = None,
           tape: Tape | None = None) -> EncoderStates:
    """Single-sample forward; returns squeezed views."""
    batch = batch_inputs([enc_input], vocab)
    st = encode_batch(batch, params, config, train_mode, rng, tape)
    d = config.d
    return EncoderStates(
        h_cls=nx.reshape(st.h_cls, (d,), tape),
        H_sent=nx.reshape(st.H_sent, st.H_sent.shape[1:], tape),
        H_sep=nx.reshape(st.H_sep, st.H_sep.shape[1:], tape),
        H_cat=[nx.reshape(hc, hc.shape[1:], tape) for hc in st.H_cat],
    )


def encoder_param_names(config: EncoderConfig) -> list[str]:
    names = ["tok_emb", "pos_emb", "seg_emb", "emb_ln_g", "emb_ln_b"]
    for l in range(config.layers):
        p = f"l{l}."
        names += [p + n for n in ("wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo",
                                  "ln1_g", "ln1_b", "w1", "c1", "w2", "c2",
                                  "ln2_g", "ln2_b")]
    return names
