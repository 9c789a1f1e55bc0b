"""Multi-task training: masked cross-entropy loss, Adam with linear
warmup/decay, early stopping, and the plain / mix / incremental workflows.

The per-sample loss sums cross-entropy over the categories that are
actually labeled in that sample; unlabeled categories contribute exactly
zero. This is what makes fine-tuning on target-only label maps well
defined. L2 regularization covers all weights, excluding bias vectors.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from . import numerics as nx
from .data import CategorySchema, Dataset, PolaritySet
from .encoder import (BatchEncoding, EncodedInput, EncoderConfig, Vocabulary,
                      assemble_input, batch_inputs, encode_batch,
                      encoder_param_names, init_encoder_params, tokenize)
from .errors import ConfigurationError, DataError, DivergenceError
from .heads import (DecoderMode, DecoderParams, HeadKind, head_probs,
                    init_decoder_params)
from .numerics import NdArray, Tape


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 5e-5
    warmup_ratio: float = 0.25
    epochs: int = 10
    dropout: float = 0.1
    l2_lambda: float = 0.01
    batch_size: int = 16
    patience: int = 3
    seed: int = 0

    def __post_init__(self):
        for name in ("warmup_ratio", "dropout"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigurationError(f"{name}={v} outside [0, 1]")
        if min(self.epochs, self.batch_size, self.patience) <= 0:
            raise ConfigurationError("epochs, batch_size and patience must be positive")


@dataclass
class TrainedModel:
    encoder_config: EncoderConfig
    vocab: Vocabulary
    schema: CategorySchema
    polarities: PolaritySet
    head_kind: HeadKind
    enc_params: dict[str, NdArray]
    dec: DecoderParams
    provenance: dict = field(default_factory=dict)

    def param_items(self) -> list[tuple[str, NdArray]]:
        items = [(n, self.enc_params[n]) for n in encoder_param_names(self.encoder_config)]
        for i, (w, b) in enumerate(zip(self.dec.W, self.dec.b)):
            items.append((f"dec.W{i}", w))
            items.append((f"dec.b{i}", b))
        return items

    def params(self) -> list[NdArray]:
        return [p for _, p in self.param_items()]

    def clone(self) -> "TrainedModel":
        m = copy.copy(self)
        m.enc_params = {k: v.copy() for k, v in self.enc_params.items()}
        m.dec = DecoderParams(self.dec.mode,
                              [w.copy() for w in self.dec.W],
                              [b.copy() for b in self.dec.b])
        m.provenance = copy.deepcopy(self.provenance)
        return m


def _is_bias(name: str) -> bool:
    last = name.split(".")[-1]
    return last.startswith(("b", "c")) or last.endswith("_b")


def fresh_model(schema: CategorySchema, polarities: PolaritySet, vocab: Vocabulary,
                encoder_config: EncoderConfig, head_kind: HeadKind,
                decoder_mode: DecoderMode, seed: int) -> TrainedModel:
    rng = np.random.default_rng(seed)
    enc = init_encoder_params(encoder_config, len(vocab), schema.n_cat + 1, rng)
    dec = init_decoder_params(decoder_mode, schema.n_cat, encoder_config.d,
                              polarities.size, rng)
    return TrainedModel(encoder_config, vocab, schema, polarities, head_kind,
                        enc, dec, provenance={"lineage": "fresh", "init_seed": seed})


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------


def prepare_inputs(dataset: Dataset, model: TrainedModel) -> list[EncodedInput]:
    return [assemble_input(tokenize(s.text, model.vocab), dataset.schema,
                           model.vocab, model.encoder_config.max_len)
            for s in dataset.samples]


def label_arrays(samples, schema: CategorySchema,
                 polarities: PolaritySet) -> tuple[np.ndarray, np.ndarray]:
    """(mask [B, n_cat], onehot [B, n_cat, s]); mask 0 where unlabeled."""
    B, n, s = len(samples), schema.n_cat, polarities.size
    mask = np.zeros((B, n), dtype=np.float64)
    onehot = np.zeros((B, n, s), dtype=np.float64)
    for b, sample in enumerate(samples):
        if not sample.labels:
            raise DataError(f"sample {sample.id!r} has no labels at all")
        for cat, pol in sample.labels.items():
            i = schema.index(cat)
            mask[b, i] = 1.0
            onehot[b, i, polarities.index(pol)] = 1.0
    return mask, onehot


def forward_probs(model: TrainedModel, batch: BatchEncoding, train_mode: bool,
                  rng: np.random.Generator | None, tape: Tape | None) -> NdArray:
    states = encode_batch(batch, model.enc_params, model.encoder_config,
                          train_mode, rng, tape)
    drop = model.encoder_config.dropout if train_mode else 0.0
    return head_probs(model.head_kind, states, model.dec, tape, drop, rng)


def loss_from_probs(probs: NdArray, label_mask: np.ndarray, onehot: np.ndarray,
                    model: TrainedModel, l2_lambda: float,
                    tape: Tape | None,
                    penalized: set[str] | None = None) -> NdArray:
    """Masked cross-entropy over labeled categories plus the L2 penalty.

    ``penalized`` restricts the penalty to a subset of parameter names;
    frozen parameters must not feel regularization pressure either.
    """
    B = probs.shape[0]
    logp = nx.clamped_log(probs, tape=tape)
    picked = nx.mul(logp, NdArray(onehot * label_mask[:, :, None]), tape)
    data_term = nx.scale(nx.reduce_sum(picked, tape=tape), -1.0 / B, tape)
    if l2_lambda == 0.0:
        return data_term
    sq = None
    for name, p in model.param_items():
        if _is_bias(name):
            continue
        if penalized is not None and name not in penalized:
            continue
        term = nx.reduce_sum(nx.mul(p, p, tape), tape=tape)
        sq = term if sq is None else nx.add(sq, term, tape)
    return nx.add(data_term, nx.scale(sq, l2_lambda / 2.0, tape), tape)


def batch_loss(samples, model: TrainedModel, config: TrainConfig,
               train_mode: bool = False, rng: np.random.Generator | None = None,
               tape: Tape | None = None) -> NdArray:
    """Eq.-style multi-task loss over one batch of Samples."""
    mask, onehot = label_arrays(samples, model.schema, model.polarities)
    inputs = [assemble_input(tokenize(s.text, model.vocab), model.schema,
                             model.vocab, model.encoder_config.max_len)
              for s in samples]
    batch = batch_inputs(inputs, model.vocab)
    probs = forward_probs(model, batch, train_mode, rng, tape)
    return loss_from_probs(probs, mask, onehot, model, config.l2_lambda, tape)


# ---------------------------------------------------------------------------
# optimizer and schedule
# ---------------------------------------------------------------------------


def lr_at(step: int, total_steps: int, peak: float, warmup_ratio: float) -> float:
    """Linear ramp 0 -> peak over the warmup span, then linear decay -> 0."""
    warmup = max(int(round(total_steps * warmup_ratio)), 1)
    if step < warmup:
        return peak * step / warmup
    if total_steps == warmup:
        return 0.0
    return peak * (total_steps - step) / (total_steps - warmup)


class Adam:
    """Adaptive-moment optimizer with external per-step learning rate."""

    def __init__(self, named_params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.named_params = list(named_params)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {n: np.zeros_like(p.data) for n, p in self.named_params}
        self.v = {n: np.zeros_like(p.data) for n, p in self.named_params}

    def export_state(self) -> dict:
        return {"t": self.t,
                "m": {n: a.copy() for n, a in self.m.items()},
                "v": {n: a.copy() for n, a in self.v.items()}}

    def load_state(self, state: dict) -> None:
        self.t = state["t"]
        for n, _ in self.named_params:
            if n in state["m"]:
                self.m[n] = state["m"][n].copy()
                self.v[n] = state["v"][n].copy()

    def step(self, lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for name, p in self.named_params:
            g = p.grad
            m = self.m[name] = b1 * self.m[name] + (1 - b1) * g
            v = self.v[name] = b2 * self.v[name] + (1 - b2) * g * g
            p.data -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


# ---------------------------------------------------------------------------
# training workflows
# ---------------------------------------------------------------------------


def _epoch_batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def _dataset_loss(model, inputs, mask, onehot, config, batch_size=64) -> float:
    total, count = 0.0, 0
    for i in range(0, len(inputs), batch_size):
        sl = slice(i, i + batch_size)
        batch = batch_inputs(inputs[sl], model.vocab)
        probs = forward_probs(model, batch, False, None, None)
        part = loss_from_probs(probs, mask[sl], onehot[sl], model, 0.0, None)
        total += part.item() * len(inputs[sl])
        count += len(inputs[sl])
    return total / max(count, 1)


def _frozen_decoder_names(model: TrainedModel, train_ds: Dataset) -> set[str]:
    """Per-category decoder pairs for categories with no labels at all.

    Only meaningful for per-category decoders: no gradient can reach them
    through the masked loss, and freezing keeps regularization away too, so
    those pairs stay bit-identical through a training run.
    """
    if model.dec.mode is not DecoderMode.UNSHARED:
        return set()
    labeled = set()
    for s in train_ds.samples:
        labeled.update(s.labels)
    frozen = set()
    for i, cat in enumerate(model.schema.categories):
        if cat not in labeled:
            frozen.update((f"dec.W{i}", f"dec.b{i}"))
    return frozen


def train(train_ds: Dataset, valid_ds: Dataset, init: TrainedModel,
          config: TrainConfig, log: list | None = None,
          opt_state: dict | None = None,
          opt_state_out: dict | None = None) -> TrainedModel:
    """Mini-batch Adam with warmup/decay and early stopping on valid loss.

    Returns a model carrying the best-validation-epoch parameters. Fully
    deterministic for a fixed config seed. ``opt_state`` seeds the Adam
    moments (for continuing a previous run); ``opt_state_out``, when given
    a dict, receives the final moments.
    """
    if train_ds.schema != init.schema or train_ds.polarities != init.polarities:
        raise ConfigurationError("dataset schema does not match model schema")
    model = init.clone()
    rng = np.random.default_rng(config.seed)
    drop_rng = np.random.default_rng(config.seed + 1)

    tr_inputs = prepare_inputs(train_ds, model)
    tr_mask, tr_onehot = label_arrays(train_ds.samples, model.schema, model.polarities)
    va_inputs = prepare_inputs(valid_ds, model)
    va_mask, va_onehot = label_arrays(valid_ds.samples, model.schema, model.polarities)

    n = len(train_ds.samples)
    steps_per_epoch = max((n + config.batch_size - 1) // config.batch_size, 1)
    total_steps = steps_per_epoch * config.epochs
    frozen = _frozen_decoder_names(model, train_ds)
    named = [(name, p) for name, p in model.param_items() if name not in frozen]
    penalized = {name for name, _ in named}
    params = [p for _, p in named]
    opt = Adam(named)
    if opt_state is not None:
        opt.load_state(opt_state)

    best_loss = np.inf
    best_params = None
    best_epoch = -1
    since_best = 0
    step = 0
    for epoch in range(config.epochs):
        for idx in _epoch_batches(n, config.batch_size, rng):
            tape = Tape()
            batch = batch_inputs([tr_inputs[i] for i in idx], model.vocab)
            probs = forward_probs(model, batch, True, drop_rng, tape)
            loss = loss_from_probs(probs, tr_mask[idx], tr_onehot[idx], model,
                                   config.l2_lambda, tape, penalized)
            if not np.isfinite(loss.item()):
                raise DivergenceError(step)
            tape.backward(loss, params)
            lr = lr_at(step, total_steps, config.learning_rate, config.warmup_ratio)
            opt.step(lr)
            step += 1
            if log is not None:
                log.append({"step": step, "lr": lr, "loss": loss.item(),
                            "split": "train"})
        val = _dataset_loss(model, va_inputs, va_mask, va_onehot, config)
        if log is not None:
            log.append({"step": step, "lr": None, "loss": val, "split": "validation"})
        if val < best_loss:
            best_loss = val
            best_params = [p.data.copy() for p in params]
            best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                break
    if best_params is not None:
        for p, data in zip(params, best_params):
            p.data = data
    if opt_state_out is not None:
        opt_state_out.update(opt.export_state())
    model.provenance = dict(model.provenance)
    model.provenance.update({
        "train_seed": config.seed,
        "best_epoch": best_epoch,
        "best_valid_loss": best_loss,
        "train_fingerprint": dataset_fingerprint(train_ds),
    })
    return model


def run_mix(mix_train: Dataset, valid: Dataset, init: TrainedModel,
            config: TrainConfig, log: list | None = None) -> TrainedModel:
    """Plain training on the union of Sample-Source and Sample-Target."""
    model = train(mix_train, valid, init, config, log)
    model.provenance["workflow"] = "mix"
    return model


def run_incremental(source_train: Dataset, source_valid: Dataset,
                    target_train: Dataset, target_valid: Dataset,
                    init: TrainedModel, config_src: TrainConfig,
                    config_tgt: TrainConfig,
                    log: list | None = None,
                    fresh_optimizer: bool = True) -> tuple[TrainedModel, TrainedModel]:
    """Stage 1 on Sample-Source from fresh init; stage 2 fine-tunes on
    Sample-Target. By default stage 2 gets a fresh optimizer and schedule;
    ``fresh_optimizer=False`` carries the stage-1 Adam moments over."""
    if source_train.schema != target_train.schema:
        raise ConfigurationError("source and target stages use different schemas")
    state: dict = {}
    source_model = train(source_train, source_valid, init, config_src, log,
                         opt_state_out=None if fresh_optimizer else state)
    source_model.provenance["workflow"] = "incremental-stage1"
    if len(target_train.samples) == 0:
        incremental = source_model.clone()
    else:
        incremental = train(target_train, target_valid, source_model, config_tgt,
                            log, opt_state=state if state else None)
    incremental.provenance["workflow"] = "incremental-stage2"
    incremental.provenance["lineage"] = "finetuned-from-stage1"
    return source_model, incremental


def predict(model: TrainedModel, dataset: Dataset, batch_size: int = 64) -> np.ndarray:
    """[N, n_cat, s] probabilities, dropout disabled, deterministic."""
    if dataset.schema != model.schema or dataset.polarities != model.polarities:
        raise ConfigurationError("dataset schema does not match model schema")
    inputs = prepare_inputs(dataset, model)
    out = np.zeros((len(inputs), model.schema.n_cat, model.polarities.size))
    for i in range(0, len(inputs), batch_size):
        batch = batch_inputs(inputs[i:i + batch_size], model.vocab)
        probs = forward_probs(model, batch, False, None, None)
        out[i:i + batch.token_ids.shape[0]] = probs.data
    return out


def dataset_fingerprint(dataset: Dataset) -> str:
    import hashlib

    h = hashlib.sha256()
    for s in dataset.samples:
        h.update(s.id.encode())
        h.update(s.text.encode())
        for k in sorted(s.labels):
            h.update(f"{k}={s.labels[k]}".encode())
    return h.hexdigest()[:16]
