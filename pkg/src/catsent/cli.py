"""Experiment runner: dataset conversion, synthetic generation, incremental
splitting, training workflows, evaluation, and the forgetting comparison.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 divergence.
All randomness flows from one root seed recorded in every output.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import load_model, save_model
from .convert import convert_semeval14, convert_sentihood
from .data import (concat_datasets, load_dataset, load_schema,
                   sample_target, save_dataset, save_schema, split_incremental)
from .encoder import EncoderConfig, Vocabulary
from .errors import (CatsentError, ConfigurationError, DataError,
                     DivergenceError, SchemaError)
from .experiments import forgetting_experiment, synthetic_corpus
from .heads import DecoderMode, HeadKind
from .metrics import compute_report
from .training import (TrainConfig, fresh_model, predict, run_incremental,
                       run_mix, train)


@dataclass
class ExperimentConfig:
    """One JSON config file drives every command; CLI flags override."""

    schema: str = "schema.json"
    train: str = "train.jsonl"
    valid: str = "valid.jsonl"
    test: str = "test.jsonl"
    head: str = "sep-sent-att"
    decoder: str = "shared"
    workflow: str = "plain"
    rate: float = 1.0
    rates: list[float] = field(default_factory=lambda: [1.0])
    seed: int = 0
    out: str = "out"
    encoder: dict = field(default_factory=dict)
    training: dict = field(default_factory=dict)
    stage2: dict = field(default_factory=dict)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        unknown = set(raw) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown config fields: {sorted(unknown)}")
        return cls(**raw)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, indent=2)
            fh.write("\n")

    def fingerprint(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(**self.encoder)

    def train_config(self) -> TrainConfig:
        return TrainConfig(seed=self.seed, **self.training)

    def stage2_config(self) -> TrainConfig:
        merged = dict(self.training)
        merged.update(self.stage2)
        merged.setdefault("seed", self.seed + 1)
        return TrainConfig(**merged)

    def head_kind(self) -> HeadKind:
        return HeadKind(self.head)

    def decoder_mode(self) -> DecoderMode:
        return DecoderMode(self.decoder)


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    for name in ("seed", "out", "head", "decoder", "workflow"):
        v = getattr(args, name, None)
        if v is not None:
            cfg = replace(cfg, **{name: v})
    if getattr(args, "rate", None):
        cfg = replace(cfg, rates=list(args.rate), rate=args.rate[0])
    return cfg


def _load_config(args) -> ExperimentConfig:
    cfg = (ExperimentConfig.from_file(args.config) if args.config
           else ExperimentConfig())
    return _apply_overrides(cfg, args)


def _load_corpus(cfg: ExperimentConfig):
    schema, polarities = load_schema(cfg.schema)
    train_ds = load_dataset(cfg.train, schema, polarities, "train")
    valid_ds = load_dataset(cfg.valid, schema, polarities, "validation")
    test_ds = load_dataset(cfg.test, schema, polarities, "test")
    return schema, polarities, train_ds, valid_ds, test_ds


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_convert(args) -> int:
    converters = {"semeval14": convert_semeval14, "sentihood": convert_sentihood}
    ds = converters[args.format](args.input)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_dataset(ds, out / f"{args.split_tag}.jsonl")
    save_schema(ds.schema, ds.polarities, out / "schema.json")
    labeled = sum(len(s.labels) for s in ds.samples)
    print(f"converted {len(ds.samples)} samples, {labeled} labels -> {out}")
    return 0


def cmd_generate(args) -> int:
    corpus = synthetic_corpus(count=args.count, seed=args.seed,
                              source=tuple(args.source.split(",")),
                              target=tuple(args.target.split(",")))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_schema(corpus.schema, corpus.polarities, out / "schema.json")
    for name, ds in (("train", corpus.train), ("valid", corpus.valid),
                     ("test", corpus.test)):
        save_dataset(ds, out / f"{name}.jsonl")
    print(f"generated {args.count}+{len(corpus.valid)}+{len(corpus.test)} samples -> {out}")
    return 0


def cmd_split(args) -> int:
    cfg = _load_config(args)
    schema, polarities, train_ds, valid_ds, test_ds = _load_corpus(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"version": 1, "seed": cfg.seed, "rates": cfg.rates,
                "config_fingerprint": cfg.fingerprint(), "files": {}}
    for tag, ds in (("train", train_ds), ("valid", valid_ds), ("test", test_ds)):
        source, target = split_incremental(ds, schema)
        save_dataset(source, out / f"{tag}.source.jsonl")
        save_dataset(target, out / f"{tag}.target.jsonl")
        manifest["files"][tag] = {"source": f"{tag}.source.jsonl",
                                  "target": f"{tag}.target.jsonl", "sampled": {}}
        if tag == "train":
            for rate in cfg.rates:
                sampled = sample_target(target, rate, cfg.seed)
                name = f"{tag}.target.rate{rate}.jsonl"
                save_dataset(sampled, out / name)
                manifest["files"][tag]["sampled"][str(rate)] = name
    _write_json(out / "split_manifest.json", manifest)
    print(f"split written to {out}")
    return 0


def _evaluate(model, test_ds, groups, threshold=0.5):
    probs = predict(model, test_ds)
    return {g: compute_report(test_ds, probs, g, threshold).to_dict() for g in groups}


def cmd_train(args) -> int:
    cfg = _load_config(args)
    schema, polarities, train_ds, valid_ds, test_ds = _load_corpus(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    vocab = Vocabulary.build([s.text for s in train_ds.samples], schema)
    init = fresh_model(schema, polarities, vocab, cfg.encoder_config(),
                       cfg.head_kind(), cfg.decoder_mode(), cfg.seed)
    log: list = []
    groups = ["all"]
    if schema.has_split:
        groups = ["all", "source", "target"]
    report = {"version": 1, "tool_version": __version__, "workflow": cfg.workflow,
              "seed": cfg.seed, "config_fingerprint": cfg.fingerprint()}

    if cfg.workflow == "plain":
        model = train(train_ds, valid_ds, init, cfg.train_config(), log)
        save_model(model, out / "model.npz")
        report["metrics"] = _evaluate(model, test_ds, groups)
    elif cfg.workflow == "mix":
        src_tr, tgt_tr = split_incremental(train_ds, schema)
        src_va, tgt_va = split_incremental(valid_ds, schema)
        mix_tr = concat_datasets(src_tr, sample_target(tgt_tr, cfg.rate, cfg.seed))
        mix_va = concat_datasets(src_va, tgt_va)
        model = run_mix(mix_tr, mix_va, init, cfg.train_config(), log)
        save_model(model, out / "model.npz")
        report["metrics"] = _evaluate(model, test_ds, groups)
    elif cfg.workflow == "incremental":
        src_tr, tgt_tr = split_incremental(train_ds, schema)
        src_va, tgt_va = split_incremental(valid_ds, schema)
        tgt_tr = sample_target(tgt_tr, cfg.rate, cfg.seed)
        source_model, inc_model = run_incremental(
            src_tr, src_va, tgt_tr, tgt_va, init,
            cfg.train_config(), cfg.stage2_config(), log)
        save_model(source_model, out / "model.stage1.npz")
        save_model(inc_model, out / "model.npz")
        report["metrics"] = {
            "stage1": _evaluate(source_model, test_ds, ["source", "target"]),
            "stage2": _evaluate(inc_model, test_ds, ["source", "target"]),
        }
    else:
        raise ConfigurationError(f"unknown workflow {cfg.workflow!r}")

    with open(out / "steps.jsonl", "w", encoding="utf-8") as fh:
        for rec in log:
            fh.write(json.dumps(rec) + "\n")
    _write_json(out / "report.json", report)
    print(json.dumps(report["metrics"], indent=2))
    return 0


def cmd_eval(args) -> int:
    model = load_model(args.checkpoint)
    schema, polarities = model.schema, model.polarities
    dataset = load_dataset(args.dataset, schema, polarities, "test")
    probs = predict(model, dataset)
    report = compute_report(dataset, probs, args.group, args.threshold)
    print(report.render())
    if args.out:
        _write_json(Path(args.out), report.to_dict())
    return 0


def cmd_forgetting(args) -> int:
    cfg = _load_config(args)
    schema, polarities, train_ds, valid_ds, test_ds = _load_corpus(cfg)
    from .experiments import Corpus

    corpus = Corpus(schema, polarities, train_ds, valid_ds, test_ds)
    result = forgetting_experiment(
        corpus, cfg.head_kind(), cfg.rate, cfg.seed,
        cfg.encoder_config(), cfg.train_config(), cfg.stage2_config())
    result["config_fingerprint"] = cfg.fingerprint()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "forgetting.json", result)
    rows = [("decoder", "before", "after", "drop")]
    for mode in ("shared", "unshared"):
        r = result[mode]
        rows.append((mode, f"{r['before']:.4f}", f"{r['after']:.4f}", f"{r['drop']:+.4f}"))
    width = 12
    for row in rows:
        print("".join(f"{c:>{width}}" for c in row))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="catsent",
                                description="category-sentiment experiment runner")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("convert", help="convert a published corpus format")
    c.add_argument("--format", choices=["semeval14", "sentihood"], required=True)
    c.add_argument("--input", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--split-tag", default="train")
    c.set_defaults(fn=cmd_convert)

    g = sub.add_parser("generate", help="generate a synthetic corpus")
    g.add_argument("--count", type=int, default=2000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--source", default="food,price,ambience,staff")
    g.add_argument("--target", default="service")
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_generate)

    def common(sp):
        sp.add_argument("--config", default=None)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", default=None)
        sp.add_argument("--rate", type=float, action="append", default=None)
        sp.add_argument("--head", choices=[k.value for k in HeadKind], default=None)
        sp.add_argument("--decoder", choices=[m.value for m in DecoderMode], default=None)

    s = sub.add_parser("split", help="write Sample-Source / Sample-Target files")
    common(s)
    s.set_defaults(fn=cmd_split)

    t = sub.add_parser("train", help="train (plain | mix | incremental) and evaluate")
    common(t)
    t.add_argument("--workflow", choices=["plain", "mix", "incremental"], default=None)
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--dataset", required=True)
    e.add_argument("--group", choices=["all", "source", "target"], default="all")
    e.add_argument("--threshold", type=float, default=0.5)
    e.add_argument("--out", default=None)
    e.set_defaults(fn=cmd_eval)

    f = sub.add_parser("forgetting", help="shared vs unshared incremental comparison")
    common(f)
    f.set_defaults(fn=cmd_forgetting)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigurationError,) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (DataError, SchemaError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return 4
    except CatsentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
