"""Corpus converters and the command-line entry points, exercised end to
end on small fixtures in temporary directories."""

import json

import pytest

from catsent.cli import ExperimentConfig, main
from catsent.convert import convert_semeval14, convert_sentihood
from catsent.data import load_dataset, load_schema
from catsent.errors import ConfigurationError, DataError

RESTAURANT_XML = """<?xml version="1.0" encoding="UTF-8"?>
<sentences>
  <sentence id="813">
    <text>The restaurant was expensive, but the menu was great.</text>
    <aspectCategories>
      <aspectCategory category="price" polarity="negative"/>
      <aspectCategory category="food" polarity="positive"/>
    </aspectCategories>
  </sentence>
  <sentence id="814">
    <text>We had to wait a while for a table.</text>
    <aspectCategories>
      <aspectCategory category="anecdotes/miscellaneous" polarity="neutral"/>
    </aspectCategories>
  </sentence>
</sentences>
"""

LOCATION_JSON = json.dumps([
    {"id": 1, "text": "LOCATION1 is very expensive but the area is nice",
     "opinions": [
         {"target_entity": "LOCATION1", "aspect": "price", "sentiment": "Negative"},
         {"target_entity": "LOCATION1", "aspect": "general", "sentiment": "Positive"},
         {"target_entity": "LOCATION1", "aspect": "nightlife", "sentiment": "Positive"},
     ]},
    {"id": 2, "text": "LOCATION2 has great transit links", "opinions": [
        {"target_entity": "LOCATION2", "aspect": "transit-location",
         "sentiment": "Positive"},
    ]},
])


def test_convert_restaurant_xml(tmp_path):
    path = tmp_path / "reviews.xml"
    path.write_text(RESTAURANT_XML)
    ds = convert_semeval14(path)
    assert len(ds) == 2
    s = ds.samples[0]
    assert s.id == "813"
    assert s.labels["price"] == "negative"
    assert s.labels["food"] == "positive"
    assert s.labels["service"] == "none"
    assert ds.samples[1].labels["anecdotes/miscellaneous"] == "neutral"
    assert ds.schema.target_categories == ("service",)


def test_convert_restaurant_rejects_unknown_category(tmp_path):
    path = tmp_path / "bad.xml"
    path.write_text(RESTAURANT_XML.replace('category="price"', 'category="drinks"'))
    with pytest.raises(DataError):
        convert_semeval14(path)


def test_convert_restaurant_rejects_malformed(tmp_path):
    path = tmp_path / "bad.xml"
    path.write_text("<sentences><sentence>")
    with pytest.raises(DataError):
        convert_semeval14(path)


def test_convert_location_json(tmp_path):
    path = tmp_path / "loc.json"
    path.write_text(LOCATION_JSON)
    ds = convert_sentihood(path)
    assert len(ds) == 2
    s = ds.samples[0]
    assert s.labels["location-1 price"] == "negative"
    assert s.labels["location-1 general"] == "positive"
    # non-standard aspect dropped silently
    assert all(not k.endswith("nightlife") for k in s.labels)
    assert ds.samples[1].labels["location-2 transit-location"] == "positive"
    assert ds.samples[1].labels["location-1 price"] == "none"


def test_convert_location_rejects_bad_sentiment(tmp_path):
    path = tmp_path / "loc.json"
    path.write_text(LOCATION_JSON.replace("Negative", "meh"))
    with pytest.raises(DataError):
        convert_sentihood(path)


def test_experiment_config_roundtrip(tmp_path):
    cfg = ExperimentConfig(seed=5, head="sep", rates=[0.5, 1.0])
    path = tmp_path / "cfg.json"
    cfg.save(path)
    back = ExperimentConfig.from_file(path)
    assert back == cfg
    assert back.fingerprint() == cfg.fingerprint()


def test_experiment_config_rejects_unknown_fields(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text('{"seeed": 3}')
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_file(path)


def test_cli_convert_command(tmp_path):
    xml = tmp_path / "r.xml"
    xml.write_text(RESTAURANT_XML)
    out = tmp_path / "out"
    assert main(["convert", "--format", "semeval14", "--input", str(xml),
                 "--out", str(out), "--split-tag", "train"]) == 0
    schema, pol = load_schema(out / "schema.json")
    ds = load_dataset(out / "train.jsonl", schema, pol)
    assert len(ds) == 2


def test_cli_convert_bad_input_exit_code(tmp_path):
    xml = tmp_path / "r.xml"
    xml.write_text("<oops>")
    assert main(["convert", "--format", "semeval14", "--input", str(xml),
                 "--out", str(tmp_path / "o")]) == 3


def workspace(tmp_path, count=30):
    out = tmp_path / "data"
    assert main(["generate", "--count", str(count), "--seed", "1",
                 "--source", "food,price", "--target", "service",
                 "--out", str(out)]) == 0
    cfg = ExperimentConfig(
        schema=str(out / "schema.json"), train=str(out / "train.jsonl"),
        valid=str(out / "valid.jsonl"), test=str(out / "test.jsonl"),
        seed=1, out=str(tmp_path / "run"),
        encoder={"layers": 1, "heads": 2, "d": 8, "ff": 16, "max_len": 32},
        training={"learning_rate": 1e-3, "epochs": 1, "batch_size": 8})
    cfg_path = tmp_path / "config.json"
    cfg.save(cfg_path)
    return out, cfg_path


def test_cli_generate_and_split(tmp_path):
    out, cfg_path = workspace(tmp_path)
    assert main(["split", "--config", str(cfg_path),
                 "--rate", "0.5", "--rate", "1.0"]) == 0
    run = tmp_path / "run"
    manifest = json.loads((run / "split_manifest.json").read_text())
    assert set(manifest["files"]) == {"train", "valid", "test"}
    schema, pol = load_schema(out / "schema.json")
    sampled = load_dataset(run / manifest["files"]["train"]["sampled"]["0.5"],
                           schema, pol)
    assert len(sampled) == 15


def test_cli_train_eval_forgetting(tmp_path):
    out, cfg_path = workspace(tmp_path)
    assert main(["train", "--config", str(cfg_path), "--workflow", "plain"]) == 0
    run = tmp_path / "run"
    report = json.loads((run / "report.json").read_text())
    assert report["workflow"] == "plain"
    assert "micro_f1" in report["metrics"]["all"]["extraction"]
    assert (run / "model.npz").exists()
    assert (run / "steps.jsonl").exists()

    eval_out = tmp_path / "eval.json"
    assert main(["eval", "--checkpoint", str(run / "model.npz"),
                 "--dataset", str(out / "test.jsonl"),
                 "--group", "target", "--out", str(eval_out)]) == 0
    assert json.loads(eval_out.read_text())["group"] == "target"

    assert main(["train", "--config", str(cfg_path), "--workflow", "incremental",
                 "--out", str(tmp_path / "run2")]) == 0
    rep2 = json.loads((tmp_path / "run2" / "report.json").read_text())
    assert set(rep2["metrics"]) == {"stage1", "stage2"}

    assert main(["forgetting", "--config", str(cfg_path),
                 "--out", str(tmp_path / "run3")]) == 0
    forg = json.loads((tmp_path / "run3" / "forgetting.json").read_text())
    assert {"shared", "unshared"} <= set(forg)
    assert "drop" in forg["shared"]


def test_cli_unknown_workflow_exit_code(tmp_path):
    _, cfg_path = workspace(tmp_path)
    assert main(["train", "--config", str(cfg_path), "--workflow", "mix",
                 "--rate", "2.0"]) == 2
