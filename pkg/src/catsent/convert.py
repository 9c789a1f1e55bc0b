"""Best-effort adapters from published corpus formats to the canonical
JSON-lines dataset files.

Supported inputs:
  * restaurant-review XML (<sentence><text>..<aspectCategories>..) with a
    fixed 5-category schema and 5 polarities,
  * location-review JSON (list of records with "opinions" naming a
    target_entity and aspect) with the 8 target-category pairs and 3
    polarities.
"""

from __future__ import annotations

import json
import xml.etree.ElementTree as ET

from .data import (ACSA_CATEGORIES, ACSA_DEFAULT_TARGET, TACSA_CATEGORIES,
                   TACSA_DEFAULT_TARGET, SENTIHOOD_ASPECTS, CategorySchema,
                   Dataset, PolaritySet, Sample, make_dataset)
from .errors import DataError


def acsa_schema() -> tuple[CategorySchema, PolaritySet]:
    src = tuple(c for c in ACSA_CATEGORIES if c not in ACSA_DEFAULT_TARGET)
    return (CategorySchema(tuple(ACSA_CATEGORIES), src, tuple(ACSA_DEFAULT_TARGET)),
            PolaritySet.acsa())


def tacsa_schema() -> tuple[CategorySchema, PolaritySet]:
    src = tuple(c for c in TACSA_CATEGORIES if c not in TACSA_DEFAULT_TARGET)
    return (CategorySchema(tuple(TACSA_CATEGORIES), src, tuple(TACSA_DEFAULT_TARGET)),
            PolaritySet.tacsa())


def convert_semeval14(path) -> Dataset:
    """Restaurant-review XML -> canonical dataset; absent categories get
    polarity "none"."""
    schema, polarities = acsa_schema()
    try:
        root = ET.parse(path).getroot()
    except ET.ParseError as exc:
        raise DataError(f"{path}: malformed XML: {exc}") from exc
    samples = []
    for sent in root.iter("sentence"):
        sid = sent.get("id")
        text_el = sent.find("text")
        if sid is None or text_el is None or text_el.text is None:
            raise DataError(f"{path}: sentence missing id or text")
        labels = {c: "none" for c in schema.categories}
        cats = sent.find("aspectCategories")
        if cats is not None:
            for ac in cats.iter("aspectCategory"):
                cat = (ac.get("category") or "").lower()
                pol = (ac.get("polarity") or "").lower()
                if cat not in schema.categories:
                    raise DataError(f"{path}: sentence {sid}: unknown category {cat!r}")
                if pol not in polarities.labels:
                    raise DataError(f"{path}: sentence {sid}: unknown polarity {pol!r}")
                labels[cat] = pol
        samples.append(Sample(sid, text_el.text, labels))
    return make_dataset(samples, schema, polarities)


_ENTITY_MAP = {"location1": "location-1", "location2": "location-2"}


def convert_sentihood(path) -> Dataset:
    """Location-review JSON -> canonical dataset over the 8 standard
    target-category pairs; opinions on other aspects are dropped."""
    schema, polarities = tacsa_schema()
    with open(path, encoding="utf-8") as fh:
        try:
            records = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: malformed JSON: {exc}") from exc
    samples = []
    for rec in records:
        sid = str(rec.get("id"))
        text = rec.get("text")
        if text is None:
            raise DataError(f"{path}: record {sid}: missing text")
        labels = {c: "none" for c in schema.categories}
        for op in rec.get("opinions", []):
            entity = _ENTITY_MAP.get(str(op.get("target_entity", "")).lower().replace(" ", ""))
            aspect = str(op.get("aspect", "")).lower()
            pol = str(op.get("sentiment", "")).lower()
            if entity is None or aspect not in SENTIHOOD_ASPECTS:
                continue
            if pol not in polarities.labels:
                raise DataError(f"{path}: record {sid}: unknown sentiment {pol!r}")
            labels[f"{entity} {aspect}"] = pol
        samples.append(Sample(sid, text, labels))
    return make_dataset(samples, schema, polarities)
