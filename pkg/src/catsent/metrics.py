"""Evaluation suite: category extraction scored via 1 - p(none), sentiment
accuracy over label subsets, strict per-sample accuracy, and rank-based AUC.

Metrics that are undefined for a dataset (no eligible pairs, single-class
gold, subset labels missing from the polarity set) are reported as None,
never as zero.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .data import Dataset, PolaritySet
from .errors import DataError

BINARY = ("positive", "negative")
THREE_WAY = ("positive", "neutral", "negative")
FOUR_WAY = ("positive", "neutral", "negative", "conflict")


class SentimentSubset(Enum):
    BINARY = BINARY
    THREE_WAY = THREE_WAY
    FOUR_WAY = FOUR_WAY


@dataclass(frozen=True)
class Prediction:
    """One (sample, category) pair: probability row plus gold where known."""

    sample_id: str
    category: str
    probs: np.ndarray            # [s]
    gold: str | None


@dataclass(frozen=True)
class PredictionSet:
    polarities: PolaritySet
    categories: tuple[str, ...]
    entries: tuple[Prediction, ...]

    def labeled(self) -> list[Prediction]:
        return [e for e in self.entries if e.gold is not None]


def build_prediction_set(dataset: Dataset, probs: np.ndarray,
                         group: str = "all") -> PredictionSet:
    """Pair model probabilities with gold labels, restricted to a category
    group (all | source | target)."""
    schema = dataset.schema
    if group == "all":
        cats = schema.categories
    elif group == "source":
        cats = schema.source_categories
    elif group == "target":
        cats = schema.target_categories
    else:
        raise DataError(f"unknown category group {group!r}")
    if not cats:
        raise DataError(f"category group {group!r} is empty")
    entries = []
    for i, sample in enumerate(dataset.samples):
        for cat in cats:
            j = schema.index(cat)
            entries.append(Prediction(sample.id, cat, probs[i, j],
                                      sample.labels.get(cat)))
    return PredictionSet(dataset.polarities, tuple(cats), tuple(entries))


# ---------------------------------------------------------------------------
# extraction
# ---------------------------------------------------------------------------


def not_none_score(entry: Prediction, polarities: PolaritySet) -> float:
    return 1.0 - float(entry.probs[polarities.none_index])


def extraction_scores(preds: PredictionSet, threshold: float = 0.5
                      ) -> tuple[float, float, float, float]:
    """(precision, recall, micro_f1, macro_f1) over labeled pairs.

    Predicted present iff 1 - p(none) > threshold. Macro-F1 gives a
    category with no gold positives and no predicted positives F1 = 1.
    """
    entries = preds.labeled()
    if not entries:
        raise DataError("extraction_scores on an empty prediction set")
    per_cat = {c: [0, 0, 0] for c in preds.categories}   # tp, fp, fn
    for e in entries:
        pred = not_none_score(e, preds.polarities) > threshold
        gold = e.gold != "none"
        if pred and gold:
            per_cat[e.category][0] += 1
        elif pred and not gold:
            per_cat[e.category][1] += 1
        elif gold and not pred:
            per_cat[e.category][2] += 1
    tp = sum(v[0] for v in per_cat.values())
    fp = sum(v[1] for v in per_cat.values())
    fn = sum(v[2] for v in per_cat.values())
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    micro = (2 * precision * recall / (precision + recall)
             if precision + recall else 0.0)
    cat_f1 = []
    for tpc, fpc, fnc in per_cat.values():
        if tpc + fpc + fnc == 0:
            cat_f1.append(1.0)   # degenerate category convention
        else:
            cat_f1.append(2 * tpc / (2 * tpc + fpc + fnc))
    return precision, recall, micro, float(np.mean(cat_f1))


# ---------------------------------------------------------------------------
# sentiment
# ---------------------------------------------------------------------------


def sentiment_accuracy(preds: PredictionSet, subset: SentimentSubset) -> float | None:
    """Accuracy over pairs whose gold is in the subset; argmax restricted to
    the subset's classes. None when the subset does not apply."""
    classes = subset.value
    pol = preds.polarities
    if any(c not in pol.labels for c in classes):
        return None
    idx = [pol.index(c) for c in classes]
    correct = total = 0
    for e in preds.labeled():
        if e.gold not in classes:
            continue
        total += 1
        pred = classes[int(np.argmax(e.probs[idx]))]
        if pred == e.gold:
            correct += 1
    if total == 0:
        return None
    return correct / total


def strict_accuracy(preds: PredictionSet) -> float:
    """Fraction of samples with the full-argmax prediction correct for
    every scored category. Errors on partial labels."""
    pol = preds.polarities
    by_sample: dict[str, list[Prediction]] = {}
    for e in preds.entries:
        by_sample.setdefault(e.sample_id, []).append(e)
    if not by_sample:
        raise DataError("strict_accuracy on an empty prediction set")
    correct = 0
    for sid, entries in by_sample.items():
        if len(entries) != len(preds.categories) or any(e.gold is None for e in entries):
            raise DataError(f"sample {sid!r}: strict accuracy needs gold for "
                            "every scored category")
        if all(pol.labels[int(np.argmax(e.probs))] == e.gold for e in entries):
            correct += 1
    return correct / len(by_sample)


def strict_extraction_accuracy(preds: PredictionSet, threshold: float = 0.5) -> float:
    """All-or-nothing per sample on the presence decision alone."""
    by_sample: dict[str, list[Prediction]] = {}
    for e in preds.entries:
        by_sample.setdefault(e.sample_id, []).append(e)
    if not by_sample:
        raise DataError("strict_extraction_accuracy on an empty prediction set")
    correct = 0
    for sid, entries in by_sample.items():
        if any(e.gold is None for e in entries):
            raise DataError(f"sample {sid!r}: strict accuracy needs gold for "
                            "every scored category")
        if all((not_none_score(e, preds.polarities) > threshold) == (e.gold != "none")
               for e in entries):
            correct += 1
    return correct / len(by_sample)


# ---------------------------------------------------------------------------
# AUC
# ---------------------------------------------------------------------------


def auc(scores: list[tuple[float, bool]]) -> float | None:
    """ROC AUC via the rank statistic; ties contribute 1/2. None when the
    gold has a single class."""
    pos = sorted(s for s, g in scores if g)
    neg = sorted(s for s, g in scores if not g)
    if not pos or not neg:
        return None
    # count (pos > neg) + 0.5 * (pos == neg) with two sorted passes
    import bisect

    total = 0.0
    for p in pos:
        lo = bisect.bisect_left(neg, p)
        hi = bisect.bisect_right(neg, p)
        total += lo + 0.5 * (hi - lo)
    return total / (len(pos) * len(neg))


def extraction_auc(preds: PredictionSet) -> float | None:
    pairs = [(not_none_score(e, preds.polarities), e.gold != "none")
             for e in preds.labeled()]
    return auc(pairs)


def sentiment_auc(preds: PredictionSet) -> float | None:
    """Pairwise-renormalized positive score, per category, macro-averaged."""
    pol = preds.polarities
    ip, ineg = pol.index("positive"), pol.index("negative")
    per_cat = []
    for cat in preds.categories:
        pairs = []
        for e in preds.labeled():
            if e.category != cat or e.gold not in ("positive", "negative"):
                continue
            denom = e.probs[ip] + e.probs[ineg]
            score = float(e.probs[ip] / denom) if denom > 0 else 0.5
            pairs.append((score, e.gold == "positive"))
        a = auc(pairs)
        if a is not None:
            per_cat.append(a)
    if not per_cat:
        return None
    return float(np.mean(per_cat))


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


@dataclass
class MetricsReport:
    """All evaluation numbers for one (dataset, model) pair and one group."""

    group: str
    extraction: dict[str, float | None]
    sentiment: dict[str, float | None]

    def to_dict(self) -> dict:
        return {"version": 1, "group": self.group,
                "extraction": self.extraction, "sentiment": self.sentiment}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def render(self) -> str:
        lines = [f"group: {self.group}",
                 f"{'metric':<28}{'value':>10}"]
        for section, values in (("extra.", self.extraction), ("senti.", self.sentiment)):
            for name, v in values.items():
                shown = "absent" if v is None else f"{v:.4f}"
                lines.append(f"{section + ' ' + name:<28}{shown:>10}")
        return "\n".join(lines)


def compute_report(dataset: Dataset, probs: np.ndarray, group: str = "all",
                   threshold: float = 0.5) -> MetricsReport:
    preds = build_prediction_set(dataset, probs, group)
    precision, recall, micro, macro = extraction_scores(preds, threshold)

    def maybe_strict(fn, *args):
        try:
            return fn(preds, *args)
        except DataError:
            return None

    extraction = {
        "precision": precision,
        "recall": recall,
        "micro_f1": micro,
        "macro_f1": macro,
        "strict_accuracy": maybe_strict(strict_extraction_accuracy, threshold),
        "auc": extraction_auc(preds),
    }
    sentiment = {
        "binary_acc": sentiment_accuracy(preds, SentimentSubset.BINARY),
        "three_way_acc": sentiment_accuracy(preds, SentimentSubset.THREE_WAY),
        "four_way_acc": sentiment_accuracy(preds, SentimentSubset.FOUR_WAY),
        "strict_accuracy": maybe_strict(strict_accuracy),
        "auc": sentiment_auc(preds),
    }
    return MetricsReport(group, extraction, sentiment)
