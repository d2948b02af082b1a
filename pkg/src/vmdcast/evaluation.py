"""Trend classification, accuracy reports, and model-vs-model comparison.

A day's move is labeled from its log return: down below -1%, up at or
above +0.5%, flat between. Accuracy is the percentage of matching labels.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import AlignmentError, ComparisonError, DataError
from .lstm import LossHistory

DOWN_THRESHOLD = -0.01
UP_THRESHOLD = 0.005


class Trend(str, Enum):
    DOWN = "down"
    FLAT = "flat"
    UP = "up"


_ORDER = (Trend.DOWN, Trend.FLAT, Trend.UP)
_INDEX = {label: i for i, label in enumerate(_ORDER)}


def classify_trend(r: float) -> Trend:
    """Label one log return; exactly one band fires for any finite r."""
    if not math.isfinite(r):
        raise DataError(f"return must be finite, got {r}")
    if r < DOWN_THRESHOLD:
        return Trend.DOWN
    if r < UP_THRESHOLD:
        return Trend.FLAT
    return Trend.UP


def classify_trends(returns) -> list[Trend]:
    return [classify_trend(float(r)) for r in np.asarray(returns, dtype=np.float64)]


@dataclass
class AccuracyReport:
    """Label-match counts; ``per_class[actual][predicted]`` in down/flat/up order."""

    total: int
    correct: int
    accuracy_pct: float
    per_class: list[list[int]] = field(repr=False)
    model_id: str = ""

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "total": self.total,
            "correct": self.correct,
            "accuracy_pct": self.accuracy_pct,
            "labels": [t.value for t in _ORDER],
            "per_class": self.per_class,
        }


def accuracy(predicted_labels, actual_labels, model_id: str = "") -> AccuracyReport:
    """Fraction of matching labels, as a percentage, plus confusion counts."""
    predicted = list(predicted_labels)
    actual = list(actual_labels)
    if not predicted or len(predicted) != len(actual):
        raise AlignmentError(
            f"need equal non-empty label lists, got {len(predicted)} and {len(actual)}"
        )
    confusion = [[0, 0, 0], [0, 0, 0], [0, 0, 0]]
    correct = 0
    for p, a in zip(predicted, actual):
        confusion[_INDEX[Trend(a)]][_INDEX[Trend(p)]] += 1
        correct += Trend(p) is Trend(a)
    total = len(predicted)
    return AccuracyReport(
        total=total,
        correct=correct,
        accuracy_pct=100.0 * correct / total,
        per_class=confusion,
        model_id=model_id,
    )


def price_to_trend(predicted_prices, prior_actual_prices) -> list[Trend]:
    """Labels from predicted prices against the actual previous close.

    Using the actual prior price keeps one day's prediction error from
    contaminating the next day's label.
    """
    predicted = np.asarray(predicted_prices, dtype=np.float64)
    prior = np.asarray(prior_actual_prices, dtype=np.float64)
    if predicted.shape != prior.shape:
        raise AlignmentError(
            f"price lists do not align: {predicted.shape} vs {prior.shape}"
        )
    if np.any(predicted <= 0) or np.any(prior <= 0):
        raise DataError("prices must be positive to take log returns")
    return classify_trends(np.log(predicted / prior))


def compare(
    report_a: AccuracyReport,
    report_b: AccuracyReport,
    history_a: LossHistory | None = None,
    history_b: LossHistory | None = None,
) -> dict:
    """Accuracy and correct-count deltas plus plot-ready loss curves."""
    if report_a.total != report_b.total:
        raise ComparisonError(
            f"reports cover different sample counts: {report_a.total} vs "
            f"{report_b.total}"
        )
    doc = {
        "model_a": report_a.model_id,
        "model_b": report_b.model_id,
        "total": report_a.total,
        "accuracy_a_pct": report_a.accuracy_pct,
        "accuracy_b_pct": report_b.accuracy_pct,
        "accuracy_delta_pct": report_a.accuracy_pct - report_b.accuracy_pct,
        "correct_delta": report_a.correct - report_b.correct,
    }
    curves = []
    for model_id, history in ((report_a.model_id, history_a),
                              (report_b.model_id, history_b)):
        if history is None:
            continue
        for epoch, (tr, va) in enumerate(
            zip(history.train_mse, history.val_mse), start=1
        ):
            curves.append({"epoch": epoch, "model_id": model_id,
                           "split": "train", "mse": tr})
            curves.append({"epoch": epoch, "model_id": model_id,
                           "split": "val", "mse": va})
    doc["loss_curves"] = curves
    return doc


def write_accuracy_json(path, reports: list[AccuracyReport]) -> None:
    with open(path, "w") as handle:
        json.dump([r.to_dict() for r in reports], handle, indent=2, sort_keys=True)


def write_loss_curves_csv(path, histories: dict[str, LossHistory]) -> None:
    """Rows ``epoch,model_id,split,mse`` for every model and split."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["epoch", "model_id", "split", "mse"])
        for model_id, history in histories.items():
            for epoch, (tr, va) in enumerate(
                zip(history.train_mse, history.val_mse), start=1
            ):
                writer.writerow([epoch, model_id, "train", repr(tr)])
                writer.writerow([epoch, model_id, "val", repr(va)])


def write_predictions_csv(path, rows) -> None:
    """Rows of (date, actual, predicted, actual_label, predicted_label)."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["date", "actual", "predicted", "actual_label",
                         "predicted_label"])
        for date, actual, predicted, actual_label, predicted_label in rows:
            writer.writerow(
                [date, repr(float(actual)), repr(float(predicted)),
                 Trend(actual_label).value, Trend(predicted_label).value]
            )
