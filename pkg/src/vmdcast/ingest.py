"""Loading, returns, scaling and chronological splitting of daily price data.

CSV schema: ``date, close, pre_close, turnover`` with ISO-8601 dates;
``pre_close`` and ``turnover`` are optional, extra columns are ignored.
Trading gaps are not imputed; the series is an evenly indexed sequence.
"""
from __future__ import annotations

import csv
import datetime as dt
import json
import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .errors import (
    AlignmentError,
    DegenerateFeatureError,
    InsufficientDataError,
    LoadError,
)
from .validation import check_matrix


@dataclass
class PriceSeries:
    """Daily observations, sorted by date.

    Parallel arrays of equal length >= 2; dates strictly increasing;
    close strictly positive so log returns exist.
    """

    dates: list[dt.date]
    close: np.ndarray
    pre_close: np.ndarray | None = None
    turnover: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        self.close = np.asarray(self.close, dtype=np.float64)
        n = len(self.dates)
        if n < 2:
            raise InsufficientDataError(f"series needs >= 2 rows, got {n}")
        if self.close.shape != (n,):
            raise AlignmentError("close does not align with dates")
        for attr in ("pre_close", "turnover"):
            value = getattr(self, attr)
            if value is not None:
                value = np.asarray(value, dtype=np.float64)
                setattr(self, attr, value)
                if value.shape != (n,):
                    raise AlignmentError(f"{attr} does not align with dates")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise AlignmentError("dates must be strictly increasing")
        if not np.all(np.isfinite(self.close)) or np.any(self.close <= 0):
            raise LoadError("close must be finite and > 0 everywhere")

    def __len__(self) -> int:
        return len(self.dates)


@dataclass
class ReturnSeries:
    """Log returns; one fewer entry than the source series."""

    dates: list[dt.date]
    r: np.ndarray

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=np.float64)
        if self.r.shape != (len(self.dates),):
            raise AlignmentError("returns do not align with dates")
        if not np.all(np.isfinite(self.r)):
            raise AlignmentError("returns must be finite")

    def __len__(self) -> int:
        return len(self.dates)


def _parse_row(row: dict, index: int, with_pre: bool, with_turn: bool):
    try:
        date = dt.date.fromisoformat(row["date"].strip())
    except ValueError as exc:
        raise LoadError(f"row {index}: bad date {row['date']!r}") from exc
    try:
        close = float(row["close"])
    except (TypeError, ValueError) as exc:
        raise LoadError(f"row {index}: bad close {row['close']!r}") from exc
    if not math.isfinite(close) or close <= 0:
        raise LoadError(f"row {index}: close must be finite and > 0, got {close}")
    extra = []
    for flag, key in ((with_pre, "pre_close"), (with_turn, "turnover")):
        if flag:
            try:
                extra.append(float(row[key]))
            except (TypeError, ValueError) as exc:
                raise LoadError(f"row {index}: bad {key} {row[key]!r}") from exc
    return (date, close, *extra)


def load_csv(path, name: str = "") -> PriceSeries:
    """Read a daily price CSV, sort by date, validate, return the series.

    Errors carry the 1-based data row number of the offending line.
    """
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        header = reader.fieldnames or []
        missing = {"date", "close"} - set(header)
        if missing:
            raise LoadError(f"missing required columns: {sorted(missing)}")
        with_pre = "pre_close" in header
        with_turn = "turnover" in header
        rows = [
            _parse_row(row, i, with_pre, with_turn)
            for i, row in enumerate(reader, start=1)
        ]

    if len(rows) < 2:
        raise LoadError(f"need >= 2 data rows, got {len(rows)}")
    rows.sort(key=lambda r: r[0])
    for (a, *_), (b, *_) in zip(rows, rows[1:]):
        if a == b:
            raise LoadError(f"duplicate date {a.isoformat()}")

    columns = list(zip(*rows))
    dates = list(columns[0])
    close = np.array(columns[1])
    pre_close = np.array(columns[2]) if with_pre else None
    turnover = np.array(columns[2 + with_pre]) if with_turn else None
    return PriceSeries(dates, close, pre_close, turnover, name=name or str(path))


def log_returns(series: PriceSeries) -> ReturnSeries:
    """r_t = ln(P_t / P_{t-1}) for every consecutive pair."""
    if len(series) < 2:
        raise InsufficientDataError("need >= 2 prices for returns")
    r = np.diff(np.log(series.close))
    return ReturnSeries(series.dates[1:], r)


class ZScoreScaler(BaseEstimator, TransformerMixin):
    """Per-feature z-scoring with symmetric winsorization.

    Fitted on training rows only; ``transform`` clips |z| at
    ``clip_sigma`` so extreme values are capped rather than dropped,
    which keeps sliding windows contiguous.
    """

    def __init__(self, clip_sigma: float = 3.0):
        self.clip_sigma = clip_sigma

    def fit(self, X, y=None):
        X = check_matrix(X, "train_features", min_rows=2)
        self.mean_ = X.mean(axis=0)
        self.std_ = X.std(axis=0)
        for j, s in enumerate(self.std_):
            if s == 0.0:
                raise DegenerateFeatureError(f"feature {j} has zero variance")
        self.n_features_in_ = X.shape[1]
        return self

    def _check_fitted(self, X, name):
        if not hasattr(self, "mean_"):
            raise NotFittedError("scaler is not fitted")
        X = check_matrix(X, name)
        if X.shape[1] != self.n_features_in_:
            raise AlignmentError(
                f"expected {self.n_features_in_} features, got {X.shape[1]}"
            )
        return X

    def transform(self, X, clip: bool = True):
        X = self._check_fitted(X, "features")
        z = (X - self.mean_) / self.std_
        if clip:
            z = np.clip(z, -self.clip_sigma, self.clip_sigma)
        return z

    def inverse_transform(self, Z):
        Z = self._check_fitted(Z, "z_scores")
        return Z * self.std_ + self.mean_

    def to_json(self) -> str:
        if not hasattr(self, "mean_"):
            raise NotFittedError("scaler is not fitted")
        return json.dumps(
            {
                "mean": self.mean_.tolist(),
                "std": self.std_.tolist(),
                "clip_sigma": self.clip_sigma,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "ZScoreScaler":
        doc = json.loads(text)
        scaler = cls(clip_sigma=float(doc["clip_sigma"]))
        scaler.mean_ = np.asarray(doc["mean"], dtype=np.float64)
        scaler.std_ = np.asarray(doc["std"], dtype=np.float64)
        scaler.n_features_in_ = scaler.mean_.shape[0]
        return scaler


@dataclass(frozen=True)
class SplitSpec:
    """Trailing test block, validation block just before it, train = rest."""

    test_len: int = 60
    val_len: int = 60


def split(series_len: int, spec: SplitSpec = SplitSpec()) -> tuple[range, range, range]:
    """Chronological (train, validation, test) index ranges."""
    train_len = series_len - spec.val_len - spec.test_len
    if train_len <= 0:
        raise InsufficientDataError(
            f"series of length {series_len} cannot hold val {spec.val_len} "
            f"+ test {spec.test_len} plus a non-empty train block"
        )
    return (
        range(0, train_len),
        range(train_len, train_len + spec.val_len),
        range(train_len + spec.val_len, series_len),
    )
