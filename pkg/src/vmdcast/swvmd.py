"""Per-day decomposition features from trailing windows, and sample assembly.

Day t's features come from decomposing ``series[t-window+1 .. t]`` only,
so no feature ever sees data after its own date. Windows overlap heavily
(31 of 32 samples at step 1) but the decomposition is not incremental,
so results are memoized keyed by window content and configuration.
"""
from __future__ import annotations

import datetime as dt
import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import AlignmentError, ConfigError
from .validation import check_series
from .vmd import VmdConfig, VmdOutput, vmd_decompose

_FEATURE_MODES = ("last", "full")


@dataclass(frozen=True)
class SwVmdConfig:
    """Geometry of the sliding decomposition and of supervised samples.

    ``feature_mode="last"`` keeps each mode's most recent in-window sample
    (k values per day); ``"full"`` flattens the whole decomposed window
    (window*k values per day).
    """

    window: int = 32
    k: int = 5
    step: int = 1
    lookback: int = 16
    horizon: int = 1
    feature_mode: str = "last"

    def __post_init__(self):
        if self.window < 2 * self.k:
            raise ConfigError(
                f"window must be >= 2*k, got window={self.window} k={self.k}"
            )
        if self.step < 1 or self.lookback < 1 or self.horizon < 1:
            raise ConfigError("step, lookback and horizon must all be >= 1")
        if self.feature_mode not in _FEATURE_MODES:
            raise ConfigError(f"feature_mode must be one of {_FEATURE_MODES}")


@dataclass
class WindowedFeatures:
    """One feature vector and one omega vector per produced day."""

    dates: list
    features: np.ndarray  # (n_days, width)
    omegas: np.ndarray  # (n_days, k)

    def __len__(self) -> int:
        return len(self.dates)


@dataclass
class DatasetSample:
    input: np.ndarray  # (lookback, width)
    target: float
    target_date: object


class DecomposeCache:
    """Thread-safe FIFO memo of window decompositions.

    Keys are (window bytes, vmd config), so any series sharing a window
    reuses the result; entries are stored read-only.
    """

    def __init__(self, max_entries: int = 200_000):
        self.max_entries = max_entries
        self.hits = 0
        self.misses = 0
        self._store: dict = {}
        self._lock = threading.Lock()

    def decompose(self, window: np.ndarray, config: VmdConfig) -> VmdOutput:
        key = (window.tobytes(), config)
        with self._lock:
            found = self._store.get(key)
            if found is not None:
                self.hits += 1
                return found
        out = vmd_decompose(window, config)
        out.modes.flags.writeable = False
        out.omegas.flags.writeable = False
        with self._lock:
            self.misses += 1
            self._store[key] = out
            while len(self._store) > self.max_entries:
                self._store.pop(next(iter(self._store)))
        return out


_shared_cache = DecomposeCache()


def sliding_decompose(
    series,
    dates=None,
    config: SwVmdConfig | None = None,
    vmd_config: VmdConfig | None = None,
    cache: DecomposeCache | None = None,
    workers: int = 1,
) -> WindowedFeatures:
    """Decompose every trailing window and collect per-day features.

    Day indices run from ``window - 1`` to the end in steps of ``step``;
    the output has ``(n - window) // step + 1`` rows. Rows depend only on
    data up to their own day, so extending the series never changes
    previously produced rows.
    """
    cfg = config or SwVmdConfig()
    vcfg = vmd_config or VmdConfig(k=cfg.k)
    if vcfg.k != cfg.k:
        raise ConfigError(f"mode counts disagree: swvmd k={cfg.k}, vmd k={vcfg.k}")
    x = check_series(series, "series", min_len=cfg.window)
    n = x.shape[0]
    if dates is None:
        dates = list(range(n))
    if len(dates) != n:
        raise AlignmentError(f"dates (len {len(dates)}) do not align with series ({n})")
    memo = cache if cache is not None else _shared_cache

    ends = range(cfg.window - 1, n, cfg.step)

    def one(end: int) -> VmdOutput:
        return memo.decompose(x[end - cfg.window + 1 : end + 1], vcfg)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(one, ends))
    else:
        outputs = [one(end) for end in ends]

    if cfg.feature_mode == "last":
        feats = np.array([out.modes[:, -1] for out in outputs])
    else:
        feats = np.array([out.modes.T.ravel() for out in outputs])
    omegas = np.array([out.omegas for out in outputs])
    return WindowedFeatures(
        dates=[dates[end] for end in ends], features=feats, omegas=omegas
    )


def _assemble(
    features: np.ndarray, dates: list, targets: np.ndarray, cfg: SwVmdConfig
) -> list[DatasetSample]:
    n = features.shape[0]
    samples = []
    for t in range(cfg.lookback - 1, n - cfg.horizon):
        samples.append(
            DatasetSample(
                input=features[t - cfg.lookback + 1 : t + 1].copy(),
                target=float(targets[t + cfg.horizon]),
                target_date=dates[t + cfg.horizon],
            )
        )
    return samples


def build_dataset(
    features: WindowedFeatures, targets, config: SwVmdConfig | None = None
) -> list[DatasetSample]:
    """Supervised samples: lookback rows of features -> target horizon days on.

    ``targets`` aligns 1:1 with ``features.dates``; samples whose target
    would fall past the end are dropped.
    """
    cfg = config or SwVmdConfig()
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape[0] != len(features):
        raise AlignmentError(
            f"targets (len {targets.shape[0]}) do not align with "
            f"features ({len(features)})"
        )
    return _assemble(features.features, features.dates, targets, cfg)


def build_baseline_dataset(
    series, dates, targets, config: SwVmdConfig | None = None
) -> list[DatasetSample]:
    """Single-feature samples with the exact geometry of the SW-VMD dataset.

    The series value at each produced day is the sole feature, but days,
    lookback, horizon and targets match :func:`build_dataset` sample for
    sample, so the two models are comparable point by point.
    """
    cfg = config or SwVmdConfig()
    x = check_series(series, "series", min_len=cfg.window)
    if len(dates) != x.shape[0]:
        raise AlignmentError("dates do not align with series")
    idx = list(range(cfg.window - 1, x.shape[0], cfg.step))
    feats = x[idx][:, None]
    day_dates = [dates[i] for i in idx]
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape[0] != len(idx):
        raise AlignmentError(
            f"targets (len {targets.shape[0]}) do not align with produced "
            f"days ({len(idx)})"
        )
    return _assemble(feats, day_dates, targets, cfg)


def write_samples(path, samples: list[DatasetSample]) -> None:
    """One JSON object per line: input (row-major), target, target_date."""
    with open(path, "w") as handle:
        for s in samples:
            date = (
                s.target_date.isoformat()
                if isinstance(s.target_date, dt.date)
                else s.target_date
            )
            handle.write(
                json.dumps(
                    {
                        "input": s.input.tolist(),
                        "target": s.target,
                        "target_date": date,
                    }
                )
                + "\n"
            )


def read_samples(path) -> list[DatasetSample]:
    samples = []
    with open(path) as handle:
        for line in handle:
            doc = json.loads(line)
            date = doc["target_date"]
            if isinstance(date, str):
                date = dt.date.fromisoformat(date)
            samples.append(
                DatasetSample(
                    input=np.asarray(doc["input"], dtype=np.float64),
                    target=float(doc["target"]),
                    target_date=date,
                )
            )
    return samples


class SlidingVmd(BaseEstimator, TransformerMixin):
    """Transformer view of the sliding decomposition.

    ``transform`` maps a 1-d series (or single-column matrix) to the
    per-day feature matrix; center frequencies of the latest call are
    kept in ``omegas_``. Stateless: ``fit`` just validates parameters.
    """

    def __init__(
        self,
        window: int = 32,
        k: int = 5,
        step: int = 1,
        alpha: float = 2000.0,
        tau: float = 0.0,
        tol: float = 1e-7,
        max_iter: int = 500,
        init: str = "uniform",
        dc_mode: bool = False,
        seed: int | None = None,
        feature_mode: str = "last",
    ):
        self.window = window
        self.k = k
        self.step = step
        self.alpha = alpha
        self.tau = tau
        self.tol = tol
        self.max_iter = max_iter
        self.init = init
        self.dc_mode = dc_mode
        self.seed = seed
        self.feature_mode = feature_mode

    def _configs(self) -> tuple[SwVmdConfig, VmdConfig]:
        return (
            SwVmdConfig(
                window=self.window,
                k=self.k,
                step=self.step,
                feature_mode=self.feature_mode,
            ),
            VmdConfig(
                k=self.k,
                alpha=self.alpha,
                tau=self.tau,
                tol=self.tol,
                max_iter=self.max_iter,
                init=self.init,
                dc_mode=self.dc_mode,
                seed=self.seed,
            ),
        )

    def fit(self, X, y=None):
        self._configs()
        return self

    def transform(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 2 and X.shape[1] == 1:
            X = X[:, 0]
        cfg, vcfg = self._configs()
        out = sliding_decompose(X, config=cfg, vmd_config=vcfg)
        self.omegas_ = out.omegas
        return out.features
