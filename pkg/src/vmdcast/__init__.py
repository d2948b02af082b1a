"""Sliding-window VMD features and a from-scratch LSTM for daily series.

The package decomposes a price or return series with trailing-window
variational mode decomposition, trains an LSTM on the per-day mode
features, and scores daily trend calls against the same LSTM trained on
the raw series. Estimators follow the scikit-learn fit/transform/predict
conventions so they compose with the usual tooling; ``vmdcast.cli``
drives the batch pipeline.
"""

from .diagnostics import AdfResult, HurstResult, adf_test, hurst_rs
from .errors import (
    AlignmentError,
    ComparisonError,
    ConfigError,
    DataError,
    DegenerateFeatureError,
    DiagnosticError,
    InsufficientDataError,
    LoadError,
    NumericalError,
    TrainingDivergedError,
    VmdcastError,
)
from .evaluation import (
    AccuracyReport,
    Trend,
    accuracy,
    classify_trend,
    compare,
    price_to_trend,
)
from .ingest import (
    PriceSeries,
    ReturnSeries,
    SplitSpec,
    ZScoreScaler,
    load_csv,
    log_returns,
    split,
)
from .lstm import LstmRegressor, NetworkConfig, TrainConfig
from .swvmd import (
    DatasetSample,
    SlidingVmd,
    SwVmdConfig,
    WindowedFeatures,
    build_baseline_dataset,
    build_dataset,
    sliding_decompose,
)
from .vmd import VmdConfig, VmdOutput, mirror_extend, reconstruct, vmd_decompose

__version__ = "0.1.0"

__all__ = [
    "AccuracyReport",
    "AdfResult",
    "AlignmentError",
    "ComparisonError",
    "ConfigError",
    "DataError",
    "DatasetSample",
    "DegenerateFeatureError",
    "DiagnosticError",
    "HurstResult",
    "InsufficientDataError",
    "LoadError",
    "LstmRegressor",
    "NetworkConfig",
    "NumericalError",
    "PriceSeries",
    "ReturnSeries",
    "SlidingVmd",
    "SplitSpec",
    "SwVmdConfig",
    "TrainConfig",
    "TrainingDivergedError",
    "Trend",
    "VmdConfig",
    "VmdOutput",
    "VmdcastError",
    "WindowedFeatures",
    "ZScoreScaler",
    "accuracy",
    "adf_test",
    "build_baseline_dataset",
    "build_dataset",
    "classify_trend",
    "compare",
    "hurst_rs",
    "load_csv",
    "log_returns",
    "mirror_extend",
    "price_to_trend",
    "reconstruct",
    "sliding_decompose",
    "split",
    "vmd_decompose",
]
