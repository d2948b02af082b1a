"""Pre-modeling checks: ADF unit-root test and rescaled-range Hurst exponent.

The ADF regression includes a constant and no trend; lag order follows
the Schwert bound with downward AIC selection. Critical values come from
the MacKinnon (2010) response surface for the constant case.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DiagnosticError
from .validation import check_series

# MacKinnon (2010) response surface, constant case: cv = b0 + b1/n + b2/n^2 + b3/n^3
_TAU_C = {
    1: (-3.43035, -6.5393, -16.786, -79.433),
    5: (-2.86154, -2.8903, -4.234, -40.04),
    10: (-2.56677, -1.5384, -2.809, 0.0),
}

_MIN_OBS = 25


@dataclass
class AdfResult:
    statistic: float
    critical_1: float
    critical_5: float
    critical_10: float
    lags: int
    n_obs: int

    def critical(self, level_pct: int) -> float:
        try:
            return {1: self.critical_1, 5: self.critical_5, 10: self.critical_10}[
                level_pct
            ]
        except KeyError:
            raise ValueError(f"level must be 1, 5 or 10, got {level_pct}") from None

    def rejects(self, level_pct: int) -> bool:
        """True when the unit-root null is rejected at the given level."""
        return self.statistic < self.critical(level_pct)

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "critical_1": self.critical_1,
            "critical_5": self.critical_5,
            "critical_10": self.critical_10,
            "lags": self.lags,
            "n_obs": self.n_obs,
            "rejects": {str(p): self.rejects(p) for p in (1, 5, 10)},
        }


@dataclass
class HurstResult:
    h: float
    points: list[tuple[float, float]] = field(repr=False)
    r2: float

    def to_dict(self) -> dict:
        return {
            "h": self.h,
            "r2": self.r2,
            "points": [list(p) for p in self.points],
        }


def _critical_values(n_obs: int) -> tuple[float, float, float]:
    out = []
    for level in (1, 5, 10):
        b0, b1, b2, b3 = _TAU_C[level]
        out.append(b0 + b1 / n_obs + b2 / n_obs**2 + b3 / n_obs**3)
    return tuple(out)


def _ols_tstat_first(X: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """t-ratio of the first regressor and the regression SSR."""
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    n, k = X.shape
    ssr = float(resid @ resid)
    sigma2 = ssr / (n - k)
    xtx_inv = np.linalg.inv(X.T @ X)
    se = math.sqrt(sigma2 * xtx_inv[0, 0])
    return float(coef[0] / se), ssr


def _design(x: np.ndarray, lags: int) -> tuple[np.ndarray, np.ndarray]:
    """Response and regressors [level, diff lags..., const] trimmed at ``lags``."""
    dx = np.diff(x)
    n_obs = dx.shape[0] - lags
    y = dx[lags:]
    cols = [x[lags:-1]]
    cols += [dx[lags - i : lags - i + n_obs] for i in range(1, lags + 1)]
    cols.append(np.ones(n_obs))
    return np.column_stack(cols), y


def adf_test(series, max_lags: int | None = None) -> AdfResult:
    """Augmented Dickey-Fuller test with constant, AIC-selected lag order.

    The statistic is the t-ratio of the lagged level in
    ``diff(y) ~ const + y[t-1] + diff-lags``. ``max_lags=None`` applies
    the Schwert bound floor(12 * (n/100)^0.25).
    """
    x = check_series(series, "series", min_len=3)
    n = x.shape[0]
    if np.std(x) == 0.0:
        raise DiagnosticError("series is constant; ADF regression is undefined")

    if max_lags is None:
        max_lags = int(12.0 * (n / 100.0) ** 0.25)
        max_lags = min(max_lags, n // 2 - 2)
    if max_lags < 0:
        raise DiagnosticError("series too short for any lag order")
    if n - 1 - max_lags < _MIN_OBS:
        raise DiagnosticError(
            f"only {n - 1 - max_lags} usable observations after lagging; "
            f"need >= {_MIN_OBS}"
        )

    # Candidate lag orders compete on the common max_lags-trimmed sample.
    X_full, y_full = _design(x, max_lags)
    n_common = y_full.shape[0]
    best_lag, best_aic = 0, np.inf
    for p in range(max_lags + 1):
        cols = list(range(p + 1)) + [X_full.shape[1] - 1]
        Xp = X_full[:, cols]
        coef, *_ = np.linalg.lstsq(Xp, y_full, rcond=None)
        resid = y_full - Xp @ coef
        ssr = float(resid @ resid)
        aic = n_common * math.log(ssr / n_common) + 2 * (p + 2)
        if aic < best_aic:
            best_aic, best_lag = aic, p

    X, y = _design(x, best_lag)
    stat, _ = _ols_tstat_first(X, y)
    n_obs = y.shape[0]
    c1, c5, c10 = _critical_values(n_obs)
    return AdfResult(stat, c1, c5, c10, lags=best_lag, n_obs=n_obs)


def hurst_rs(series, min_window: int = 8) -> HurstResult:
    """Hurst exponent by rescaled-range analysis.

    Window sizes double from ``min_window`` up to n/2; each size's mean
    R/S over non-overlapping windows gives one log-log regression point,
    and the fitted slope is H. Zero-variance windows are skipped; a size
    with no usable window is dropped.
    """
    x = check_series(series, "series", min_len=2)
    n = x.shape[0]
    if min_window < 2:
        raise DiagnosticError("min_window must be >= 2")
    if n < 4 * min_window:
        raise DiagnosticError(f"need >= {4 * min_window} samples, got {n}")

    points: list[tuple[float, float]] = []
    size = min_window
    while size <= n // 2:
        ratios = []
        for start in range(0, (n // size) * size, size):
            seg = x[start : start + size]
            scale = seg.std()
            if scale == 0.0:
                continue
            z = np.cumsum(seg - seg.mean())
            ratios.append((z.max() - z.min()) / scale)
        if ratios:
            points.append((math.log(size), math.log(sum(ratios) / len(ratios))))
        size *= 2

    if len(points) < 2:
        raise DiagnosticError("fewer than two usable window sizes")

    logs = np.array([p[0] for p in points])
    vals = np.array([p[1] for p in points])
    lm, vm = logs.mean(), vals.mean()
    slope = float(np.sum((logs - lm) * (vals - vm)) / np.sum((logs - lm) ** 2))
    fitted = vm + slope * (logs - lm)
    sst = float(np.sum((vals - vm) ** 2))
    r2 = 1.0 if sst == 0.0 else 1.0 - float(np.sum((vals - fitted) ** 2)) / sst
    return HurstResult(h=slope, points=points, r2=r2)
