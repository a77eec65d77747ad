"""Additive trend/seasonal/residual decomposition of forecast windows.

Two methods are provided: a centered moving average with phase-mean
seasonality, and a simplified iterative STL (per-phase LOESS smoothing
alternating with LOESS trend extraction, two inner iterations, no
robustness weights). In both, the residual is defined by subtraction, so
trend + seasonal + residual reconstructs the input to rounding error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

METHODS = ("moving_average", "stl")


@dataclass
class DecompConfig:
    """Decomposition settings. The averaging window is m = 2k+1 points."""

    k: int = 12
    period: int = 24
    method: str = "moving_average"
    loess_bandwidth: float = 0.3

    def validate(self):
        if self.k < 0:
            raise ValueError(f"averaging half-width k must be >= 0, got {self.k}")
        if self.period < 1:
            raise ValueError(f"seasonal period must be >= 1, got {self.period}")
        if self.method not in METHODS:
            raise ValueError(f"unknown decomposition method {self.method!r}; expected one of {METHODS}")
        if not 0.0 < self.loess_bandwidth <= 1.0:
            raise ValueError(f"loess_bandwidth must be in (0, 1], got {self.loess_bandwidth}")


@dataclass
class ComponentTriple:
    """Additive components of one window; their sum reconstructs the input."""

    trend: np.ndarray
    seasonal: np.ndarray
    residual: np.ndarray
    method: str
    period: int

    def reconstruct(self):
        return self.trend + self.seasonal + self.residual


def moving_average_trend(x, k):
    """Centered moving average of width 2k+1 with replicate-edge padding."""
    x = np.asarray(x, dtype=np.float64)
    return moving_average_batch(x[None, :], k)[0]


def moving_average_batch(X, k):
    """Row-wise centered moving average for a [rows, L] matrix."""
    X = np.asarray(X, dtype=np.float64)
    if k < 0:
        raise ValueError(f"averaging half-width k must be >= 0, got {k}")
    if k == 0:
        return X.copy()
    pad = np.concatenate(
        [np.repeat(X[:, :1], k, axis=1), X, np.repeat(X[:, -1:], k, axis=1)], axis=1
    )
    m = 2 * k + 1
    csum = np.cumsum(pad, axis=1)
    csum = np.concatenate([np.zeros((X.shape[0], 1)), csum], axis=1)
    return (csum[:, m:] - csum[:, :-m]) / m


def estimate_seasonal(detrended, period):
    """Phase means of the detrended series, re-centered and tiled to length L."""
    detrended = np.asarray(detrended, dtype=np.float64)
    return estimate_seasonal_batch(detrended[None, :], period)[0]


def estimate_seasonal_batch(D, period):
    D = np.asarray(D, dtype=np.float64)
    rows, L = D.shape
    if period < 1:
        raise ValueError(f"seasonal period must be >= 1, got {period}")
    if period > L:
        raise ValueError(f"period exceeds window: period={period}, window length={L}")
    n_cycles = -(-L // period)
    padded = np.full((rows, n_cycles * period), np.nan)
    padded[:, :L] = D
    profile = np.nanmean(padded.reshape(rows, n_cycles, period), axis=1)
    profile -= profile.mean(axis=1, keepdims=True)
    return np.tile(profile, (1, n_cycles))[:, :L]


def additive_decompose(x, cfg: DecompConfig) -> ComponentTriple:
    """Decompose one window with the configured method."""
    cfg.validate()
    x = np.asarray(x, dtype=np.float64)
    trend, seasonal, residual = decompose_batch(x[None, :], cfg)
    return ComponentTriple(trend[0], seasonal[0], residual[0], cfg.method, cfg.period)


def stl_decompose(x, cfg: DecompConfig) -> ComponentTriple:
    """Decompose one window with the simplified STL procedure."""
    cfg = DecompConfig(cfg.k, cfg.period, "stl", cfg.loess_bandwidth)
    return additive_decompose(x, cfg)


def decompose_batch(X, cfg: DecompConfig):
    """Decompose each row of a [rows, L] matrix; returns (trend, seasonal, residual)."""
    cfg.validate()
    X = np.asarray(X, dtype=np.float64)
    if cfg.method == "moving_average":
        trend = moving_average_batch(X, cfg.k)
        seasonal = estimate_seasonal_batch(X - trend, cfg.period)
    else:
        trend = np.empty_like(X)
        seasonal = np.empty_like(X)
        for i in range(X.shape[0]):
            trend[i], seasonal[i] = _stl_components(X[i], cfg.period, cfg.loess_bandwidth)
    residual = X - trend - seasonal
    return trend, seasonal, residual


def _stl_components(x, period, bandwidth):
    """Two alternating passes of per-phase and trend LOESS smoothing."""
    L = x.shape[0]
    if L < 2 * period:
        raise ValueError(
            f"window too short for stl: need length >= 2*period, got L={L}, period={period}"
        )
    trend = np.zeros(L)
    seasonal = np.zeros(L)
    for _ in range(2):
        detrended = x - trend
        for p in range(period):
            seasonal[p::period] = loess_smooth(detrended[p::period], bandwidth)
        seasonal -= seasonal.mean()
        trend = loess_smooth(x - seasonal, bandwidth)
    return trend, seasonal


def loess_smooth(y, frac):
    """Local linear regression with tricube weights over evenly spaced points.

    `frac` is the neighborhood size as a fraction of the series length
    (at least 5 points are used when available).
    """
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[0]
    if n <= 2:
        return y.copy()
    q = int(np.ceil(frac * n))
    q = max(5, q)
    q = min(q, n)
    half = (q - 1) // 2
    starts = np.clip(np.arange(n) - half, 0, n - q)
    windows = np.lib.stride_tricks.sliding_window_view(y, q)[starts]  # [n, q]
    idx = starts[:, None] + np.arange(q)[None, :]
    d = (idx - np.arange(n)[:, None]).astype(np.float64)
    dmax = np.abs(d).max(axis=1, keepdims=True)
    u = np.abs(d) / np.maximum(dmax, 1.0)
    w = np.clip(1.0 - u**3, 0.0, None) ** 3

    s0 = w.sum(axis=1)
    s1 = (w * d).sum(axis=1)
    s2 = (w * d * d).sum(axis=1)
    t0 = (w * windows).sum(axis=1)
    t1 = (w * d * windows).sum(axis=1)
    denom = s0 * s2 - s1 * s1
    # near-singular local fits (all weight on one point) fall back to the
    # weighted mean
    safe = denom > 1e-10 * (s0 * s2 + 1e-300)
    linear = np.where(safe, (s2 * t0 - s1 * t1) / np.where(safe, denom, 1.0), 0.0)
    return np.where(safe, linear, t0 / s0)
