"""Reconstruction metrics and trapezoidal average gain over a loss-rate range."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

PSNR_CAP_DB = 200.0
DEFAULT_PEAK = 255.0
DEFAULT_LOSS_GRID = (0.05, 0.10, 0.15, 0.20, 0.25, 0.30)


@dataclass(frozen=True)
class MetricCurve:
    probabilities: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        p = tuple(float(x) for x in self.probabilities)
        v = tuple(float(x) for x in self.values)
        if len(p) != len(v):
            raise ValueError("probabilities and values differ in length")
        if len(p) < 2:
            raise ValueError("a metric curve needs at least two points")
        if any(b <= a for a, b in zip(p, p[1:])):
            raise ValueError("probabilities must be strictly increasing")
        if p[0] < 0.0 or p[-1] > 1.0:
            raise ValueError("probabilities must lie in [0, 1]")
        object.__setattr__(self, "probabilities", p)
        object.__setattr__(self, "values", v)


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def mse(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.mean((a - b) ** 2))


def _psnr_from_mse(err: float, peak: float) -> float:
    if peak <= 0:
        raise ValueError("peak must be positive")
    if err == 0.0:
        return PSNR_CAP_DB
    return float(min(PSNR_CAP_DB, 10.0 * np.log10(peak * peak / err)))


def psnr(a, b, peak: float = DEFAULT_PEAK) -> float:
    """PSNR in dB; identical inputs return ``PSNR_CAP_DB``."""
    return _psnr_from_mse(mse(a, b), peak)


def masked_psnr(a, b, mask, peak: float = DEFAULT_PEAK) -> float:
    """PSNR over the pixels where ``mask`` is True."""
    a, b = _pair(a, b)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != a.shape:
        raise ValueError(f"mask shape {mask.shape} differs from image shape {a.shape}")
    if not mask.any():
        raise ValueError("mask selects no pixels")
    diff = a[mask] - b[mask]
    return _psnr_from_mse(float(np.mean(diff * diff)), peak)


def average_gain(method: MetricCurve, baseline: MetricCurve) -> float:
    """Trapezoidal area between two curves divided by the probability range."""
    if method.probabilities != baseline.probabilities:
        raise ValueError("curves are sampled on different probability grids")
    p = np.asarray(method.probabilities)
    diff = np.asarray(method.values) - np.asarray(baseline.values)
    return float(trapezoid(diff, p) / (p[-1] - p[0]))
