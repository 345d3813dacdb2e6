"""Simple low-rank tensor completion (SiLRTC) for 3-way tensors.

Unfolding convention: ``unfold(X, m)`` moves axis ``m`` to the front and
flattens the remaining axes in C order, so column ``j`` of the mode-``m``
unfolding is the fibre whose remaining indices, read in increasing axis
order, have lexicographic rank ``j``.

SVDs use LAPACK's thin decomposition (``numpy.linalg.svd(full_matrices=False)``).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SiLRTCParams:
    alphas: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    taus: tuple[float, float, float] = (10.0, 10.0, 10.0)
    iterations: int = 250
    stop_tol: float = 0.0

    def __post_init__(self):
        if len(self.alphas) != 3 or len(self.taus) != 3:
            raise ValueError("SiLRTC needs one alpha and one tau per mode")
        if any(a < 0 for a in self.alphas) or abs(sum(self.alphas) - 1.0) > 1e-12:
            raise ValueError("alphas must be nonnegative and sum to 1")
        if any(t <= 0 for t in self.taus):
            raise ValueError("taus must be positive")
        if self.iterations < 1:
            raise ValueError("iterations must be positive")
        if self.stop_tol < 0:
            raise ValueError("stop_tol must be nonnegative")


SILRTC_50 = SiLRTCParams(iterations=50)
SILRTC_250 = SiLRTCParams(iterations=250)


@dataclass
class CompletionLog:
    relative_change: list[float] = field(default_factory=list)
    stopped_early: bool = False

    @property
    def iterations(self) -> int:
        return len(self.relative_change)


def svt(matrix, tau: float) -> np.ndarray:
    """Singular value thresholding: ``U diag(max(s - tau, 0)) V^T``."""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    a = np.asarray(matrix, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise ValueError("svt input contains non-finite values")
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    s = np.maximum(s - tau, 0.0)
    keep = s > 0
    if not keep.any():
        return np.zeros_like(a)
    return (u[:, keep] * s[keep]) @ vt[keep]


def unfold(tensor, mode: int) -> np.ndarray:
    tensor = np.asarray(tensor)
    if tensor.ndim != 3 or mode not in (0, 1, 2):
        raise ValueError("unfold expects a 3-way tensor and mode in {0, 1, 2}")
    return np.moveaxis(tensor, mode, 0).reshape(tensor.shape[mode], -1)


def fold(matrix, mode: int, dims) -> np.ndarray:
    dims = tuple(int(d) for d in dims)
    matrix = np.asarray(matrix)
    if len(dims) != 3 or mode not in (0, 1, 2):
        raise ValueError("fold expects three dims and mode in {0, 1, 2}")
    rest = tuple(d for k, d in enumerate(dims) if k != mode)
    if matrix.shape != (dims[mode], rest[0] * rest[1]):
        raise ValueError(f"matrix {matrix.shape} cannot fold into {dims} along mode {mode}")
    return np.moveaxis(matrix.reshape((dims[mode],) + rest), 0, mode)


def silrtc(tensor, omega, params: SiLRTCParams = SILRTC_250) -> tuple[np.ndarray, CompletionLog]:
    """Complete ``tensor`` on the entries where ``omega`` is False.

    Entries outside ``omega`` start from whatever ``tensor`` holds there
    (callers pass zeros).  Each iteration averages the three SVT-shrunk mode
    unfoldings with ``alphas`` and re-pins the observed entries.  Stops early
    once the relative change on unobserved entries falls below ``stop_tol``.
    """
    x = np.array(tensor, dtype=np.float64)
    omega = np.asarray(omega, dtype=bool)
    if x.ndim != 3 or omega.shape != x.shape:
        raise ValueError("tensor and observation set must be matching 3-way arrays")
    if not omega.any():
        raise ValueError("observation set is empty")
    if not np.all(np.isfinite(x[omega])):
        raise ValueError("observed entries must be finite")
    observed = x[omega].copy()
    missing = ~omega
    record = CompletionLog()
    if not missing.any():
        return x, record

    dims = x.shape
    for it in range(params.iterations):
        estimate = np.zeros(dims)
        for mode in range(3):
            if params.alphas[mode] == 0.0:
                continue
            estimate += params.alphas[mode] * fold(svt(unfold(x, mode), params.taus[mode]), mode, dims)
        prev = x[missing]
        nxt = estimate[missing]
        denom = np.linalg.norm(prev)
        change = float(np.linalg.norm(nxt - prev) / denom) if denom > 0 else float(np.linalg.norm(nxt))
        x[missing] = nxt
        x[omega] = observed
        record.relative_change.append(change)
        if change < params.stop_tol:
            record.stopped_early = True
            log.debug("silrtc converged after %d iterations (change %.3g)", it + 1, change)
            break
    return x, record
