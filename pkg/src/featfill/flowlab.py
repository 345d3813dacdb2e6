"""Numerical checks that surface flow survives common CNN operations.

Test sequences are exact integer circular translations of a periodic profile,
so ``I(x, y, t) = I0(x - t*v_x, y - t*v_y)`` holds with no discretisation
error.  Two residuals of ``I_x v_x + I_y v_y + I_t = 0`` are available:

``difference``
    central spatial differences of the two-frame average (periodic) plus a
    forward temporal difference.  Linear in the flow, but carries the usual
    truncation error on curved profiles.
``transport``
    ``I(t+1) - shift(I(t), v)``, the exact discrete characteristic form for
    integer flows.  Zero to machine precision on translation sequences, so
    invariance can be gated at round-off level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.ndimage import convolve, gaussian_filter, maximum_filter

PROFILES = ("gaussian_bump", "stripes", "smoothed_noise")
ACTIVATIONS = {
    "relu": lambda x: np.maximum(x, 0.0),
    "sigmoid": lambda x: 1.0 / (1.0 + np.exp(-x)),
    "tanh": np.tanh,
}
SCHEMES = ("transport", "difference")


@dataclass(frozen=True, eq=False)
class FrameSequence:
    frames: np.ndarray

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 3:
            raise ValueError("frames must be stacked as (t, rows, cols)")
        if frames.shape[0] < 2:
            raise ValueError("a frame sequence needs at least two frames")
        if not np.all(np.isfinite(frames)):
            raise ValueError("frames contain non-finite values")
        object.__setattr__(self, "frames", frames)

    def __len__(self):
        return self.frames.shape[0]


@dataclass(frozen=True, eq=False)
class FlowField:
    """Flow in pixels per frame; ``vx`` along columns, ``vy`` along rows."""

    vx: Union[float, np.ndarray]
    vy: Union[float, np.ndarray]

    @property
    def is_constant(self) -> bool:
        return np.ndim(self.vx) == 0 and np.ndim(self.vy) == 0

    def as_tuple(self) -> tuple[float, float]:
        if not self.is_constant:
            raise ValueError("flow is spatially varying")
        return float(self.vx), float(self.vy)

    def label(self) -> str:
        if not self.is_constant:
            return "field"
        vx, vy = self.as_tuple()
        return f"({vx:g};{vy:g})"


@dataclass(frozen=True, eq=False)
class Conv:
    kernel: np.ndarray
    label: str = "conv"

    @property
    def name(self) -> str:
        return self.label


@dataclass(frozen=True)
class Pointwise:
    activation: str

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def name(self) -> str:
        return self.activation


@dataclass(frozen=True)
class LocalMax:
    h: int

    def __post_init__(self):
        if self.h < 1:
            raise ValueError("LocalMax half-window must be >= 1")

    @property
    def name(self) -> str:
        return f"localmax_h{self.h}"


@dataclass(frozen=True)
class Downscale:
    sx: int
    sy: int

    def __post_init__(self):
        if self.sx < 1 or self.sy < 1:
            raise ValueError("downscale factors must be >= 1")

    @property
    def name(self) -> str:
        return f"downscale_{self.sx}x{self.sy}"


Transform = Union[Conv, Pointwise, LocalMax, Downscale]


def make_profile(profile: str, dims: tuple[int, int], seed: int = 0) -> np.ndarray:
    rows, cols = dims
    yy, xx = np.mgrid[0:rows, 0:cols].astype(np.float64)
    if profile == "gaussian_bump":
        dy = np.minimum(np.abs(yy - rows / 2), rows - np.abs(yy - rows / 2))
        dx = np.minimum(np.abs(xx - cols / 2), cols - np.abs(xx - cols / 2))
        sigma = min(rows, cols) / 8
        return np.exp(-(dx * dx + dy * dy) / (2 * sigma * sigma))
    if profile == "stripes":
        return np.sin(2 * np.pi * (3 * xx / cols + 2 * yy / rows))
    if profile == "smoothed_noise":
        noise = np.random.default_rng(seed).standard_normal(dims)
        field = gaussian_filter(noise, 3.0, mode="wrap")
        return field / field.std()
    raise ValueError(f"unknown profile {profile!r}")


def _integer_flow(flow: FlowField) -> tuple[int, int]:
    vx, vy = flow.as_tuple()
    if vx != int(vx) or vy != int(vy):
        raise ValueError(f"flow {flow.label()} is not integer; subpixel translation is not supported")
    return int(vx), int(vy)


def synth_translating(profile: str, flow: FlowField, n_frames: int, dims: tuple[int, int],
                      seed: int = 0) -> FrameSequence:
    """Frame ``t`` is frame 0 circularly shifted by ``t * v``."""
    vx, vy = _integer_flow(flow)
    base = make_profile(profile, dims, seed)
    return FrameSequence(np.stack([np.roll(base, (t * vy, t * vx), axis=(0, 1))
                                   for t in range(n_frames)]))


def _central(a, axis):
    return 0.5 * (np.roll(a, -1, axis=axis) - np.roll(a, 1, axis=axis))


def flow_residual(seq: FrameSequence, flow: FlowField, scheme: str = "difference") -> np.ndarray:
    """Residual of the surface-flow equation for each consecutive frame pair.

    Returns an array of shape ``(len(seq) - 1, rows, cols)``.
    """
    frames = seq.frames
    if scheme == "transport":
        vx, vy = _integer_flow(flow)
        return frames[1:] - np.roll(frames[:-1], (vy, vx), axis=(1, 2))
    if scheme != "difference":
        raise ValueError(f"unknown residual scheme {scheme!r}")
    vx, vy = flow.vx, flow.vy
    if not flow.is_constant:
        vx, vy = np.asarray(vx), np.asarray(vy)
        if vx.shape != frames.shape[1:] or vy.shape != frames.shape[1:]:
            raise ValueError("flow field dimensions do not match the frames")
    avg = 0.5 * (frames[1:] + frames[:-1])
    return _central(avg, 2) * vx + _central(avg, 1) * vy + (frames[1:] - frames[:-1])


def gradient_scale(seq: FrameSequence) -> float:
    f = seq.frames
    return float(np.mean(np.hypot(_central(f, 2), _central(f, 1))))


def apply_transform(seq: FrameSequence, transform: Transform) -> FrameSequence:
    frames = seq.frames
    if isinstance(transform, Conv):
        kernel = np.asarray(transform.kernel, dtype=np.float64)
        if kernel.ndim != 2 or not np.all(np.isfinite(kernel)):
            raise ValueError("convolution kernel must be a finite 2-D array")
        if kernel.shape[0] > frames.shape[1] or kernel.shape[1] > frames.shape[2]:
            raise ValueError("convolution kernel is larger than the frame")
        return FrameSequence(np.stack([convolve(f, kernel, mode="wrap") for f in frames]))
    if isinstance(transform, Pointwise):
        return FrameSequence(ACTIVATIONS[transform.activation](frames))
    if isinstance(transform, LocalMax):
        size = 2 * transform.h + 1
        return FrameSequence(np.stack([maximum_filter(f, size=size, mode="wrap") for f in frames]))
    if isinstance(transform, Downscale):
        return FrameSequence(frames[:, ::transform.sy, ::transform.sx])
    raise TypeError(f"unsupported transform {transform!r}")


def predicted_flow(transform: Transform, flow: FlowField) -> FlowField:
    """Flow expected after ``transform``: unchanged, or divided by the scale factors."""
    if isinstance(transform, Downscale):
        if flow.is_constant:
            vx, vy = flow.as_tuple()
            return FlowField(vx / transform.sx, vy / transform.sy)
        vx = np.asarray(flow.vx)[::transform.sy, ::transform.sx] / transform.sx
        vy = np.asarray(flow.vy)[::transform.sy, ::transform.sx] / transform.sy
        return FlowField(vx, vy)
    return flow


@dataclass(frozen=True)
class ReportRow:
    transform: str
    signal: str
    flow: str
    max_residual: float
    rms_residual: float
    passed: bool
    # residual of a downscaled sequence under the unscaled flow (Downscale only)
    control_max_residual: float = math.nan


def _normalized(seq, flow, scheme):
    r = flow_residual(seq, flow, scheme) / (gradient_scale(seq) + 1e-12)
    return float(np.max(np.abs(r))), float(np.sqrt(np.mean(r * r)))


def invariance_report(seq: FrameSequence, flow: FlowField, transforms, tolerance: float = 1e-6,
                      signal: str = "signal", scheme: str = "transport",
                      control_ratio: float = 100.0) -> list[ReportRow]:
    """Apply each transform and test the residual under its predicted flow.

    A row passes when the normalised max residual is below ``tolerance``.  For
    Downscale rows the residual under the original flow must additionally be at
    least ``control_ratio`` times larger, provided the flow is nonzero and the
    transformed signal is not constant.
    """
    rows = []
    for transform in transforms:
        out = apply_transform(seq, transform)
        expected = predicted_flow(transform, flow)
        max_r, rms_r = _normalized(out, expected, scheme)
        passed = max_r < tolerance
        control = math.nan
        if isinstance(transform, Downscale):
            control, _ = _normalized(out, flow, scheme) if _scheme_accepts(flow, scheme) else (math.nan, 0)
            moving = flow.is_constant and flow.as_tuple() != (0.0, 0.0)
            if moving and np.ptp(out.frames) > 0:
                passed = passed and control > tolerance and control >= control_ratio * max_r
        rows.append(ReportRow(transform.name, signal, flow.label(), max_r, rms_r, bool(passed), control))
    return rows


def _scheme_accepts(flow, scheme):
    if scheme != "transport":
        return True
    vx, vy = flow.as_tuple()
    return vx == int(vx) and vy == int(vy)


# --- the standard verification matrix ---------------------------------------------

STANDARD_FLOWS = ((1, 0), (0, 1), (1, 1), (2, 0))
STANDARD_SIGNALS = (("gaussian_bump", 0), ("stripes", 0),
                    ("smoothed_noise", 0), ("smoothed_noise", 1), ("smoothed_noise", 2))


def standard_transforms(seed: int = 7) -> list[Transform]:
    rng = np.random.default_rng(seed)
    return [
        Conv(np.full((3, 3), 1.0 / 9.0), "conv3x3_box"),
        Conv(rng.standard_normal((3, 3)), "conv3x3_random"),
        Pointwise("relu"),
        Pointwise("sigmoid"),
        Pointwise("tanh"),
        LocalMax(1),
        Downscale(2, 2),
    ]


def compatible(transform: Transform, flow: tuple[int, int]) -> bool:
    if isinstance(transform, Downscale):
        return flow[0] % transform.sx == 0 and flow[1] % transform.sy == 0
    return True


def standard_suite(tolerance: float = 1e-6, scheme: str = "transport", dims=(64, 64),
                   n_frames: int = 4) -> list[ReportRow]:
    """Every signal x transform x compatible flow of the verification matrix."""
    rows = []
    transforms = standard_transforms()
    for profile, seed in STANDARD_SIGNALS:
        label = profile if profile != "smoothed_noise" else f"{profile}_s{seed}"
        for v in STANDARD_FLOWS:
            flow = FlowField(*v)
            seq = synth_translating(profile, flow, n_frames, dims, seed)
            chosen = [t for t in transforms if compatible(t, v)]
            rows.extend(invariance_report(seq, flow, chosen, tolerance, label, scheme))
    return rows
