"""Corrupt -> recover -> score, shared by the CLI subcommands."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import inpaint, lowrank
from .metrics import PSNR_CAP_DB, masked_psnr, psnr
from .packets import ChannelConfig, drop, packetize, reassemble
from .tensor_core import (FeatureTensor, Mosaic, QuantParams, dequantize, from_gray, quantize,
                          tile, tile_layout, to_gray, untile, untile_array)

METHODS = ("none", "nearest_rows", "telea", "navier_stokes", "silrtc_50", "silrtc_250")


@dataclass(frozen=True, eq=False)
class Corrupted:
    """What the receiver holds after the lossy channel."""

    data: np.ndarray        # holed byte mosaic, zero on lost rows
    mask: np.ndarray        # True on lost rows
    params: QuantParams
    layout: Mosaic          # geometry only; grid holds the holed bytes

    @property
    def lost_fraction(self) -> float:
        return float(self.mask.mean())


def layout_for(channels: int, height: int, width: int, grid: np.ndarray) -> Mosaic:
    rows, cols = tile_layout(channels)
    return Mosaic(grid, rows, cols, height, width, channels)


def layout_from_mosaic(grid: np.ndarray, channels: int) -> Mosaic:
    rows, cols = tile_layout(channels)
    h, w = grid.shape
    if h % rows or w % cols:
        raise ValueError(f"{h}x{w} mosaic cannot hold {channels} channels in a {rows}x{cols} layout")
    return Mosaic(grid, rows, cols, h // rows, w // cols, channels)


def corrupt(tensor: FeatureTensor, p: float, seed: int, frame_id: int = 0) -> Corrupted:
    mosaic = tile(tensor)
    data, params = quantize(mosaic)
    packets = packetize(data, params, frame_id)
    survivors = drop(packets, ChannelConfig(p, seed))
    holed, mask, _ = reassemble(survivors, len(packets), data.shape)
    # the sender's params, so a frame with every packet lost still dequantizes
    return Corrupted(holed, mask, params, mosaic.with_grid(holed))


def ground_truth(tensor: FeatureTensor) -> FeatureTensor:
    """Quantize-then-dequantize reference, isolating concealment error."""
    mosaic = tile(tensor)
    data, params = quantize(mosaic)
    return untile(mosaic.with_grid(dequantize(data, params)))


def zero_filled(c: Corrupted) -> np.ndarray:
    real = dequantize(c.data, c.params)
    real[c.mask] = 0.0
    return real


def recover(c: Corrupted, method: str) -> FeatureTensor:
    """Conceal the lost rows of ``c`` with ``method``; returns real-valued features."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    real = zero_filled(c)
    if method == "none" or not c.mask.any():
        return untile(c.layout.with_grid(real))
    if c.mask.all():
        raise ValueError("every packet was lost; nothing to recover from")
    image = inpaint.MaskedImage(real, c.mask)
    if method == "nearest_rows":
        return untile(c.layout.with_grid(inpaint.inpaint_rows_nearest(image)))
    if method == "telea":
        return untile(c.layout.with_grid(inpaint.inpaint_telea(image)))
    if method == "navier_stokes":
        return untile(c.layout.with_grid(inpaint.inpaint_ns(image)))
    preset = lowrank.SILRTC_50 if method == "silrtc_50" else lowrank.SILRTC_250
    # thresholds are in gray levels, so complete on the 0..255 scale
    known = untile(c.layout.with_grid(real)).data
    omega = ~untile_array(c.mask, c.layout)
    completed, _ = lowrank.silrtc(to_gray(known, c.params), omega, preset)
    # the gray round trip is not bit-exact, so pin the known entries in real units
    return FeatureTensor(np.where(omega, known, from_gray(completed, c.params)))


def timed_recover(c: Corrupted, method: str) -> tuple[FeatureTensor, float]:
    start = time.perf_counter()
    out = recover(c, method)
    return out, (time.perf_counter() - start) * 1000.0


def score(recovered: FeatureTensor, truth: FeatureTensor, c: Corrupted) -> tuple[float, float]:
    """(masked PSNR, PSNR) in dB on the 8-bit gray scale; cap when nothing was lost."""
    a = to_gray(recovered.data, c.params)
    b = to_gray(truth.data, c.params)
    lost = untile_array(c.mask, c.layout)
    full = psnr(a, b)
    if not lost.any():
        return PSNR_CAP_DB, full
    return masked_psnr(a, b, lost), full
