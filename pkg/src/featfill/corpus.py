"""Seeded synthetic feature tensors standing in for real detector activations.

Each channel mixes smoothed Gaussian noise with a few Gaussian blobs and is
passed through a ReLU-like floor, which gives the sparse blob structure seen in
convolutional feature maps.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import gaussian_filter

from .tensor_core import FeatureTensor


def smooth_tensor(seed: int, channels: int = 16, size: int = 64, sigma: float = 4.0,
                  blobs: int = 3) -> FeatureTensor:
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    data = np.empty((channels, size, size))
    for k in range(channels):
        noise = gaussian_filter(rng.standard_normal((size, size)), sigma, mode="reflect")
        noise /= noise.std() + 1e-12
        field = 0.5 * noise
        for _ in range(blobs):
            cy, cx = rng.uniform(0, size, 2)
            width = rng.uniform(0.06, 0.2) * size
            amp = rng.uniform(0.5, 2.0)
            field += amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * width * width))
        data[k] = np.maximum(field, 0.0) * rng.uniform(0.5, 3.0)
    return FeatureTensor(data.astype(np.float32))


def smooth_corpus(count: int, seed: int = 0, **kwargs) -> list[FeatureTensor]:
    return [smooth_tensor(seed * 100003 + i, **kwargs) for i in range(count)]
