import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from featfill.metrics import (PSNR_CAP_DB, MetricCurve, average_gain, masked_psnr, mse, psnr)

GRID = (0.05, 0.10, 0.15, 0.20, 0.25, 0.30)


def test_identical_grids_hit_the_cap(rng):
    a = rng.random((8, 8))
    assert mse(a, a) == 0.0
    assert psnr(a, a) == PSNR_CAP_DB


def test_constant_offset_of_one():
    a = np.zeros((4, 4))
    assert mse(a, a + 1) == 1.0
    assert psnr(a, a + 1, 255) == pytest.approx(20 * math.log10(255))
    assert psnr(a, a + 1, 255) == pytest.approx(48.13, abs=5e-3)


def test_mse_symmetric(rng):
    a, b = rng.random((5, 5)), rng.random((5, 5))
    assert mse(a, b) == mse(b, a)


def test_shape_mismatch():
    with pytest.raises(ValueError):
        mse(np.zeros(3), np.zeros(4))


def test_masked_psnr_single_pixel_and_full_mask(rng):
    a, b = rng.random((6, 6)), rng.random((6, 6))
    one = np.zeros((6, 6), bool)
    one[2, 3] = True
    c = b.copy()
    c[2, 3] = a[2, 3]
    assert masked_psnr(a, c, one) == PSNR_CAP_DB
    assert masked_psnr(a, b, np.ones((6, 6), bool)) == psnr(a, b)
    with pytest.raises(ValueError):
        masked_psnr(a, b, np.zeros((6, 6), bool))


def test_masked_psnr_ignores_pixels_outside_band(rng):
    a, b = rng.random((32, 16)) * 255, rng.random((32, 16)) * 255
    band = np.zeros((32, 16), bool)
    band[8:16] = True
    before = masked_psnr(a, b, band)
    b2 = b.copy()
    b2[~band] += rng.standard_normal((~band).sum()) * 50
    assert masked_psnr(a, b2, band) == before


def test_average_gain_examples():
    base = MetricCurve(GRID, (0.5, 0.4, 0.3, 0.25, 0.2, 0.1))
    shifted = MetricCurve(GRID, tuple(v + 0.38 for v in base.values))
    assert average_gain(shifted, base) == pytest.approx(0.38, abs=1e-12)
    assert average_gain(base, base) == 0.0
    # difference rises linearly from 0 at p=0.05 to 0.3 at p=0.30
    linear = MetricCurve(GRID, tuple(v + 1.2 * (p - 0.05) for p, v in zip(GRID, base.values)))
    assert average_gain(linear, base) == pytest.approx(0.15, abs=1e-12)


def test_average_gain_rejects_mismatched_grids():
    a = MetricCurve((0.1, 0.2), (1, 2))
    b = MetricCurve((0.1, 0.3), (1, 2))
    with pytest.raises(ValueError):
        average_gain(a, b)


def test_metric_curve_validation():
    with pytest.raises(ValueError):
        MetricCurve((0.1,), (1.0,))
    with pytest.raises(ValueError):
        MetricCurve((0.2, 0.1), (1.0, 2.0))
    with pytest.raises(ValueError):
        MetricCurve((0.5, 1.5), (1.0, 2.0))


offsets = st.floats(-100, 100, allow_nan=False)
points = st.lists(st.floats(-50, 50, allow_nan=False), min_size=6, max_size=6)


@given(points, points, points, offsets)
def test_average_gain_linear_and_offset_invariant(m, b, common, c):
    base = MetricCurve(GRID, b)
    method = MetricCurve(GRID, m)
    g = average_gain(method, base)
    moved = average_gain(MetricCurve(GRID, [x + y for x, y in zip(m, common)]),
                         MetricCurve(GRID, [x + y for x, y in zip(b, common)]))
    assert moved == pytest.approx(g, abs=1e-9)
    assert average_gain(MetricCurve(GRID, [x + c for x in b]), base) == pytest.approx(c, abs=1e-9)


@given(st.lists(st.floats(1e-6, 1e4), min_size=2, max_size=2, unique=True))
def test_psnr_monotone_in_mse(errs):
    lo, hi = sorted(errs)
    z = np.zeros(4)
    assert psnr(z, z + math.sqrt(lo)) >= psnr(z, z + math.sqrt(hi))
