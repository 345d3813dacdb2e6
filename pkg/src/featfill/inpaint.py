"""PDE-style inpainting of masked grids.

Three engines share the :class:`MaskedImage` input (mask True = unknown):

* :func:`inpaint_telea` -- fast-marching fill: unknown pixels are visited in
  order of their distance ``T`` from the known region and replaced by a
  positively weighted average of known/already-filled pixels in a disk.
* :func:`inpaint_ns` -- isophote transport: the Laplacian is propagated along
  level lines, interleaved with smoothing, starting from a row-copy fill.
* :func:`inpaint_rows_nearest` -- copy the nearest fully known row.

All engines leave known pixels bit-identical and never leave the range of the
known values.  Inner loops are compiled with numba.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numba
import numpy as np

KNOWN = 0
BAND = 1
INSIDE = 2

_DIRECTION_FLOOR = 0.01


@dataclass(frozen=True, eq=False)
class MaskedImage:
    grid: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=np.float64)
        mask = np.asarray(self.mask, dtype=bool)
        if grid.ndim != 2:
            raise ValueError("inpainting works on 2-D grids")
        if grid.shape != mask.shape:
            raise ValueError(f"grid {grid.shape} and mask {mask.shape} differ in shape")
        if not np.all(np.isfinite(grid[~mask])):
            raise ValueError("known pixels must be finite")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "mask", mask)


@dataclass(frozen=True)
class TeleaParams:
    radius: int = 3

    def __post_init__(self):
        if int(self.radius) != self.radius or self.radius < 1:
            raise ValueError("Telea radius must be an integer >= 1")


@dataclass(frozen=True)
class NSParams:
    iterations: int = 300
    step_size: float = 0.1
    diffusion_every: int = 15
    diffusion_steps: int = 2

    def __post_init__(self):
        if min(self.iterations, self.diffusion_every, self.diffusion_steps) < 1 or self.step_size <= 0:
            raise ValueError("all Navier-Stokes parameters must be positive")


# --- fast marching -----------------------------------------------------------

@numba.njit(cache=True)
def _solve_pair(t1, known1, t2, known2):
    # upwind quadratic |grad T| = 1 from one vertical and one horizontal neighbour
    if known1 and known2:
        d = 2.0 - (t1 - t2) * (t1 - t2)
        if d > 0.0:
            r = np.sqrt(d)
            s = 0.5 * (t1 + t2 - r)
            if s >= t1 and s >= t2:
                return s
            s += r
            if s >= t1 and s >= t2:
                return s
        return 1.0 + min(t1, t2)
    if known1:
        return 1.0 + t1
    if known2:
        return 1.0 + t2
    return np.inf


@numba.njit(cache=True)
def _neighbour(T, flag, i, j):
    h, w = T.shape
    if 0 <= i < h and 0 <= j < w and flag[i, j] == KNOWN:
        return T[i, j], True
    return np.inf, False


@numba.njit(cache=True)
def _update_t(T, flag, i, j):
    best = np.inf
    for di in (-1, 1):
        ti, ki = _neighbour(T, flag, i + di, j)
        for dj in (-1, 1):
            tj, kj = _neighbour(T, flag, i, j + dj)
            s = _solve_pair(ti, ki, tj, kj)
            if s < best:
                best = s
    return best


@numba.njit(cache=True)
def _fmm_kernel(mask):
    h, w = mask.shape
    T = np.zeros((h, w))
    flag = np.zeros((h, w), dtype=np.int8)
    heap = [(0.0, 0)]
    heap.pop()
    for i in range(h):
        for j in range(w):
            if mask[i, j]:
                T[i, j] = np.inf
                flag[i, j] = INSIDE
    for i in range(h):
        for j in range(w):
            if flag[i, j] != KNOWN:
                continue
            border = False
            if i > 0 and mask[i - 1, j]:
                border = True
            elif i + 1 < h and mask[i + 1, j]:
                border = True
            elif j > 0 and mask[i, j - 1]:
                border = True
            elif j + 1 < w and mask[i, j + 1]:
                border = True
            if border:
                flag[i, j] = BAND
                heapq.heappush(heap, (0.0, i * w + j))
    order = np.empty(h * w, dtype=np.int64)
    n = 0
    while len(heap) > 0:
        t, idx = heapq.heappop(heap)
        i = idx // w
        j = idx % w
        if flag[i, j] == KNOWN or t > T[i, j]:
            continue
        flag[i, j] = KNOWN
        if mask[i, j]:
            order[n] = idx
            n += 1
        for k in range(4):
            ni = i + (-1, 1, 0, 0)[k]
            nj = j + (0, 0, -1, 1)[k]
            if ni < 0 or ni >= h or nj < 0 or nj >= w or flag[ni, nj] == KNOWN:
                continue
            tn = _update_t(T, flag, ni, nj)
            if tn < T[ni, nj]:
                T[ni, nj] = tn
                flag[ni, nj] = BAND
                heapq.heappush(heap, (tn, ni * w + nj))
    return T, order[:n]


def fmm_distance(mask) -> tuple[np.ndarray, np.ndarray]:
    """Fast-marching arrival time from the known region into the mask.

    Returns ``(T, order)``: ``T`` is 0 on known pixels and solves the upwind
    Eikonal equation on unknown ones; ``order`` holds the ``(row, col)`` of
    every reachable unknown pixel by nondecreasing ``T`` (ties by flat index).
    """
    mask = np.ascontiguousarray(mask, dtype=np.bool_)
    if mask.ndim != 2:
        raise ValueError("mask must be 2-D")
    T, flat = _fmm_kernel(mask)
    order = np.stack(np.divmod(flat, mask.shape[1]), axis=1) if flat.size else np.empty((0, 2), np.int64)
    return T, order


# --- Telea --------------------------------------------------------------------

@numba.njit(cache=True)
def _telea_kernel(image, mask, T, grad_y, grad_x, order, radius):
    h, w = image.shape
    out = image.copy()
    done = ~mask
    r2 = radius * radius
    for n in range(order.shape[0]):
        i = order[n, 0]
        j = order[n, 1]
        gy = grad_y[i, j]
        gx = grad_x[i, j]
        gnorm = np.sqrt(gy * gy + gx * gx)
        if gnorm > 0.0:
            gy /= gnorm
            gx /= gnorm
        num = 0.0
        den = 0.0
        ref = np.nan
        vmin = np.inf
        vmax = -np.inf
        for di in range(-radius, radius + 1):
            qi = i + di
            if qi < 0 or qi >= h:
                continue
            for dj in range(-radius, radius + 1):
                qj = j + dj
                if qj < 0 or qj >= w or not done[qi, qj]:
                    continue
                d2 = di * di + dj * dj
                if d2 == 0 or d2 > r2:
                    continue
                dist = np.sqrt(d2)
                # unit vector from the contributing pixel towards the target
                direction = (-di * gy - dj * gx) / dist
                if direction < _DIRECTION_FLOOR:
                    direction = _DIRECTION_FLOOR
                level = 1.0 / (1.0 + abs(T[i, j] - T[qi, qj]))
                wgt = direction * level / d2
                v = out[qi, qj]
                if np.isnan(ref):
                    ref = v
                # centred on one contributor so that equal inputs give exactly that value
                num += wgt * (v - ref)
                den += wgt
                vmin = min(vmin, v)
                vmax = max(vmax, v)
        out[i, j] = min(max(ref + num / den, vmin), vmax)
        done[i, j] = True
    return out


def _gradient(T):
    # central differences inside, one-sided at the borders
    if min(T.shape) < 2:
        gy = np.gradient(T, axis=0) if T.shape[0] > 1 else np.zeros_like(T)
        gx = np.gradient(T, axis=1) if T.shape[1] > 1 else np.zeros_like(T)
        return gy, gx
    gy, gx = np.gradient(T)
    return gy, gx


def inpaint_telea(image: MaskedImage, params: TeleaParams = TeleaParams()) -> np.ndarray:
    """Fast-marching weighted-average fill.

    Weight of a contributing pixel ``q`` for target ``p``: direction factor
    ``max(u . n, 0.01)`` with ``u`` the unit vector from ``q`` to ``p`` and
    ``n`` the unit gradient of ``T``; distance factor ``1 / |p - q|**2``;
    level factor ``1 / (1 + |T(p) - T(q)|)``.  Every weight is positive, so
    each filled value is a convex combination of its contributors.
    """
    mask = image.mask
    if not mask.any():
        return image.grid.copy()
    if mask.all():
        raise ValueError("image has no known pixels to inpaint from")
    T, order = fmm_distance(mask)
    gy, gx = _gradient(T)
    src = np.where(mask, 0.0, image.grid)
    return _telea_kernel(src, mask, T, gy, gx, order, int(params.radius))


# --- nearest rows ---------------------------------------------------------------

def _nearest_known_rows(mask) -> np.ndarray:
    """For every row, the index of the nearest fully known row (ties go up)."""
    known = np.flatnonzero(~mask.any(axis=1))
    if known.size == 0:
        raise ValueError("no fully known row to copy from")
    rows = np.arange(mask.shape[0])
    pos = np.searchsorted(known, rows)
    above = known[np.clip(pos - 1, 0, known.size - 1)]
    below = known[np.clip(pos, 0, known.size - 1)]
    d_above = np.where(above <= rows, rows - above, np.iinfo(np.int64).max)
    d_below = np.where(below >= rows, below - rows, np.iinfo(np.int64).max)
    return np.where(d_above <= d_below, above, below)


def inpaint_rows_nearest(image: MaskedImage) -> np.ndarray:
    """Fill each unknown pixel from the same column of the nearest fully known row."""
    out = image.grid.copy()
    mask = image.mask
    if not mask.any():
        return out
    src_rows = _nearest_known_rows(mask)
    rr, cc = np.nonzero(mask)
    out[rr, cc] = image.grid[src_rows[rr], cc]
    return out


# --- Navier-Stokes style transport -----------------------------------------------

@numba.njit(cache=True)
def _laplacian_at(I, i, j):
    h, w = I.shape
    c = I[i, j]
    up = I[i - 1, j] if i > 0 else c
    dn = I[i + 1, j] if i + 1 < h else c
    lf = I[i, j - 1] if j > 0 else c
    rt = I[i, j + 1] if j + 1 < w else c
    return up + dn + lf + rt - 4.0 * c


@numba.njit(cache=True)
def _diff(A, i, j, axis):
    # central difference, one-sided at the border
    h, w = A.shape
    if axis == 0:
        if h < 2:
            return 0.0
        if i == 0:
            return A[1, j] - A[0, j]
        if i == h - 1:
            return A[h - 1, j] - A[h - 2, j]
        return 0.5 * (A[i + 1, j] - A[i - 1, j])
    if w < 2:
        return 0.0
    if j == 0:
        return A[i, 1] - A[i, 0]
    if j == w - 1:
        return A[i, w - 1] - A[i, w - 2]
    return 0.5 * (A[i, j + 1] - A[i, j - 1])


@numba.njit(cache=True)
def _ns_kernel(I, rows, cols, halo_rows, halo_cols, lo, hi,
               iterations, step, diffusion_every, diffusion_steps):
    n = rows.shape[0]
    L = np.zeros_like(I)
    upd = np.zeros(n)
    for it in range(iterations):
        for k in range(halo_rows.shape[0]):
            L[halo_rows[k], halo_cols[k]] = _laplacian_at(I, halo_rows[k], halo_cols[k])
        for k in range(n):
            i = rows[k]
            j = cols[k]
            iy = _diff(I, i, j, 0)
            ix = _diff(I, i, j, 1)
            g = np.sqrt(ix * ix + iy * iy)
            if g < 1e-12:
                upd[k] = 0.0
                continue
            # isophote direction (-I_y, I_x), normalised
            upd[k] = step * (_diff(L, i, j, 1) * (-iy) + _diff(L, i, j, 0) * ix) / g
        for k in range(n):
            v = I[rows[k], cols[k]] + upd[k]
            I[rows[k], cols[k]] = min(max(v, lo), hi)
        if (it + 1) % diffusion_every == 0:
            for _ in range(diffusion_steps):
                for k in range(n):
                    upd[k] = 0.25 * _laplacian_at(I, rows[k], cols[k])
                for k in range(n):
                    v = I[rows[k], cols[k]] + upd[k]
                    I[rows[k], cols[k]] = min(max(v, lo), hi)
    return I


def inpaint_ns(image: MaskedImage, params: NSParams = NSParams()) -> np.ndarray:
    """Isophote-transport fill in the spirit of Bertalmio et al.

    The unknown region starts from :func:`inpaint_rows_nearest` (or the mean of
    the known values when no row is fully known).  Each step moves
    ``grad(Laplacian(I))`` along the normalised isophote direction; every
    ``diffusion_every`` steps, ``diffusion_steps`` explicit heat steps smooth
    the masked pixels.  Known pixels are never written; updates are clamped to
    the known range.
    """
    mask = image.mask
    if not mask.any():
        return image.grid.copy()
    if mask.all():
        raise ValueError("image has no known pixels to inpaint from")
    known_vals = image.grid[~mask]
    lo, hi = float(known_vals.min()), float(known_vals.max())
    try:
        work = inpaint_rows_nearest(image)
    except ValueError:
        work = np.where(mask, known_vals.mean(), image.grid)
    work = np.clip(work, lo, hi)
    work[~mask] = image.grid[~mask]
    rows, cols = np.nonzero(mask)
    halo = mask.copy()
    halo[1:] |= mask[:-1]
    halo[:-1] |= mask[1:]
    halo[:, 1:] |= mask[:, :-1]
    halo[:, :-1] |= mask[:, 1:]
    hr, hc = np.nonzero(halo)
    out = _ns_kernel(np.ascontiguousarray(work), rows, cols, hr, hc, lo, hi,
                     int(params.iterations), float(params.step_size),
                     int(params.diffusion_every), int(params.diffusion_steps))
    return out
