"""Numpy versions of the compiled kernels, used when the extension is unavailable.

The arithmetic mirrors the compiled loops operation by operation, so both
backends give bit-identical results.
"""
import numpy as np


def _gather(v, i, j, periodic):
    nx, ny = v.shape
    if periodic:
        return v[i % nx, j % ny]
    inside = (i >= 0) & (j >= 0) & (i < nx) & (j < ny)
    return np.where(inside, v[np.clip(i, 0, nx - 1), np.clip(j, 0, ny - 1)], 0.0)


def bilinear(values, px, py, periodic=True):
    v = np.ascontiguousarray(values, dtype=np.float64)
    px = np.asarray(px, dtype=np.float64)
    py = np.asarray(py, dtype=np.float64)
    fx, fy = np.floor(px), np.floor(py)
    a, b = px - fx, py - fy
    i, j = fx.astype(np.int64), fy.astype(np.int64)
    v00 = _gather(v, i, j, periodic)
    v01 = _gather(v, i, j + 1, periodic)
    v10 = _gather(v, i + 1, j, periodic)
    v11 = _gather(v, i + 1, j + 1, periodic)
    return (1.0 - a) * ((1.0 - b) * v00 + b * v01) + a * ((1.0 - b) * v10 + b * v11)


def rk4_feet(v_end, v_mid, v_start, dt, periodic=True):
    nx, ny = v_end[0].shape
    x, y = np.meshgrid(np.arange(nx, dtype=np.float64), np.arange(ny, dtype=np.float64), indexing="ij")
    h2 = 0.5 * dt
    k1x, k1y = v_end[0], v_end[1]
    k2x = bilinear(v_mid[0], x - h2 * k1x, y - h2 * k1y, periodic)
    k2y = bilinear(v_mid[1], x - h2 * k1x, y - h2 * k1y, periodic)
    k3x = bilinear(v_mid[0], x - h2 * k2x, y - h2 * k2y, periodic)
    k3y = bilinear(v_mid[1], x - h2 * k2x, y - h2 * k2y, periodic)
    k4x = bilinear(v_start[0], x - dt * k3x, y - dt * k3y, periodic)
    k4y = bilinear(v_start[1], x - dt * k3x, y - dt * k3y, periodic)
    fx = x - dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
    fy = y - dt / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
    return fx, fy
