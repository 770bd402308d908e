# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops of the semi-Lagrangian solver.

All coordinates are index coordinates: sample ``i`` of a grid sits at ``i``.
Outside a non-periodic grid the sampled function is 0.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()


cdef inline double _at(const double[:, ::1] v, Py_ssize_t i, Py_ssize_t j,
                       Py_ssize_t nx, Py_ssize_t ny, bint periodic) nogil:
    if periodic:
        i = i % nx
        j = j % ny
        if i < 0:
            i += nx
        if j < 0:
            j += ny
        return v[i, j]
    if i < 0 or j < 0 or i >= nx or j >= ny:
        return 0.0
    return v[i, j]


cdef inline double _bilinear(const double[:, ::1] v, double px, double py,
                             Py_ssize_t nx, Py_ssize_t ny, bint periodic) nogil:
    cdef double fx = floor(px), fy = floor(py)
    cdef double a = px - fx, b = py - fy
    cdef Py_ssize_t i = <Py_ssize_t>fx, j = <Py_ssize_t>fy
    cdef double v00 = _at(v, i, j, nx, ny, periodic)
    cdef double v01 = _at(v, i, j + 1, nx, ny, periodic)
    cdef double v10 = _at(v, i + 1, j, nx, ny, periodic)
    cdef double v11 = _at(v, i + 1, j + 1, nx, ny, periodic)
    return (1.0 - a) * ((1.0 - b) * v00 + b * v01) + a * ((1.0 - b) * v10 + b * v11)


def bilinear(values, px, py, bint periodic=True):
    """Sample ``values`` at the index coordinates ``(px, py)``; output has the shape of ``px``."""
    cdef const double[:, ::1] v = np.ascontiguousarray(values, dtype=np.float64)
    shape = np.shape(px)
    cdef const double[::1] x = np.ascontiguousarray(px, dtype=np.float64).ravel()
    cdef const double[::1] y = np.ascontiguousarray(py, dtype=np.float64).ravel()
    cdef Py_ssize_t n = x.shape[0], k
    cdef Py_ssize_t nx = v.shape[0], ny = v.shape[1]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for k in range(n):
            o[k] = _bilinear(v, x[k], y[k], nx, ny, periodic)
    return out.reshape(shape)


def rk4_feet(v_end, v_mid, v_start, double dt, bint periodic=True):
    """Backward RK4 feet of every grid sample over one step.

    ``v_end``, ``v_mid`` and ``v_start`` are the velocity (in samples per unit
    time) at the end, middle and start of the step, each of shape ``(2, nx, ny)``.
    """
    cdef const double[:, ::1] e1 = np.ascontiguousarray(v_end[0], dtype=np.float64)
    cdef const double[:, ::1] e2 = np.ascontiguousarray(v_end[1], dtype=np.float64)
    cdef const double[:, ::1] m1 = np.ascontiguousarray(v_mid[0], dtype=np.float64)
    cdef const double[:, ::1] m2 = np.ascontiguousarray(v_mid[1], dtype=np.float64)
    cdef const double[:, ::1] s1 = np.ascontiguousarray(v_start[0], dtype=np.float64)
    cdef const double[:, ::1] s2 = np.ascontiguousarray(v_start[1], dtype=np.float64)
    cdef Py_ssize_t nx = e1.shape[0], ny = e1.shape[1], i, j
    fx = np.empty((nx, ny), dtype=np.float64)
    fy = np.empty((nx, ny), dtype=np.float64)
    cdef double[:, ::1] ox = fx, oy = fy
    cdef double h2 = 0.5 * dt, x, y, k1x, k1y, k2x, k2y, k3x, k3y, k4x, k4y
    with nogil:
        for i in range(nx):
            for j in range(ny):
                x = <double>i
                y = <double>j
                k1x = e1[i, j]
                k1y = e2[i, j]
                k2x = _bilinear(m1, x - h2 * k1x, y - h2 * k1y, nx, ny, periodic)
                k2y = _bilinear(m2, x - h2 * k1x, y - h2 * k1y, nx, ny, periodic)
                k3x = _bilinear(m1, x - h2 * k2x, y - h2 * k2y, nx, ny, periodic)
                k3y = _bilinear(m2, x - h2 * k2x, y - h2 * k2y, nx, ny, periodic)
                k4x = _bilinear(s1, x - dt * k3x, y - dt * k3y, nx, ny, periodic)
                k4y = _bilinear(s2, x - dt * k3x, y - dt * k3y, nx, ny, periodic)
                ox[i, j] = x - dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
                oy[i, j] = y - dt / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
    return fx, fy
