"""Space-time mollification of the scheduled fields and of the chessboard data.

The field kernel is a product ``phi_eps(t) * psi_eps(x)`` of smooth bumps.
Because the scheduled field is a sum of stage indicators times fixed spatial
patterns, its mollification factorises::

    (b * phi)(t, x) = sum_stages sign * c_s(t) * (psi_eps * u_n)(x)

with ``c_s(t)`` the kernel mass that falls inside the stage.  The time
weights are computed by Gauss-Legendre quadrature of the 1D bump; the
spatial patterns by a discrete convolution over a sample lattice four times
finer than the output grid.  :func:`mollify_point` evaluates the same
integral by brute-force tensor quadrature and serves as an independent check.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Callable, Optional

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate, signal

from tnl.dyadic import Window, as_dyadic
from tnl.fields import FieldSpec, field_array, rho_in_array, u_array

__all__ = [
    "Kernel",
    "Grid",
    "GridField",
    "MollifiedField",
    "mollify_field",
    "mollify_data",
    "mollify_point",
    "discrete_divergence",
    "bump_profile",
]


def bump_profile(r):
    """``exp(-1 / (1 - r**2))`` on ``|r| < 1``, zero outside."""
    r = np.asarray(r, dtype=np.float64)
    out = np.zeros_like(r)
    m = np.abs(r) < 1.0
    out[m] = np.exp(-1.0 / (1.0 - r[m] ** 2))
    return out


@dataclass(frozen=True)
class Kernel:
    """Unit-mass radial bump of radius ``eps`` in one or two dimensions."""

    eps: float
    dim: int = 2

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError("kernels are one- or two-dimensional")
        if not self.eps > 0:
            raise ValueError("kernel radius must be positive")

    @cached_property
    def _unit_mass(self) -> float:
        f = lambda r: math.exp(-1.0 / (1.0 - r * r)) if abs(r) < 1 else 0.0
        if self.dim == 1:
            val, _ = integrate.quad(f, -1.0, 1.0, epsabs=1e-14, epsrel=1e-13)
        else:
            val, _ = integrate.quad(lambda r: 2 * math.pi * r * f(r), 0.0, 1.0, epsabs=1e-14, epsrel=1e-13)
        return val

    def __call__(self, *coords) -> np.ndarray:
        r2 = sum(np.asarray(c, dtype=np.float64) ** 2 for c in coords)
        return bump_profile(np.sqrt(r2) / self.eps) / (self._unit_mass * self.eps**self.dim)

    def mass(self) -> float:
        """Numerical total mass (should be 1)."""
        if self.dim == 1:
            return integrate.quad(lambda z: float(self(z)), -self.eps, self.eps, epsabs=1e-14)[0]
        val, _ = integrate.dblquad(
            lambda y, x: float(self(x, y)), -self.eps, self.eps,
            lambda x: -math.sqrt(max(self.eps**2 - x * x, 0.0)),
            lambda x: math.sqrt(max(self.eps**2 - x * x, 0.0)),
            epsabs=1e-13,
        )
        return val

    def cdf(self, z) -> np.ndarray:
        """Mass of the 1D kernel on ``(-inf, z]``; exactly 0 and 1 outside the support."""
        if self.dim != 1:
            raise ValueError("cdf is defined for the 1D kernel")
        zs = np.clip(np.asarray(z, dtype=np.float64) / self.eps, -1.0, 1.0)
        nodes, weights = _GL64
        half = 0.5 * (zs + 1.0)
        pts = -1.0 + half[..., None] * (nodes + 1.0)
        # a row-wise sum, unlike a BLAS product, rounds the same for any batch size
        val = half * np.sum(bump_profile(pts) * weights, axis=-1) / self._unit_mass
        return np.where(zs >= 1.0, 1.0, np.where(zs <= -1.0, 0.0, val))

    def interval_mass(self, t, a: float, b: float) -> np.ndarray:
        """``int_a^b phi_eps(t - s) ds``."""
        t = np.asarray(t, dtype=np.float64)
        return self.cdf(t - a) - self.cdf(t - b)


_GL64 = leggauss(64)


@dataclass(frozen=True)
class Grid:
    """Cell-centred sample grid: sample ``(i, k)`` sits at ``origin + (i + 1/2, k + 1/2) * h``."""

    window: Window
    h: Fraction
    periodic: bool = True

    def __post_init__(self):
        object.__setattr__(self, "h", as_dyadic(self.h))
        if (self.window.side / self.h).denominator != 1:
            raise ValueError("grid spacing must divide the window side")
        if self.periodic and not self.window.is_torus():
            raise ValueError("periodic grids need a window made of whole periods")

    @classmethod
    def square(cls, N, h, periodic: bool = True) -> "Grid":
        return cls(Window.square(N), h, periodic)

    @property
    def n(self) -> int:
        return int(self.window.side / self.h)

    @property
    def origin(self) -> tuple[float, float]:
        return float(self.window.x0), float(self.window.y0)

    @property
    def spacing(self) -> float:
        return float(self.h)

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        c = (np.arange(self.n) + 0.5) * self.spacing
        return self.origin[0] + c, self.origin[1] + c

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        ax, ay = self.axes()
        return np.meshgrid(ax, ay, indexing="ij")


@dataclass(frozen=True, eq=False)
class GridField:
    """Samples on a :class:`Grid`; shape ``(n, n)`` for scalars, ``(2, n, n)`` for vectors."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        n = self.grid.n
        if v.shape[-2:] != (n, n) or v.ndim not in (2, 3):
            raise ValueError(f"values of shape {v.shape} do not fit a {n}x{n} grid")
        object.__setattr__(self, "values", v)

    @property
    def ncomp(self) -> int:
        return 1 if self.values.ndim == 2 else self.values.shape[0]

    @property
    def h(self) -> float:
        return self.grid.spacing

    @property
    def origin(self) -> tuple[float, float]:
        return self.grid.origin

    def integral(self) -> float:
        return float(np.sum(self.values) * self.h**2)

    def block_means(self, level: int) -> np.ndarray:
        """Means over the level-``level`` dyadic cells (the grid must resolve them)."""
        r = int(Fraction(1, 2**level) / self.grid.h)
        if r < 1 or Fraction(r) != Fraction(1, 2**level) / self.grid.h:
            raise ValueError(f"grid spacing {self.grid.h} does not resolve level {level}")
        if not self.grid.window.aligned(level):
            raise ValueError("grid window is not aligned to that level")
        m = self.grid.n // r
        return self.values.reshape(m, r, m, r).mean(axis=(1, 3))


def _fine_conv(func: Callable, grid: Grid, eps: float, q: int) -> list[np.ndarray]:
    """Discrete convolution of ``func`` with the 2D bump, sampled at the grid centres."""
    h = grid.spacing
    hf = h / q
    K = int(math.ceil(eps / hf))
    x0, y0 = grid.origin
    M = q * grid.n + 2 * K
    fx = x0 - K * hf + (np.arange(M) + 0.5) * hf
    fy = y0 - K * hf + (np.arange(M) + 0.5) * hf
    off = (np.arange(-K, K) + 0.5) * hf
    ker = bump_profile(np.hypot(off[:, None], off[None, :]) / eps)
    ker /= ker.sum()
    X, Y = np.meshgrid(fx, fy, indexing="ij")
    vals = func(X, Y)
    if not isinstance(vals, tuple):
        vals = (vals,)
    out = []
    for v in vals:
        c = signal.fftconvolve(v, ker, mode="valid")
        sel = c[q // 2::q, q // 2::q][: grid.n, : grid.n]
        out.append(sel)
    return out


def _check_resolution(j: int, grid: Grid):
    if grid.h > Fraction(1, 2 ** (j + 1)):
        raise ValueError(f"grid spacing {grid.h} is too coarse for kernel radius 2^-{j} (need h <= 2^-{j + 1})")


@dataclass(eq=False)
class MollifiedField:
    """Smooth time-dependent field ``sum_s sign_s * c_s(t) * U_{n_s}(x)`` on a grid."""

    grid: Grid
    j: int
    stages: list[tuple[float, float, int, int]]
    patterns: dict[int, np.ndarray]
    spec: FieldSpec = field(default_factory=FieldSpec)

    @property
    def eps(self) -> float:
        return 2.0**-self.j

    @cached_property
    def time_kernel(self) -> Kernel:
        return Kernel(self.eps, 1)

    def weights(self, t: float) -> np.ndarray:
        if not self.stages:
            return np.zeros(0)
        a = np.array([s[0] for s in self.stages])
        b = np.array([s[1] for s in self.stages])
        sg = np.array([s[3] for s in self.stages], dtype=np.float64)
        return sg * self.time_kernel.interval_mass(float(t), a, b)

    def signature(self, t: float) -> tuple:
        return tuple(self.weights(t).tolist())

    def at(self, t: float) -> np.ndarray:
        """Field samples at time ``t``, shape ``(2, n, n)``."""
        out = np.zeros((2, self.grid.n, self.grid.n))
        for c, (_, _, n, _) in zip(self.weights(t), self.stages):
            if c != 0.0:
                out += c * self.patterns[n]
        return out

    def gridfield(self, t: float) -> GridField:
        return GridField(self.grid, self.at(t))

    def sup_norm(self) -> float:
        """Bound on ``sup |field|`` over all times (stage weights of one time sum to at most 1)."""
        return max((float(np.max(np.hypot(p[0], p[1]))) for p in self.patterns.values()), default=0.0)


def _default_max_scale(spec: FieldSpec, j: int) -> int:
    finest = spec.finest_active_scale()
    if finest is not None:
        return finest
    # vortices of side 2**-(j+3) average out to below 1% under a kernel of radius 2**-j
    return j + 3


def mollify_field(spec: FieldSpec, j: int, grid: Grid, max_scale: Optional[int] = None,
                  oversample: int = 4) -> MollifiedField:
    """Space-time mollification of ``spec`` at scale ``2**-j``, sampled on ``grid``."""
    if spec.lifted:
        raise ValueError("the lifted field is evaluated exactly, not mollified")
    _check_resolution(j, grid)
    if max_scale is None:
        max_scale = _default_max_scale(spec, j)
    eps = 2.0**-j
    stages = [(float(s.t0), float(s.t1), s.scale, s.sign) for s in spec.stages(max_scale) if s.active]
    patterns = {}
    for n in sorted({s[2] for s in stages}):
        v1, v2 = _fine_conv(lambda X, Y, n=n: u_array(X, Y, n, 1, spec.N), grid, eps, oversample)
        patterns[n] = np.stack([v1, v2])
    return MollifiedField(grid, j, stages, patterns, spec)


def mollify_data(j: int, grid: Grid, N: Optional[int] = None, data: Optional[Callable] = None,
                 oversample: int = 4) -> GridField:
    """Spatial mollification of the chessboard (or of ``data``) at scale ``2**-j``."""
    _check_resolution(j, grid)
    func = data if data is not None else (lambda X, Y: rho_in_array(X, Y, N))
    (vals,) = _fine_conv(func, grid, 2.0**-j, oversample)
    # FFT round-off leaves ~1e-16 on the plateaus; those are exactly 0 or 1
    vals = np.where(np.abs(vals) < 1e-12, 0.0, np.where(np.abs(vals - 1.0) < 1e-12, 1.0, vals))
    return GridField(grid, np.clip(vals, 0.0, 1.0))


def mollify_point(spec: FieldSpec, j: int, t: float, x, order: int = 3, subdiv: int = 32) -> np.ndarray:
    """``(b * phi_eps)(t, x)`` by tensor Gauss-Legendre quadrature over the kernel support.

    The integrand jumps across vortex edges and diagonals, so many low-order
    panels (whose edges line up with the dyadic cell edges) beat high order.
    """
    eps = 2.0**-j
    g, w = leggauss(order)
    edges = np.linspace(-eps, eps, subdiv + 1)
    pts = np.concatenate([0.5 * (edges[k + 1] - edges[k]) * g + 0.5 * (edges[k + 1] + edges[k]) for k in range(subdiv)])
    wts = np.concatenate([0.5 * (edges[k + 1] - edges[k]) * w for k in range(subdiv)])
    kt, kx = Kernel(eps, 1), Kernel(eps, 2)
    T, Y1, Y2 = np.meshgrid(pts, pts, pts, indexing="ij")
    W = wts[:, None, None] * wts[None, :, None] * wts[None, None, :]
    W = W * kt(T) * kx(Y1, Y2)
    tt = float(t) - T
    inside = (tt >= 0.0) & (tt <= 2.0)
    v1, v2 = field_array(spec, np.where(inside, tt, -1.0), x[0] - Y1, x[1] - Y2)
    return np.array([np.sum(W * v1), np.sum(W * v2)])


def discrete_divergence(field: GridField) -> GridField:
    """Centred-difference divergence of a vector :class:`GridField`."""
    if field.ncomp != 2:
        raise ValueError("divergence needs a vector field")
    v, h = field.values, field.h
    if field.grid.periodic:
        d1 = (np.roll(v[0], -1, axis=0) - np.roll(v[0], 1, axis=0)) / (2 * h)
        d2 = (np.roll(v[1], -1, axis=1) - np.roll(v[1], 1, axis=1)) / (2 * h)
    else:
        d1 = np.gradient(v[0], h, axis=0)
        d2 = np.gradient(v[1], h, axis=1)
    return GridField(field.grid, d1 + d2)
