"""Semi-Lagrangian transport of densities by smooth (mollified) fields.

Each step traces the backward characteristic of every grid sample with RK4
and samples the previous density bilinearly at the foot.  Feet depend only on
the field over the step, so they are cached by the field's time signature:
inside a stage the mollified field is frozen and every step reuses one set of
feet.
"""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence, Union

import numpy as np

from tnl import kernels
from tnl.dyadic import CellField, Window, as_dyadic, cell_averages
from tnl.fields import SUP_BOUND, FieldSpec, field_array, stage_of_times
from tnl.mollify import Grid, GridField, MollifiedField

__all__ = [
    "SolverConfig",
    "Trajectory",
    "MaxPrincipleError",
    "trace_characteristic",
    "solve",
    "l1_distance",
    "rasterize",
]


class MaxPrincipleError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    h: Fraction
    t_end: Fraction = Fraction(2)
    cfl: Fraction = Fraction(1, 4)
    window: Window = field(default_factory=lambda: Window.square(1))
    periodic: bool = True
    checkpoints: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "h", as_dyadic(self.h))
        object.__setattr__(self, "t_end", as_dyadic(self.t_end))
        object.__setattr__(self, "cfl", as_dyadic(self.cfl))
        cps = sorted({as_dyadic(c) for c in self.checkpoints} | {self.t_end})
        object.__setattr__(self, "checkpoints", tuple(c for c in cps if 0 < c <= self.t_end))
        self.validate()

    @property
    def dt(self) -> Fraction:
        return self.cfl * self.h / Fraction(SUP_BOUND)

    @property
    def grid(self) -> Grid:
        return Grid(self.window, self.h, self.periodic)

    def validate(self):
        if not 0 < self.cfl <= Fraction(1, 2):
            raise ValueError(f"CFL number {self.cfl} outside (0, 1/2]")
        prev = Fraction(0)
        for c in self.checkpoints:
            if ((c - prev) / self.dt).denominator != 1:
                raise ValueError(f"time step {self.dt} does not divide the checkpoint gap [{prev}, {c}]")
            prev = c

    @property
    def nsteps(self) -> int:
        return int(self.t_end / self.dt)


@dataclass
class Trajectory:
    snapshots: list[tuple[Fraction, GridField]]
    config: SolverConfig
    diagnostics: list[dict] = field(default_factory=list)
    feet_computed: int = 0

    def at(self, t) -> GridField:
        t = as_dyadic(t)
        for s, g in self.snapshots:
            if s == t:
                return g
        raise KeyError(f"no checkpoint at t = {t}")

    @property
    def final(self) -> GridField:
        return self.snapshots[-1][1]

    @property
    def times(self) -> list[Fraction]:
        return [s for s, _ in self.snapshots]


class _Sampler:
    """Uniform interface over the field types the solver accepts."""

    def __init__(self, field, grid: Grid):
        self.grid = grid
        if isinstance(field, MollifiedField):
            if field.grid != grid:
                raise ValueError("mollified field and data live on different grids")
            self._at, self._sig = field.at, field.signature
        elif isinstance(field, FieldSpec):
            X, Y = grid.mesh()

            def at(t):
                return np.stack(field_array(field, t, X, Y))

            def sig(t):
                scale, sign, valid = stage_of_times(t)
                zero = field.is_zero_at(t) or not bool(valid)
                return (0, 0) if zero else (int(scale), int(sign))

            self._at, self._sig = at, sig
        elif field is None:
            self._at = lambda t: np.zeros((2, grid.n, grid.n))
            self._sig = lambda t: ()
        else:
            X, Y = grid.mesh()
            self._at = lambda t: np.stack(field(t, X, Y))
            self._sig = None

    def signature(self, t):
        return None if self._sig is None else self._sig(t)

    def velocity(self, t) -> np.ndarray:
        return self._at(t)


def _is_still(sig) -> bool:
    return sig == () or sig == (0, 0) or (isinstance(sig, tuple) and all(v == 0 for v in sig))


def _compose(outer, inner, base, periodic):
    """Feet of ``outer`` after ``inner``: ``x -> outer(inner(x))``, via the displacement of ``outer``."""
    dx = kernels.bilinear(outer[0] - base[0], inner[0], inner[1], periodic)
    dy = kernels.bilinear(outer[1] - base[1], inner[0], inner[1], periodic)
    return inner[0] + dx, inner[1] + dy


def _power(feet, k, base, periodic):
    """``feet`` composed with itself ``k`` times, by repeated squaring."""
    result, sq = None, feet
    while k:
        if k & 1:
            result = sq if result is None else _compose(result, sq, base, periodic)
        k >>= 1
        if k:
            sq = _compose(sq, sq, base, periodic)
    return result


def solve(field: Union[MollifiedField, FieldSpec, Callable, None], data: GridField,
          config: SolverConfig, check_max_principle: bool = True,
          cache_size: int = 8, remap: str = "step") -> Trajectory:
    """Evolve ``data`` from t = 0 to ``config.t_end``; snapshots at every checkpoint.

    ``remap="step"`` resamples the density after every time step.  With
    ``remap="checkpoint"`` the per-step feet are composed into one backward
    map (runs of identical steps by repeated squaring) and the density is
    resampled once per checkpoint interval.
    """
    if remap not in ("step", "checkpoint"):
        raise ValueError(f"unknown remap mode {remap!r}")
    config.validate()
    grid = config.grid
    if data.grid.window != grid.window or data.grid.h != grid.h:
        raise ValueError("data is not sampled on the solver grid")
    sampler = _Sampler(field, grid)
    h = grid.spacing
    dt = float(config.dt)
    periodic = config.periodic
    lo, hi = float(data.values.min()), float(data.values.max())
    rho = data.values.copy()
    mass0 = data.integral()
    cache: OrderedDict = OrderedDict()
    traj = Trajectory([], config)
    base = np.meshgrid(np.arange(grid.n, dtype=np.float64), np.arange(grid.n, dtype=np.float64), indexing="ij")

    def key_of(k):
        t0 = k * dt
        return (sampler.signature(t0 + dt), sampler.signature(t0 + 0.5 * dt), sampler.signature(t0))

    def feet_of(k, key):
        if key[0] is not None and all(_is_still(q) for q in key):
            return None
        feet = cache.get(key) if key[0] is not None else None
        if feet is None:
            t0 = k * dt
            feet = kernels.rk4_feet(sampler.velocity(t0 + dt) / h, sampler.velocity(t0 + 0.5 * dt) / h,
                                    sampler.velocity(t0) / h, dt, periodic)
            traj.feet_computed += 1
            if key[0] is not None:
                cache[key] = feet
                if len(cache) > cache_size:
                    cache.popitem(last=False)
        return feet

    step = 0
    for c in config.checkpoints:
        last = int(c / config.dt)
        total = None
        while step < last:
            key = key_of(step)
            feet = feet_of(step, key)
            run = 1
            if remap == "checkpoint" and key[0] is not None:
                while step + run < last and key_of(step + run) == key:
                    run += 1
            step += run
            if feet is None:
                continue
            if remap == "step":
                rho = kernels.bilinear(rho, feet[0], feet[1], periodic)
                continue
            block = feet if run == 1 else _power(feet, run, base, periodic)
            total = block if total is None else _compose(total, block, base, periodic)
        if total is not None:
            rho = kernels.bilinear(rho, total[0], total[1], periodic)
        snap = GridField(grid, rho.copy())
        vmin, vmax = float(rho.min()), float(rho.max())
        if check_max_principle and (vmin < lo - 1e-12 or vmax > hi + 1e-12):
            raise MaxPrincipleError(f"values [{vmin}, {vmax}] left the data range [{lo}, {hi}] at t = {c}")
        traj.snapshots.append((c, snap))
        traj.diagnostics.append({
            "t": c, "min": vmin, "max": vmax,
            "mass_drift": snap.integral() - mass0,
        })
    return traj


def trace_characteristic(field, t_from, t_to, x, dt: float = 1e-3):
    """RK4 characteristic from ``t_from`` to ``t_to`` (either direction) starting at ``x``.

    ``field`` is a :class:`FieldSpec`, a :class:`MollifiedField` (bilinear in
    space) or a callable ``(t, x1, x2) -> (v1, v2)``; ``x`` has shape ``(..., 2)``.
    """
    if isinstance(field, FieldSpec):
        vel = lambda t, a, b: field_array(field, t, a, b)
    elif isinstance(field, MollifiedField):
        g = field.grid
        ox, oy = g.origin
        hh = g.spacing

        def vel(t, a, b):
            V = field.at(t)
            pa, pb = (a - ox) / hh - 0.5, (b - oy) / hh - 0.5
            return (kernels.bilinear(V[0], pa, pb, g.periodic), kernels.bilinear(V[1], pa, pb, g.periodic))
    elif field is None:
        return np.array(x, dtype=np.float64, copy=True)
    else:
        vel = field
    t0, t1 = float(t_from), float(t_to)
    x = np.array(x, dtype=np.float64, copy=True)
    n = max(1, int(np.ceil(abs(t1 - t0) / dt - 1e-9)))
    k = (t1 - t0) / n
    a, b = x[..., 0].copy(), x[..., 1].copy()
    t = t0
    for _ in range(n):
        k1 = vel(t, a, b)
        k2 = vel(t + k / 2, a + k / 2 * k1[0], b + k / 2 * k1[1])
        k3 = vel(t + k / 2, a + k / 2 * k2[0], b + k / 2 * k2[1])
        k4 = vel(t + k, a + k * k3[0], b + k * k3[1])
        a = a + k / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        b = b + k / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        t += k
    x[..., 0], x[..., 1] = a, b
    return x


def rasterize(field: CellField, grid: Grid) -> np.ndarray:
    """Cell values on ``grid``: exact samples when the grid is finer, exact block means otherwise."""
    level = int(grid.h.denominator.bit_length() - 1) if grid.h.numerator == 1 else None
    if level is None:
        raise ValueError("grid spacing must be a power of two")
    if not field.window.contains_window(grid.window):
        raise ValueError(f"window [{grid.window}] escapes the cell field window [{field.window}]")
    sub = field.restrict(grid.window)
    if level >= sub.level:
        return sub.refine(level).values
    return cell_averages(sub, level).values


def _values_on(a, grid: Grid) -> np.ndarray:
    if isinstance(a, CellField):
        return rasterize(a, grid)
    if isinstance(a, GridField):
        if a.grid.h != grid.h:
            raise ValueError("grid fields with different spacings")
        if a.grid.window == grid.window:
            return a.values
        if not a.grid.window.contains_window(grid.window):
            raise ValueError(f"window [{grid.window}] escapes the grid field window [{a.grid.window}]")
        i0 = int((grid.window.x0 - a.grid.window.x0) / grid.h)
        j0 = int((grid.window.y0 - a.grid.window.y0) / grid.h)
        return a.values[i0:i0 + grid.n, j0:j0 + grid.n]
    raise TypeError(f"cannot measure distances to {type(a).__name__}")


def l1_distance(a, b, window: Optional[Window] = None, per_area: bool = True) -> float:
    """Midpoint-rule L1 distance on ``window``; reported per unit area by default.

    Two cell fields are compared exactly on the finer of their levels; a cell
    field and a grid field on the grid of the latter.
    """
    wins = [f.window if isinstance(f, CellField) else f.grid.window for f in (a, b)]
    if window is None:
        window = wins[0] if wins[0] == wins[1] else None
        if window is None:
            raise ValueError("inputs live on different windows; pass the comparison window")
    for w in wins:
        if not w.contains_window(window):
            if (max(w.x0, window.x0) >= min(w.x1, window.x1)
                    or max(w.y0, window.y0) >= min(w.y1, window.y1)):
                raise ValueError("disjoint windows")
            raise ValueError(f"window [{window}] is not covered by [{w}]")
    if isinstance(a, CellField) and isinstance(b, CellField):
        level = max(a.level, b.level)
        h = Fraction(1, 2**level)
    else:
        h = next(f.grid.h for f in (a, b) if isinstance(f, GridField))
    grid = Grid(window, h, periodic=False)
    diff = np.abs(_values_on(a, grid) - _values_on(b, grid))
    total = float(np.sum(diff)) * float(h) ** 2
    return total / float(window.area) if per_area else total
