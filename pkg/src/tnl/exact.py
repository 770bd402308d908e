"""Bit-exact evolution of cell densities under the scheduled vortex field.

Over one stage of scale ``n`` every filled vortex cell turns rigidly by a
quarter of a revolution, so on a lattice of level ``L >= n + 1`` the stage acts
as a permutation of cells: each filled block of ``2**(L-n)`` by ``2**(L-n)``
cells is rotated by 90 degrees and empty blocks stay put.  Composing these
permutations gives the exact density at every stage endpoint.

Windows whose corners are integers and whose side is even are treated as
tori: the untruncated field and the chessboard data are 2-periodic, so blocks
straddling the window edge wrap around exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Callable, Optional

import numpy as np

from tnl.dyadic import (
    AlignmentError,
    CellField,
    Window,
    as_dyadic,
    checkerboard,
    constant_field,
)
from tnl.fields import FieldSpec, Stage, stage_of_times, truncate_time

__all__ = [
    "StagePermutation",
    "BranchSolution",
    "apply_stage",
    "evolve_exact",
    "vortex_flow",
    "exact_point_flow",
    "pullback_to_start",
    "branch_density",
    "branch_snapshot",
    "lifted_snapshot",
    "ExactnessError",
]

# Tests switch this on to assert measure preservation after every stage.
check_invariants = False


class ExactnessError(ValueError):
    """The exact engine was asked for something it cannot represent exactly."""


@dataclass(frozen=True)
class StagePermutation:
    scale: int
    sign: int = 1
    active_N: Optional[int] = None

    @classmethod
    def from_stage(cls, stage: Stage, N: Optional[int] = None) -> "StagePermutation":
        return cls(stage.scale, stage.sign, N)


def _block_offset(i0: int, m: int) -> int:
    # block corners sit at global fine indices congruent to m/2 modulo m
    return (m // 2 - i0) % m


def apply_stage(field: CellField, stage: StagePermutation) -> CellField:
    """Permute the cells of ``field`` as one quarter turn of the scale-``n`` vortices."""
    L, n = field.level, stage.scale
    if L < n + 1:
        raise ExactnessError(f"level {L} is too coarse for a scale-{n} stage (need >= {n + 1})")
    m = 1 << (L - n)
    win = field.window
    nx = field.shape[0]
    i0, j0 = win.first_index(L)
    offx, offy = _block_offset(i0, m), _block_offset(j0, m)
    torus = win.is_torus()
    if not torus and (offx or offy or nx % m):
        raise AlignmentError(f"window [{win}] is neither a torus nor aligned to scale-{n} blocks")
    if torus and stage.active_N is not None:
        half = stage.active_N + Fraction(1, 2 ** (n + 1))
        if not win.contains_window(Window.square(half)):
            raise AlignmentError("truncation window must lie inside a periodic data window")

    a = np.roll(field.num, (-offx, -offy), axis=(0, 1)) if (offx or offy) else field.num
    nb = nx // m
    blocks = a.reshape(nb, m, nb, m).transpose(0, 2, 1, 3).copy()
    cx = (i0 + offx + m // 2) // m + np.arange(nb)
    cy = (j0 + offy + m // 2) // m + np.arange(nb)
    sel = ((cx[:, None] + cy[None, :]) % 2) == 0
    if stage.active_N is not None:
        lim = stage.active_N << n
        sel &= (np.abs(cx)[:, None] <= lim) & (np.abs(cy)[None, :] <= lim)
    if sel.any():
        blocks[sel] = np.rot90(blocks[sel], k=1 if stage.sign > 0 else -1, axes=(1, 2))
    out = blocks.transpose(0, 2, 1, 3).reshape(nx, nx)
    if offx or offy:
        out = np.roll(out, (offx, offy), axis=(0, 1))
    result = CellField(L, win, out, field.exp)
    if check_invariants:
        before, after = field.multiset(), result.multiset()
        if not (np.array_equal(before[0], after[0]) and np.array_equal(before[1], after[1])):
            raise AssertionError("stage permutation changed the multiset of cell values")
    return result


def _stages_until(spec: FieldSpec, t: Fraction) -> list[Stage]:
    if spec.lifted:
        raise ExactnessError("exact evolution works on the 2D field; evaluate the lift slice-wise")
    finest = spec.finest_active_scale()
    if finest is None:
        if t >= 1:
            raise ExactnessError("the untruncated field has infinitely many stages before t = 1")
        gap = 1 - t
        if gap.numerator != 1:
            raise ExactnessError(f"t = {t} is not a stage endpoint; use the solver")
        k = gap.denominator.bit_length() - 1
        return [s for s in spec.stages(k - 1) if s.forward]
    stages = [s for s in spec.stages(finest) if s.active]
    for s in stages:
        if s.t0 < t < s.t1:
            raise ExactnessError(f"t = {t} falls inside the stage [{s.t0}, {s.t1}]; use the solver")
    return [s for s in stages if s.t1 <= t]


def evolve_exact(data: CellField, spec: FieldSpec, t) -> CellField:
    """Density at the dyadic stage endpoint ``t`` starting from ``data`` at time 0."""
    t = as_dyadic(t)
    if t <= 0:
        return data
    out = data
    for s in _stages_until(spec, min(t, Fraction(2))):
        out = apply_stage(out, StagePermutation.from_stage(s, spec.N))
    return out


def _arc_position(l1, l2, r):
    # counter-clockwise arc length along the square of radius r, starting at (r, -r)
    return np.select(
        [l1 == r, l2 == r, l1 == -r],
        [l2 + r, 3 * r - l1, 5 * r - l2],
        default=7 * r + l1,
    )


def _arc_point(s, r):
    side = np.minimum(np.floor(s / (2 * r)), 3)
    u = s - 2 * r * side
    x = np.select([side == 0, side == 1, side == 2], [r, r - u, -r], default=-r + u)
    y = np.select([side == 0, side == 1, side == 2], [-r + u, r, r - u], default=-r)
    return x, y


def vortex_flow(x, scale: int, sign: int, duration: float, active_N: Optional[int] = None):
    """Exact flow of ``sign * u(2**scale x)`` for time ``duration``.

    Points move along the sup-norm square through them at speed
    ``4 * 2**scale * r`` (local units), so one revolution takes ``2**(1-scale)``.
    ``x`` has shape ``(..., 2)``.  Points on a diagonal (where the field is
    set to zero) and points in empty cells do not move.
    """
    x = np.asarray(x, dtype=np.float64)
    z1 = np.ldexp(x[..., 0], scale)
    z2 = np.ldexp(x[..., 1], scale)
    c1, c2 = np.floor(z1 + 0.5), np.floor(z2 + 0.5)
    l1, l2 = z1 - c1, z2 - c2
    r = np.maximum(np.abs(l1), np.abs(l2))
    moving = (np.fmod(c1 + c2, 2.0) == 0) & (r < 0.5) & (np.abs(l1) != np.abs(l2))
    if active_N is not None:
        lim = float(active_N) * 2.0**scale
        moving &= (np.abs(c1) <= lim) & (np.abs(c2) <= lim)
    rr = np.where(moving, r, 1.0)
    s = _arc_position(l1, l2, rr)
    s = s + sign * 4.0 * 2.0**scale * rr * float(duration)
    s = np.mod(s, 8 * rr)
    n1, n2 = _arc_point(s, rr)
    out = np.empty_like(x)
    out[..., 0] = np.where(moving, np.ldexp(c1 + n1, -scale), x[..., 0])
    out[..., 1] = np.where(moving, np.ldexp(c2 + n2, -scale), x[..., 1])
    return out


def _stage_bounds(t: float) -> tuple[float, float, int, int]:
    scale, sign, valid = stage_of_times(t)
    if not bool(valid):
        return (t, t, 0, 0)
    n, sg = int(scale), int(sign)
    if sg > 0:
        return (1 - 2.0**-n, 1 - 2.0 ** -(n + 1), n, sg)
    return (1 + 2.0 ** -(n + 1), 1 + 2.0**-n, n, sg)


def exact_point_flow(spec: FieldSpec, t0, t1, x):
    """Move ``x`` from time ``t0`` to ``t1``; both times must lie in one stage (or a zero stretch)."""
    t0, t1 = float(t0), float(t1)
    lo, hi = min(t0, t1), max(t0, t1)
    mid = 0.5 * (lo + hi)
    x = np.asarray(x, dtype=np.float64)
    if lo < 0 or hi > 2 or mid == 1.0 or spec.is_zero_at(mid):
        if (lo < 1.0 < hi) and not spec.is_zero_at(1.0):
            raise ExactnessError("interval crosses t = 1")
        if spec.zero_interval is not None and spec.is_zero_at(mid):
            a, b = (float(v) for v in spec.zero_interval)
            if lo < a or hi > b:
                raise ExactnessError("interval leaves the zero interval; split it at the stage ends")
        return x.copy()
    a, b, n, sg = _stage_bounds(mid)
    if lo < a or hi > b:
        raise ExactnessError(f"[{t0}, {t1}] is not inside one stage ({a}, {b})")
    if spec.zero_interval is not None:
        za, zb = (float(v) for v in spec.zero_interval)
        if za <= a and b <= zb:
            return x.copy()
    return vortex_flow(x, n, sg, t1 - t0, spec.N)


def pullback_to_start(spec: FieldSpec, t: float, x, max_scale: int = 60):
    """Foot at time 0 of the characteristic through ``(t, x)`` for ``t < 1`` (or truncated specs).

    ``x`` has shape ``(..., 2)``.  The partial stage containing ``t`` is undone
    with :func:`vortex_flow`, earlier stages with exact quarter turns.
    """
    y = np.asarray(x, dtype=np.float64).copy()
    t = float(t)
    if t <= 0:
        return y
    finest = spec.finest_active_scale()
    if finest is None:
        if t >= 1:
            raise ExactnessError("no unique backward flow through t = 1 for the untruncated field")
        finest = min(int(stage_of_times(t)[0]), max_scale)
    for s in reversed(spec.stages(finest)):
        a, b = float(s.t0), float(s.t1)
        if a >= t or not s.active:
            continue
        dur = min(b, t) - a
        y = vortex_flow(y, s.scale, s.sign, -dur, spec.N)
    return y


@dataclass(frozen=True)
class BranchSolution:
    """One of the exact solutions: ``prime`` (1/2 after t = 1), ``tilde`` (mirror) or ``trunc``."""

    tag: str
    variant: Optional[int] = None
    i: Optional[int] = None

    def __post_init__(self):
        if self.tag not in ("prime", "tilde", "trunc"):
            raise ValueError(f"unknown branch {self.tag!r}")
        if self.tag == "trunc" and (self.variant not in (1, 2) or not self.i or self.i < 1):
            raise ValueError("truncated branch needs variant 1|2 and i >= 1")

    @classmethod
    def parse(cls, name: str, i: Optional[int] = None) -> "BranchSolution":
        if name in ("trunc1", "trunc2"):
            return cls("trunc", int(name[-1]), i)
        return cls(name)

    @property
    def label(self) -> str:
        return f"trunc{self.variant}" if self.tag == "trunc" else self.tag

    def spec(self) -> FieldSpec:
        base = FieldSpec()
        if self.tag == "trunc":
            return truncate_time(base, self.i, self.variant)
        return base


def _torus_hull(window: Window) -> Window:
    m = max(abs(v) for v in (window.x0, window.y0, window.x1, window.y1))
    return Window.square(max(1, math.ceil(m)))


def _initial(level: int, window: Window) -> CellField:
    return checkerboard(0, window).refine(level)


def branch_snapshot(branch: BranchSolution, t, level: int, window: Optional[Window] = None) -> CellField:
    """Exact density of ``branch`` at the dyadic time ``t`` on ``window`` (default ``Q_1``)."""
    window = window or Window.square(1)
    if not window.aligned(level):
        raise AlignmentError(f"window [{window}] is not aligned to level {level}")
    t = as_dyadic(t)
    if t < 0 or t > 2:
        raise ValueError("branch snapshots live on [0, 2]")
    hull = window if window.is_torus() else _torus_hull(window)
    if branch.tag == "trunc":
        out = evolve_exact(_initial(level, hull), branch.spec(), t)
    elif t < 1:
        out = evolve_exact(_initial(level, hull), FieldSpec(), t)
    elif branch.tag == "prime" or t == 1:
        # at t = 1 both branches take the weak limit of the mixing solution
        return constant_field(level, window, Fraction(1, 2))
    else:
        out = evolve_exact(_initial(level, hull), FieldSpec(), 2 - t)
    return out if hull == window else out.restrict(window)


def branch_density(branch: BranchSolution, t: float, x1, x2):
    """Pointwise (a.e.) density of an exact branch at any time, via backward characteristics."""
    from tnl.fields import rho_in_array

    t = float(t)
    x = np.stack(np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float)), axis=-1)
    if t <= 0:
        return rho_in_array(x[..., 0], x[..., 1])
    if branch.tag == "trunc":
        y = pullback_to_start(branch.spec(), t, x)
    elif t < 1:
        y = pullback_to_start(FieldSpec(), t, x)
    elif branch.tag == "prime" or t == 1:
        return np.full(x.shape[:-1], 0.5)
    else:
        y = pullback_to_start(FieldSpec(), 2.0 - t, x)
    return rho_in_array(y[..., 0], y[..., 1])


def lifted_snapshot(branch: BranchSolution, t, level: int,
                    window: Optional[Window] = None) -> Callable[[object], CellField]:
    """Slices ``y0 -> theta(t, y0, .)`` of the lifted solution built on ``branch``."""
    if branch.tag not in ("prime", "tilde"):
        raise ValueError("lifted solutions are defined for the prime and tilde branches")
    t = as_dyadic(t)
    if t < 0 or t > 3:
        raise ValueError("lifted snapshots are defined for 0 <= t <= 3")
    window = window or Window.square(1)

    def slice_at(y0) -> CellField:
        y0 = as_dyadic(y0)
        if y0 < t - 1 or y0 > t:
            return constant_field(level, window, 0)
        if y0 <= 0:
            return checkerboard(0, window).refine(level)
        s = min(y0, Fraction(2))
        return branch_snapshot(branch, s, level, window)

    return slice_at


def with_space_truncation(branch: BranchSolution, N: int) -> FieldSpec:
    return replace(branch.spec(), N=N)
