"""Closed-form evaluation of the vortex fields and their dyadic time schedule.

The basic vortex ``w`` lives on the square ``[-1/2, 1/2]**2``; ``u`` repeats
it on every other square (centres in ``Lambda = {y in Z^2 : y1 + y2 even}``)
and the scheduled field ``b`` runs ``u(2**n x)`` on the time interval
``(1 - 2**-n, 1 - 2**-(n+1))`` and mirrors itself, ``b(t) = -b(2 - t)``, on
``(1, 2)``.

All evaluators are vectorised over numpy arrays and exact up to the final
multiplication by 4; scaling by powers of two is done with ``np.ldexp``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Iterator, Optional

import numpy as np

from tnl.dyadic import as_dyadic, format_dyadic, parse_dyadic

HORIZON = Fraction(2)
SUP_BOUND = 2.0

__all__ = [
    "HORIZON",
    "SUP_BOUND",
    "VortexLayout",
    "Stage",
    "TimeSchedule",
    "FieldSpec",
    "eval_w",
    "eval_u",
    "eval_field",
    "w_array",
    "u_array",
    "field_array",
    "stage_of_times",
    "truncate_time",
    "truncate_space",
    "lift_autonomous",
    "make_theta_in",
    "rho_in_array",
    "dumps_spec",
    "loads_spec",
]


def w_array(z1, z2):
    """The single vortex: ``(0, 4 z1)`` where ``1/2 > |z1| > |z2|``, ``(-4 z2, 0)`` where ``1/2 > |z2| > |z1|``."""
    z1 = np.asarray(z1, dtype=np.float64)
    z2 = np.asarray(z2, dtype=np.float64)
    a1, a2 = np.abs(z1), np.abs(z2)
    right = (a1 < 0.5) & (a1 > a2)
    top = (a2 < 0.5) & (a2 > a1)
    v1 = np.where(top, -4.0 * z2, 0.0)
    v2 = np.where(right, 4.0 * z1, 0.0)
    return v1, v2


def eval_w(x) -> np.ndarray:
    v1, v2 = w_array(x[0], x[1])
    return np.array([float(v1), float(v2)])


def _scale_cells(x1, x2, scale):
    """Cell centre index and local coordinates of ``2**scale * x`` in the vortex tiling."""
    z1 = np.ldexp(np.asarray(x1, dtype=np.float64), scale)
    z2 = np.ldexp(np.asarray(x2, dtype=np.float64), scale)
    c1 = np.floor(z1 + 0.5)
    c2 = np.floor(z2 + 0.5)
    return c1, c2, z1 - c1, z2 - c2


def u_array(x1, x2, scale=0, sign=1, active_N=None):
    """``sign * u(2**scale x)``, optionally zeroed outside ``Q_{N + 2**-(scale+1)}``.

    ``scale`` and ``sign`` may be arrays broadcasting against ``x1``.
    """
    scale = np.asarray(scale, dtype=np.int64)
    c1, c2, l1, l2 = _scale_cells(x1, x2, scale)
    filled = np.fmod(c1 + c2, 2.0) == 0
    if active_N is not None:
        lim = np.ldexp(float(active_N), scale)
        filled &= (np.abs(c1) <= lim) & (np.abs(c2) <= lim)
    v1, v2 = w_array(l1, l2)
    s = np.where(filled, np.asarray(sign, dtype=np.float64), 0.0)
    return v1 * s, v2 * s


@dataclass(frozen=True)
class VortexLayout:
    """Vortex tiling at one scale: cells of side ``2**-scale`` centred on ``2**-scale * Lambda``."""

    scale: int
    sign: int = 1
    active_N: Optional[int] = None

    @property
    def active_half_side(self) -> Optional[Fraction]:
        if self.active_N is None:
            return None
        return self.active_N + Fraction(1, 2 ** (self.scale + 1))


def eval_u(x, layout: VortexLayout) -> np.ndarray:
    v1, v2 = u_array(x[0], x[1], layout.scale, layout.sign, layout.active_N)
    return np.array([float(v1), float(v2)])


@dataclass(frozen=True)
class Stage:
    """One dyadic time interval during which a single vortex scale is active."""

    t0: Fraction
    t1: Fraction
    scale: int
    sign: int
    active: bool = True

    @property
    def duration(self) -> Fraction:
        return self.t1 - self.t0

    @property
    def forward(self) -> bool:
        return self.sign > 0


@dataclass(frozen=True)
class TimeSchedule:
    """Stage ``n`` on ``[1 - 2**-n, 1 - 2**-(n+1))`` and its mirror on ``(1 + 2**-(n+1), 1 + 2**-n]``."""

    horizon: Fraction = HORIZON
    mirror: bool = True

    def forward_stage(self, n: int) -> tuple[Fraction, Fraction]:
        return 1 - Fraction(1, 2**n), 1 - Fraction(1, 2 ** (n + 1))

    def mirror_stage(self, n: int) -> tuple[Fraction, Fraction]:
        return 1 + Fraction(1, 2 ** (n + 1)), 1 + Fraction(1, 2**n)


def stage_of_times(t):
    """Vectorised stage lookup: returns ``(scale, sign, valid)`` arrays for times ``t``."""
    t = np.asarray(t, dtype=np.float64)
    back = t > 1.0
    tt = np.where(back, 2.0 - t, t)
    valid = (t >= 0.0) & (t <= 2.0) & (t != 1.0)
    gap = np.where(valid, 1.0 - tt, 0.5)
    m, e = np.frexp(gap)
    scale = (-e + (m == 0.5)).astype(np.int64)
    scale = np.where(valid, scale, 0)
    sign = np.where(back, -1, 1)
    return scale, sign, valid


@dataclass(frozen=True)
class FieldSpec:
    """Exactly evaluable description of the scheduled field and its truncations.

    ``variant`` is 0 for the untruncated field and 1 or 2 for the two time
    truncations (then ``i`` is set).  ``N`` selects the compact-support
    truncation; ``lifted`` turns the field into the autonomous 3D field
    ``(1, b(y0, y1, y2))``.
    """

    schedule: TimeSchedule = field(default_factory=TimeSchedule)
    zero_interval: Optional[tuple[Fraction, Fraction]] = None
    N: Optional[int] = None
    lifted: bool = False
    variant: int = 0
    i: Optional[int] = None

    @property
    def dim(self) -> int:
        return 3 if self.lifted else 2

    def is_zero_at(self, t) -> bool:
        if self.zero_interval is None:
            return False
        a, b = self.zero_interval
        return a < t < b

    def stage_active(self, t0: Fraction, t1: Fraction) -> bool:
        if self.zero_interval is None:
            return True
        a, b = self.zero_interval
        return not (a <= t0 and t1 <= b)

    def stages(self, max_scale: int) -> list[Stage]:
        """Forward then mirrored stages in time order, scales ``0..max_scale``.

        A stage either lies entirely inside the zero interval (``active=False``)
        or entirely outside it; the truncation endpoints are stage endpoints.
        """
        out = []
        for n in range(max_scale + 1):
            a, b = self.schedule.forward_stage(n)
            out.append(Stage(a, b, n, 1, self.stage_active(a, b)))
        if self.schedule.mirror:
            for n in range(max_scale, -1, -1):
                a, b = self.schedule.mirror_stage(n)
                out.append(Stage(a, b, n, -1, self.stage_active(a, b)))
        return out

    def finest_active_scale(self) -> Optional[int]:
        """Largest scale that is not zeroed, or None when infinitely many are active."""
        if self.zero_interval is None:
            return None
        a, b = self.zero_interval
        # forward stage n is active iff it ends by a: 1 - 2**-(n+1) <= a
        n = 0
        while 1 - Fraction(1, 2 ** (n + 2)) <= a:
            n += 1
        return n

    def layout(self, scale: int, sign: int) -> VortexLayout:
        return VortexLayout(scale, sign, self.N)


def field_array(spec: FieldSpec, t, x1, x2):
    """Evaluate the (2D) scheduled field at times ``t`` and points ``(x1, x2)``; broadcasts."""
    t = np.asarray(t, dtype=np.float64)
    scale, sign, valid = stage_of_times(t)
    if spec.zero_interval is not None:
        a, b = (float(v) for v in spec.zero_interval)
        valid = valid & ~((t > a) & (t < b))
    sign = np.where(valid, sign, 0)
    return u_array(x1, x2, scale, sign, spec.N)


def eval_field(spec: FieldSpec, t, x) -> np.ndarray:
    """Pointwise value of the field.  For lifted specs ``t`` is ignored and ``x`` is 3D."""
    if spec.lifted:
        v1, v2 = field_array(replace(spec, lifted=False), x[0], x[1], x[2])
        return np.array([1.0, float(v1), float(v2)])
    v1, v2 = field_array(spec, float(t), x[0], x[1])
    return np.array([float(v1), float(v2)])


def truncate_time(spec: FieldSpec, i: int, variant: int) -> FieldSpec:
    """Switch the field off on ``(1 - 2**-2i, 1 + 2**-(2i-2))`` (variant 1) or ``(1 - 2**-2i, 1 + 2**-2i)`` (variant 2)."""
    if i < 1:
        raise ValueError("truncation index i must be >= 1")
    if variant not in (1, 2):
        raise ValueError("variant must be 1 or 2")
    start = 1 - Fraction(1, 2 ** (2 * i))
    end = 1 + Fraction(1, 2 ** (2 * i - 2)) if variant == 1 else 1 + Fraction(1, 2 ** (2 * i))
    return replace(spec, zero_interval=(start, end), variant=variant, i=i)


def truncate_space(spec: FieldSpec, N: int) -> FieldSpec:
    """Keep only vortex cells inside ``Q_{N + 2**-(n+1)}`` during scale-``n`` stages."""
    if N < 1:
        raise ValueError("N must be >= 1")
    return replace(spec, N=int(N))


def lift_autonomous(spec: FieldSpec) -> FieldSpec:
    return replace(spec, lifted=True)


def rho_in_array(x1, x2, N: Optional[int] = None):
    """Chessboard data ``floor(x1) + floor(x2) mod 2``, optionally cut off outside ``Q_N``."""
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    out = np.fmod(np.floor(x1) + np.floor(x2), 2.0)
    out = np.abs(out)
    if N is not None:
        out = np.where((np.abs(x1) <= N) & (np.abs(x2) <= N), out, 0.0)
    return out


def make_theta_in(N: Optional[int] = None) -> Callable:
    """Lifted data: the chessboard on the slab ``-1 <= y0 <= 0`` and zero elsewhere."""

    def theta_in(y0, y1, y2):
        y0 = np.asarray(y0, dtype=np.float64)
        slab = (y0 >= -1.0) & (y0 <= 0.0)
        return np.where(slab, rho_in_array(y1, y2, N), 0.0)

    return theta_in


def dumps_spec(spec: FieldSpec) -> str:
    lines = [
        f"variant = {spec.variant}",
        f"i = {spec.i if spec.i is not None else 'none'}",
        f"N = {spec.N if spec.N is not None else 'none'}",
        f"lifted = {'true' if spec.lifted else 'false'}",
        f"horizon = {format_dyadic(spec.schedule.horizon)}",
    ]
    return "\n".join(lines) + "\n"


def loads_spec(text: str) -> FieldSpec:
    kv = {}
    for ln in text.splitlines():
        ln = ln.split("#", 1)[0].strip()
        if not ln:
            continue
        key, _, val = ln.partition("=")
        kv[key.strip()] = val.strip()
    unknown = set(kv) - {"variant", "i", "N", "lifted", "horizon"}
    if unknown:
        raise ValueError(f"unknown keys in field spec: {sorted(unknown)}")
    spec = FieldSpec(schedule=TimeSchedule(horizon=parse_dyadic(kv.get("horizon", "2"))))
    variant = int(kv.get("variant", "0"))
    i = None if kv.get("i", "none") == "none" else int(kv["i"])
    if variant:
        if i is None:
            raise ValueError("truncated field spec needs i")
        spec = truncate_time(spec, i, variant)
    N = kv.get("N", "none")
    if N != "none":
        spec = truncate_space(spec, int(N))
    if kv.get("lifted", "false") == "true":
        spec = lift_autonomous(spec)
    return spec


def iter_active_stages(spec: FieldSpec, max_scale: int) -> Iterator[Stage]:
    return (s for s in spec.stages(max_scale) if s.active)


def as_time(t) -> Fraction:
    return as_dyadic(t)
