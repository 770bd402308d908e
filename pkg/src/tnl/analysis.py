"""Weak-convergence diagnostics, weak-form residuals and norm estimators."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Callable, Optional, Sequence, Union

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate

from tnl.dyadic import CellField, Window, as_dyadic, cell_averages
from tnl.exact import BranchSolution, branch_density, branch_snapshot
from tnl.fields import SUP_BOUND, FieldSpec, field_array, rho_in_array
from tnl.mollify import Grid, GridField, bump_profile

__all__ = [
    "TestFunction",
    "NormReport",
    "weak_gap",
    "pair",
    "weak_residual",
    "gluing_experiment",
    "tv_norm",
    "bv_norm",
    "l1_norm_exact",
    "w_l1_norm",
    "grid_tv",
    "gagliardo_seminorm",
    "GagliardoEstimate",
    "interpolation_exponent",
    "log2_slope",
    "norm_report",
    "UNIT_BOX",
]

UNIT_BOX = Window(Fraction(-1, 2), Fraction(-1, 2), Fraction(1))

_GL64 = leggauss(64)


def _bump_dprofile(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.zeros_like(z)
    m = np.abs(z) < 1.0
    q = 1.0 - z[m] ** 2
    out[m] = np.exp(-1.0 / q) * (-2.0 * z[m] / q**2)
    return out


def _bump_antiderivative(z):
    """``int_{-1}^{z} bump_profile``, by Gauss-Legendre on ``[-1, z]``."""
    zs = np.clip(np.asarray(z, dtype=np.float64), -1.0, 1.0)
    nodes, weights = _GL64
    half = 0.5 * (zs + 1.0)
    pts = -1.0 + half[..., None] * (nodes + 1.0)
    return half * (bump_profile(pts) @ weights)


_BUMP_MASS = float(_bump_antiderivative(1.0))


@dataclass(frozen=True)
class TestFunction:
    """Product of 1D bumps ``prod_k g((x_k - c_k) / r_k)`` with ``g(z) = exp(-1/(1 - z**2))``.

    Two-dimensional for spatial pairings; three-dimensional ``(t, x1, x2)`` for
    weak-form residuals.
    """

    center: tuple
    radius: tuple
    amplitude: float = 1.0

    def __post_init__(self):
        if len(self.center) != len(self.radius):
            raise ValueError("center and radius need the same dimension")
        if any(r <= 0 for r in self.radius):
            raise ValueError("radii must be positive")

    @property
    def dim(self) -> int:
        return len(self.center)

    def _factors(self, coords):
        return [bump_profile((np.asarray(x, dtype=np.float64) - c) / r)
                for x, c, r in zip(coords, self.center, self.radius)]

    def __call__(self, *coords) -> np.ndarray:
        out = self.amplitude
        for f in self._factors(coords):
            out = out * f
        return out

    def partial(self, k: int, *coords) -> np.ndarray:
        out = self.amplitude
        for m, (x, c, r) in enumerate(zip(coords, self.center, self.radius)):
            z = (np.asarray(x, dtype=np.float64) - c) / r
            out = out * (_bump_dprofile(z) / r if m == k else bump_profile(z))
        return out

    def integral(self) -> float:
        return self.amplitude * math.prod(r * _BUMP_MASS for r in self.radius)

    def box(self) -> list[tuple[float, float]]:
        return [(c - r, c + r) for c, r in zip(self.center, self.radius)]

    def slice(self, t: float) -> "TestFunction":
        """Spatial test function ``phi(t, .)`` of a space-time test function."""
        if self.dim != 3:
            raise ValueError("only space-time test functions can be sliced")
        a = float(bump_profile((t - self.center[0]) / self.radius[0]))
        return TestFunction(self.center[1:], self.radius[1:], self.amplitude * a)

    @cached_property
    def _dprofile_max(self) -> float:
        z = np.linspace(-1, 1, 200001)
        return float(np.max(np.abs(_bump_dprofile(z))))

    def grad_sup(self, spatial_only: bool = True, samples: int = 81) -> float:
        """``sup |D phi|`` (spatial gradient for space-time functions), by dense sampling."""
        ks = range(1, self.dim) if (spatial_only and self.dim == 3) else range(self.dim)
        axes = [np.linspace(c - r, c + r, samples) for c, r in zip(self.center, self.radius)]
        mesh = np.meshgrid(*axes, indexing="ij")
        g2 = sum(self.partial(k, *mesh) ** 2 for k in ks)
        return float(np.sqrt(np.max(g2)))

    def dt_sup(self, samples: int = 81) -> float:
        if self.dim != 3:
            raise ValueError("time derivative of a spatial test function")
        axes = [np.linspace(c - r, c + r, samples) for c, r in zip(self.center, self.radius)]
        return float(np.max(np.abs(self.partial(0, *np.meshgrid(*axes, indexing="ij")))))

    def cell_integrals(self, axis: int, edges: np.ndarray) -> np.ndarray:
        """``int`` of the axis factor over consecutive intervals of ``edges``."""
        c, r = self.center[axis], self.radius[axis]
        return r * np.diff(_bump_antiderivative((np.asarray(edges, dtype=np.float64) - c) / r))


def weak_gap(field: Union[CellField, GridField], level: int, window: Optional[Window] = None):
    """Largest deviation from 1/2 of the level-``level`` cell averages inside ``window``.

    Exact (a :class:`Fraction`) for cell fields.
    """
    if isinstance(field, CellField):
        f = field.restrict(window) if window is not None and window != field.window else field
        avg = cell_averages(f, level) if level <= f.level else f.refine(level)
        dev = np.abs(2 * avg.num - (1 << avg.exp))
        return Fraction(int(dev.max()), 1 << (avg.exp + 1))
    if isinstance(field, GridField):
        if window is not None and window != field.grid.window:
            raise ValueError("restrict the grid field to the window first")
        return float(np.max(np.abs(field.block_means(level) - 0.5)))
    raise TypeError(f"weak_gap of {type(field).__name__}")


def _field_window(f) -> Window:
    return f.window if isinstance(f, CellField) else f.grid.window


def pair(field, phi: TestFunction) -> float:
    """``int phi * field`` over the plane; cell fields are integrated cell by cell."""
    if phi.dim != 2:
        raise ValueError("pair() takes a spatial test function")
    win = _field_window(field)
    (ax, bx), (ay, by) = phi.box()
    if ax < win.x0 or bx > win.x1 or ay < win.y0 or by > win.y1:
        raise ValueError("test function support escapes the field window")
    if isinstance(field, CellField):
        n = field.shape[0]
        s = float(Fraction(1, 2**field.level))
        ex = float(win.x0) + s * np.arange(n + 1)
        ey = float(win.y0) + s * np.arange(n + 1)
        gx, gy = phi.cell_integrals(0, ex), phi.cell_integrals(1, ey)
        return float(phi.amplitude * (gx @ field.values @ gy))
    if isinstance(field, GridField):
        X, Y = field.grid.mesh()
        return float(np.sum(field.values * phi(X, Y)) * field.h**2)
    raise TypeError(f"pair of {type(field).__name__}")


def _density_and_spec(source, spec):
    if isinstance(source, BranchSolution):
        return (lambda t, X, Y: branch_density(source, t, X, Y)), (spec or source.spec())
    if spec is None:
        raise ValueError("a density callable needs an explicit field spec")
    return source, spec


def weak_residual(source, phi: TestFunction, h, tau=None, spec: Optional[FieldSpec] = None,
                  initial: Optional[Callable] = None) -> float:
    """``|int int rho (d_t phi + b . grad phi) dx dt + int rho_in phi(0, .) dx|`` by the midpoint rule.

    ``source`` is a :class:`BranchSolution` or a density callable
    ``(t, x1, x2) -> values``; space is sampled at cell centres of spacing
    ``h`` and time at midpoints of spacing ``tau`` (default ``h``).
    """
    if phi.dim != 3:
        raise ValueError("weak_residual needs a space-time test function")
    density, spec = _density_and_spec(source, spec)
    h = float(h)
    tau = h if tau is None else float(tau)
    initial = initial or (lambda X, Y: rho_in_array(X, Y))
    (ta, tb), (xa, xb), (ya, yb) = phi.box()
    ax = (np.arange(math.floor(xa / h), math.ceil(xb / h)) + 0.5) * h
    ay = (np.arange(math.floor(ya / h), math.ceil(yb / h)) + 0.5) * h
    X, Y = np.meshgrid(ax, ay, indexing="ij")
    k0, k1 = max(0, math.floor(ta / tau)), math.ceil(tb / tau)
    total = 0.0
    for k in range(k0, k1):
        t = (k + 0.5) * tau
        rho = density(t, X, Y)
        b1, b2 = field_array(spec, t, X, Y)
        integrand = phi.partial(0, t, X, Y) + b1 * phi.partial(1, t, X, Y) + b2 * phi.partial(2, t, X, Y)
        total += float(np.sum(rho * integrand)) * h * h * tau
    if ta < 0:
        total += float(np.sum(initial(X, Y) * phi(0.0, X, Y))) * h * h
    return abs(total)


@dataclass(frozen=True)
class GluingCheck:
    beta: Fraction
    residual: float
    matching: float
    time_term: float
    field_term: float

    @property
    def bound(self) -> float:
        return self.matching + self.time_term + self.field_term

    @property
    def linear_part(self) -> float:
        return self.time_term + self.field_term


def gluing_experiment(branch: BranchSolution, phi: TestFunction, beta, level: int,
                      window: Optional[Window] = None) -> GluingCheck:
    """Residual of the solution glued from the mixing part on ``[0, 1-beta]`` and ``branch`` on ``[1+beta, 2]``.

    For exact weak solutions on both sides the residual reduces to
    ``int rho(1-beta) phi(1-beta) - int rho(1+beta) phi(1+beta)``; it is
    compared with the matching term plus the two terms linear in ``beta``.
    """
    beta = as_dyadic(beta)
    window = window or Window.square(1)
    t1, t2 = 1 - beta, 1 + beta
    mix = BranchSolution("prime")
    rho1 = branch_snapshot(mix, t1, level, window)
    rho2 = branch_snapshot(branch, t2, level, window)
    s1, s2 = phi.slice(float(t1)), phi.slice(float(t2))
    residual = abs(pair(rho1, s1) - pair(rho2, s2))
    matching = abs(pair(rho1, s1) - pair(rho2, s1))
    (xa, xb), (ya, yb) = phi.box()[1:]
    box = (xb - xa) * (yb - ya)
    # L1 norms over the spatial support of phi; densities lie in [0, 1]
    l1_rho2 = box * float(np.max(rho2.values))
    l1_rho = box
    time_term = 2 * float(beta) * phi.dt_sup() * l1_rho2
    field_term = 2 * float(beta) * phi.grad_sup() * SUP_BOUND * l1_rho
    return GluingCheck(beta, residual, matching, time_term, field_term)


# --- total variation -------------------------------------------------------

_W_QUADRANT_L1 = Fraction(1, 3)  # int |w| over one quadrant of the unit cell
_W_QUADRANT_GRAD = 1             # int |Dw| (Frobenius) over one quadrant: 4 * 1/4
_W_QUADRANT_DIAG = 1             # int_0^{1/2} 4 sqrt(2) a * sqrt(2) da
_W_HALF_EDGE = 1                 # jump |w| = 2 along a half edge of length 1/2


def w_l1_norm(epsabs: float = 1e-10) -> float:
    """``int |w|`` over the unit cell by adaptive quadrature (four congruent triangles)."""
    val, _ = integrate.dblquad(lambda x2, x1: 4.0 * abs(x1), 0.0, 0.5, lambda x1: -x1, lambda x1: x1,
                               epsabs=epsabs)
    return 4 * val


def _quadrants(scale: int, region: Window, active_N: Optional[int] = None):
    """Filled quadrants of ``u(2**scale .)`` lying in ``region``, with their outer half edges."""
    s = Fraction(1, 2**scale)
    q = s / 2
    for v in (region.x0, region.y0, region.side):
        if (v / q).denominator != 1:
            raise ValueError("region must be aligned to the vortex quadrants")
    ks = range(math.floor(region.x0 / s) - 1, math.ceil(region.x1 / s) + 2)
    ls = range(math.floor(region.y0 / s) - 1, math.ceil(region.y1 / s) + 2)
    for k in ks:
        for l in ls:
            if (k + l) % 2:
                continue
            if active_N is not None and (abs(k) > active_N * 2**scale or abs(l) > active_N * 2**scale):
                continue
            cx, cy = k * s, l * s
            for sx in (-1, 1):
                for sy in (-1, 1):
                    x_lo, x_hi = sorted((cx, cx + sx * q))
                    y_lo, y_hi = sorted((cy, cy + sy * q))
                    if not (region.x0 <= x_lo and x_hi <= region.x1 and region.y0 <= y_lo and y_hi <= region.y1):
                        continue
                    ex, ey = cx + sx * q, cy + sy * q
                    # outer half edges lie on the lines x = ex and y = ey; count them when inside the open region
                    edges = int(region.x0 < ex < region.x1) + int(region.y0 < ey < region.y1)
                    yield edges


def l1_norm_exact(scale: int, region: Window = UNIT_BOX) -> Fraction:
    """``int_region |u(2**scale x)| dx`` exactly."""
    n = sum(1 for _ in _quadrants(scale, region))
    return n * _W_QUADRANT_L1 / 4**scale


def tv_norm(obj, region: Window = UNIT_BOX, periodic: Optional[bool] = None):
    """Total variation ``|Du|(region)`` of ``u(2**scale .)`` (exact) or of a grid field.

    Exact layouts count the absolutely continuous part, the jumps across the
    diagonals and the jumps across vortex edges inside the open region.
    """
    from tnl.fields import VortexLayout

    if isinstance(obj, VortexLayout):
        total = 0
        for edges in _quadrants(obj.scale, region, obj.active_N):
            total += _W_QUADRANT_GRAD + _W_QUADRANT_DIAG + edges * _W_HALF_EDGE
        return Fraction(total, 2**obj.scale)
    if isinstance(obj, GridField):
        return grid_tv(obj, periodic)
    raise TypeError(f"tv_norm of {type(obj).__name__}")


def bv_norm(obj, region: Window = UNIT_BOX):
    """``||u||_L1 + |Du|`` on ``region``."""
    from tnl.fields import VortexLayout

    if isinstance(obj, VortexLayout):
        return l1_norm_exact(obj.scale, region) + tv_norm(obj, region)
    v = obj.values if obj.values.ndim == 3 else obj.values[None]
    l1 = float(np.sum(np.sqrt(np.sum(v**2, axis=0)))) * obj.h**2
    return l1 + grid_tv(obj)


def grid_tv(field: GridField, periodic: Optional[bool] = None) -> float:
    """``sum |D_h f| h**2`` with centred differences and the Frobenius norm over components.

    Centred differences see a jump along a diagonal at its true size, where
    one-sided differences overcount it by a factor sqrt(2).
    """
    periodic = field.grid.periodic if periodic is None else periodic
    v = field.values if field.values.ndim == 3 else field.values[None]
    h = field.h
    sq = np.zeros(v.shape[1:])
    for comp in v:
        for ax in (0, 1):
            if periodic:
                d = (np.roll(comp, -1, axis=ax) - np.roll(comp, 1, axis=ax)) / (2 * h)
            else:
                d = np.zeros_like(comp)
                sl = [slice(None)] * 2
                lo, hi, mid = list(sl), list(sl), list(sl)
                lo[ax], hi[ax], mid[ax] = slice(None, -2), slice(2, None), slice(1, -1)
                d[tuple(mid)] = (comp[tuple(hi)] - comp[tuple(lo)]) / (2 * h)
            sq += d * d
    return float(np.sum(np.sqrt(sq))) * h * h


# --- fractional seminorm ---------------------------------------------------

@dataclass(frozen=True)
class GagliardoEstimate:
    value: float
    stderr: float
    shells: tuple
    tail: float
    samples: int


def stage_pair(i: int) -> tuple[tuple[float, float], tuple[float, float]]:
    """The forward and mirrored stage intervals of scale ``i``."""
    return (1 - 2.0**-i, 1 - 2.0 ** -(i + 1)), (1 + 2.0 ** -(i + 1), 1 + 2.0**-i)


def windowed_field(i: int, spec: Optional[FieldSpec] = None) -> Callable:
    """``z = (t, x1, x2) -> b(t, x) * 1_{I_i}(t)`` as a vectorised callable."""
    spec = spec or FieldSpec()
    (a1, b1), (a2, b2) = stage_pair(i)

    def f(t, x1, x2):
        on = ((t > a1) & (t < b1)) | ((t > a2) & (t < b2))
        v1, v2 = field_array(spec, np.where(on, t, -1.0), x1, x2)
        return v1, v2

    return f


def _unit_sphere(rng, n, d):
    g = rng.standard_normal((n, d))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def gagliardo_seminorm(f: Callable, s: float, lows: Sequence[float], highs: Sequence[float],
                       budget: int = 10**6, seed: int = 0, min_shell: Optional[int] = None,
                       chunk: int = 200_000) -> GagliardoEstimate:
    """Monte Carlo estimate of ``int int |f(z) - f(z')| / |z - z'|**(d + s)`` over a box.

    Pairs are stratified by the dyadic shell ``2**-(k+1) <= |z - z'| < 2**-k``;
    within a shell the radius is drawn with density proportional to
    ``r**(-1-s)`` so each sample carries the same weight.  Shells below
    ``min_shell`` are added as the geometric tail ``q / (1 - q)`` times the
    last shell, ``q = 2**-(1-s)``, which is their exact ratio for a
    function of bounded variation at scales below its finest feature.
    """
    if not 0 < s < 1:
        raise ValueError("s must lie in (0, 1)")
    lows, highs = np.asarray(lows, float), np.asarray(highs, float)
    d = lows.size
    vol = float(np.prod(highs - lows))
    diam = float(np.linalg.norm(highs - lows))
    k_top = -math.ceil(math.log2(diam))
    k_bot = min_shell if min_shell is not None else k_top + 12
    ks = list(range(k_top, k_bot + 1))
    per = max(1, budget // len(ks))
    area = 2 * math.pi ** (d / 2) / math.gamma(d / 2)  # surface of the unit sphere
    rng = np.random.Generator(np.random.Philox(seed))
    shells, variances = [], []
    for k in ks:
        a = 2.0**-(k + 1)
        norm = a**-s * (1 - 2.0**-s) / s  # int_a^{2a} r**(-1-s) dr
        acc = acc2 = 0.0
        done = 0
        while done < per:
            m = min(chunk, per - done)
            z = lows + (highs - lows) * rng.random((m, d))
            u = rng.random(m)
            r = (a**-s - u * (a**-s - (2 * a) ** -s)) ** (-1.0 / s)
            zp = z + r[:, None] * _unit_sphere(rng, m, d)
            inside = np.all((zp >= lows) & (zp <= highs), axis=1)
            fa = f(*(z[:, c] for c in range(d)))
            fb = f(*(zp[:, c] for c in range(d)))
            fa = fa if isinstance(fa, tuple) else (fa,)
            fb = fb if isinstance(fb, tuple) else (fb,)
            diff = np.sqrt(sum((p - q) ** 2 for p, q in zip(fa, fb)))
            val = np.where(inside, diff, 0.0) * (vol * area * norm)
            acc += float(np.sum(val))
            acc2 += float(np.sum(val * val))
            done += m
        mean = acc / per
        shells.append(mean)
        variances.append(max(acc2 / per - mean * mean, 0.0) / per)
    q = 2.0 ** -(1 - s)
    tail = shells[-1] * q / (1 - q)
    total = sum(shells) + tail
    # the tail is a multiple of the last shell and inherits its error
    err = math.sqrt(sum(variances[:-1]) + (1 + q / (1 - q)) ** 2 * variances[-1])
    return GagliardoEstimate(total, err, tuple(shells), tail, per * len(ks))


def interpolation_exponent(s: float, sigma: float) -> float:
    """Integrability exponent ``p`` with ``1/p = s/sigma`` for interpolating ``L^inf`` and ``W^{sigma,1}``."""
    if not 0 < s < sigma < 1:
        raise ValueError("need 0 < s < sigma < 1")
    return sigma / s


def log2_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Least-squares slope of ``log2(ys)`` against ``xs``."""
    x = np.asarray(xs, float)
    y = np.log2(np.asarray(ys, float))
    return float(np.polyfit(x, y, 1)[0])


@dataclass
class NormReport:
    s: float
    rows: list = field(default_factory=list)
    sigma: Optional[float] = None

    @property
    def slope(self) -> float:
        return log2_slope([r["i"] for r in self.rows], [r["Ws1"] for r in self.rows])

    @property
    def p(self) -> Optional[float]:
        return None if self.sigma is None else interpolation_exponent(self.s, self.sigma)

    def gn_ratios(self) -> list[float]:
        """Seminorm over the interpolation bound ``L1**(1-s) * BV**s`` for each row."""
        return [r["Ws1"] / (r["L1"] ** (1 - self.s) * r["BV"] ** self.s) for r in self.rows]

    def csv_rows(self):
        slope = self.slope if len(self.rows) > 1 else float("nan")
        return [(r["i"], r["L1"], r["BV"], r["Ws1"], r["stderr"], slope) for r in self.rows]


def windowed_norms(i: int, region: Window = UNIT_BOX) -> tuple[float, float]:
    """Exact ``L1`` and space-time ``BV`` norms of ``b 1_{I_i}`` on ``[0, 2] x region``.

    The BV norm counts the spatial variation over both stage intervals and the
    jumps in time at their four endpoints.
    """
    from tnl.fields import VortexLayout

    length = 2 * 2.0 ** -(i + 1)
    l1_space = float(l1_norm_exact(i, region))
    tv_space = float(tv_norm(VortexLayout(i), region))
    l1 = length * l1_space
    bv = l1 + length * tv_space + 4 * l1_space
    return l1, bv


def norm_report(i_list: Sequence[int], s: float = 0.5, budget: int = 10**7, seed: int = 0,
                sigma: Optional[float] = None, region: Window = UNIT_BOX) -> NormReport:
    rep = NormReport(s, sigma=sigma)
    lows = [0.0, float(region.x0), float(region.y0)]
    highs = [2.0, float(region.x1), float(region.y1)]
    for i in i_list:
        est = gagliardo_seminorm(windowed_field(i), s, lows, highs, budget=budget, seed=seed + i,
                                 min_shell=i + 8)
        l1, bv = windowed_norms(i, region)
        rep.rows.append({"i": i, "L1": l1, "BV": bv, "Ws1": est.value, "stderr": est.stderr})
    return rep
