"""Dyadic lattices, square subdivisions and exact piecewise-constant densities.

Two families of lattices live here.  The parity-1 lattice at level ``j`` is
``2**-j * Z**2``; the parity-2 lattice is the same grid shifted by half a
cell in both directions.  Squares of one family are centred on points of the
other.

Densities at dyadic times are stored as :class:`CellField` objects holding
integer numerators over a common power-of-two denominator, so averaging and
block permutations are exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "AlignmentError",
    "DyadicSquare",
    "Window",
    "CellField",
    "as_dyadic",
    "is_dyadic",
    "format_dyadic",
    "parse_dyadic",
    "cell_of",
    "checkerboard",
    "constant_field",
    "cell_averages",
    "dumps_cellfield",
    "loads_cellfield",
]


class AlignmentError(ValueError):
    """A window or level is not compatible with the requested dyadic grid."""


def is_dyadic(q: Fraction) -> bool:
    d = q.denominator
    return d & (d - 1) == 0


def as_dyadic(value) -> Fraction:
    """Convert ``value`` to an exact dyadic :class:`Fraction`.

    Floats are converted exactly; strings go through :func:`parse_dyadic`.
    """
    if isinstance(value, str):
        return parse_dyadic(value)
    q = Fraction(value)
    if not is_dyadic(q):
        raise ValueError(f"{value!r} is not a dyadic rational")
    return q


def parse_dyadic(text: str) -> Fraction:
    """Parse ``'p/2^q'``, ``'2^-m'``, ``'p/d'`` (``d`` a power of two) or an integer.

    Decimal literals are read exactly (``2.5`` is ``5/2``); non-dyadic ones
    such as ``0.1`` are rejected instead of being rounded.
    """
    s = text.strip().replace(" ", "")
    if not s:
        raise ValueError("empty dyadic literal")
    try:
        if "/" in s:
            num, den = s.split("/", 1)
            p = int(num)
            q = _parse_pow2(den) if "^" in den else Fraction(int(den))
            out = Fraction(p) / q
        elif "^" in s:
            sign = -1 if s.startswith("-") else 1
            out = sign * _parse_pow2(s.lstrip("+-"))
        else:
            out = Fraction(s)
    except (ValueError, ZeroDivisionError) as exc:
        raise ValueError(f"malformed dyadic literal {text!r}") from exc
    if not is_dyadic(out):
        raise ValueError(f"{text!r} is not a dyadic rational")
    return out


def _parse_pow2(s: str) -> Fraction:
    base, exp = s.split("^", 1)
    if base != "2":
        raise ValueError(f"only powers of two are allowed, got {s!r}")
    e = int(exp)
    return Fraction(2) ** e


def format_dyadic(q: Fraction) -> str:
    """Inverse of :func:`parse_dyadic`; integers print bare, others as ``p/2^k``."""
    q = Fraction(q)
    if q.denominator == 1:
        return str(q.numerator)
    return f"{q.numerator}/2^{q.denominator.bit_length() - 1}"


@dataclass(frozen=True)
class DyadicSquare:
    """Square of side ``2**-level`` in the parity-1 or parity-2 subdivision."""

    level: int
    parity: int
    index: tuple[int, int]

    def __post_init__(self):
        if self.level < 0:
            raise ValueError("level must be >= 0")
        if self.parity not in (1, 2):
            raise ValueError("parity must be 1 or 2")

    @property
    def side(self) -> Fraction:
        return Fraction(1, 2**self.level)

    @property
    def offset(self) -> Fraction:
        return self.side / 2 if self.parity == 2 else Fraction(0)

    @property
    def corner(self) -> tuple[Fraction, Fraction]:
        k, l = self.index
        return (self.offset + k * self.side, self.offset + l * self.side)

    @property
    def center(self) -> tuple[Fraction, Fraction]:
        cx, cy = self.corner
        return (cx + self.side / 2, cy + self.side / 2)

    def contains(self, point: Sequence[float]) -> bool:
        cx, cy = self.corner
        s = self.side
        return cx <= point[0] < cx + s and cy <= point[1] < cy + s


def cell_of(point: Sequence[float], level: int, parity: int = 1) -> DyadicSquare:
    """Square of the given subdivision whose half-open extent contains ``point``."""
    scale = 2**level
    shift = Fraction(1, 2) if parity == 2 else 0
    idx = []
    for c in point[:2]:
        if isinstance(c, Fraction):
            idx.append(math.floor(c * scale - shift))
        else:
            # multiplication by a power of two is exact in binary floating point
            idx.append(math.floor(float(c) * scale - float(shift)))
    return DyadicSquare(level, parity, (idx[0], idx[1]))


@dataclass(frozen=True)
class Window:
    """Axis-aligned square ``[x0, x0 + side] x [y0, y0 + side]`` with dyadic corners."""

    x0: Fraction
    y0: Fraction
    side: Fraction

    def __post_init__(self):
        for name in ("x0", "y0", "side"):
            object.__setattr__(self, name, as_dyadic(getattr(self, name)))
        if self.side <= 0:
            raise ValueError("window side must be positive")

    @classmethod
    def square(cls, half_side) -> "Window":
        """The centred window ``Q_N = [-N, N]**2``."""
        n = as_dyadic(half_side)
        return cls(-n, -n, 2 * n)

    @property
    def x1(self) -> Fraction:
        return self.x0 + self.side

    @property
    def y1(self) -> Fraction:
        return self.y0 + self.side

    @property
    def area(self) -> Fraction:
        return self.side * self.side

    def aligned(self, level: int) -> bool:
        s = 2**level
        return all((v * s).denominator == 1 for v in (self.x0, self.y0, self.side))

    def ncells(self, level: int) -> int:
        if not self.aligned(level):
            raise AlignmentError(f"window {self} is not aligned to level {level}")
        return int(self.side * 2**level)

    def first_index(self, level: int) -> tuple[int, int]:
        s = 2**level
        return int(self.x0 * s), int(self.y0 * s)

    def contains_window(self, other: "Window") -> bool:
        return (self.x0 <= other.x0 and self.y0 <= other.y0
                and other.x1 <= self.x1 and other.y1 <= self.y1)

    def is_torus(self) -> bool:
        """True when the window is one or more periods of the 2-periodic construction."""
        return (self.x0.denominator == 1 and self.y0.denominator == 1
                and self.side.denominator == 1 and self.side.numerator % 2 == 0)

    def __str__(self) -> str:
        return f"{format_dyadic(self.x0)} {format_dyadic(self.y0)} {format_dyadic(self.side)}"


class CellField:
    """Piecewise-constant density on the parity-1 cells of one level.

    Values are ``num / 2**exp`` with an integer array ``num`` indexed
    ``[ix, iy]`` (x first, y increasing with the second index).  Instances are
    immutable.
    """

    __slots__ = ("level", "window", "num", "exp")

    def __init__(self, level: int, window: Window, num: np.ndarray, exp: int = 0):
        n = window.ncells(level)
        num = np.asarray(num, dtype=np.int64)
        if num.shape != (n, n):
            raise ValueError(f"expected values of shape {(n, n)}, got {num.shape}")
        if exp < 0:
            raise ValueError("denominator exponent must be >= 0")
        if num.size and (num.min() < 0 or num.max() > (1 << exp)):
            raise ValueError("cell values must lie in [0, 1]")
        if num.flags.writeable:
            num = num.copy()
            num.flags.writeable = False
        self.level = level
        self.window = window
        self.num = num
        self.exp = exp

    @property
    def shape(self) -> tuple[int, int]:
        return self.num.shape

    @property
    def values(self) -> np.ndarray:
        """Float view of the values; exact while ``exp <= 52``."""
        return np.ldexp(self.num.astype(np.float64), -self.exp)

    def normalized(self) -> "CellField":
        """Same values with the smallest possible denominator."""
        num, exp = self.num, self.exp
        while exp > 0 and not np.any(num & 1):
            num = num >> 1
            exp -= 1
        if exp == self.exp:
            return self
        return CellField(self.level, self.window, num, exp)

    def with_exp(self, exp: int) -> "CellField":
        if exp < self.exp:
            raise ValueError("cannot lower the denominator without losing exactness")
        return CellField(self.level, self.window, self.num << (exp - self.exp), exp)

    def value_at(self, point: Sequence[float]) -> Fraction:
        sq = cell_of(point, self.level, 1)
        i0, j0 = self.window.first_index(self.level)
        i, j = sq.index[0] - i0, sq.index[1] - j0
        if not (0 <= i < self.shape[0] and 0 <= j < self.shape[1]):
            raise IndexError(f"point {point} lies outside the window")
        return Fraction(int(self.num[i, j]), 1 << self.exp)

    def complement(self) -> "CellField":
        return CellField(self.level, self.window, (1 << self.exp) - self.num, self.exp)

    def refine(self, level: int) -> "CellField":
        """Represent the same density on a finer level (values repeated)."""
        if level < self.level:
            raise ValueError("refine() only goes to finer levels; use cell_averages")
        r = 1 << (level - self.level)
        num = np.repeat(np.repeat(self.num, r, axis=0), r, axis=1)
        return CellField(level, self.window, num, self.exp)

    def restrict(self, window: Window) -> "CellField":
        if not self.window.contains_window(window):
            raise AlignmentError(f"{window} is not inside {self.window}")
        i0, j0 = self.window.first_index(self.level)
        k0, l0 = window.first_index(self.level)
        n = window.ncells(self.level)
        sl = np.s_[k0 - i0:k0 - i0 + n, l0 - j0:l0 - j0 + n]
        return CellField(self.level, window, self.num[sl], self.exp)

    def multiset(self) -> tuple[np.ndarray, np.ndarray]:
        return np.unique(self.num, return_counts=True)

    def __eq__(self, other) -> bool:
        if not isinstance(other, CellField):
            return NotImplemented
        if self.window != other.window:
            return False
        level = max(self.level, other.level)
        a, b = self.refine(level), other.refine(level)
        e = max(a.exp, b.exp)
        return bool(np.array_equal(a.num << (e - a.exp), b.num << (e - b.exp)))

    def __hash__(self):
        return hash((self.level, self.window, self.exp, self.num.tobytes()))

    def __repr__(self) -> str:
        return f"CellField(level={self.level}, window=[{self.window}], exp={self.exp})"


def _global_indices(level: int, window: Window) -> tuple[np.ndarray, np.ndarray]:
    n = window.ncells(level)
    i0, j0 = window.first_index(level)
    return np.arange(i0, i0 + n), np.arange(j0, j0 + n)


def checkerboard(level: int, window: Window) -> CellField:
    """The chessboard density rescaled by ``2**level``: cell ``(k, l)`` holds ``(k + l) mod 2``."""
    if not window.aligned(level):
        raise AlignmentError(f"window {window} is not aligned to level {level}")
    k, l = _global_indices(level, window)
    return CellField(level, window, (k[:, None] + l[None, :]) & 1, 0)


def constant_field(level: int, window: Window, value) -> CellField:
    q = as_dyadic(value)
    exp = q.denominator.bit_length() - 1
    n = window.ncells(level)
    return CellField(level, window, np.full((n, n), q.numerator, dtype=np.int64), exp)


def cell_averages(field: CellField, target_level: int) -> CellField:
    """Exact means of ``field`` over the parity-1 cells of ``target_level``."""
    if target_level > field.level:
        raise ValueError("target level must not exceed the field level")
    if not field.window.aligned(target_level):
        raise AlignmentError(f"window {field.window} is not aligned to level {target_level}")
    m = field.level - target_level
    r = 1 << m
    n = field.shape[0] // r
    sums = field.num.reshape(n, r, n, r).sum(axis=(1, 3))
    return CellField(target_level, field.window, sums, field.exp + 2 * m).normalized()


def dumps_cellfield(field: CellField) -> str:
    """Text form: a header line then one row per ``iy`` (bottom to top) of ``p/2^q`` values."""
    f = field.normalized()
    lines = [f"cellfield level={f.level} window={f.window}"]
    for iy in range(f.shape[1]):
        lines.append(" ".join(f"{int(p)}/2^{f.exp}" for p in f.num[:, iy]))
    return "\n".join(lines) + "\n"


def loads_cellfield(text: str) -> CellField:
    rows = [ln for ln in text.splitlines() if ln.strip()]
    head = rows[0].split()
    if head[0] != "cellfield" or not head[1].startswith("level=") or not head[2].startswith("window="):
        raise ValueError("not a cellfield document")
    level = int(head[1][len("level="):])
    x0 = parse_dyadic(head[2][len("window="):])
    y0, side = parse_dyadic(head[3]), parse_dyadic(head[4])
    window = Window(x0, y0, side)
    vals = [[parse_dyadic(tok) for tok in row.split()] for row in rows[1:]]
    exp = max((v.denominator.bit_length() - 1 for row in vals for v in row), default=0)
    num = np.array([[int(v * (1 << exp)) for v in row] for row in vals], dtype=np.int64).T
    return CellField(level, window, num, exp)


def iter_cells(field: CellField) -> Iterable[tuple[DyadicSquare, Fraction]]:
    i0, j0 = field.window.first_index(field.level)
    den = 1 << field.exp
    for i in range(field.shape[0]):
        for j in range(field.shape[1]):
            yield DyadicSquare(field.level, 1, (i0 + i, j0 + j)), Fraction(int(field.num[i, j]), den)
