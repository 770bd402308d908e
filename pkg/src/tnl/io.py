"""Writers and readers for grid dumps, grayscale images and CSV tables."""
from __future__ import annotations

import csv
import io
import struct
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from tnl.dyadic import CellField, Window
from tnl.mollify import Grid, GridField

__all__ = [
    "dumps_gridfield",
    "loads_gridfield",
    "write_gridfield",
    "read_gridfield",
    "pgm_bytes",
    "write_pgm",
    "csv_text",
    "write_csv",
]

MAGIC = b"GF01"
_HEADER = struct.Struct("<4sIII3d")


def dumps_gridfield(field: GridField) -> bytes:
    """``GF01``, uint32 ``nx ny ncomp``, float64 ``x0 y0 h``, then little-endian float64 values.

    Values are written component by component, each as rows of constant ``iy``
    (x varying fastest within a row).
    """
    v = field.values if field.values.ndim == 3 else field.values[None]
    ncomp, nx, ny = v.shape
    x0, y0 = field.origin
    head = _HEADER.pack(MAGIC, nx, ny, ncomp, x0, y0, field.h)
    body = np.ascontiguousarray(v.transpose(0, 2, 1), dtype="<f8").tobytes()
    return head + body


def loads_gridfield(blob: bytes, periodic: bool = True) -> GridField:
    magic, nx, ny, ncomp, x0, y0, h = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise ValueError("not a GF01 grid dump")
    if nx != ny:
        raise ValueError("only square grids are supported")
    vals = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size, count=ncomp * nx * ny)
    vals = vals.reshape(ncomp, ny, nx).transpose(0, 2, 1).astype(np.float64)
    hq = Fraction(h)
    win = Window(Fraction(x0), Fraction(y0), hq * nx)
    grid = Grid(win, hq, periodic and win.is_torus())
    return GridField(grid, vals[0] if ncomp == 1 else vals)


def write_gridfield(path, field: GridField) -> Path:
    path = Path(path)
    path.write_bytes(dumps_gridfield(field))
    return path


def read_gridfield(path) -> GridField:
    return loads_gridfield(Path(path).read_bytes())


def _scalar_image(field) -> np.ndarray:
    if isinstance(field, CellField):
        return field.values
    if isinstance(field, GridField):
        if field.ncomp != 1:
            raise ValueError("images are written for scalar fields")
        return field.values
    return np.asarray(field, dtype=np.float64)


def pgm_bytes(field) -> bytes:
    """Binary PGM (P5, maxval 255): values clamped to [0, 1], scaled by 255, rounded half to even.

    The first image row is the top of the domain (largest y).
    """
    v = _scalar_image(field)
    g = np.rint(np.clip(v, 0.0, 1.0) * 255.0).astype(np.uint8)
    img = g.T[::-1]
    h, w = img.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(img).tobytes()


def write_pgm(path, field) -> Path:
    path = Path(path)
    path.write_bytes(pgm_bytes(field))
    return path


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, Fraction):
        return str(v)
    return str(v)


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        fh.write(csv_text(header, rows))
    return path
