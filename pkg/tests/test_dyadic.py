from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tnl.dyadic import (
    AlignmentError,
    CellField,
    Window,
    cell_averages,
    cell_of,
    checkerboard,
    constant_field,
    dumps_cellfield,
    format_dyadic,
    iter_cells,
    loads_cellfield,
    parse_dyadic,
)

Q1 = Window.square(1)


@pytest.mark.parametrize("text,value", [
    ("3/4", F(3, 4)), ("2^-9", F(1, 512)), ("-2^-3", F(-1, 8)), ("15/2^4", F(15, 16)),
    ("2", F(2)), ("2.5", F(5, 2)), ("-0.125", F(-1, 8)),
])
def test_parse_dyadic(text, value):
    assert parse_dyadic(text) == value


@pytest.mark.parametrize("text", ["0.1", "1/3", "3^2", "", "x", "1/0"])
def test_parse_dyadic_rejects(text):
    with pytest.raises(ValueError):
        parse_dyadic(text)


@given(st.integers(-10**6, 10**6), st.integers(0, 40))
def test_format_roundtrip(p, k):
    q = F(p, 2**k)
    assert parse_dyadic(format_dyadic(q)) == q


def test_cell_of_parities():
    assert cell_of((0.3, -0.1), 1).index == (0, -1)
    sq = cell_of((F(1, 4), F(1, 4)), 1, parity=2)
    assert sq.corner == (F(1, 4), F(1, 4))
    assert sq.contains((0.3, 0.3)) and not sq.contains((0.75, 0.3))


def test_window_geometry():
    w = Window.square(2)
    assert (w.x0, w.x1, w.area) == (-2, 2, 16)
    assert w.ncells(3) == 32 and w.aligned(0) and w.is_torus()
    off = Window(F(1, 8), 0, F(1, 4))
    assert not off.aligned(2) and off.aligned(3)
    assert not off.is_torus()
    assert Q1.contains_window(off)


def test_checkerboard_pattern():
    cb = checkerboard(0, Q1)
    assert cb.values.tolist() == [[0, 1], [1, 0]]
    assert cb.value_at((0.5, 0.5)) == 0 and cb.value_at((-0.5, 0.5)) == 1


def test_equality_across_levels():
    cb = checkerboard(1, Q1)
    assert cb == cb.refine(4)
    assert cb != checkerboard(2, Q1)
    assert cb.refine(3).complement().complement() == cb


def test_averages_of_fine_checkerboard_are_half():
    avg = cell_averages(checkerboard(3, Q1), 2)
    assert np.all(avg.values == 0.5)
    assert avg.level == 2


def test_restrict_needs_alignment():
    f = checkerboard(2, Q1)
    with pytest.raises(AlignmentError):
        f.restrict(Window(F(1, 8), 0, F(1, 2)))
    sub = f.restrict(Window(0, 0, F(1, 2)))
    assert sub.shape == (2, 2)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 4), st.integers(0, 3), st.data())
def test_cellfield_text_roundtrip(level, e, data):
    n = Q1.ncells(level)
    num = np.array(data.draw(st.lists(st.integers(0, 2**e), min_size=n * n, max_size=n * n))).reshape(n, n)
    f = CellField(level, Q1, num, e)
    g = loads_cellfield(dumps_cellfield(f))
    assert g == f and g.level == level


def test_dump_header():
    text = dumps_cellfield(constant_field(1, Q1, F(1, 2)))
    assert text.splitlines()[0] == "cellfield level=1 window=-1 -1 2"


def test_multiset_and_iter_cells():
    f = checkerboard(1, Q1)
    vals, counts = f.multiset()
    assert dict(zip(vals.tolist(), counts.tolist())) == {0.0: 8, 1.0: 8}
    cells = list(iter_cells(checkerboard(0, Q1)))
    assert len(cells) == 4 and sum(v for _, v in cells) == 2
