from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tnl.dyadic import CellField, Window, checkerboard, constant_field
from tnl.exact import (
    BranchSolution,
    ExactnessError,
    StagePermutation,
    apply_stage,
    branch_density,
    branch_snapshot,
    evolve_exact,
    exact_point_flow,
    lifted_snapshot,
    pullback_to_start,
    vortex_flow,
)
from tnl.fields import FieldSpec, truncate_time

Q1 = Window.square(1)
Q2 = Window.square(2)


def test_first_stage_refines_and_inverts():
    rho = apply_stage(checkerboard(0, Q2).refine(1), StagePermutation(0))
    assert rho == checkerboard(1, Q2).complement()


def test_constant_fields_are_fixed():
    c = constant_field(3, Q1, F(3, 8))
    for scale in range(3):
        assert apply_stage(c, StagePermutation(scale, -1)) == c


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2), st.sampled_from([1, -1]), st.data())
def test_four_quarter_turns_are_identity(scale, sign, data):
    level = scale + 2
    n = Q1.ncells(level)
    num = np.array(data.draw(st.lists(st.integers(0, 7), min_size=n * n, max_size=n * n))).reshape(n, n)
    f = CellField(level, Q1, num, 3)
    g = f
    for _ in range(4):
        g = apply_stage(g, StagePermutation(scale, sign))
    assert g == f
    back = apply_stage(apply_stage(f, StagePermutation(scale, sign)), StagePermutation(scale, -sign))
    assert back == f


def test_stage_needs_fine_enough_level():
    with pytest.raises(ValueError):
        apply_stage(checkerboard(1, Q1), StagePermutation(1))


@pytest.mark.parametrize("t,expected", [
    (1 - F(1, 16), lambda: checkerboard(4, Q1)),
    (1 - F(1, 8), lambda: checkerboard(3, Q1).complement()),
])
def test_cascade(t, expected):
    assert evolve_exact(checkerboard(0, Q1).refine(5), FieldSpec(), t) == expected()


def test_untruncated_interior_time_is_rejected():
    with pytest.raises(ValueError):
        evolve_exact(checkerboard(0, Q1).refine(4), FieldSpec(), F(1, 4))


def test_truncated_variants_at_the_end():
    for i in (1, 2):
        b2 = branch_snapshot(BranchSolution("trunc", 2, i), 2, 2 * i)
        assert b2 == checkerboard(0, Q1)
        mid = branch_snapshot(BranchSolution("trunc", 2, i), 1 + F(1, 4**i), 2 * i)
        assert mid == checkerboard(2 * i, Q1)


def test_branches_after_one():
    assert branch_snapshot(BranchSolution("prime"), F(3, 2), 3) == constant_field(3, Q1, F(1, 2))
    assert branch_snapshot(BranchSolution("tilde"), 2, 3) == checkerboard(0, Q1)
    assert branch_snapshot(BranchSolution("tilde"), F(9, 8), 4) == checkerboard(3, Q1).complement()


def test_snapshot_on_sub_window():
    win = Window(0, 0, F(1, 2))
    full = branch_snapshot(BranchSolution("trunc", 1, 1), F(1, 2), 2)
    assert branch_snapshot(BranchSolution("trunc", 1, 1), F(1, 2), 2, win) == full.restrict(win)


def test_point_flow_quarter_turn_and_centre():
    spec = FieldSpec()
    out = exact_point_flow(spec, 0, F(1, 2), np.array([0.25, 0.0]))
    assert np.allclose(out, [0.0, 0.25], atol=1e-15)
    assert np.array_equal(exact_point_flow(spec, 0, 0.3, np.zeros(2)), np.zeros(2))


def test_vortex_full_revolution():
    x = np.random.default_rng(0).uniform(-0.5, 0.5, (200, 2))
    assert np.allclose(vortex_flow(x, 0, 1, 2.0), x, atol=1e-14)


def test_point_flow_rejects_cross_stage_interval():
    with pytest.raises(ExactnessError):
        exact_point_flow(FieldSpec(), 0.25, 0.6, np.array([0.1, 0.2]))


def test_pullback_matches_snapshot():
    rng = np.random.default_rng(3)
    x = rng.uniform(-1, 1, (500, 2))
    snap = branch_snapshot(BranchSolution("prime"), F(7, 8), 4)
    dens = branch_density(BranchSolution("prime"), 7 / 8, x[:, 0], x[:, 1])
    expected = [float(snap.value_at(p)) for p in x]
    assert np.array_equal(dens, expected)
    y = pullback_to_start(truncate_time(FieldSpec(), 1, 2), 2.0, x)
    assert np.allclose(y, x, atol=1e-13)


def test_lifted_slices():
    prime = lifted_snapshot(BranchSolution("prime"), F(5, 2), 3)
    tilde = lifted_snapshot(BranchSolution("tilde"), F(5, 2), 3)
    assert prime(F(9, 4)) == constant_field(3, Q1, F(1, 2))
    assert tilde(F(9, 4)) == checkerboard(0, Q1)
    assert prime(F(1)) == constant_field(3, Q1, 0)
    start = lifted_snapshot(BranchSolution("tilde"), 0, 3)
    assert start(F(-1, 2)) == checkerboard(0, Q1)


def test_branch_names():
    assert BranchSolution.parse("trunc2", 3) == BranchSolution("trunc", 2, 3)
    assert BranchSolution("trunc", 1, 2).label == "trunc1"
    with pytest.raises(ValueError):
        BranchSolution("trunc", 3, 1)
