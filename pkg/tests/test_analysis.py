from fractions import Fraction as F

import numpy as np
import pytest

from tnl.analysis import (
    TestFunction,
    bv_norm,
    gagliardo_seminorm,
    gluing_experiment,
    grid_tv,
    interpolation_exponent,
    l1_norm_exact,
    log2_slope,
    pair,
    tv_norm,
    weak_gap,
    weak_residual,
)
from tnl.analysis import windowed_norms
from tnl.dyadic import Window, checkerboard, constant_field
from tnl.exact import BranchSolution, branch_snapshot
from tnl.fields import FieldSpec, VortexLayout, u_array
from tnl.mollify import Grid, GridField

Q1 = Window.square(1)


def test_weak_gap_values():
    assert weak_gap(checkerboard(4, Q1), 3) == 0
    assert weak_gap(checkerboard(0, Q1), 0) == F(1, 2)
    assert weak_gap(constant_field(2, Q1, F(3, 4)), 1) == F(1, 4)
    g = Grid.square(1, F(1, 8))
    assert weak_gap(GridField(g, np.full((16, 16), 0.5)), 0) == 0.0


def test_test_function_integrals():
    phi = TestFunction((0.1, -0.2), (0.3, 0.4))
    x = np.linspace(-1, 1, 4001)
    X, Y = np.meshgrid(x, x, indexing="ij")
    assert phi.integral() == pytest.approx(float(np.sum(phi(X, Y))) * (x[1] - x[0]) ** 2, rel=1e-6)
    parts = phi.cell_integrals(0, np.linspace(-0.2, 0.4, 7))
    assert np.sum(parts) == pytest.approx(phi.cell_integrals(0, np.array([-0.2, 0.4]))[0], rel=1e-13)
    full = phi.cell_integrals(0, np.array([-1.0, 1.0]))[0]
    assert full * phi.cell_integrals(1, np.array([-1.0, 1.0]))[0] == pytest.approx(phi.integral(), rel=1e-12)


def test_pair_constant_and_escape():
    phi = TestFunction((0.1, -0.2), (0.3, 0.4))
    assert pair(constant_field(3, Q1, F(1, 2)), phi) == pytest.approx(0.5 * phi.integral(), rel=1e-13)
    with pytest.raises(ValueError):
        pair(checkerboard(0, Q1), TestFunction((0.9, 0.0), (0.3, 0.3)))


def test_pairing_decays_for_truncated_branch():
    phi = TestFunction((0.05, 0.11), (0.6, 0.55))
    dev = [abs(pair(branch_snapshot(BranchSolution("trunc", 1, i), 2, 2 * i), phi) - 0.5 * phi.integral())
           for i in (1, 2, 3)]
    assert dev[2] < dev[1] < dev[0]


def test_residual_of_still_constant_density():
    phi = TestFunction((1.0, 0.1, -0.1), (0.4, 0.4, 0.4))
    const = lambda t, X, Y: np.full(np.shape(X), 0.5)
    # d_t phi integrates to zero and b is divergence free
    res = weak_residual(const, phi, 1 / 64, spec=FieldSpec(), initial=lambda X, Y: 0.5 * np.ones_like(X))
    assert res < 1e-3


def test_residual_decreases_with_refinement():
    phi = TestFunction((0.3, 0.1, -0.2), (0.4, 0.35, 0.3))
    r = [weak_residual(BranchSolution("prime"), phi, 2.0**-m) for m in (5, 7)]
    assert r[1] < r[0] / 2


def test_gluing_bound():
    phi = TestFunction((0.93, 0.1, -0.15), (0.5, 0.4, 0.35))
    a = gluing_experiment(BranchSolution("tilde"), phi, F(1, 8), 4)
    b = gluing_experiment(BranchSolution("tilde"), phi, F(1, 16), 5)
    assert a.residual <= a.bound and b.residual <= b.bound
    assert b.linear_part == pytest.approx(a.linear_part / 2, rel=1e-12)


def test_exact_norms_of_vortex_tiling():
    # the unit box holds one whole vortex; its boundary edges are not counted
    assert l1_norm_exact(0) == F(4, 3)
    assert tv_norm(VortexLayout(0)) == 8
    assert tv_norm(VortexLayout(2)) == 2 * tv_norm(VortexLayout(1))
    assert bv_norm(VortexLayout(1)) == l1_norm_exact(1) + tv_norm(VortexLayout(1))
    l1, bv = windowed_norms(2)
    assert l1 == pytest.approx(2 * 2.0**-3 * float(l1_norm_exact(2)))
    assert bv > l1


def test_grid_tv_approaches_exact():
    g = Grid.square(1, F(1, 256))
    X, Y = g.mesh()
    tv = grid_tv(GridField(g, np.stack(u_array(X, Y, 1))))
    exact = float(tv_norm(VortexLayout(1), Q1))
    assert tv == pytest.approx(exact, rel=0.03)
    assert grid_tv(GridField(g, np.ones((512, 512)))) == 0


def test_gagliardo_basics():
    zero = gagliardo_seminorm(lambda a, b: 0 * a, 0.5, [0, 0], [1, 1], budget=2000)
    assert zero.value == 0
    with pytest.raises(ValueError):
        gagliardo_seminorm(lambda a, b: a, 1.0, [0, 0], [1, 1])
    step = lambda a, b: (a > 0.5).astype(float)
    e1 = gagliardo_seminorm(step, 0.5, [0, 0], [1, 1], budget=40000, seed=1)
    e2 = gagliardo_seminorm(step, 0.5, [0, 0], [1, 1], budget=40000, seed=1)
    assert e1 == e2 and e1.value > 0 and e1.stderr < e1.value


def test_interpolation_exponent_and_slope():
    assert interpolation_exponent(0.5, 0.75) == pytest.approx(1.5)
    assert interpolation_exponent(0.5, 0.5 + 1e-9) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        interpolation_exponent(0.6, 0.5)
    assert log2_slope([1, 2, 3], [8, 4, 2]) == pytest.approx(-1)
