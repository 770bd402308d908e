import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tnl import _pykernels, kernels

try:
    from tnl import _ckernels
except ImportError:
    _ckernels = None

compiled = pytest.mark.skipif(_ckernels is None, reason="extension not built")


def test_backend_name():
    assert kernels.BACKEND in ("cython", "python")


def test_bilinear_reproduces_linear_functions():
    n = 16
    i, j = np.meshgrid(np.arange(n, dtype=float), np.arange(n, dtype=float), indexing="ij")
    v = 2 * i - 3 * j + 1
    px, py = np.array([3.25, 7.5]), np.array([4.75, 0.5])
    out = _pykernels.bilinear(v, px, py, periodic=False)
    assert np.allclose(out, 2 * px - 3 * py + 1)


def test_zero_outside_non_periodic_grid():
    v = np.ones((4, 4))
    out = _pykernels.bilinear(v, np.array([-2.0, 1.5, 5.0]), np.array([1.0, 1.5, 1.0]), periodic=False)
    assert out.tolist() == [0.0, 1.0, 0.0]


def test_periodic_wraps():
    v = np.arange(16, dtype=float).reshape(4, 4)
    assert _pykernels.bilinear(v, np.array([4.0]), np.array([5.0]), True)[0] == v[0, 1]


def test_still_field_has_identity_feet():
    z = np.zeros((2, 8, 8))
    fx, fy = _pykernels.rk4_feet(z, z, z, 0.1)
    assert np.array_equal(fx, np.arange(8.0)[:, None] * np.ones(8))
    assert np.array_equal(fy, np.ones(8)[:, None] * np.arange(8.0))


@compiled
@settings(max_examples=20, deadline=None)
@given(st.integers(2, 12), st.booleans(), st.integers(0, 2**32 - 1))
def test_backends_agree_bitwise(n, periodic, seed):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((n, n))
    px, py = rng.uniform(-3, n + 3, (2, 50))
    assert np.array_equal(_pykernels.bilinear(v, px, py, periodic), _ckernels.bilinear(v, px, py, periodic))
    vel = rng.standard_normal((3, 2, n, n)) * n
    a = _pykernels.rk4_feet(vel[0], vel[1], vel[2], 0.01, periodic)
    b = _ckernels.rk4_feet(vel[0], vel[1], vel[2], 0.01, periodic)
    assert all(np.array_equal(p, q) for p, q in zip(a, b))
