import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spectradet import kernels

BACKENDS = sorted(kernels.BACKENDS)
shapes = st.tuples(st.integers(1, 4), st.integers(3, 9), st.integers(3, 9),
                   st.integers(1, 3), st.integers(1, 3), st.integers(0, 2))


def test_cython_backend_built():
    # the compiled extension is part of the package; the fallback is for broken builds
    assert "cython" in kernels.BACKENDS
    assert kernels.get_backend() is kernels.BACKENDS[kernels.BACKEND]


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")


@given(shapes, st.integers(0, 2**31))
def test_backends_agree(shape, seed):
    C, H, W, k, s, p = shape
    x = np.random.default_rng(seed).normal(size=(C, H, W))
    ref = kernels.get_backend("python")
    cols = ref.im2col(x, k, k, s, p)
    OH, OW = (H + 2 * p - k) // s + 1, (W + 2 * p - k) // s + 1
    assert cols.shape == (C * k * k, OH * OW)
    g = np.random.default_rng(seed + 1).normal(size=cols.shape)
    back = ref.col2im(g, C, H, W, k, k, s, p)
    for name in BACKENDS:
        mod = kernels.get_backend(name)
        np.testing.assert_array_equal(mod.im2col(x, k, k, s, p), cols)
        np.testing.assert_allclose(mod.col2im(g, C, H, W, k, k, s, p), back, atol=1e-12)


@pytest.mark.parametrize("name", BACKENDS)
@given(shape=shapes, seed=st.integers(0, 2**31))
def test_col2im_is_adjoint(name, shape, seed):
    # <im2col(x), g> == <x, col2im(g)>
    C, H, W, k, s, p = shape
    mod = kernels.get_backend(name)
    r = np.random.default_rng(seed)
    x = r.normal(size=(C, H, W))
    cols = mod.im2col(x, k, k, s, p)
    g = r.normal(size=cols.shape)
    lhs = np.sum(cols * g)
    rhs = np.sum(x * mod.col2im(g, C, H, W, k, k, s, p))
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))
