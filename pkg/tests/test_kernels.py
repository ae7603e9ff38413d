import numpy as np
import pytest
from hypothesis import given, strategies as st

from eqdenoise import kernels
from oracles import bilinear_at, conv2d_loops, maxpool_windows, rel_err


def _case(rng, B, C, O, n, p):
    return rng.standard_normal((B, C, n, n)), rng.standard_normal((O, C, p, p))


@pytest.mark.parametrize("use_numba", [True, False])
@pytest.mark.parametrize("stride,pad", [(1, 0), (1, 1), (2, 1), (2, 0)])
def test_conv_forward_matches_loops(rng, use_numba, stride, pad):
    x, w = _case(rng, 2, 3, 2, 8, 3)
    got = kernels.conv2d_forward(x, w, stride, pad, use_numba=use_numba)
    np.testing.assert_allclose(got, conv2d_loops(x, w, stride, pad), rtol=1e-12, atol=1e-12)


def test_fft_path_matches_loops(rng):
    x, w = _case(rng, 1, 2, 2, 12, 7)
    assert kernels._use_fft(1, 7, 7)
    got = kernels.conv2d_forward(x, w, 1, 3)
    np.testing.assert_allclose(got, conv2d_loops(x, w, 1, 3), atol=1e-11)


@pytest.mark.parametrize("p,stride,pad", [(3, 1, 1), (3, 2, 1), (7, 1, 3), (5, 1, 2)])
def test_conv_gradients_are_adjoint(rng, p, stride, pad):
    # <conv(x, w), g> = <x, grad_input(g)> = <w, grad_weight(x, g)>
    x, w = _case(rng, 2, 2, 3, 10, p)
    y = kernels.conv2d_forward(x, w, stride, pad)
    g = rng.standard_normal(y.shape)
    inner = np.sum(y * g)
    for use in (True, False):
        gx = kernels.conv2d_grad_input(g, w, x.shape[-2:], stride, pad, use_numba=use)
        gw = kernels.conv2d_grad_weight(x, g, w.shape[-2:], stride, pad, use_numba=use)
        assert np.sum(x * gx) == pytest.approx(inner, rel=1e-10)
        assert np.sum(w * gw) == pytest.approx(inner, rel=1e-10)


@given(st.integers(1, 3), st.integers(1, 3), st.sampled_from([4, 6, 9]), st.sampled_from([1, 3, 5]),
       st.integers(0, 2**31 - 1))
def test_numba_and_numpy_paths_agree(c, o, n, p, seed):
    rng = np.random.default_rng(seed)
    x, w = _case(rng, 1, c, o, n, p)
    pad = p // 2
    a = kernels.conv2d_forward(x, w, 1, pad, use_numba=True)
    b = kernels.conv2d_forward(x, w, 1, pad, use_numba=False)
    assert rel_err(a, b) < 1e-13


@pytest.mark.parametrize("use_numba", [True, False])
def test_maxpool_matches_enumeration(rng, use_numba):
    x = rng.standard_normal((2, 3, 6, 8))
    out, arg = kernels.maxpool2_forward(x, use_numba=use_numba)
    np.testing.assert_array_equal(out, maxpool_windows(x))
    gx = kernels.maxpool2_backward(np.ones_like(out), arg, use_numba=use_numba)
    # exactly one routed entry per window, at the max
    assert gx.sum() == out.size
    np.testing.assert_array_equal(np.sort(x[gx == 1]), np.sort(out.ravel()))


def test_maxpool_ties_route_to_first(rng):
    x = np.zeros((1, 2, 2))
    for use in (True, False):
        _, arg = kernels.maxpool2_forward(x, use_numba=use)
        assert arg[0, 0, 0] == 0


@pytest.mark.parametrize("use_numba", [True, False])
def test_bilinear_sample_matches_pointwise(rng, use_numba):
    img = rng.standard_normal((5, 6))
    rows = rng.uniform(-1.5, 6.5, size=(4, 3))
    cols = rng.uniform(-1.5, 7.5, size=(4, 3))
    got = kernels.bilinear_sample(img, rows, cols, use_numba=use_numba)
    want = np.array([[bilinear_at(img, r, c) for r, c in zip(rr, cc)] for rr, cc in zip(rows, cols)])
    np.testing.assert_allclose(got, want, atol=1e-14)


def test_bilinear_sample_integer_positions_are_exact(rng):
    img = rng.standard_normal((2, 4, 4))
    r, c = np.meshgrid(np.arange(4.0), np.arange(4.0), indexing="ij")
    np.testing.assert_array_equal(kernels.bilinear_sample(img, r, c), img)
