import numpy as np
import pytest
from hypothesis import given, strategies as st

from eqdenoise.groups import GroupFeatureMap, ImageGrid, RotationGroup
from eqdenoise.resample import (STRIDE_REPRESENTATIVE, bilinear_matrix, maxpool_down, stride_down,
                                upsample_bilinear, upsample_nearest)
from eqdenoise.tensor import Tensor
from oracles import maxpool_windows, numeric_grad, rel_err, upsample_bilinear_1d

arrays = st.integers(0, 2**31 - 1).map(lambda s: np.random.default_rng(s).standard_normal((2, 6, 8)))


@given(arrays)
def test_maxpool_matches_windows(x):
    np.testing.assert_array_equal(maxpool_down(x).data, maxpool_windows(x))


@given(arrays)
def test_stride_picks_upper_right_of_window(x):
    assert STRIDE_REPRESENTATIVE == (0, 1)
    out = stride_down(x).data
    assert out[0, 1, 2] == x[0, 2, 5]


@given(arrays)
def test_nearest_then_maxpool_is_identity(x):
    np.testing.assert_array_equal(maxpool_down(upsample_nearest(x)).data, x)
    np.testing.assert_array_equal(stride_down(upsample_nearest(x)).data, x)


def test_bilinear_matches_pointwise_oracle(rng):
    x = rng.standard_normal((5, 4))
    out = upsample_bilinear(x).data
    cols_first = np.stack([upsample_bilinear_1d(col) for col in x.T], axis=1)
    want = np.stack([upsample_bilinear_1d(row) for row in cols_first])
    np.testing.assert_allclose(out, want, atol=1e-14)


def test_bilinear_preserves_constants_and_rows_sum_to_one():
    np.testing.assert_allclose(bilinear_matrix(7).sum(axis=1), 1.0)
    np.testing.assert_allclose(upsample_bilinear(np.full((4, 4), 3.0)).data, 3.0)


def test_wrappers_track_mesh():
    F = GroupFeatureMap(np.zeros((4, 8, 8)), RotationGroup(4), h=0.25)
    assert maxpool_down(F).h == 0.5 and upsample_nearest(F).h == 0.125
    assert isinstance(stride_down(ImageGrid(np.zeros((4, 4)), 1.0)), ImageGrid)


def test_odd_size_rejected():
    with pytest.raises(ValueError, match="even"):
        maxpool_down(np.zeros((5, 4)))


@pytest.mark.parametrize("op", [maxpool_down, stride_down, upsample_nearest, upsample_bilinear])
def test_resample_gradients(rng, op):
    x = rng.standard_normal((2, 4, 4))
    g = rng.standard_normal(op(x).shape)
    t = Tensor(x.copy(), requires_grad=True)
    (op(t) * Tensor(g)).sum().backward()
    num = numeric_grad(lambda: float(np.sum(op(x).data * g)), x)
    assert rel_err(t.grad, num) < 1e-7


# -- fixtures -------------------------------------------------------------------------

@pytest.mark.parametrize("op", [maxpool_down, stride_down, upsample_nearest, upsample_bilinear])
def test_constant_maps_stay_constant(op):
    np.testing.assert_allclose(op(np.full((2, 8, 8), 1.25)).data, 1.25)


def test_maxpool_block_fixture():
    x = np.array([[1, 2, 5, 6], [3, 4, 7, 8], [9, 10, 13, 14], [11, 12, 15, 16]], dtype=float)
    np.testing.assert_array_equal(maxpool_down(x).data, [[4, 8], [12, 16]])


def test_stride_representatives_fixture():
    x = np.arange(16.0).reshape(4, 4)
    np.testing.assert_array_equal(stride_down(x).data, [[x[0, 1], x[0, 3]], [x[2, 1], x[2, 3]]])


def test_nearest_fixture():
    out = upsample_nearest(np.array([[1.0, 2.0], [3.0, 4.0]])).data
    np.testing.assert_array_equal(out, [[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]])


def test_bilinear_reproduces_linear_field_in_interior():
    n = 6
    c = np.arange(n) - (n - 1) / 2           # coarse centres, unit spacing
    f = np.arange(2 * n) / 2 - (2 * n - 1) / 4  # fine centres
    coarse = 0.7 * c[:, None] - 1.3 * c[None, :]
    fine = 0.7 * f[:, None] - 1.3 * f[None, :]
    np.testing.assert_allclose(upsample_bilinear(coarse).data[1:-1, 1:-1], fine[1:-1, 1:-1], atol=1e-13)


def test_bilinear_weights_9_3_3_1():
    x = np.zeros((4, 4))
    x[1, 1], x[1, 2], x[2, 1], x[2, 2] = 1.0, 3.0, 5.0, 7.0
    # fine cell (3, 3) is nearest coarse (1, 1), then (1, 2) and (2, 1), then (2, 2)
    assert upsample_bilinear(x).data[3, 3] == pytest.approx((9 * 1 + 3 * 3 + 3 * 5 + 1 * 7) / 16)
