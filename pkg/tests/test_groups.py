import numpy as np
import pytest
from hypothesis import given, strategies as st

from eqdenoise.groups import (GroupFeatureMap, ImageGrid, RotationGroup, group_conv, lift_conv, project,
                              quarter_turns, rotate_feature, rotate_image, source_indices)
from eqdenoise.resample import maxpool_down, upsample_nearest
from eqdenoise.steerable import aliasing_mask
from oracles import bilinear_at, rotate_point_index


def _rel(a, b):
    return np.abs(a - b).max() / max(np.abs(b).max(), 1e-300)


def test_group_elements_and_index():
    g = RotationGroup(8)
    assert g.index_of(2 * np.pi / 8) == 1
    assert g.index_of(-np.pi / 2) == 6
    assert g.compose(5, 6) == 3
    assert not g.contains(np.pi / 7)
    with pytest.raises(ValueError):
        g.index_of(0.1)
    with pytest.raises(ValueError):
        RotationGroup(0)


def test_wrappers_validate_shapes():
    with pytest.raises(ValueError):
        ImageGrid(np.zeros((3, 4)))
    with pytest.raises(ValueError, match="group order"):
        GroupFeatureMap(np.zeros((3, 4, 4)), RotationGroup(4))


def test_quarter_turn_rotation_direction():
    # out(x) = in(A^{-1} x); a unit mass at x = (x1 > 0, x2 = 0) moves to (0, -x1) under +pi/2
    n = 5
    img = np.zeros((n, n))
    img[4, 2] = 1.0
    out = rotate_image(img, np.pi / 2)
    assert out[2, 0] == 1.0 and out.sum() == 1.0
    np.testing.assert_array_equal(out, np.rot90(img, -1))


def test_quarter_turns_detector():
    assert quarter_turns(3 * np.pi / 2) == 3
    assert quarter_turns(-np.pi / 2) == 3
    assert quarter_turns(np.pi / 4) is None


def test_bilinear_rotation_matches_pointwise_oracle(rng):
    n, theta = 6, 0.37
    img = rng.standard_normal((n, n))
    out = rotate_image(img, theta)
    for i in range(n):
        for j in range(n):
            assert out[i, j] == pytest.approx(bilinear_at(img, *rotate_point_index(n, i, j, theta)), abs=1e-13)
    r, c = source_indices(n, theta)
    assert r[1, 2] == pytest.approx(rotate_point_index(n, 1, 2, theta)[0])


@given(st.integers(0, 3), st.integers(0, 3), st.integers(0, 2**31 - 1))
def test_feature_rotation_composes(a, b, seed):
    g = RotationGroup(4)
    F = GroupFeatureMap(np.random.default_rng(seed).standard_normal((2, 4, 6, 6)), g)
    ta, tb = a * np.pi / 2, b * np.pi / 2
    lhs = rotate_feature(rotate_feature(F, ta), tb).data
    rhs = rotate_feature(F, ta + tb).data
    np.testing.assert_array_equal(lhs, rhs)


def test_feature_rotation_rolls_orientation_forward(rng):
    g = RotationGroup(4)
    data = rng.standard_normal((4, 4, 4))
    out = rotate_feature(data, np.pi / 2, g)
    np.testing.assert_array_equal(out[1], np.rot90(data[0], -1))


# -- quarter-turn block exactness, t = 4, zero padding -----------------------------

T4 = RotationGroup(4)


def _blocks(rng):
    p = 3
    nb = len(aliasing_mask(p))
    lift_c = rng.standard_normal((3, 2, nb))
    grp_c = rng.standard_normal((2, 3, 4, nb))
    return {
        "lift_conv": (lambda x: lift_conv(x, lift_c, T4, p).data, "image"),
        "group_conv": (lambda F: group_conv(F, grp_c, T4, p).data, "field"),
        "maxpool": (lambda F: maxpool_down(F).data, "field"),
        "nearest": (lambda F: upsample_nearest(F).data, "field"),
        "project": (lambda F: project(F).data, "field_to_image"),
    }


@pytest.mark.parametrize("block", ["lift_conv", "group_conv", "maxpool", "nearest", "project"])
def test_block_commutes_with_quarter_turn(rng, block):
    op, kind = _blocks(rng)[block]
    if kind == "image":
        x = rng.standard_normal((2, 8, 8))
        lhs = op(rotate_image(x, np.pi / 2))
        rhs = rotate_feature(op(x), np.pi / 2, T4)
    else:
        c = 3 if block == "group_conv" else 2
        F = rng.standard_normal((c, 4, 8, 8))
        lhs = op(rotate_feature(F, np.pi / 2, T4))
        out = op(F)
        rhs = rotate_image(out, np.pi / 2) if kind == "field_to_image" else rotate_feature(out, np.pi / 2, T4)
    assert _rel(lhs, rhs) <= 1e-10


def test_lift_conv_of_delta_is_rotated_filter(rng):
    # impulse response: slice k is the filter sampled at theta_k (flipped by correlation)
    p = 3
    coeffs = rng.standard_normal((1, 1, len(aliasing_mask(p))))
    img = np.zeros((1, 7, 7))
    img[0, 3, 3] = 1.0
    out = lift_conv(img, coeffs, T4, p).data[0]
    from eqdenoise.steerable import SteerableFilter, sample_filter
    f = SteerableFilter(coeffs[0, 0], p)
    for k in range(4):
        np.testing.assert_allclose(out[k, 2:5, 2:5], sample_filter(f, k * np.pi / 2)[::-1, ::-1], atol=1e-14)


def test_group_conv_block_structure(rng):
    # out[k] = sum_q corr(F[q], filter slice (q - k) mod t at theta_k)
    p, t = 3, 4
    nb = len(aliasing_mask(p))
    coeffs = rng.standard_normal((1, 1, t, nb))
    F = rng.standard_normal((1, t, 6, 6))
    out = group_conv(F, coeffs, T4, p).data[0]
    from eqdenoise.steerable import SteerableFilter, sample_filter
    from oracles import conv2d_loops
    for k in range(t):
        want = 0.0
        for q in range(t):
            ker = sample_filter(SteerableFilter(coeffs[0, 0, (q - k) % t], p), k * 2 * np.pi / t)
            want = want + conv2d_loops(F[:, q][None], ker[None, None], 1, 1)[0, 0]
        np.testing.assert_allclose(out[k], want, atol=1e-12)


def test_group_conv_checks_orientation_axis(rng):
    with pytest.raises(ValueError, match="group order"):
        group_conv(np.zeros((1, 3, 6, 6)), np.zeros((1, 1, 4, 5)), T4, 3)


def test_project_is_orientation_mean(rng):
    F = rng.standard_normal((2, 4, 5, 5))
    np.testing.assert_allclose(project(F).data, F.mean(axis=1))


# -- fixtures -------------------------------------------------------------------------

def test_group_elements_sorted_and_closed():
    for t in (1, 3, 8):
        g = RotationGroup(t)
        e = g.elements
        assert np.all(np.diff(e) > 0) and e[0] == 0 and e[-1] < 2 * np.pi
        for a in range(t):
            for b in range(t):
                assert g.contains((e[a] + e[b]) % (2 * np.pi))


def test_rotate_image_identity_and_four_quarter_turns(rng):
    img = rng.standard_normal((2, 7, 7))
    np.testing.assert_array_equal(rotate_image(img, 0.0), img)
    out = img
    for _ in range(4):
        out = rotate_image(out, np.pi / 2)
    np.testing.assert_array_equal(out, img)


def test_rotate_feature_identity_and_constant_orientation(rng):
    F = rng.standard_normal((4, 6, 6))
    np.testing.assert_array_equal(rotate_feature(F, 0.0, T4), F)
    const = np.repeat(rng.standard_normal((1, 6, 6)), 4, axis=0)
    np.testing.assert_array_equal(rotate_feature(const, np.pi / 2, T4), rotate_image(const, np.pi / 2))


def test_lift_conv_zero_mean_filter_kills_constant():
    # antisymmetric sine terms integrate to zero on the symmetric grid
    p = 5
    coeffs = np.zeros((1, 1, len(aliasing_mask(p))))
    for b, (k, l) in enumerate(aliasing_mask(p)):
        if not (k > 0 or (k == 0 and l >= 0)):
            coeffs[0, 0, b] = 1.0 + b
    out = lift_conv(np.full((1, 12, 12), 3.0), coeffs, T4, p).data
    np.testing.assert_allclose(out[..., 2:-2, 2:-2], 0.0, atol=1e-12)


def test_group_conv_trivial_group_is_conv2d(rng):
    from eqdenoise.steerable import SteerableFilter, sample_filter
    from oracles import conv2d_loops
    g1 = RotationGroup(1)
    coeffs = rng.standard_normal((2, 3, 1, 5))
    F = rng.standard_normal((3, 1, 6, 6))
    w = np.array([[sample_filter(SteerableFilter(coeffs[o, c, 0], 3), 0.0) for c in range(3)] for o in range(2)])
    np.testing.assert_allclose(group_conv(F, coeffs, g1, 3).data[:, 0], conv2d_loops(F[None, :, 0], w, 1, 1)[0],
                               atol=1e-12)


def test_group_conv_permutes_single_slice():
    # a DC-only filter on slice j=1: output k picks input slice q = k + 1 (mod t), scaled by the centre tap
    p, t = 3, 4
    coeffs = np.zeros((1, 1, t, len(aliasing_mask(p))))
    coeffs[0, 0, 1, list(aliasing_mask(p)).index((0, 0))] = 1.0
    F = np.zeros((1, t, 5, 5))
    F[0, 2, 2, 2] = 1.0  # only input slice q = 2 is non-zero
    out = group_conv(F, coeffs, T4, p).data[0]
    centre = out[:, 2, 2]
    assert centre[1] != 0 and np.all(centre[[0, 2, 3]] == 0)


def test_project_of_orientation_constant():
    F = np.full((4, 3, 3), 2.5)
    np.testing.assert_array_equal(project(F).data, np.full((3, 3), 2.5))


@pytest.mark.parametrize("layer", ["lift", "group"])
def test_one_cell_translation_in_interior(rng, layer):
    p = 3
    nb = len(aliasing_mask(p))
    if layer == "lift":
        c = rng.standard_normal((2, 1, nb))
        x = rng.standard_normal((1, 12, 12))
        op = lambda a: lift_conv(a, c, T4, p).data  # noqa: E731
    else:
        c = rng.standard_normal((1, 2, 4, nb))
        x = rng.standard_normal((2, 4, 12, 12))
        op = lambda a: group_conv(a, c, T4, p).data  # noqa: E731
    shifted = op(np.roll(x, 1, axis=-1))
    rolled = np.roll(op(x), 1, axis=-1)
    np.testing.assert_allclose(shifted[..., 2:-2], rolled[..., 2:-2], atol=1e-12)
