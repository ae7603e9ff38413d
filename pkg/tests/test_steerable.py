import numpy as np
import pytest
from hypothesis import given, strategies as st

from eqdenoise.steerable import (SteerableFilter, aliasing_mask, basis_eval, basis_stack, cell_centers,
                                 coefficient_std, radial_mask, rotation_matrix, sample_filter, taps_for_mesh)


@pytest.mark.parametrize("p", [3, 5, 7])
def test_index_set_radius_and_count(p):
    idx = aliasing_mask(p)
    r = (p - 1) / 2
    brute = [(k, l) for k in range(-p, p + 1) for l in range(-p, p + 1) if k * k + l * l <= r * r]
    assert sorted(idx) == sorted(brute)
    assert len(idx) == len(brute)


def test_even_or_tiny_size_rejected():
    for p in (2, 4, 1):
        with pytest.raises(ValueError):
            aliasing_mask(p)


def test_radial_mask_profile():
    p, h = 5, 0.5
    assert radial_mask(0.0, p, h) == 1.0
    assert radial_mask(p * h / 2, p, h) == 1.0
    assert radial_mask((p + 1) * h / 2, p, h) == 0.0
    mid = radial_mask((p + 0.5) * h / 2, p, h)
    assert mid == pytest.approx(0.5)
    r = np.linspace(0, 4, 200)
    assert np.all(np.diff(radial_mask(r, p, h)) <= 1e-15)


def test_basis_cos_sin_split():
    x = np.array([0.3, -0.2])
    w = 2 * np.pi / 5
    assert basis_eval(1, 1, x, 5) == pytest.approx(np.cos(w * (0.3 - 0.2)))
    assert basis_eval(-1, 1, x, 5) == pytest.approx(np.sin(w * (-0.3 - 0.2)))
    with pytest.raises(ValueError):
        basis_eval(3, 0, x, 5)


def test_rotation_matrix_quarter_turn_is_exact():
    np.testing.assert_array_equal(rotation_matrix(np.pi / 2), [[0.0, 1.0], [-1.0, 0.0]])
    a = rotation_matrix(0.3)
    np.testing.assert_allclose(a @ a.T, np.eye(2), atol=1e-15)


def test_cell_centres_symmetric():
    c = cell_centers(4, 0.5)
    np.testing.assert_allclose(c, [-0.75, -0.25, 0.25, 0.75])


@given(st.sampled_from([3, 5]), st.floats(0, 2 * np.pi), st.integers(0, 2**31 - 1))
def test_sampled_kernel_is_continuous_filter_at_rotated_points(p, theta, seed):
    rng = np.random.default_rng(seed)
    f = SteerableFilter(rng.standard_normal(len(aliasing_mask(p))), p)
    k = sample_filter(f, theta)
    c = cell_centers(p)
    a_inv = rotation_matrix(theta).T
    for i in range(p):
        for j in range(p):
            assert k[i, j] == pytest.approx(f(a_inv @ np.array([c[i], c[j]])), abs=1e-12)


@pytest.mark.parametrize("p", [3, 5])
def test_quarter_turn_sampling_is_array_rotation(rng, p):
    f = SteerableFilter(rng.standard_normal(len(aliasing_mask(p))), p)
    k0 = sample_filter(f, 0.0)
    np.testing.assert_allclose(sample_filter(f, np.pi / 2), np.rot90(k0, -1), atol=1e-14)


def test_refined_mesh_samples_same_function(rng):
    p = 3
    f = SteerableFilter(rng.standard_normal(len(aliasing_mask(p))), p)
    fine = sample_filter(f, 0.4, mesh=0.5)
    assert fine.shape == (taps_for_mesh(p, 1.0, 0.5),) * 2 == (7, 7)
    c = cell_centers(7, 0.5)
    a_inv = rotation_matrix(0.4).T
    assert fine[1, 5] == pytest.approx(f(a_inv @ np.array([c[1], c[5]])))


def test_basis_stack_is_read_only():
    b = basis_stack(3, (0.0,))
    with pytest.raises(ValueError):
        b[0, 0, 0, 0] = 1.0


def test_filter_rejects_wrong_coefficient_count():
    with pytest.raises(ValueError):
        SteerableFilter(np.ones(3), 3)


def test_coefficient_std_sets_tap_sum_variance(rng):
    p, fan_in = 5, 6
    std = coefficient_std(p, fan_in)
    basis = basis_stack(p, (0.0,))[0]
    sums = rng.standard_normal((20000, len(basis))) * std @ basis.sum(axis=(-2, -1))
    assert np.var(sums) == pytest.approx(2.0 / fan_in, rel=0.05)


# -- fixtures -------------------------------------------------------------------------

def test_filter_vanishes_outside_support(rng):
    f = SteerableFilter(rng.standard_normal(len(aliasing_mask(5))), 5, h=0.5)
    ang = rng.uniform(0, 2 * np.pi, 50)
    r = f.support_radius + rng.uniform(0, 1, 50)
    assert np.all(f(np.stack([r * np.cos(ang), r * np.sin(ang)], -1)) == 0.0)


def test_dc_basis_is_mask_value():
    for x in ([0.0, 0.0], [0.4, -0.9], [1.7, 0.2]):
        assert basis_eval(0, 0, np.array(x), 3) == radial_mask(np.hypot(*x), 3)


def test_even_basis_is_point_symmetric(rng):
    x = rng.uniform(-1, 1, (10, 2))
    for k, l in aliasing_mask(5):
        if k > 0 or (k == 0 and l >= 0):
            np.testing.assert_allclose(basis_eval(k, l, x, 5), basis_eval(k, l, -x, 5), atol=1e-15)


def test_theta_zero_is_canonical_sampling(rng):
    f = SteerableFilter(rng.standard_normal(len(aliasing_mask(3))), 3)
    c = cell_centers(3)
    want = np.array([[f(np.array([a, b])) for b in c] for a in c])
    np.testing.assert_allclose(sample_filter(f, 0.0), want, atol=1e-15)


def test_dc_only_filter_is_rotation_invariant():
    coeffs = np.zeros(len(aliasing_mask(5)))
    coeffs[list(aliasing_mask(5)).index((0, 0))] = 1.0
    f = SteerableFilter(coeffs, 5)
    k0 = sample_filter(f, 0.0)
    for th in (0.3, 1.1, np.pi / 2, 2.5):
        np.testing.assert_allclose(sample_filter(f, th), k0, atol=1e-15)


def test_p3_keeps_radius_one_and_p5_swap_symmetric():
    assert sorted(aliasing_mask(3)) == [(-1, 0), (0, -1), (0, 0), (0, 1), (1, 0)]
    s = set(aliasing_mask(5))
    assert {(l, k) for k, l in s} == s
