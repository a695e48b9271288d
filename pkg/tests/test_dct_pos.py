import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.fft import dctn

from efficient_nonlocal.dct_pos import (
    DENSE_LIMIT,
    FrequencyMask,
    SizeError,
    build_basis,
    default_mask,
    dense_l,
    extract_filter,
    position_term,
)
from efficient_nonlocal.tensor import ShapeError

R = math.sqrt(0.5)


def full_dct_rows(h, w):
    """E[i, (u, v)] = orthonormal 2-D DCT-II of the delta image at pixel i."""
    rows = []
    for i in range(h * w):
        delta = np.zeros((h, w))
        delta[divmod(i, w)] = 1.0
        rows.append(dctn(delta, type=2, norm="ortho").ravel())
    return np.array(rows)


class TestBuildBasis:
    def test_one_point(self):
        np.testing.assert_array_equal(build_basis(1, 1, FrequencyMask(1, 1)).e_hat, [[1.0]])

    def test_two_point(self):
        e = build_basis(1, 2, FrequencyMask(1, 2)).e_hat
        np.testing.assert_allclose(e, [[R, R], [R, -R]], atol=1e-15)

    def test_complete_basis_orthonormal(self):
        e = build_basis(4, 4, FrequencyMask(4, 4)).e_hat
        assert e.shape == (16, 16)
        assert np.max(np.abs(e.T @ e - np.eye(16))) <= 1e-12

    @pytest.mark.parametrize("h,w,mh,mw", [(4, 4, 4, 4), (5, 3, 2, 3), (8, 6, 3, 1), (1, 7, 1, 4)])
    def test_matches_scipy_dct(self, h, w, mh, mw):
        e = build_basis(h, w, FrequencyMask(mh, mw)).e_hat
        full = full_dct_rows(h, w).reshape(h * w, h, w)[:, :mh, :mw].reshape(h * w, mh * mw)
        np.testing.assert_allclose(e, full, atol=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 10), st.integers(1, 10), st.integers(1, 10), st.integers(1, 10))
    def test_columns_orthonormal(self, h, w, mh, mw):
        mask = FrequencyMask(mh, mw).clamp(h, w)
        e = build_basis(h, w, mask).e_hat
        assert np.max(np.abs(e.T @ e - np.eye(mask.c_l))) <= 1e-10

    def test_default_mask(self):
        assert build_basis(16, 16).mask == FrequencyMask(9, 9)
        assert build_basis(16, 16).c_l == 81
        assert default_mask(4, 12) == FrequencyMask(4, 9)

    def test_oversized_mask_warns_and_clamps(self):
        mask = FrequencyMask(6, 2, weights=tuple(range(1, 13)))
        with pytest.warns(UserWarning, match="clamped"):
            basis = build_basis(3, 7, mask)
        assert basis.clamped
        assert basis.requested == mask
        assert basis.mask == FrequencyMask(3, 2, weights=(1, 2, 3, 4, 5, 6))

    def test_fitting_mask_does_not_warn(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            assert not build_basis(9, 9, FrequencyMask(9, 9)).clamped

    def test_weighted_mask_realizes_abs_squared(self):
        d = np.array([2.0, -0.5, 1.5, 0.0])
        basis = build_basis(3, 4, FrequencyMask(2, 2, weights=tuple(d)))
        full = full_dct_rows(3, 4)
        diag = np.zeros(12)
        for k, (u, v) in enumerate([(0, 0), (0, 1), (1, 0), (1, 1)]):
            diag[u * 4 + v] = d[k]
        expected = full @ np.diag(np.abs(diag) ** 2) @ full.T
        np.testing.assert_allclose(dense_l(basis), expected, atol=1e-12)

    def test_cached(self):
        assert build_basis(6, 6, FrequencyMask(2, 2)) is build_basis(6, 6, FrequencyMask(2, 2))

    def test_basis_is_read_only(self):
        with pytest.raises(ValueError):
            build_basis(3, 3).e_hat[0, 0] = 1.0

    def test_bad_mask(self):
        with pytest.raises(ValueError):
            FrequencyMask(0, 3)
        with pytest.raises(ValueError):
            FrequencyMask(2, 2, weights=(1.0,))


class TestDenseL:
    @pytest.mark.parametrize("h,w", [(1, 1), (2, 3), (5, 4), (8, 8)])
    def test_full_mask_identity(self, h, w):
        l = dense_l(build_basis(h, w, FrequencyMask(h, w)))
        assert np.max(np.abs(l - np.eye(h * w))) <= 1e-10

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 10), st.integers(1, 10), st.integers(1, 10), st.integers(1, 10))
    def test_trace_symmetry(self, h, w, mh, mw):
        basis = build_basis(h, w, FrequencyMask(mh, mw).clamp(h, w))
        l = dense_l(basis)
        assert abs(np.trace(l) - basis.c_l) <= 1e-10
        np.testing.assert_array_equal(l, l.T)

    def test_psd_8x8_mask3(self):
        l = dense_l(build_basis(8, 8, FrequencyMask(3, 3)))
        np.testing.assert_array_equal(l, l.T)
        assert np.linalg.eigvalsh(l).min() >= -1e-10

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 2**31 - 1))
    def test_quadratic_form_nonnegative(self, h, w, seed):
        rng = np.random.default_rng(seed)
        mh, mw = int(rng.integers(1, h + 1)), int(rng.integers(1, w + 1))
        l = dense_l(build_basis(h, w, FrequencyMask(mh, mw)))
        v = rng.standard_normal(h * w)
        assert v @ l @ v >= -1e-10

    def test_size_guard(self):
        side = int(math.isqrt(DENSE_LIMIT)) + 1
        with pytest.raises(SizeError):
            dense_l(build_basis(side, side, FrequencyMask(1, 1)))


class TestPositionTerm:
    def test_zeros(self):
        basis = build_basis(4, 4, FrequencyMask(2, 2))
        np.testing.assert_array_equal(position_term(basis, np.zeros((16, 3))), 0.0)

    def test_full_mask_is_identity(self):
        basis = build_basis(3, 5, FrequencyMask(3, 5))
        g = np.random.default_rng(0).standard_normal((15, 4))
        assert np.max(np.abs(position_term(basis, g) - g)) <= 1e-10

    def test_dense_oracle_6x6(self):
        basis = build_basis(6, 6, FrequencyMask(2, 2))
        g = np.random.default_rng(1).standard_normal((36, 5))
        assert np.max(np.abs(position_term(basis, g) - dense_l(basis) @ g)) <= 1e-10

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 10), st.integers(1, 10), st.integers(0, 2**31 - 1))
    def test_factorization_identity(self, h, w, seed):
        rng = np.random.default_rng(seed)
        mask = FrequencyMask(int(rng.integers(1, h + 1)), int(rng.integers(1, w + 1)))
        basis = build_basis(h, w, mask)
        g = rng.standard_normal((h * w, int(rng.integers(1, 5))))
        assert np.max(np.abs(position_term(basis, g) - dense_l(basis) @ g)) <= 1e-10

    def test_row_mismatch(self):
        with pytest.raises(ShapeError):
            position_term(build_basis(3, 3), np.zeros((8, 2)))


class TestExtractFilter:
    def test_full_mask_delta(self):
        basis = build_basis(5, 6, FrequencyMask(5, 6))
        f = extract_filter(basis, (2, 3)).image()[:, :, 0]
        expected = np.zeros((5, 6))
        expected[2, 3] = 1.0
        assert np.max(np.abs(f - expected)) <= 1e-10

    def test_dc_only_constant(self):
        basis = build_basis(4, 7, FrequencyMask(1, 1))
        f = extract_filter(basis, 11).data
        np.testing.assert_allclose(f, 1.0 / 28, atol=1e-15)

    def test_is_row_of_dense_l(self):
        basis = build_basis(6, 5, FrequencyMask(3, 2))
        np.testing.assert_array_equal(extract_filter(basis, 17).data[:, 0], dense_l(basis)[17])

    def test_sinc_like_16x16(self):
        basis = build_basis(16, 16, FrequencyMask(9, 9))
        f = extract_filter(basis, (8, 8)).image()[:, :, 0]
        assert np.unravel_index(np.argmax(f), f.shape) == (8, 8)
        assert f[8, 8] > np.max(np.delete(f.ravel(), 8 * 16 + 8))
        row = f[8, :]
        signs = np.sign(row[np.abs(row) > 1e-12])
        assert np.count_nonzero(np.diff(signs)) >= 3

    def test_interior_centers_peak(self):
        basis = build_basis(16, 16, FrequencyMask(9, 9))
        for h in range(4, 12):
            for w in range(4, 12):
                f = extract_filter(basis, (h, w)).image()[:, :, 0]
                assert np.argmax(f) == h * 16 + w

    def test_out_of_range(self):
        basis = build_basis(3, 3)
        with pytest.raises(IndexError):
            extract_filter(basis, 9)
        with pytest.raises(IndexError):
            extract_filter(basis, (3, 0))


class TestShiftInvariance:
    """The kernel keeps its shape across the image while its height
    fluctuates. Mirror-image pixels share exactly the same height. The
    fluctuation in the interior is bounded but not small."""

    def test_mirror_pixels_share_center_tap(self):
        n = 36
        l = dense_l(build_basis(n, n, FrequencyMask(9, 9)))
        for h, w in [(10, 12), (14, 20), (9, 9)]:
            i = h * n + w
            for mh, mw in [(n - 1 - h, w), (h, n - 1 - w), (n - 1 - h, n - 1 - w)]:
                j = mh * n + mw
                assert abs(l[i, i] - l[j, j]) <= 1e-12

    @pytest.mark.parametrize("n", [36, 48])
    def test_interior_height_fluctuates_within_bound(self, n):
        basis = build_basis(n, n, FrequencyMask(9, 9))
        diag = np.sum(basis.e_hat**2, axis=1).reshape(n, n)
        q = n // 4
        interior = diag[q : n - q, q : n - q]
        ideal = basis.c_l / (n * n)
        dev = np.abs(interior / ideal - 1.0)
        assert dev.max() <= 0.25
        assert dev.max() > 0.01

    def test_recentred_profiles_share_shape(self):
        n = 36
        basis = build_basis(n, n, FrequencyMask(9, 9))
        profiles = []
        for h, w in [(12, 12), (18, 15), (20, 23)]:
            f = extract_filter(basis, (h, w)).image()[:, :, 0]
            p = f[h - 2 : h + 3, w - 2 : w + 3]
            profiles.append(np.sign(p))
        for p in profiles[1:]:
            np.testing.assert_array_equal(p, profiles[0])
