"""Matrix-based entropy, joint entropy, mutual information, gradients."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dsibh import numkit, renyi
from dsibh.errors import InvalidArgumentError, UnsupportedOrderError


def eig_entropy(a, alpha=2.0):
    lam = np.clip(np.linalg.eigvalsh(a), 0.0, None)
    return float(np.log2(np.sum(lam**alpha)) / (1.0 - alpha))


def random_gram(rng, n, d=3):
    points = rng.normal(size=(n, d))
    return renyi.gram(points, renyi.select_sigma(points))


class TestGram:
    def test_two_identical_points(self):
        a = renyi.gram(np.array([[1.0, 2.0], [1.0, 2.0]]), sigma=1.0)
        assert np.allclose(a, [[0.5, 0.5], [0.5, 0.5]], atol=1e-15)

    def test_distant_points_approach_identity(self):
        points = np.array([[0.0], [1e6]])
        a = renyi.gram(points, sigma=1.0)
        assert np.allclose(a, np.eye(2) / 2, atol=1e-15)

    def test_random_gram_is_normalized_symmetric_psd(self):
        rng = np.random.default_rng(5)
        points = rng.normal(size=(3, 4))
        a = renyi.gram(points, 1.3)
        assert np.array_equal(a, a.T)
        assert np.trace(a) == pytest.approx(1.0, abs=1e-12)
        assert np.min(np.linalg.eigvalsh(a)) >= -1e-10
        assert np.allclose(np.diag(a), 1.0 / 3.0, atol=1e-15)

    def test_rejects_bad_sigma_and_tiny_sets(self):
        with pytest.raises(InvalidArgumentError):
            renyi.gram(np.ones((3, 2)), 0.0)
        with pytest.raises(InvalidArgumentError):
            renyi.gram(np.ones((1, 2)), 1.0)


class TestEntropy:
    def test_identical_points_zero_bits(self):
        for n in (2, 8, 64):
            a = renyi.gram(np.ones((n, 3)), sigma=1.0)
            assert abs(renyi.entropy(a)) < 1e-9

    def test_mutually_distant_points_log2_n(self):
        for n in (2, 8, 64):
            points = (np.arange(n, dtype=np.float64) * 1e5).reshape(n, 1)
            a = renyi.gram(points, sigma=1.0)
            assert renyi.entropy(a) == pytest.approx(np.log2(n), abs=1e-6)

    def test_trace_formula_matches_eigenvalue_formula(self):
        rng = np.random.default_rng(17)
        for _ in range(20):
            a = random_gram(rng, 8)
            assert abs(renyi.entropy(a) - eig_entropy(a)) < 1e-10

    def test_non_default_order_uses_eig_path(self):
        rng = np.random.default_rng(3)
        a = random_gram(rng, 6)
        assert renyi.entropy(a, alpha=3.0) == pytest.approx(eig_entropy(a, 3.0), abs=1e-12)

    def test_rejects_unnormalized_input(self):
        with pytest.raises(InvalidArgumentError):
            renyi.entropy(np.eye(3))

    def test_rejects_asymmetric_input(self):
        a = np.array([[0.5, 0.1], [0.0, 0.5]])
        with pytest.raises(InvalidArgumentError):
            renyi.entropy(a)

    def test_rejects_invalid_alpha(self):
        a = renyi.gram(np.random.default_rng(0).normal(size=(4, 2)), 1.0)
        with pytest.raises(InvalidArgumentError):
            renyi.entropy(a, alpha=1.0)
        with pytest.raises(InvalidArgumentError):
            renyi.entropy(a, alpha=-2.0)

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), n=st.integers(2, 24))
    def test_bounds_and_permutation_invariance(self, seed, n):
        rng = np.random.default_rng(seed)
        points = rng.normal(size=(n, 3))
        sigma = renyi.select_sigma(points)
        h = renyi.entropy(renyi.gram(points, sigma))
        assert -1e-9 <= h <= np.log2(n) + 1e-9
        perm = rng.permutation(n)
        h_perm = renyi.entropy(renyi.gram(points[perm], sigma))
        assert h_perm == pytest.approx(h, abs=1e-9)


class TestJointEntropy:
    def test_constant_second_gram_is_identity_operation(self):
        rng = np.random.default_rng(9)
        a = random_gram(rng, 6)
        const = np.full((6, 6), 1.0 / 6.0)
        assert renyi.joint_entropy(a, const) == pytest.approx(renyi.entropy(a), abs=1e-12)

    def test_commutes(self):
        rng = np.random.default_rng(10)
        a, b = random_gram(rng, 8), random_gram(rng, 8)
        assert renyi.joint_entropy(a, b) == pytest.approx(renyi.joint_entropy(b, a), abs=1e-12)

    def test_matches_eig_oracle(self):
        rng = np.random.default_rng(12)
        for _ in range(10):
            a, b = random_gram(rng, 8), random_gram(rng, 8)
            had = a * b
            had /= np.trace(had)
            assert renyi.joint_entropy(a, b) == pytest.approx(eig_entropy(had), abs=1e-10)

    def test_size_mismatch(self):
        rng = np.random.default_rng(1)
        with pytest.raises(InvalidArgumentError):
            renyi.joint_entropy(random_gram(rng, 4), random_gram(rng, 5))


class TestMutualInformation:
    def test_self_information_composes_entropies(self):
        rng = np.random.default_rng(14)
        x = rng.normal(size=(10, 3))
        sigma = renyi.select_sigma(x)
        a = renyi.gram(x, sigma)
        direct = 2.0 * renyi.entropy(a) - renyi.joint_entropy(a, a)
        assert renyi.mutual_information(x, x, sigma, sigma) == pytest.approx(direct, abs=1e-12)

    def test_constant_t_gives_zero(self):
        rng = np.random.default_rng(15)
        x = rng.normal(size=(9, 4))
        t = np.ones((9, 2))
        mi = renyi.mutual_information(x, t, renyi.select_sigma(x), 1.0)
        assert mi == pytest.approx(0.0, abs=1e-9)

    def test_raw_estimate_noise_floor_and_clamping(self):
        # Order-2 entropy is not subadditive, so the raw estimate can go
        # genuinely (not just numerically) negative on independent draws;
        # excursions are rare and small, and clamping hides them.
        rng = np.random.default_rng(16)
        dips = 0
        worst = 0.0
        for _ in range(1000):
            x = rng.normal(size=(16, 3))
            t = rng.normal(size=(16, 2))
            sx, st_ = renyi.select_sigma(x), renyi.select_sigma(t)
            raw = renyi.mutual_information(x, t, sx, st_, clamp=False)
            clamped = renyi.mutual_information(x, t, sx, st_)
            assert clamped >= 0.0
            assert clamped == max(0.0, raw)
            if raw < -1e-8:
                dips += 1
                worst = min(worst, raw)
        assert dips <= 10
        assert worst >= -0.2

    def test_translation_invariance(self):
        rng = np.random.default_rng(18)
        x = rng.normal(size=(12, 3))
        t = rng.normal(size=(12, 2))
        sx, st_ = renyi.select_sigma(x), renyi.select_sigma(t)
        base = renyi.mutual_information(x, t, sx, st_)
        shifted = renyi.mutual_information(x, t + np.array([5.0, -3.0]), sx, st_)
        assert shifted == pytest.approx(base, abs=1e-8)

    def test_row_count_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            renyi.mutual_information(np.ones((3, 2)), np.ones((4, 2)), 1.0, 1.0)


class TestMiGradient:
    def test_matches_finite_differences(self):
        rng = np.random.default_rng(19)
        x = rng.normal(size=(12, 4))
        t = rng.normal(size=(12, 4))
        sx, st_ = renyi.select_sigma(x), renyi.select_sigma(t)

        def f(t_pts):
            return renyi.mi_gradient(x, t_pts, sx, st_)

        assert numkit.grad_check(f, t.copy(), h=1e-4) < 1e-4

    def test_matches_finite_differences_at_constant_t(self):
        rng = np.random.default_rng(20)
        x = rng.normal(size=(8, 3))
        t = np.ones((8, 2))
        sx = renyi.select_sigma(x)

        def f(t_pts):
            return renyi.mi_gradient(x, t_pts, sx, 1.0)

        assert numkit.grad_check(f, t.copy(), h=1e-4) < 1e-4

    def test_value_agrees_with_unclamped_mi(self):
        rng = np.random.default_rng(22)
        x = rng.normal(size=(10, 3))
        t = rng.normal(size=(10, 2))
        sx, st_ = renyi.select_sigma(x), renyi.select_sigma(t)
        value, _ = renyi.mi_gradient(x, t, sx, st_)
        raw = renyi.mutual_information(x, t, sx, st_, clamp=False)
        assert value == pytest.approx(raw, abs=1e-12)

    def test_scale_invariance_with_matched_sigma(self):
        rng = np.random.default_rng(23)
        x = rng.normal(size=(10, 3))
        t = rng.normal(size=(10, 2))
        sx, st_ = renyi.select_sigma(x), renyi.select_sigma(t)
        base, _ = renyi.mi_gradient(x, t, sx, st_)
        scaled, _ = renyi.mi_gradient(x, 7.0 * t, sx, 7.0 * st_)
        assert scaled == pytest.approx(base, abs=1e-9)

    def test_rejects_other_orders(self):
        x = np.random.default_rng(0).normal(size=(4, 2))
        with pytest.raises(UnsupportedOrderError):
            renyi.mi_gradient(x, x, 1.0, 1.0, alpha=1.5)


class TestSelectSigma:
    def test_two_points_distance_two(self):
        assert renyi.select_sigma(np.array([[0.0], [2.0]])) == pytest.approx(2.0, abs=1e-12)

    def test_identical_points_floor_with_warning(self):
        with pytest.warns(UserWarning, match="identical"):
            sigma = renyi.select_sigma(np.ones((5, 3)))
        assert sigma == renyi.SIGMA_FLOOR

    def test_matches_brute_force_median(self):
        rng = np.random.default_rng(24)
        points = rng.normal(size=(100, 5))
        dists = [
            float(np.sqrt(np.sum((points[i] - points[j]) ** 2)))
            for i in range(100)
            for j in range(i + 1, 100)
        ]
        assert renyi.select_sigma(points) == pytest.approx(np.median(dists), rel=1e-9)

    def test_needs_two_points(self):
        with pytest.raises(InvalidArgumentError):
            renyi.select_sigma(np.ones((1, 3)))
