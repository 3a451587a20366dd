import numpy as np
import pytest
import scipy.linalg

from binembed.core import BinembedError, DimensionMismatch, SeedTree
from binembed.transforms import (
    ToeplitzBlock,
    build_hadamard_sketch,
    build_toeplitz_block,
    fwht,
    fwht_inplace,
    sample_gaussian_matrix,
    sketch_apply,
    toeplitz_apply,
    toeplitz_apply_naive,
)


def rel_err(a, b):
    return np.linalg.norm(np.asarray(a) - np.asarray(b)) / max(np.linalg.norm(b), 1e-300)


class TestFWHT:
    def test_two_point(self):
        np.testing.assert_allclose(fwht([1.0, 0.0]), [2 ** -0.5, 2 ** -0.5])

    def test_constant(self):
        np.testing.assert_allclose(fwht([1.0, 1, 1, 1]), [2.0, 0, 0, 0], atol=1e-15)

    def test_matches_dense_hadamard(self):
        rng = np.random.default_rng(0)
        for L in (2, 8, 64, 256):
            v = rng.standard_normal(L)
            H = scipy.linalg.hadamard(L) / np.sqrt(L)
            np.testing.assert_allclose(fwht(v), H @ v, rtol=1e-12, atol=1e-12)

    @pytest.mark.parametrize("L", [2 ** k for k in range(1, 13)])
    def test_norm_and_involution(self, L):
        v = np.random.default_rng(L).standard_normal(L)
        h = fwht(v)
        assert abs(np.linalg.norm(h) - np.linalg.norm(v)) <= 1e-6 * np.linalg.norm(v)
        assert rel_err(fwht(h), v) <= 1e-6

    def test_batch_and_inplace(self):
        V = np.random.default_rng(1).standard_normal((3, 16))
        out = fwht_inplace(V.copy())
        for i in range(3):
            np.testing.assert_allclose(out[i], fwht(V[i]))

    def test_rejects_non_power_of_two(self):
        with pytest.raises(BinembedError):
            fwht(np.ones(6))


class TestHadamardSketch:
    def test_deterministic(self):
        a = build_hadamard_sketch(512, 666, SeedTree(3))
        b = build_hadamard_sketch(512, 666, SeedTree(3))
        np.testing.assert_array_equal(a.diag_signs, b.diag_signs)
        np.testing.assert_array_equal(a.row_indices, b.row_indices)

    def test_padding_and_scale(self):
        s = build_hadamard_sketch(500, 64, 0)
        assert s.padded_dim == 512
        assert s.out_dim == 64
        assert s.scale == pytest.approx(np.sqrt(512 / 64))
        assert set(np.unique(s.diag_signs)) <= {-1.0, 1.0}
        assert 0 <= s.row_indices.min() and s.row_indices.max() < 512

    def test_sign_balance(self):
        s = build_hadamard_sketch(10_000, 1, 11)
        # 16384 padded signs; 3 sigma ~ 0.023
        assert abs(s.diag_signs.mean()) < 0.05

    def test_linearity_and_zero(self):
        s = build_hadamard_sketch(40, 70, 2)
        rng = np.random.default_rng(2)
        x, y = rng.standard_normal((2, 40))
        a, b = rng.standard_normal(2)
        np.testing.assert_array_equal(sketch_apply(s, np.zeros(40)), np.zeros(70))
        np.testing.assert_allclose(sketch_apply(s, a * x + b * y),
                                   a * sketch_apply(s, x) + b * sketch_apply(s, y),
                                   rtol=1e-6, atol=1e-12)

    @pytest.mark.parametrize("p,n", [(32, 48), (5, 3), (64, 64), (17, 100)])
    def test_matches_dense_oracle(self, p, n):
        s = build_hadamard_sketch(p, n, SeedTree(p * n))
        pp = s.padded_dim
        H = scipy.linalg.hadamard(pp) / np.sqrt(pp)
        P = np.zeros((n, pp))
        P[np.arange(n), s.row_indices] = 1
        D = np.diag(s.diag_signs)
        dense = s.scale * (P @ H @ D)[:, :p]
        X = np.random.default_rng(p).standard_normal((100, p))
        for x in X:
            assert rel_err(sketch_apply(s, x), dense @ x) <= 1e-6
        np.testing.assert_allclose(sketch_apply(s, X), X @ dense.T, rtol=1e-6, atol=1e-12)

    def test_dimension_mismatch(self):
        s = build_hadamard_sketch(8, 4, 0)
        with pytest.raises(DimensionMismatch):
            sketch_apply(s, np.ones(9))


class TestToeplitz:
    def test_symbolic_n2(self):
        g = np.array([1.0, 10.0, 100.0])
        t = ToeplitzBlock(g, np.ones(2), 2)
        # T = [[g2, g1], [g3, g2]]
        np.testing.assert_array_equal(t.dense(), [[10.0, 1.0], [100.0, 10.0]])
        np.testing.assert_allclose(toeplitz_apply(t, [1.0, 0.0]), [10.0, 100.0])
        np.testing.assert_array_equal(toeplitz_apply_naive(t, [1.0, 0.0]), [10.0, 100.0])

    def test_degenerate_n1(self):
        t = ToeplitzBlock(np.array([3.0]), np.array([-1.0]), 1)
        assert toeplitz_apply_naive(t, [2.0]).tolist() == [-6.0]
        np.testing.assert_allclose(toeplitz_apply(t, [2.0]), [-6.0])

    def test_deterministic_and_shapes(self):
        a = build_toeplitz_block(4, 4, SeedTree(1))
        b = build_toeplitz_block(4, 4, SeedTree(1))
        np.testing.assert_array_equal(a.generator, b.generator)
        np.testing.assert_array_equal(a.diag_signs, b.diag_signs)
        assert build_toeplitz_block(256, 10, 0).generator.shape == (511,)
        c = build_toeplitz_block(4, 4, SeedTree(1), index=1)
        assert not np.array_equal(a.generator, c.generator)

    def test_generator_moments(self):
        g = build_toeplitz_block(50_000, 1, 5).generator  # 99,999 draws
        assert abs(g.mean()) < 0.02
        assert abs(g.var() - 1) < 0.03

    def test_rows_out_bounds(self):
        with pytest.raises(BinembedError):
            build_toeplitz_block(4, 5, 0)
        with pytest.raises(BinembedError):
            build_toeplitz_block(4, 0, 0)

    def test_zero_and_linearity(self):
        t = build_toeplitz_block(30, 12, 9)
        np.testing.assert_allclose(toeplitz_apply(t, np.zeros(30)), np.zeros(12), atol=0)
        rng = np.random.default_rng(4)
        x, y = rng.standard_normal((2, 30))
        np.testing.assert_allclose(toeplitz_apply(t, 2 * x - 3 * y),
                                   2 * toeplitz_apply(t, x) - 3 * toeplitz_apply(t, y),
                                   rtol=1e-6, atol=1e-10)

    def test_fast_matches_naive_random(self):
        rng = np.random.default_rng(12)
        for i in range(200):
            n = int(rng.integers(1, 257))
            m = int(rng.integers(1, n + 1))
            t = build_toeplitz_block(n, m, SeedTree(i))
            y = rng.standard_normal(n)
            assert rel_err(toeplitz_apply(t, y), toeplitz_apply_naive(t, y)) <= 1e-8

    def test_chunked_path_matches_naive(self):
        rng = np.random.default_rng(13)
        for i in range(200):
            n = int(rng.integers(1, 257))
            m = int(rng.integers(1, n + 1))
            c = int(rng.integers(1, n + 1))
            t = build_toeplitz_block(n, m, SeedTree(i), chunk=c)
            y = rng.standard_normal(n)
            assert rel_err(toeplitz_apply(t, y), toeplitz_apply_naive(t, y)) <= 1e-8

    @pytest.mark.parametrize("n,m", [(2000, 10), (3001, 512), (1300, 100)])
    def test_default_chunking_large_n(self, n, m):
        t = build_toeplitz_block(n, m, SeedTree(n))
        assert t.chunk < n
        Y = np.random.default_rng(n).standard_normal((3, n))
        assert rel_err(toeplitz_apply(t, Y), toeplitz_apply_naive(t, Y)) <= 1e-8

    def test_batch(self):
        t = build_toeplitz_block(64, 20, 3)
        Y = np.random.default_rng(0).standard_normal((5, 64))
        np.testing.assert_allclose(toeplitz_apply(t, Y), toeplitz_apply_naive(t, Y), rtol=1e-9)

    def test_dimension_mismatch(self):
        t = build_toeplitz_block(8, 4, 0)
        with pytest.raises(DimensionMismatch):
            toeplitz_apply(t, np.ones(7))
        with pytest.raises(DimensionMismatch):
            toeplitz_apply_naive(t, np.ones(7))


class TestGaussianMatrix:
    def test_deterministic(self):
        np.testing.assert_array_equal(sample_gaussian_matrix(3, 4, 1), sample_gaussian_matrix(3, 4, 1))
        a = sample_gaussian_matrix(3, 4, SeedTree(1))
        np.testing.assert_array_equal(a, sample_gaussian_matrix(3, 4, SeedTree(1)))

    def test_moments(self):
        A = sample_gaussian_matrix(1000, 1000, 0)
        assert abs(A.mean()) < 0.01
        assert abs(A.var() - 1) < 0.02

    def test_single_entry(self):
        a = sample_gaussian_matrix(1, 1, 0)
        assert a.shape == (1, 1) and np.isfinite(a[0, 0])
        with pytest.raises(BinembedError):
            sample_gaussian_matrix(0, 1, 0)
