import numpy as np
import pytest

from oracles import mmd_squared_scalar

from mmdot.embeddings import (
    CostMatrix,
    NumericalInconsistency,
    cost_embedding,
    marginal_residuals,
    mmd_squared,
    solve_against_gram,
    squared_euclidean_cost,
)
from mmdot.errors import IllConditionedGramError, ShapeError
from mmdot.kernels import GAUSSIAN, KRONECKER_DELTA, KernelSpec, eval_kernel, gram


def gauss(sigma=1.0):
    return KernelSpec(GAUSSIAN, sigma=sigma)


class TestCostMatrix:
    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            CostMatrix(entries=np.array([[np.inf]]))

    def test_rejects_negative_squared_euclidean(self):
        with pytest.raises(ValueError):
            CostMatrix(entries=np.array([[-1.0]]))

    def test_user_cost_may_be_negative(self):
        C = CostMatrix(entries=np.array([[-1.0]]), cost_kind="user")
        assert C.entries[0, 0] == -1.0

    def test_squared_euclidean_cost_values(self):
        X = np.array([[0.0], [1.0]])
        Y = np.array([[0.0], [3.0]])
        C = squared_euclidean_cost(X, Y)
        np.testing.assert_allclose(C.entries, [[0.0, 9.0], [1.0, 4.0]])

    def test_squared_euclidean_dim_mismatch(self):
        with pytest.raises(ShapeError):
            squared_euclidean_cost(np.zeros((2, 2)), np.zeros((2, 3)))


class TestMmdSquared:
    def test_identical_sets_zero(self):
        A = np.array([[0.0], [1.0], [2.0]])
        assert mmd_squared(gauss(), A, A.copy()) == 0.0

    def test_two_singletons(self):
        # k(a,a) + k(b,b) - 2 k(a,b) with a=0, b=2, sigma=1.
        val = mmd_squared(gauss(), np.array([[0.0]]), np.array([[2.0]]))
        assert val == pytest.approx(2.0 - 2.0 * np.exp(-2.0), abs=1e-12)

    def test_matches_scalar_expansion(self):
        A = np.array([[0.0], [1.0]])
        B = np.array([[0.5]])
        spec = gauss()
        expected = mmd_squared_scalar(
            lambda a, b: eval_kernel(spec, a, b), list(A), list(B)
        )
        assert mmd_squared(spec, A, B) == pytest.approx(expected, abs=1e-12)

    def test_symmetry_and_nonnegativity(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            A = rng.normal(size=(rng.integers(1, 6), 2))
            B = rng.normal(size=(rng.integers(1, 6), 2))
            ab = mmd_squared(gauss(0.5), A, B)
            ba = mmd_squared(gauss(0.5), B, A)
            assert ab == pytest.approx(ba, abs=1e-14)
            assert ab >= 0.0

    def test_delta_kernel(self):
        A = np.array([[0.0], [1.0]])
        B = np.array([[2.0]])
        # Disjoint supports: 1/m + 1/n - 0 is not right; expand: mean(Kaa)=1/2,
        # mean(Kbb)=1, cross=0.
        assert mmd_squared(KernelSpec(KRONECKER_DELTA), A, B) == pytest.approx(1.5)


class TestMarginalResiduals:
    def test_uniform_marginals_zero(self):
        alpha = np.full((3, 2), 1.0 / 6)
        rng = np.random.default_rng(0)
        G1 = gram(gauss(), rng.normal(size=(3, 2)), rng.normal(size=(3, 2)))
        out = marginal_residuals(alpha, np.eye(3), np.eye(2))
        assert out == (0.0, 0.0, 0.0, 0.0)

    def test_singleton(self):
        assert marginal_residuals(
            np.array([[1.0]]), np.array([[1.0]]), np.array([[1.0]])
        ) == (0.0, 0.0, 0.0, 0.0)

    def test_concentrated_column(self):
        alpha = np.array([[1.0], [0.0]])
        r1_G, r2_G, r1_GG, r2_GG = marginal_residuals(alpha, np.eye(2), np.eye(1))
        assert r1_G == pytest.approx(0.5)  # (1/2)^2 + (1/2)^2
        assert r1_GG == pytest.approx(0.5)
        assert r2_G == 0.0 and r2_GG == 0.0

    def test_zero_iff_uniform_marginals(self):
        # Strictly PD grams: residual norms vanish only at uniform marginals.
        rng = np.random.default_rng(7)
        X = rng.normal(size=(3, 2))
        Y = rng.normal(size=(4, 2))
        G1 = gram(gauss(), X, X)
        G2 = gram(gauss(), Y, Y)
        skew = rng.random((3, 4))
        skew /= skew.sum()
        out = marginal_residuals(skew, G1, G2)
        assert max(out) > 1e-6
        uniform = np.full((3, 4), 1.0 / 12)
        out_u = marginal_residuals(uniform, G1, G2)
        assert max(np.abs(out_u)) < 1e-20

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            marginal_residuals(np.ones((2, 2)) / 4, np.eye(3), np.eye(2))


class TestCostEmbedding:
    def test_identity_grams_passthrough(self):
        C = CostMatrix(entries=np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]))
        out = cost_embedding(np.eye(3), np.eye(2), C, jitter=0.0)
        np.testing.assert_allclose(out.rho, C.entries, atol=1e-12)
        assert out.jitter_used == 0.0

    def test_singleton(self):
        out = cost_embedding(
            np.array([[1.0]]), np.array([[1.0]]), CostMatrix(entries=np.array([[5.0]]))
        )
        assert out.rho[0, 0] == pytest.approx(5.0)

    def test_reconstructs_cost_through_grams(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(2, 2))
        Y = rng.normal(size=(2, 2))
        G1 = gram(gauss(), X, X)
        G2 = gram(gauss(), Y, Y)
        C = squared_euclidean_cost(X, Y)
        out = cost_embedding(G1, G2, C, jitter=0.0)
        recon = G1.entries @ out.rho @ G2.entries
        assert np.linalg.norm(recon - C.entries) <= 1e-8

    def test_well_conditioned_relative_residual(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(5, 3)) * 3.0
        Y = rng.normal(size=(4, 3)) * 3.0
        G1 = gram(gauss(), X, X)
        G2 = gram(gauss(), Y, Y)
        C = squared_euclidean_cost(X, Y)
        out = cost_embedding(G1, G2, C, jitter=0.0)
        recon = G1.entries @ out.rho @ G2.entries
        rel = np.linalg.norm(recon - C.entries) / np.linalg.norm(C.entries)
        assert rel <= 1e-8

    def test_jitter_cap_raises(self):
        # Indefinite matrix: no amount of capped jitter makes it SPD.
        G_bad = np.array([[1.0, 2.0], [2.0, 1.0]])
        C = CostMatrix(entries=np.ones((2, 2)))
        with pytest.raises(IllConditionedGramError):
            cost_embedding(G_bad, np.eye(2), C)

    def test_jitter_escalation_recorded(self):
        # Duplicated points give an exactly singular gram; escalation kicks in.
        X = np.array([[0.0], [0.0]])
        G1 = gram(gauss(), X, X)
        C = CostMatrix(entries=np.ones((2, 2)))
        out = cost_embedding(G1, np.eye(2), C, jitter=0.0)
        assert out.jitter_used > 0.0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            cost_embedding(np.eye(3), np.eye(2), CostMatrix(entries=np.ones((2, 2))))


class TestSolveAgainstGram:
    def test_plain_solve(self):
        G = np.array([[2.0, 0.0], [0.0, 4.0]])
        X, j = solve_against_gram(G, np.array([[2.0], [8.0]]))
        np.testing.assert_allclose(X, [[1.0], [2.0]])
        assert j == 0.0

    def test_indefinite_raises(self):
        with pytest.raises(IllConditionedGramError):
            solve_against_gram(np.array([[1.0, 2.0], [2.0, 1.0]]), np.eye(2))
