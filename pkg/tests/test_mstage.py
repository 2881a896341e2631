import numpy as np
import pytest
from scipy.optimize import minimize

from iwmc.data import DataError, IncompleteMatrix
from iwmc.mstage import (CompletionResult, MStageConfig, complete, init_g,
                         surrogate_objective, update_g, update_h,
                         weighted_objective)


def minimize_column(G, x, wq, beta):
    """Independent numerical minimizer of the per-column subproblem."""
    def f(h):
        return wq ** 2 * np.sum((G @ h - x) ** 2) + beta * np.sum(h ** 2)
    res = minimize(f, np.zeros(G.shape[1]), method="BFGS",
                   options={"gtol": 1e-12})
    return res.x, f(res.x)


def minimize_row(H, x, w, beta):
    """Independent numerical minimizer of the per-row subproblem."""
    w2 = w ** 2
    def f(g):
        return np.sum(w2 * (g @ H - x) ** 2) + beta * np.sum(g ** 2)
    res = minimize(f, np.zeros(H.shape[0]), method="BFGS",
                   options={"gtol": 1e-12})
    return res.x, f(res.x)


class TestInitG:
    def test_orthonormal_columns(self):
        G = init_g(5, 2, seed=0)
        assert abs(np.linalg.norm(G[:, 0]) - 1) < 1e-10
        assert abs(np.linalg.norm(G[:, 1]) - 1) < 1e-10
        assert abs(G[:, 0] @ G[:, 1]) < 1e-10

    def test_deterministic(self):
        assert np.array_equal(init_g(6, 3, seed=7), init_g(6, 3, seed=7))

    def test_square_orthogonal_determinant(self):
        G = init_g(3, 3, seed=1)
        assert abs(abs(np.linalg.det(G)) - 1) < 1e-9

    def test_rank_exceeds_rows(self):
        with pytest.raises(DataError):
            init_g(2, 3, seed=0)


class TestUpdateH:
    def test_zero_weight_column(self):
        rng = np.random.default_rng(0)
        G = rng.standard_normal((4, 2))
        xhat = rng.standard_normal((4, 3))
        H = update_h(G, xhat, np.array([1.0, 0.0, 2.0]), beta=0.5)
        assert np.allclose(H[:, 1], 0.0)

    def test_literal_mode_matches_exact_when_orthonormal(self):
        rng = np.random.default_rng(1)
        G = init_g(6, 3, seed=1)
        xhat = rng.standard_normal((6, 4))
        w = np.ones(4)
        exact = update_h(G, xhat, w, beta=1.0)
        lit = update_h(G, xhat, w, beta=1.0, literal=True)
        assert np.allclose(exact, lit, atol=1e-10)

    def test_matches_numerical_minimizer(self):
        rng = np.random.default_rng(2)
        G = rng.standard_normal((4, 2))
        xhat = rng.standard_normal((4, 3))
        w = np.array([1.0, 2.0, 0.5])
        beta = 1.0
        H = update_h(G, xhat, w, beta)
        for q in range(3):
            _, fstar = minimize_column(G, xhat[:, q], w[q], beta)
            fours = (w[q] ** 2 * np.sum((G @ H[:, q] - xhat[:, q]) ** 2)
                     + beta * np.sum(H[:, q] ** 2))
            assert fours <= fstar + 1e-6 * max(1.0, abs(fstar))

    def test_first_order_optimality(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            G = rng.standard_normal((5, 2))
            xhat = rng.standard_normal((5, 4))
            w = rng.random(4) + 0.1
            beta = 0.7
            H = update_h(G, xhat, w, beta)
            for q in range(4):
                grad = (2 * w[q] ** 2 * G.T @ (G @ H[:, q] - xhat[:, q])
                        + 2 * beta * H[:, q])
                assert np.linalg.norm(grad) < 1e-8

    def test_bad_beta(self):
        with pytest.raises(DataError):
            update_h(np.ones((2, 1)), np.ones((2, 2)), np.ones(2), beta=0.0)


class TestUpdateG:
    def test_huge_beta_shrinks_rows(self):
        rng = np.random.default_rng(4)
        H = rng.standard_normal((2, 3))
        xhat = rng.standard_normal((5, 3))
        G = update_g(H, xhat, np.ones(3), beta=1e9)
        assert (np.linalg.norm(G, axis=1) < 1e-6).all()

    def test_projection_limit(self):
        rng = np.random.default_rng(5)
        H, _ = np.linalg.qr(rng.standard_normal((4, 2)))
        H = H.T  # orthonormal rows, 2 x 4
        xhat = rng.standard_normal((5, 4))
        G = update_g(H, xhat, np.ones(4), beta=1e-12)
        assert np.allclose(G, xhat @ H.T, atol=1e-6)

    def test_matches_numerical_minimizer(self):
        rng = np.random.default_rng(6)
        H = rng.standard_normal((2, 4))
        xhat = rng.standard_normal((5, 4))
        w = rng.random(4) + 0.1
        beta = 0.9
        G = update_g(H, xhat, w, beta)
        for p in range(5):
            _, fstar = minimize_row(H, xhat[p], w, beta)
            fours = (np.sum(w ** 2 * (G[p] @ H - xhat[p]) ** 2)
                     + beta * np.sum(G[p] ** 2))
            assert fours <= fstar + 1e-6 * max(1.0, abs(fstar))

    def test_first_order_optimality(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            H = rng.standard_normal((3, 5))
            xhat = rng.standard_normal((4, 5))
            w = rng.random(5) + 0.1
            beta = 0.4
            G = update_g(H, xhat, w, beta)
            for p in range(4):
                grad = (2 * (w ** 2 * (G[p] @ H - xhat[p])) @ H.T
                        + 2 * beta * G[p])
                assert np.linalg.norm(grad) < 1e-8

    def test_unweighted_reduction(self):
        # with all-ones weights the update equals plain ridge factorization
        rng = np.random.default_rng(8)
        H = rng.standard_normal((2, 4))
        xhat = rng.standard_normal((6, 4))
        beta = 0.3
        G = update_g(H, xhat, np.ones(4), beta)
        expected = xhat @ H.T @ np.linalg.inv(H @ H.T + beta * np.eye(2))
        assert np.allclose(G, expected, atol=1e-10)


class TestWeightedObjective:
    def test_zero_factors(self):
        rng = np.random.default_rng(9)
        vals = rng.standard_normal((4, 3))
        mask = rng.random((4, 3)) > 0.3
        mask[0] = True
        X = IncompleteMatrix(vals, mask)
        w = rng.random(3)
        got = weighted_objective(np.zeros((4, 2)), np.zeros((2, 3)), X, w, beta=1.0)
        expected = sum(
            w[q] ** 2 * vals[p, q] ** 2
            for p in range(4) for q in range(3) if mask[p, q]
        )
        assert abs(got - expected) < 1e-10

    def test_exact_factorization_is_zero(self):
        rng = np.random.default_rng(10)
        G = rng.standard_normal((4, 2))
        H = rng.standard_normal((2, 3))
        X = IncompleteMatrix.complete(G @ H)
        assert weighted_objective(G, H, X, np.ones(3), beta=1e-300) < 1e-12

    def test_double_loop_oracle(self):
        rng = np.random.default_rng(11)
        vals = rng.standard_normal((5, 4))
        mask = rng.random((5, 4)) > 0.4
        mask[0] = True
        X = IncompleteMatrix(vals, mask)
        G = rng.standard_normal((5, 2))
        H = rng.standard_normal((2, 4))
        w = rng.random(4)
        beta = 0.8
        expected = beta * ((G ** 2).sum() + (H ** 2).sum())
        for p in range(5):
            for q in range(4):
                if mask[p, q]:
                    expected += w[q] ** 2 * (G[p] @ H[:, q] - vals[p, q]) ** 2
        assert abs(weighted_objective(G, H, X, w, beta) - expected) < 1e-10


class TestComplete:
    def test_fully_observed_identity(self):
        rng = np.random.default_rng(12)
        vals = rng.standard_normal((6, 4))
        X = IncompleteMatrix.complete(vals)
        res = complete(X, np.ones(4), MStageConfig(rank=2, beta=1.0, seed=0))
        assert np.array_equal(res.completed, vals)

    def test_rank1_recovery(self):
        rng = np.random.default_rng(13)
        u = rng.standard_normal(8)
        v = rng.standard_normal(6)
        u /= np.linalg.norm(u)
        v /= np.linalg.norm(v)
        truth = 3.0 * np.outer(u, v)
        miss = rng.choice(48, size=5, replace=False)
        mask = np.ones(48, dtype=bool)
        mask[miss] = False
        X = IncompleteMatrix(truth, mask.reshape(8, 6))
        res = complete(X, np.ones(6), MStageConfig(rank=1, beta=1e-3, seed=1))
        m = ~X.observed_mask
        rel = np.sqrt(((res.completed - truth)[m] ** 2).mean()) / np.abs(truth[m]).mean()
        assert rel < 1e-2

    def test_deterministic(self):
        rng = np.random.default_rng(14)
        vals = rng.standard_normal((7, 5))
        mask = rng.random((7, 5)) > 0.2
        mask[0] = True
        X = IncompleteMatrix(vals, mask)
        cfg = MStageConfig(rank=2, beta=0.5, seed=3)
        a = complete(X, np.ones(5), cfg)
        b = complete(X, np.ones(5), cfg)
        assert np.array_equal(a.completed, b.completed)

    def test_observed_entries_bit_preserved(self):
        rng = np.random.default_rng(15)
        vals = rng.standard_normal((8, 5))
        mask = rng.random((8, 5)) > 0.3
        mask[0] = True
        X = IncompleteMatrix(vals, mask)
        res = complete(X, rng.random(5), MStageConfig(rank=2, beta=2.0, seed=4))
        assert np.array_equal(res.completed[mask], vals[mask])

    def test_objective_trace_nonincreasing_exact_mode(self):
        rng = np.random.default_rng(16)
        vals = rng.standard_normal((10, 6))
        mask = rng.random((10, 6)) > 0.25
        mask[0] = True
        X = IncompleteMatrix(vals, mask)
        res = complete(X, rng.random(6) + 0.1, MStageConfig(rank=3, beta=1.0, seed=5))
        trace = np.array(res.objective_trace)
        assert (np.diff(trace) <= 1e-9).all()

    def test_rank_clamped_with_warning(self):
        X = IncompleteMatrix.complete(np.random.default_rng(17).standard_normal((3, 2)))
        with pytest.warns(UserWarning, match="clamped"):
            res = complete(X, np.ones(2), MStageConfig(rank=5, beta=1.0, seed=0))
        assert res.factors.rank == 2


class TestHalfStepMonotonicity:
    def test_surrogate_never_increases(self):
        rng = np.random.default_rng(18)
        for _ in range(25):
            n, m, r = rng.integers(3, 9), rng.integers(3, 7), 2
            G = rng.standard_normal((n, r))
            H = rng.standard_normal((r, m))
            xhat = rng.standard_normal((n, m))
            w = rng.random(m) + 0.05
            beta = 0.5
            before = surrogate_objective(G, H, xhat, w, beta)
            H2 = update_h(G, xhat, w, beta)
            mid = surrogate_objective(G, H2, xhat, w, beta)
            assert mid <= before + 1e-9
            G2 = update_g(H2, xhat, w, beta)
            after = surrogate_objective(G2, H2, xhat, w, beta)
            assert after <= mid + 1e-9
