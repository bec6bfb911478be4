"""Whitening and feasible curvilinear minimization under orthonormality."""

import numpy as np
import pytest

from dadl.errors import ConfigError, DataError, NumericalError
from dadl.manifold import (CurvilinearOptions, minimize_feasible, whiten,
                           whiten_auto)

TIGHT = CurvilinearOptions(max_iters=2000, f_tol=1e-12)


def random_psd(rng, n, rank=None):
    A = rng.normal(size=(n, rank or n))
    return A @ A.T


def random_stiefel(rng, n, p):
    return np.linalg.qr(rng.normal(size=(n, p)))[0]


def quad(C):
    return lambda B: (float(np.sum(B * (C @ B))), 2.0 * (C @ B))


class TestWhiten:
    def test_identity_gram(self):
        assert np.allclose(whiten(np.eye(4)), np.eye(4))

    def test_scaled_identity(self):
        assert np.allclose(whiten(4.0 * np.eye(3)), 2.0 * np.eye(3))

    @pytest.mark.parametrize("seed", range(8))
    def test_reconstruction(self, seed):
        rng = np.random.default_rng(seed)
        K = random_psd(rng, 9) + 0.1 * np.eye(9)
        for eps in (0.0, 1e-8):
            R = whiten(K, eps)
            assert np.allclose(R, np.triu(R))
            assert np.linalg.norm(R.T @ R - K - eps * np.eye(9)) <= 1e-10 * np.linalg.norm(K)

    def test_rejects_asymmetric_and_negative_jitter(self):
        with pytest.raises(DataError):
            whiten(np.array([[1.0, 0.5], [0.0, 1.0]]))
        with pytest.raises(ConfigError):
            whiten(np.eye(2), eps=-1e-3)

    def test_indefinite_matrix_fails(self):
        with pytest.raises(NumericalError):
            whiten(np.diag([1.0, -1.0]))

    def test_auto_ladder_returns_zero_jitter_when_possible(self):
        K = random_psd(np.random.default_rng(0), 6) + 0.5 * np.eye(6)
        R, eps = whiten_auto(K)
        assert eps == 0.0
        assert np.allclose(R.T @ R, K)

    def test_auto_ladder_climbs_on_singular_gram(self):
        # rank-deficient PSD: exact cholesky fails, jitter succeeds
        K = random_psd(np.random.default_rng(1), 6, rank=3)
        R, eps = whiten_auto(K)
        assert eps > 0.0
        assert np.linalg.norm(R.T @ R - K - eps * np.eye(6)) <= 1e-8

    def test_auto_ladder_exhausts_on_indefinite(self):
        with pytest.raises(NumericalError):
            whiten_auto(np.diag([1.0, -1.0]))


class TestMinimizeFeasible:
    @pytest.mark.parametrize("seed", range(10))
    def test_recovers_smallest_eigenvalue_sum(self, seed):
        """tr(B^T C B) over B^T B = I bottoms out at the sum of the n
        smallest eigenvalues of C."""
        rng = np.random.default_rng(seed)
        C = random_psd(rng, 30)
        n = 4
        target = np.sort(np.linalg.eigvalsh(C))[:n].sum()
        res = minimize_feasible(quad(C), random_stiefel(rng, 30, n), TIGHT)
        assert res.value == pytest.approx(target, abs=1e-6)
        assert res.max_orthogonality_error <= 1e-8

    def test_constant_objective_stops_immediately(self):
        B0 = random_stiefel(np.random.default_rng(2), 8, 3)
        res = minimize_feasible(lambda B: (1.5, np.zeros_like(B)), B0)
        assert res.iterations == 0
        assert res.converged
        assert np.array_equal(res.point, B0)

    @pytest.mark.parametrize("seed", range(10))
    def test_never_worse_than_start(self, seed):
        rng = np.random.default_rng(seed)
        C = rng.normal(size=(12, 12))
        C = (C + C.T) / 2.0  # indefinite is fine
        B0 = random_stiefel(rng, 12, 3)
        res = minimize_feasible(quad(C), B0, CurvilinearOptions(max_iters=25))
        assert res.value <= quad(C)(B0)[0] + 1e-12

    @pytest.mark.parametrize("seed", range(6))
    def test_iterates_stay_feasible(self, seed):
        rng = np.random.default_rng(seed)
        C = random_psd(rng, 20)
        res = minimize_feasible(quad(C), random_stiefel(rng, 20, 5), TIGHT)
        assert res.max_orthogonality_error <= 1e-8
        B = res.point
        assert np.linalg.norm(B.T @ B - np.eye(5)) <= 1e-8

    def test_block_list_variable(self):
        """Two independent blocks minimized jointly reach the sum of their
        separate optima."""
        rng = np.random.default_rng(7)
        C1, C2 = random_psd(rng, 15), random_psd(rng, 10)
        starts = [random_stiefel(rng, 15, 2), random_stiefel(rng, 10, 2)]

        def f(bs):
            v1, g1 = quad(C1)(bs[0])
            v2, g2 = quad(C2)(bs[1])
            return v1 + v2, [g1, g2]

        res = minimize_feasible(f, starts, TIGHT)
        target = np.sort(np.linalg.eigvalsh(C1))[:2].sum() + np.sort(np.linalg.eigvalsh(C2))[:2].sum()
        assert res.value == pytest.approx(target, abs=1e-6)
        assert all(b.shape == s.shape for b, s in zip(res.point, starts))

    def test_infeasible_start_rejected(self):
        B0 = np.ones((6, 2))
        with pytest.raises(NumericalError):
            minimize_feasible(lambda B: (0.0, np.zeros_like(B)), B0)

    def test_wide_block_rejected(self):
        with pytest.raises(DataError):
            minimize_feasible(lambda B: (0.0, np.zeros_like(B)), np.eye(3)[:2])

    def test_non_finite_objective_rejected(self):
        B0 = random_stiefel(np.random.default_rng(0), 5, 2)
        with pytest.raises(NumericalError):
            minimize_feasible(lambda B: (np.nan, np.zeros_like(B)), B0)

    def test_values_trace_starts_at_f0(self):
        rng = np.random.default_rng(9)
        C = random_psd(rng, 10)
        B0 = random_stiefel(rng, 10, 2)
        res = minimize_feasible(quad(C), B0, CurvilinearOptions(max_iters=40))
        assert res.values[0] == pytest.approx(quad(C)(B0)[0])
        assert res.value <= min(res.values) + 1e-12
