import math

import numpy as np
import pytest
import scipy.sparse
from hypothesis import given, settings
from hypothesis import strategies as st

from parareal_heat import sparse
from parareal_heat.errors import SolverError
from parareal_heat.sparse import (
    SolverConfig,
    SparseMatrix,
    erf,
    factor_block2,
    max_singular_value,
    solve_block2,
    solve_spd,
)

KERNELS = [
    pytest.param((sparse.csr_matvec_numba, sparse.pcg_numba), id="numba"),
    pytest.param((sparse.csr_matvec_numpy, sparse.pcg_numpy), id="numpy"),
]


def random_spd(n, rng):
    B = rng.standard_normal((n, n))
    return B.T @ B + np.eye(n)


def jacobi_svd_max(A, sweeps=60):
    """One-sided Jacobi SVD; returns the largest singular value."""
    U = np.array(A, dtype=float, copy=True)
    n = U.shape[1]
    for _ in range(sweeps):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                alpha = U[:, p] @ U[:, p]
                beta = U[:, q] @ U[:, q]
                gamma = U[:, p] @ U[:, q]
                if gamma == 0.0:
                    continue
                off = max(off, abs(gamma) / math.sqrt(alpha * beta))
                zeta = (beta - alpha) / (2 * gamma)
                t = math.copysign(1.0, zeta) / (abs(zeta) + math.sqrt(1 + zeta * zeta))
                c = 1 / math.sqrt(1 + t * t)
                s = c * t
                up, uq = U[:, p].copy(), U[:, q].copy()
                U[:, p] = c * up - s * uq
                U[:, q] = s * up + c * uq
        if off < 1e-15:
            break
    return float(np.max(np.linalg.norm(U, axis=0)))


def erf_taylor(x, terms=80):
    total, term = 0.0, x
    for n in range(terms):
        total += term / (2 * n + 1)
        term *= -x * x / (n + 1)
    return 2 / math.sqrt(math.pi) * total


@pytest.mark.parametrize("kernels", KERNELS)
def test_matvec_kernels_match_dense(kernels, rng):
    matvec, _ = kernels
    dense = rng.standard_normal((30, 30)) * (rng.random((30, 30)) < 0.2)
    A = SparseMatrix.from_dense(dense)
    x = rng.standard_normal(30)
    out = np.empty(30)
    np.testing.assert_allclose(matvec(A.indptr, A.indices, A.data, x, out), dense @ x, atol=1e-13)


@pytest.mark.parametrize("kernels", KERNELS)
def test_cg_kernels_converge(kernels, rng):
    _, pcg = kernels
    dense = random_spd(40, rng)
    A = SparseMatrix.from_dense(dense)
    b = rng.standard_normal(40)
    x = np.zeros(40)
    it, relres = pcg(A.indptr, A.indices, A.data, 1 / A.diagonal(), b, x, 1e-12, 400)
    assert relres <= 1e-12
    assert np.linalg.norm(dense @ x - b) <= 1e-12 * np.linalg.norm(b)


def test_cg_kernels_agree(rng):
    dense = random_spd(25, rng)
    A = SparseMatrix.from_dense(dense)
    b = rng.standard_normal(25)
    xs = []
    for pcg in (sparse.pcg_numba, sparse.pcg_numpy):
        x = np.zeros(25)
        pcg(A.indptr, A.indices, A.data, 1 / A.diagonal(), b, x, 1e-13, 250)
        xs.append(x)
    np.testing.assert_allclose(xs[0], xs[1], rtol=1e-10)


def test_empty_matrix_matvec():
    A = SparseMatrix.from_dense([[0.0]])
    assert A.nnz == 0
    assert (A @ np.array([3.0]))[0] == 0.0
    assert sparse.csr_matvec_numpy(A.indptr, A.indices, A.data, np.array([3.0]), np.empty(1))[0] == 0.0


def test_solve_identity_and_diagonal():
    r = np.array([1.0, -2.0, 3.5])
    np.testing.assert_array_equal(solve_spd(SparseMatrix.from_dense(np.eye(3)), r), r)
    np.testing.assert_allclose(solve_spd(SparseMatrix.from_dense(np.diag([2.0, 4.0])), np.array([2.0, 8.0])), [1, 2])


def test_solve_random_spd_residual(rng):
    dense = random_spd(50, rng)
    rhs = rng.standard_normal(50)
    x = solve_spd(SparseMatrix.from_dense(dense), rhs)
    assert np.linalg.norm(dense @ x - rhs) <= 1e-12 * np.linalg.norm(rhs)


def test_solve_zero_rhs():
    assert not solve_spd(SparseMatrix.from_dense(np.eye(4)), np.zeros(4)).any()


def test_solve_spd_nonconvergence_reports_residual(rng):
    dense = random_spd(60, rng) + 1e4 * np.diag(rng.random(60))
    with pytest.raises(SolverError) as info:
        solve_spd(SparseMatrix.from_dense(dense), rng.standard_normal(60), SolverConfig(max_iter=2))
    assert info.value.residual > 1e-12


def test_solve_spd_rejects_bad_diagonal():
    with pytest.raises(SolverError):
        solve_spd(SparseMatrix.from_dense([[1.0, 2.0], [2.0, -1.0]]), np.ones(2))


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(rel_tol=0.0)
    with pytest.raises(ValueError):
        SolverConfig(max_iter=0)
    assert SolverConfig().iteration_cap(7) == 70


@pytest.mark.parametrize("dense_limit", [2000, 0])
def test_block2_decoupled(dense_limit, rng):
    A11, A22 = (SparseMatrix.from_dense(random_spd(12, rng)) for _ in range(2))
    Z = SparseMatrix.from_dense(np.zeros((12, 12)))
    r1, r2 = rng.standard_normal(12), rng.standard_normal(12)
    x1, x2 = solve_block2(A11, Z, Z, A22, r1, r2, dense_limit=dense_limit)
    np.testing.assert_allclose(x1, solve_spd(A11, r1), atol=1e-10)
    np.testing.assert_allclose(x2, solve_spd(A22, r2), atol=1e-10)


@pytest.mark.parametrize("dense_limit", [2000, 0])
def test_block2_scalar(dense_limit):
    two, one = SparseMatrix.from_dense([[2.0]]), SparseMatrix.from_dense([[1.0]])
    x1, x2 = solve_block2(two, one, one, two, np.array([3.0]), np.array([3.0]), dense_limit=dense_limit)
    assert x1[0] == pytest.approx(1.0, abs=1e-14) and x2[0] == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("dense_limit", [2000, 0])
def test_block2_random_residual(dense_limit, rng):
    n = 20
    A11, A22 = (SparseMatrix.from_dense(random_spd(n, rng) + n * np.eye(n)) for _ in range(2))
    A12, A21 = (SparseMatrix.from_dense(rng.standard_normal((n, n))) for _ in range(2))
    r1, r2 = rng.standard_normal(n), rng.standard_normal(n)
    x1, x2 = solve_block2(A11, A12, A21, A22, r1, r2, dense_limit=dense_limit)
    full = np.block([[A11.toarray(), A12.toarray()], [A21.toarray(), A22.toarray()]])
    rhs = np.concatenate([r1, r2])
    assert np.linalg.norm(full @ np.concatenate([x1, x2]) - rhs) <= 1e-12 * np.linalg.norm(rhs)


def test_block_factorizations_agree(rng):
    n = 15
    A11, A22 = (SparseMatrix.from_dense(random_spd(n, rng)) for _ in range(2))
    A12, A21 = (SparseMatrix.from_dense(rng.standard_normal((n, n))) for _ in range(2))
    r1, r2 = rng.standard_normal(n), rng.standard_normal(n)
    dense = factor_block2(A11, A12, A21, A22).solve(r1, r2)
    sparse_lu = factor_block2(A11, A12, A21, A22, dense_limit=0).solve(r1, r2)
    assert isinstance(factor_block2(A11, A12, A21, A22, dense_limit=0), sparse.SparseBlockFactorization)
    np.testing.assert_allclose(np.concatenate(dense), np.concatenate(sparse_lu), rtol=1e-10, atol=1e-12)


def _op(A):
    A = np.asarray(A, dtype=float)
    return (lambda v: A @ v), (lambda v: A.T @ v)


def test_sigma_diagonal():
    est = max_singular_value(*_op(np.diag([2.0, 1.0])), 2)
    assert est.converged and est.sigma == pytest.approx(2.0, rel=1e-8)


def test_sigma_nilpotent_jordan_block():
    est = max_singular_value(*_op([[0.0, 1.0], [0.0, 0.0]]), 2)
    assert est.sigma == pytest.approx(1.0, rel=1e-8)


def test_sigma_zero_operator():
    est = max_singular_value(*_op(np.zeros((3, 3))), 3)
    assert est.sigma == 0.0 and est.converged


def test_sigma_random_against_jacobi_oracle(rng):
    A = rng.standard_normal((30, 30))
    oracle = jacobi_svd_max(A)
    assert oracle == pytest.approx(np.linalg.svd(A, compute_uv=False)[0], rel=1e-12)
    est = max_singular_value(*_op(A), 30, tol=1e-12, max_iter=100_000)
    assert est.converged
    assert est.sigma == pytest.approx(oracle, rel=1e-6)


def test_sigma_sign_invariance(rng):
    A = rng.standard_normal((10, 10))
    s1 = max_singular_value(*_op(A), 10, tol=1e-12, max_iter=50_000).sigma
    s2 = max_singular_value(*_op(-A), 10, tol=1e-12, max_iter=50_000).sigma
    assert s1 == pytest.approx(s2, rel=1e-8)


def test_sigma_unconverged_flag(rng):
    A = rng.standard_normal((20, 20))
    est = max_singular_value(*_op(A), 20, tol=1e-14, max_iter=3)
    assert not est.converged and est.iterations == 3 and est.sigma > 0


def test_sigma_adjoint_check(rng):
    A = rng.standard_normal((5, 5))
    max_singular_value(*_op(A), 5, check_adjoint=True)
    with pytest.raises(ValueError):
        max_singular_value(lambda v: A @ v, lambda v: A @ v, 5, check_adjoint=True)


def test_sigma_deterministic(rng):
    A = rng.standard_normal((8, 8))
    assert max_singular_value(*_op(A), 8) == max_singular_value(*_op(A), 8)


def test_erf_values():
    assert erf(0.0) == 0.0
    assert erf(1.0) == pytest.approx(erf_taylor(1.0), abs=1e-15)
    assert erf(1.0) == pytest.approx(0.8427008, abs=1e-7)
    assert abs(erf(6.0) - 1.0) <= 1e-7
    assert abs(erf(-20.0) + 1.0) <= 1e-15


def test_erf_against_taylor_grid():
    for x in np.linspace(-3, 3, 25):
        assert erf(float(x)) == pytest.approx(erf_taylor(float(x)), abs=1e-7)


def test_erf_monotone_and_vectorised():
    xs = np.linspace(-5, 5, 1001)
    vals = erf(xs)
    assert vals.shape == xs.shape
    assert np.all(np.diff(vals) >= 0)


@given(st.floats(-30, 30, allow_nan=False))
def test_erf_odd(x):
    assert abs(erf(x) + erf(-x)) <= 1e-14


def test_sparse_matrix_helpers():
    A = SparseMatrix.from_triplets([0, 0, 1, 1], [0, 0, 1, 0], [1.0, 2.0, 5.0, 1.0], 2)
    np.testing.assert_array_equal(A.toarray(), [[3.0, 0.0], [1.0, 5.0]])
    assert not A.is_symmetric()
    S = SparseMatrix.from_dense([[2.0, 1.0], [1.0, 3.0]])
    assert S.is_symmetric()
    np.testing.assert_allclose(S.linear_combination(2.0, A, -1.0).toarray(), 2 * S.toarray() - A.toarray())
    np.testing.assert_allclose(S.submatrix(np.array([1])).toarray(), [[3.0]])
    assert S.norm_inf() == 4.0
    with pytest.raises(ValueError):
        S @ np.ones(3)
    with pytest.raises(ValueError):
        SparseMatrix.from_scipy(scipy.sparse.csr_matrix(np.ones((2, 3))))


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 25), st.integers(0, 2**32 - 1))
def test_matvec_property(n, seed):
    r = np.random.default_rng(seed)
    dense = r.standard_normal((n, n)) * (r.random((n, n)) < 0.3)
    x = r.standard_normal(n)
    np.testing.assert_allclose(SparseMatrix.from_dense(dense) @ x, dense @ x, atol=1e-12)


@pytest.mark.parametrize("dense_limit", [10**6, 0])
def test_block_factorization_concurrent_solves_bitwise(dense_limit):
    from concurrent.futures import ThreadPoolExecutor

    rng = np.random.default_rng(7)
    n = 40
    blocks = [SparseMatrix.from_dense(rng.standard_normal((n, n)) + (12 * np.eye(n) if i in (0, 3) else 0)) for i in range(4)]
    fac = factor_block2(*blocks, dense_limit=dense_limit)

    def chain(v):
        out = [v]
        for _ in range(150):
            x1, x2 = fac.solve(out[-1], out[-1][::-1].copy())
            out.append((x1 + x2) / np.linalg.norm(x1 + x2))
        return np.array(out)

    starts = [rng.standard_normal(n) for _ in range(8)]
    serial = [chain(v) for v in starts]
    with ThreadPoolExecutor(4) as ex:
        for _ in range(3):
            for a, c in zip(ex.map(chain, starts), serial):
                assert np.array_equal(a, c)
