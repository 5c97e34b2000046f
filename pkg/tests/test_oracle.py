import numpy as np
import pytest
import scipy.sparse as sp

from conftest import constant_family
from infgmres.gallery import random_dense, time_delay
from infgmres.oracle import (
    OracleCapError,
    build_explicit,
    companion_spectrum,
    dense_fgmres,
    direct_solve,
    eval_complex,
    francis_qr_eigvals,
    nep_residual,
    truncated_eval,
)
from infgmres.taylor import ScalarFunction, sum_of_products


def test_m_zero_is_A0():
    f, b = random_dense(5, 3, seed=1)
    K, M, c = build_explicit(f, 0, b)
    assert abs(K - f.coeff(0)).max() == 0 and M.nnz == 0
    np.testing.assert_array_equal(c, b)


def test_explicit_inverse(rng):
    f, b = random_dense(5, 4, seed=2)
    K, M, c, Kinv = build_explicit(f, 4, b, with_inverse=True)
    np.testing.assert_allclose(K.toarray() @ Kinv, np.eye(25), atol=1e-13)


@pytest.mark.parametrize("mu", [0.1, -0.25])
def test_companion_solution_stacks_powers(mu):
    # (K - mu M) y = c for the polynomial family has y = [x, mu x, mu^2 x, ...]
    f, b = random_dense(6, 4, seed=3, decay=0.5)
    m = 4
    K, M, c = build_explicit(f, m, b)
    y = np.linalg.solve((K - mu * M).toarray(), c)
    x = direct_solve(f, mu, b)
    for ell in range(m + 1):
        np.testing.assert_allclose(y[ell * 6:(ell + 1) * 6], mu**ell * x, rtol=1e-11, atol=1e-14)
    # and conversely the stacked vector satisfies the companion system
    stacked = np.concatenate([mu**ell * x for ell in range(m + 1)])
    np.testing.assert_allclose((K - mu * M) @ stacked, c, atol=1e-12)


def test_truncated_eval_matches_polynomial():
    f, _ = random_dense(4, 3, seed=4)
    assert abs(truncated_eval(f, 0.4, 3) - f.eval(0.4)).max() <= 1e-14
    assert abs(eval_complex(f, 0.4) - f.eval(0.4)).max() <= 1e-14


def test_dense_fgmres_basics():
    f, b = random_dense(5, 2, seed=5)
    K, M, c = build_explicit(f, 2, b)
    r = dense_fgmres(K, M, c, 0.0, 1)
    # at mu = 0 one step solves K y = c
    np.testing.assert_allclose(r.iterates[0], np.linalg.solve(K.toarray(), c), atol=1e-12)
    assert r.residuals[0] <= 1e-12
    r = dense_fgmres(K, M, c, 0.3, 4)
    Q = r.Q
    np.testing.assert_allclose(Q.T @ Q, np.eye(Q.shape[1]), atol=1e-13)


def test_nilpotent_spectrum():
    f = constant_family(np.diag([1.0, 2.0, 3.0]))
    gam = companion_spectrum(f, 5)
    assert np.abs(gam).max() <= 1e-6


def test_scalar_spectrum():
    # A(mu) = a0 + a1 mu: the only nonzero eigenvalue of M K^{-1} is -a1 / a0
    f = sum_of_products([(sp.csr_matrix([[2.0]]), ScalarFunction.poly(1.0)),
                         (sp.csr_matrix([[3.0]]), ScalarFunction.poly(0.0, 1.0))])
    gam = companion_spectrum(f, 1)
    assert gam[0] == pytest.approx(-1.5)
    assert abs(gam[1]) <= 1e-15


def test_francis_qr_matches_lapack():
    f, _ = random_dense(4, 3, seed=6, decay=0.5)
    ref = companion_spectrum(f, 3, method="lapack")
    ours = companion_spectrum(f, 3, method="qr")
    for z in ref:
        assert np.min(np.abs(ours - z)) <= 1e-9 * max(1.0, abs(z))
    G = np.random.default_rng(0).standard_normal((12, 12))
    eig = np.sort_complex(francis_qr_eigvals(G))
    np.testing.assert_allclose(eig, np.sort_complex(np.linalg.eigvals(G)), atol=1e-10)


def test_reciprocal_eigenvalues_solve_the_nep():
    # larger truncations get less accurate here: the tiny high-order
    # coefficients make the companion eigenproblem badly conditioned
    f, _ = time_delay(20, seed=1)
    gam = companion_spectrum(f, 20)
    for z in gam[:3]:
        assert nep_residual(f, 1.0 / z) <= 1e-8
    assert nep_residual(f, 0.0) > 1e-3


def test_direct_solve_large_delay():
    f, b = time_delay(1000, seed=0)
    x = direct_solve(f, 0.1, b)
    assert np.linalg.norm(f.eval(0.1) @ x - b) <= 1e-12 * np.linalg.norm(b)


def test_cap():
    f, _ = time_delay(100, seed=0)
    with pytest.raises(OracleCapError, match="cap"):
        build_explicit(f, 50, cap=1000)
