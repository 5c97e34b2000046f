import csv
import math

import numpy as np
import pytest

from conftest import constant_family
from infgmres.companion import BlockBasis, BlockVector, shift_down
from infgmres.engine import (
    TRACE_HEADER,
    EngineAbort,
    SolverConfig,
    eps_inner,
    exact_residual_norm,
    orthogonalize,
    residual_split,
    run,
    run_two_pass,
)
from infgmres.gallery import random_dense, time_delay
from infgmres.inner import InnerResult, InnerSolverError, LUSolver
from infgmres.oracle import build_explicit, dense_fgmres


def test_config_validation_names_field():
    for kwargs, field in [({"j_max": 0}, "j_max"), ({"eps": 0.0}, "eps"),
                          ({"ell_policy": "loose"}, "ell_policy"), ({"mu_ref": math.inf}, "mu_ref"),
                          ({"reorth": "never"}, "reorth"), ({"stop_rel_res": -1.0}, "stop_rel_res"),
                          ({"ell": 0.0}, "ell")]:
        with pytest.raises(ValueError, match=field):
            SolverConfig(**kwargs)


def test_eps_inner_examples():
    cfg = SolverConfig(eps=1e-10)
    assert eps_inner(1, 1.0, cfg) == 1e-10
    assert eps_inner(5, 0.5, cfg) == 2 * eps_inner(4, 1.0, cfg)
    assert eps_inner(3, 0.0, cfg) == math.inf
    strict = SolverConfig(eps=1e-10, ell_policy="strict", sigma=1.0, j_sigma=8)
    assert eps_inner(1, 2.0, strict) == pytest.approx(1e-10 / (8 * 2.0), rel=1e-15)
    with pytest.raises(ValueError):
        eps_inner(1, 1.0, SolverConfig(ell_policy="strict"))
    with pytest.raises(ValueError):
        eps_inner(1, -1.0, cfg)


def test_strict_sigma_at_zero_is_one(rng):
    from infgmres.engine import smallest_singular_value
    H = np.triu(rng.standard_normal((7, 6)), -1)
    assert smallest_singular_value(H, 0.0) == pytest.approx(1.0, rel=1e-15)


def test_exact_residual_norm_examples(rng):
    H = np.triu(rng.standard_normal((6, 5)), -1)
    assert exact_residual_norm(H, 0.0, 3.0) == 0.0
    assert exact_residual_norm(np.zeros((1, 0)), 0.7, 3.0) == 3.0


def test_exact_residual_matches_brute_force():
    f, b = random_dense(8, 6, seed=3, decay=0.5)
    m = 12
    K, M, c = build_explicit(f, m, b)
    _, fact, _ = run(f, b, SolverConfig(j_max=6, mu_ref=0.3, keep_full_Ztilde=True))
    mu = 0.3
    Z = fact.Z_dense(m + 1)
    S = np.eye(7, 6) - mu * fact.H
    rhs = np.zeros(7)
    rhs[0] = fact.c_norm
    w = np.linalg.lstsq(S, rhs, rcond=None)[0]
    brute = np.linalg.norm(c - (K - mu * M) @ (Z @ w))
    assert exact_residual_norm(fact.H, mu, fact.c_norm) == pytest.approx(brute, rel=1e-10)


def test_orthogonalize_examples(rng):
    Q = BlockBasis(4)
    q1 = rng.standard_normal(4)
    q1 /= np.linalg.norm(q1)
    Q.append(BlockVector(q1, 4))
    y = BlockVector(np.concatenate([np.zeros(4), rng.standard_normal(4)]), 4)
    h, beta, q = orthogonalize(y, Q)
    assert np.all(h == 0) and beta == pytest.approx(np.linalg.norm(y.data))
    h, beta, q = orthogonalize(BlockVector(q1.copy(), 4), Q)
    assert q is None and beta <= 1e-15
    assert h[0] == pytest.approx(1.0)


@pytest.mark.parametrize("reorth", ["always", "dgks"])
def test_orthogonalize_near_dependent(rng, reorth):
    Qm = np.linalg.qr(rng.standard_normal((40, 6)))[0]
    y = Qm[:, 0] + 1e-9 * rng.standard_normal(40)
    h, beta, q = orthogonalize(BlockVector(y, 40), Qm, reorth=reorth)
    assert np.abs(Qm.T @ q.data).max() <= 1e-12
    np.testing.assert_allclose(Qm @ h + beta * q.data, y, atol=1e-15)


def test_orthonormality_hessenberg_and_arnoldi_relation():
    f, b = time_delay(100, seed=2)
    _, fact, _ = run(f, b, SolverConfig(j_max=20, mu_ref=0.2, keep_full_Ztilde=True))
    Q = fact.Q_dense()
    assert np.abs(Q.T @ Q - np.eye(Q.shape[1])).max() <= 1e-12
    assert np.all(np.tril(fact.H, -2) == 0)
    for i in range(fact.j):
        y = shift_down(fact.Z.column(i)).to_dense(fact.j + 1)
        rel = np.linalg.norm(y - Q[:, : i + 2] @ fact.H[: i + 2, i]) / np.linalg.norm(y)
        assert rel <= 1e-12


def test_matches_dense_fgmres():
    f, b = random_dense(8, 14, seed=11, decay=0.5)
    _, fact, _ = run(f, b, SolverConfig(j_max=6, mu_ref=0.3))
    for m in (6, 10, 14):
        K, M, c = build_explicit(f, m, b)
        ref = dense_fgmres(K, M, c, 0.3, 6)
        assert_same_up_to_signs(fact, ref, 0.3, m)


def assert_same_up_to_signs(fact, ref, mu, m):
    # the reference orthogonalizes q - mu M z instead of M z, which flips column signs
    Q = fact.Q_dense(m + 1)
    d = np.sign(np.sum(Q * ref.Q, axis=0))
    np.testing.assert_allclose(Q * d, ref.Q, atol=1e-12)
    j = fact.j
    Hmu = np.eye(j + 1, j) - mu * fact.H
    np.testing.assert_allclose(d[:, None] * Hmu * d[None, :j], ref.Hmu, atol=1e-12)


class FixedPerturbation:
    """Exact solve plus a deterministic perturbation per outer step.

    The perturbation carries the sign of the exact solution's first entry so
    the map is odd, which keeps it independent of the basis sign convention.
    """

    def __init__(self, A0, size):
        self.lu = LUSolver(A0)
        self.size = size
        self.calls = 0

    def delta(self, i, x):
        return self.size * np.sign(x[0]) * np.sin(np.arange(x.size) + i)

    def solve(self, rhs, tol=None):
        self.calls += 1
        x = self.lu.solve(rhs).w
        return InnerResult(x + self.delta(self.calls, x))


def test_matches_dense_fgmres_with_inexact_steps():
    f, b = random_dense(8, 10, seed=4, decay=0.5)
    _, fact, _ = run(f, b, SolverConfig(j_max=6, mu_ref=0.2), inner=FixedPerturbation(f.coeff(0), 1e-3))
    m = 10
    K, M, c = build_explicit(f, m, b)
    pert = FixedPerturbation(f.coeff(0), 1e-3)

    def inner(i, q):
        z = np.linalg.solve(K.toarray(), q)
        z[:8] += pert.delta(i, z[:8])
        return z

    ref = dense_fgmres(K, M, c, 0.2, 6, inner)
    assert_same_up_to_signs(fact, ref, 0.2, m)


def test_mu_independent_family():
    # the shifted blocks are copied, so the basis never becomes invariant and the
    # iteration is exact at mu = 0 and contracts geometrically elsewhere
    f = constant_family(np.diag(np.arange(1.0, 7.0)))
    b = np.ones(6)
    sol, fact, trace = run(f, b, SolverConfig(j_max=10, mu_ref=0.5))
    x = b / np.arange(1.0, 7.0)
    np.testing.assert_allclose(sol.evaluate(0.0), x, rtol=1e-14)
    sub = fact.H[np.arange(1, 11), np.arange(10)]
    assert sub[0] == pytest.approx(np.linalg.norm(x) / np.linalg.norm(b), rel=1e-13)
    np.testing.assert_allclose(sub[1:], 1.0, rtol=1e-13)
    res = trace.column("rel_res_exact")
    assert np.all(np.diff(res) < 0)
    assert sol.true_relative_residual(0.5, f, b) <= 1e-2


def test_trace_rows_and_csv(tmp_path):
    f, b = time_delay(60, seed=0)
    sol, fact, trace = run(f, b, SolverConfig(j_max=8, eps=1e-10, mu_ref=0.2,
                                               inner={"kind": "perturbed", "seed": 1}))
    assert [r.iter for r in trace.rows] == list(range(1, 9))
    path = tmp_path / "trace.csv"
    trace.to_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == TRACE_HEADER == ["iter", "rel_res_exact", "eps_inner", "p_norm",
                                       "inner_iters", "elapsed_s"]
    assert len(rows) == 9
    assert float(rows[1][2]) == trace.rows[0].eps_inner
    for row in rows[1:]:
        for v in row:
            float(v)
    # the first tolerance uses r~_0 = ||b||
    assert trace.rows[0].eps_inner == pytest.approx(1e-10 / np.linalg.norm(b), rel=1e-15)


def test_reports_match_independent_recomputation():
    f, b = time_delay(80, seed=5)
    _, fact, _ = run(f, b, SolverConfig(j_max=10, eps=1e-8, mu_ref=0.2, keep_full_Ztilde=True,
                                        inner={"kind": "perturbed", "seed": 2}))
    A0 = f.coeff(0).toarray()
    for i, rep in enumerate(fact.reports):
        q = fact.Q.column(i).blocks
        rhs = q[0] - sum(f.coeff(ell) @ q[ell] for ell in range(1, i + 1))
        p = np.linalg.norm(A0 @ fact.Z.column(i).block(0) - rhs)
        assert rep.p_norm == pytest.approx(p, rel=1e-14)
        assert rep.outer_iteration == i + 1


def test_inner_failure_aborts_with_trace():
    class Failing:
        calls = 0

        def solve(self, rhs, tol=None):
            Failing.calls += 1
            if Failing.calls == 4:
                raise InnerSolverError("synthetic breakdown")
            return InnerResult(rhs.copy())

    f, b = time_delay(30, seed=1)
    with pytest.raises(EngineAbort, match="outer iteration 4") as info:
        run(f, b, SolverConfig(j_max=10, mu_ref=0.2), inner=Failing())
    assert len(info.value.trace) == 3
    assert info.value.factorization.j == 3


def test_stop_rel_res_and_convergence_flag():
    f, b = time_delay(60, seed=0)
    sol, fact, trace = run(f, b, SolverConfig(j_max=30, mu_ref=0.2, stop_rel_res=1e-8))
    assert sol.summary["converged"]
    assert trace.rows[-1].rel_res_exact <= 1e-8 < trace.rows[-2].rel_res_exact
    sol, _, _ = run(f, b, SolverConfig(j_max=2, mu_ref=0.2, stop_rel_res=1e-8))
    assert not sol.summary["converged"]


def test_rejects_bad_rhs():
    f, _ = time_delay(10, seed=0)
    with pytest.raises(ValueError, match="nonzero"):
        run(f, np.zeros(10), SolverConfig())
    with pytest.raises(ValueError, match="length"):
        run(f, np.ones(11), SolverConfig())


def test_dgks_matches_always():
    f, b = time_delay(50, seed=3)
    s1, f1, _ = run(f, b, SolverConfig(j_max=12, mu_ref=0.2))
    s2, f2, _ = run(f, b, SolverConfig(j_max=12, mu_ref=0.2, reorth="dgks"))
    np.testing.assert_allclose(f1.H, f2.H, atol=1e-12)


def test_two_pass_delta_bound():
    f, b = time_delay(100, seed=4)
    cfg = SolverConfig(j_max=25, eps=1e-9, mu_ref=0.2, keep_full_Ztilde=True,
                       inner={"kind": "perturbed", "seed": 3})
    (sol, fact, trace), (sigma, j) = run_two_pass(f, b, cfg)
    assert j == 25 and 0 < sigma <= 1.5
    for rep in fact.reports:
        assert rep.eps_inner * rep.r_prev_norm == pytest.approx(sigma / j * 1e-9, rel=1e-14)
    _, _, delta = residual_split(fact, f, b, 0.2)
    assert delta <= 1.05e-9


def test_residual_split_requires_full_basis():
    f, b = time_delay(20, seed=0)
    _, fact, _ = run(f, b, SolverConfig(j_max=3))
    with pytest.raises(ValueError, match="keep_full_Ztilde"):
        residual_split(fact, f, b, 0.1)
