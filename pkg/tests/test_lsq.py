import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from infgmres.lsq import (
    IncrementalGivens,
    RankDeficiencyWarning,
    givens,
    hessenberg_lstsq,
    shifted_hessenberg,
)


def random_hessenberg(rng, j):
    H = np.triu(rng.standard_normal((j + 1, j)), -1)
    H[np.arange(1, j + 1), np.arange(j)] = np.abs(H[np.arange(1, j + 1), np.arange(j)]) + 0.1
    return H


def test_givens_zeroes_second_entry():
    c, s, r = givens(3.0, 4.0)
    assert r == pytest.approx(5.0)
    assert -s * 3.0 + c * 4.0 == pytest.approx(0.0, abs=1e-15)
    assert givens(2.0, 0.0) == (1.0, 0.0, 2.0)


def test_shifted_hessenberg_shape_check():
    with pytest.raises(ValueError):
        shifted_hessenberg(np.zeros((3, 3)), 0.1)
    S = shifted_hessenberg(np.zeros((3, 2)), 0.5)
    np.testing.assert_array_equal(S, [[1, 0], [0, 1], [0, 0]])


@settings(max_examples=50, deadline=None)
@given(j=st.integers(1, 25), nu=st.floats(-2.0, 2.0), seed=st.integers(0, 10**6))
def test_matches_dense_lstsq(j, nu, seed):
    rng = np.random.default_rng(seed)
    H = random_hessenberg(rng, j)
    S = shifted_hessenberg(H, nu)
    rhs = np.zeros(j + 1)
    rhs[0] = 2.5
    if np.linalg.cond(S) > 1e8:
        return
    w_ref, *_ = np.linalg.lstsq(S, rhs, rcond=None)
    w, res = hessenberg_lstsq(H, nu, 2.5)
    np.testing.assert_allclose(w, w_ref, rtol=1e-8, atol=1e-10 * np.linalg.norm(w_ref))
    assert res == pytest.approx(np.linalg.norm(rhs - S @ w_ref), rel=1e-8, abs=1e-13)


def test_incremental_matches_batch(rng):
    H = random_hessenberg(rng, 12)
    inc = IncrementalGivens(0.3, 1.7)
    for k in range(12):
        r = inc.add_column(H[: k + 2, k])
        w, ref = hessenberg_lstsq(H[: k + 2, : k + 1], 0.3, 1.7)
        assert r == pytest.approx(ref, rel=1e-12, abs=1e-15)
    np.testing.assert_allclose(inc.solve(), w, rtol=1e-12)
    with pytest.raises(ValueError):
        inc.add_column(np.ones(3))


def test_trivial_cases():
    w, r = hessenberg_lstsq(np.zeros((1, 0)), 0.4, 3.0)
    assert w.size == 0 and r == 3.0
    H = np.random.default_rng(0).standard_normal((4, 3))
    w, r = hessenberg_lstsq(np.triu(H, -1), 0.0, 2.0)
    np.testing.assert_allclose(w, [2.0, 0.0, 0.0])
    assert r == 0.0


def test_rank_deficiency_is_reported():
    # I_ - nu H_ loses rank when 1/nu is an eigenvalue of the square part and beta = 0
    H = np.array([[2.0, 0.0], [0.0, 3.0], [0.0, 0.0]])
    with pytest.warns(RankDeficiencyWarning, match="nu=0.5"):
        w, r = hessenberg_lstsq(H, 0.5, 1.0)
    S = shifted_hessenberg(H, 0.5)
    w_ref = np.linalg.lstsq(S, np.array([1.0, 0, 0]), rcond=None)[0]
    np.testing.assert_allclose(w, w_ref, atol=1e-14)
