import numpy as np
import pytest
import scipy.sparse as sp

from infgmres.taylor import TaylorMatrixFunction


class CountingFamily:
    """Wraps a family and counts products with each coefficient."""

    def __init__(self, family):
        self.family = family
        self.n = family.n
        self.scale = family.scale
        self.counts = {}

    def coeff(self, ell):
        fam = self

        class _Counted:
            def __matmul__(self, v):
                fam.counts[ell] = fam.counts.get(ell, 0) + 1
                return fam.family.coeff(ell) @ v

        return _Counted()


def constant_family(A0):
    """``A(mu) = A0``: every coefficient past the first is zero."""
    A0 = sp.csr_matrix(A0)
    n = A0.shape[0]
    return TaylorMatrixFunction(n, lambda ell: A0 if ell == 0 else sp.csr_matrix((n, n)),
                                evaluator=lambda mu: A0, name="constant")


def laplacian_1d(n):
    return sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1], format="csr")


def laplacian_2d(m):
    T = laplacian_1d(m)
    I = sp.identity(m)
    return sp.csr_matrix(sp.kron(I, T) + sp.kron(T, I))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
