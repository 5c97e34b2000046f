"""Inexact infinite GMRES for parameterized linear systems ``A(mu) x(mu) = b``.

One Krylov basis of the companion-linearized problem yields an approximation
``x~(mu)`` that is cheap to evaluate for many ``mu``.
"""
from .companion import BlockBasis, BlockVector, ShiftMatrixView, apply_Kinv, apply_MKinv, shift_down
from .engine import (
    EngineAbort,
    KrylovFactorization,
    RunTrace,
    SolverConfig,
    eps_inner,
    exact_residual_norm,
    orthogonalize,
    residual_split,
    run,
    run_two_pass,
)
from .gallery import from_manifest, helmholtz_fd, time_delay
from .inner import (
    BiCGSTABSolver,
    IdentityThenBiCGSTAB,
    InnerSolveReport,
    InnerSolverError,
    LUSolver,
    PerturbedExactSolver,
    SingularMatrixError,
    bicgstab_solve,
    direct_solve,
    identity_substitute,
    make_inner_solver,
)
from .solution import ParameterizedSolution
from .taylor import EvaluatorUnavailable, ScalarFunction, TaylorMatrixFunction, rescale, sum_of_products

__version__ = "0.1.0"
