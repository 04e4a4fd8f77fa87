"""Sparse solves for the non-symmetric Galerkin systems."""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "SolveOptions",
    "SolveReport",
    "SingularSystemError",
    "NonConvergenceError",
    "factorize",
    "solve_sparse",
]


class SingularSystemError(RuntimeError):
    pass


class NonConvergenceError(RuntimeError):
    def __init__(self, message, residual):
        self.residual = residual
        super().__init__(f"{message} (best relative residual {residual:.3e})")


@dataclass(frozen=True)
class SolveOptions:
    method: str = "auto"  # "auto" | "direct" | "iterative"
    tol: float = 1e-10
    max_iter: int = 2000
    direct_limit: int = 200_000
    ilu_drop_tol: float = 1e-5
    ilu_fill_factor: float = 20.0


@dataclass
class SolveReport:
    u: np.ndarray
    residual: float
    method: str
    iterations: int = 0


def _relres(K, u, b):
    nb = np.linalg.norm(b)
    r = np.linalg.norm(K @ u - b)
    return r / nb if nb > 0 else r


def factorize(K):
    """Sparse LU with a fixed minimum-degree ordering on A^T + A (deterministic per platform)."""
    K = sp.csc_matrix(K)
    if K.shape[0] != K.shape[1]:
        raise ValueError("matrix must be square")
    try:
        lu = spla.splu(K, permc_spec="MMD_AT_PLUS_A")
    except RuntimeError as exc:
        raise SingularSystemError(f"sparse LU failed: {exc}") from None
    if not np.all(np.isfinite(lu.U.diagonal())) or np.any(lu.U.diagonal() == 0):
        raise SingularSystemError("sparse LU produced a zero pivot")
    return lu


def _direct(K, b, opts):
    lu = factorize(K)
    u = lu.solve(b)
    res = _relres(K, u, b)
    # a couple of refinement sweeps before declaring the system numerically singular
    for _ in range(2):
        if res <= opts.tol:
            break
        u = u + lu.solve(b - K @ u)
        res = _relres(K, u, b)
    if not np.isfinite(res) or res > opts.tol:
        raise SingularSystemError(f"system is numerically singular (relative residual {res:.3e})")
    return SolveReport(u, res, "direct", 0)


def _iterative(K, b, opts):
    K = sp.csc_matrix(K)
    try:
        ilu = spla.spilu(K, drop_tol=opts.ilu_drop_tol, fill_factor=opts.ilu_fill_factor)
    except RuntimeError as exc:
        raise SingularSystemError(f"incomplete factorization failed: {exc}") from None
    P = spla.LinearOperator(K.shape, ilu.solve)
    count = [0]
    best = [np.inf, None]

    def cb(xk):
        count[0] += 1
        r = _relres(K, xk, b)
        if r < best[0]:
            best[0], best[1] = r, xk.copy()

    u, info = spla.bicgstab(K, b, rtol=opts.tol * 0.5, atol=0.0, maxiter=opts.max_iter, M=P, callback=cb)
    res = _relres(K, u, b)
    if info != 0 or res > opts.tol:
        raise NonConvergenceError(f"BiCGStab stopped with info={info} after {count[0]} iterations",
                                  min(res, best[0]))
    return SolveReport(u, res, "bicgstab-ilu", count[0])


def solve_sparse(K, b, opts=None):
    """Solve ``K u = b`` to relative residual ``opts.tol``.

    Sparse LU is used up to ``opts.direct_limit`` unknowns, ILU-preconditioned
    BiCGStab beyond that (or when ``opts.method == "iterative"``).

    Raises
    ------
    SingularSystemError
        Structurally or numerically singular `K`.
    NonConvergenceError
        The iterative path missed the tolerance within ``opts.max_iter``.
    """
    opts = SolveOptions() if opts is None else opts
    b = np.asarray(b, dtype=float)
    if K.shape[0] != K.shape[1] or K.shape[0] != b.shape[0]:
        raise ValueError(f"shape mismatch: K {K.shape}, b {b.shape}")
    if b.size == 0:
        return SolveReport(b.copy(), 0.0, "direct", 0)
    if not np.any(b):
        # still factor so a singular K is reported
        if opts.method != "iterative":
            factorize(K)
        return SolveReport(np.zeros_like(b), 0.0, "direct" if opts.method != "iterative" else "bicgstab-ilu", 0)
    method = opts.method
    if method == "auto":
        method = "direct" if K.shape[0] <= opts.direct_limit else "iterative"
    if method == "direct":
        return _direct(K, b, opts)
    if method == "iterative":
        return _iterative(K, b, opts)
    raise ValueError(f"unknown method {opts.method!r}")
