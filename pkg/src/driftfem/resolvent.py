"""Discrete resolvent ``G_alpha = (K0 + alpha M)^-1 M`` and its structural checks.

``K0`` is the Galerkin operator without the ``alpha`` mass term.  With
this definition the resolvent identity, linearity and the link to the
weak problem hold exactly, up to the sparse solver's accuracy.
"""

import threading
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .assembly import assemble_load, assemble_primal
from .fields import Field, NodalField, constant, lp_norm
from .linsolve import factorize

__all__ = [
    "DiscreteResolvent",
    "CheckResult",
    "is_m_matrix",
    "apply_resolvent",
    "check_submarkov",
    "check_lr_contraction",
    "strong_continuity_sweep",
]


def is_m_matrix(K, rtol=1e-12):
    """Nonpositive off-diagonal entries and nonnegative row sums.

    Entries are compared against ``rtol * max|diag|`` so that exact zeros
    perturbed by rounding do not spoil the test.
    """
    K = sp.csr_matrix(K)
    diag = K.diagonal()
    tol = rtol * (np.max(np.abs(diag)) if diag.size else 0.0)
    off = K - sp.diags(diag)
    if off.nnz and off.data.max() > tol:
        return False
    return bool(np.all(np.asarray(K.sum(axis=1)).ravel() >= -tol))


class DiscreteResolvent:
    """Resolvent family of one coefficient set on one mesh.

    Factorizations of ``K0 + alpha M`` are cached per ``alpha``; the cache is
    guarded by a lock so sweeps over ``alpha`` may run in threads.
    """

    def __init__(self, K0, M, mesh):
        self.K0 = sp.csr_matrix(K0)
        self.M = sp.csr_matrix(M)
        self.mesh = mesh
        self._lu = {}
        self._lock = threading.Lock()

    @classmethod
    def from_coefficients(cls, coeffs, mesh, validate=True):
        zero_f, zero_F = constant(0.0), constant([0.0, 0.0])
        sys0 = assemble_primal(coeffs.replace(alpha=0.0, f=zero_f, F=zero_F), mesh, validate=validate)
        return cls(sys0.K, sys0.M, mesh)

    @property
    def n(self):
        return self.K0.shape[0]

    @property
    def submarkov_tol(self):
        """Tolerance tier: exact when ``K0`` is an M-matrix, 1e-3 otherwise."""
        return 1e-12 if is_m_matrix(self.K0) else 1e-3

    def _factor(self, alpha):
        alpha = float(alpha)
        with self._lock:
            lu = self._lu.get(alpha)
        if lu is None:
            lu = factorize(self.K0 + alpha * self.M)
            with self._lock:
                self._lu.setdefault(alpha, lu)
        return lu

    def rhs(self, f):
        """``M f`` for interior nodal vectors, the load vector for fields."""
        if isinstance(f, Field):
            return assemble_load(f, constant([0.0, 0.0]), self.mesh)
        f = np.asarray(f, dtype=float)
        if f.shape[0] == self.mesh.n_vertices and f.shape[0] != self.n:
            f = f[self.mesh.interior]
        return self.M @ f

    def solve(self, alpha, rhs):
        return self._factor(alpha).solve(np.asarray(rhs, dtype=float))

    def apply(self, alpha, f):
        if alpha <= 0:
            raise ValueError("alpha must be positive")
        return self.solve(alpha, self.rhs(f))

    def fe_function(self, u):
        return NodalField.from_interior(self.mesh, u)


def apply_resolvent(R, alpha, f):
    """``G_alpha f``: solves ``(K0 + alpha M) u = M f``; returns interior values."""
    return R.apply(alpha, f)


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: float
    bound: float
    tol: float
    detail: dict = field(default_factory=dict)

    def __bool__(self):
        return self.passed


def check_submarkov(R, alpha, f, tol=None):
    """``0 <= alpha G_alpha f <= 1`` nodally, for ``0 <= f <= 1``.

    `tol` defaults to the tier chosen by :attr:`DiscreteResolvent.submarkov_tol`.
    """
    f = np.asarray(f, dtype=float)
    if f.size and (f.min() < 0 or f.max() > 1):
        raise ValueError("f must take values in [0, 1]")
    tol = R.submarkov_tol if tol is None else tol
    v = alpha * R.apply(alpha, f)
    lo = float(v.min()) if v.size else 0.0
    hi = float(v.max()) if v.size else 0.0
    ok = lo >= -tol and hi <= 1.0 + tol
    return CheckResult("submarkov", ok, hi, 1.0, tol, {"min": lo, "max": hi})


def check_lr_contraction(R, alpha, f, r, slack=0.0):
    """``||G_alpha f||_r <= (1 + slack) ||f||_r / alpha``.

    `f` is a field (its load vector is used) or an interior nodal vector
    (identified with its piecewise-linear interpolant, zero on the boundary).
    """
    u = R.apply(alpha, f)
    uh = R.fe_function(u)
    fh = f if isinstance(f, Field) else R.fe_function(np.asarray(f, dtype=float))
    measured = lp_norm(uh, r, R.mesh)
    bound = lp_norm(fh, r, R.mesh) / alpha
    return CheckResult(f"contraction_L{r}", measured <= (1.0 + slack) * bound, measured, bound, slack)


def strong_continuity_sweep(R, f, alphas):
    """``||alpha G_alpha f - f||_L1`` for each alpha (increasing list)."""
    alphas = [float(a) for a in alphas]
    if any(a <= 0 for a in alphas) or any(b <= a for a, b in zip(alphas, alphas[1:])):
        raise ValueError("alphas must be positive and strictly increasing")
    fh = f if isinstance(f, Field) else R.fe_function(np.asarray(f, dtype=float))
    out = []
    for a in alphas:
        uh = R.fe_function(a * R.apply(a, f))
        out.append(lp_norm(uh - fh, 1, R.mesh))
    return np.array(out)
