"""Sparse Galerkin systems for the primal and dual weak forms.

All element integrals use the mesh quadrature rule, so identities such as
``assemble_dual(A, B) == assemble_primal(A^T, B)^T`` hold to rounding.
Dirichlet conditions are imposed by dropping boundary rows and columns.
"""

import hashlib
import warnings
import weakref
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .fields import AssumptionError, constant
from .mesh import QUAD_BARY

__all__ = [
    "AssembledSystem",
    "MeshPecletWarning",
    "assemble_primal",
    "assemble_dual",
    "assemble_load",
    "mass_matrix",
    "stiffness_matrix",
    "drift_matrix",
    "restrict",
    "coefficient_fingerprint",
    "write_coo",
    "read_coo",
]


class MeshPecletWarning(UserWarning):
    """Plain Galerkin on a mesh too coarse for the drift."""


@dataclass(frozen=True, eq=False)
class AssembledSystem:
    """Operator ``K`` and mass ``M`` on interior nodes, with load ``b``."""

    K: sp.csr_matrix
    M: sp.csr_matrix
    b: np.ndarray
    alpha: float
    mesh: object
    coeffs: object = None

    @cached_property
    def fingerprint(self):
        """Hash of the coefficient samples (computed on first access)."""
        return coefficient_fingerprint(self.coeffs, self.mesh)


def _scatter(mesh, local):
    """Sum element matrices ``(T, 3, 3)`` into a global CSR matrix."""
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = mesh.n_vertices
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def restrict(mat, mesh):
    """Interior-interior block of a full vertex matrix."""
    idx = mesh.interior
    return mat[idx][:, idx].tocsr()


def _local_stiffness(mesh, A):
    g = mesh.grads
    if A is None:
        return np.einsum("t,tid,tjd->tij", mesh.signed_areas, g, g)
    aw = np.matmul(mesh.quad_weights[:, None, :], A.at_quadrature(mesh).reshape(mesh.n_triangles, -1, 4))
    aw = aw.reshape(-1, 2, 2)
    return g @ aw @ np.swapaxes(g, 1, 2)


def _local_drift(mesh, B):
    # sum_q w_q lambda_i(q) B(q), then dot with grad phi_j
    wl = mesh.quad_weights[:, :, None] * QUAD_BARY[None]  # (T, Q, 3)
    wb = np.swapaxes(wl, 1, 2) @ B.at_quadrature(mesh)  # (T, 3, 2)
    return wb @ np.swapaxes(mesh.grads, 1, 2)


def _local_mass(mesh, weight):
    w = mesh.quad_weights if weight is None else mesh.quad_weights * weight.at_quadrature(mesh)
    return np.einsum("tq,qi,qj->tij", w, QUAD_BARY, QUAD_BARY, optimize=True)


def stiffness_matrix(mesh, A=None):
    """Full-vertex matrix of ``int <A grad phi_j, grad phi_i>``; ``A = I`` if omitted."""
    return _scatter(mesh, _local_stiffness(mesh, A))


def drift_matrix(mesh, B):
    """Full-vertex matrix of ``int <B, grad phi_j> phi_i`` (row i, column j)."""
    return _scatter(mesh, _local_drift(mesh, B))


def mass_matrix(mesh, weight=None):
    """Full-vertex matrix of ``int weight phi_j phi_i``; plain mass if `weight` is None."""
    return _scatter(mesh, _local_mass(mesh, weight))


_INTERIOR_MASS = weakref.WeakKeyDictionary()


def interior_mass(mesh):
    """Plain mass matrix on interior nodes, cached per mesh (treat as read-only)."""
    M = _INTERIOR_MASS.get(mesh)
    if M is None:
        M = restrict(mass_matrix(mesh), mesh)
        _INTERIOR_MASS[mesh] = M
    return M


def assemble_load(f, F, mesh, full=False):
    """Load ``b_i = int f phi_i + <F, grad phi_i>``.

    Returns the interior entries, or every vertex when `full` is true
    (only useful for diagnostics such as partition-of-unity checks).
    """
    fv = f.at_quadrature(mesh)
    Fv = F.at_quadrature(mesh)
    w = mesh.quad_weights
    local = (w * fv) @ QUAD_BARY
    Fw = np.matmul(w[:, None, :], Fv)  # (T, 1, 2)
    local += (mesh.grads @ np.swapaxes(Fw, 1, 2))[..., 0]
    out = np.zeros(mesh.n_vertices)
    np.add.at(out, mesh.triangles.ravel(), local.ravel())
    return out if full else out[mesh.interior]


def coefficient_fingerprint(coeffs, mesh):
    """Short hash of the coefficient samples on the quadrature points."""
    h = hashlib.sha1()
    for fld in (coeffs.A, coeffs.B, coeffs.c, coeffs.f, coeffs.F):
        h.update(np.ascontiguousarray(fld.at_quadrature(mesh)).tobytes())
    h.update(np.float64(coeffs.alpha).tobytes())
    return h.hexdigest()[:16]


def _validate(coeffs, mesh):
    for rep in coeffs.validate(mesh):
        if not rep.passed:
            clause = {"ellipticity": "ellipticity", "weak_divergence": "div B <= 0",
                      "nonnegative_c": "c >= 0"}[rep.name]
            raise AssumptionError(clause, f"{rep.name} check failed: value {rep.value!r} at {rep.location}")


def _peclet_check(coeffs, mesh):
    bmag = coeffs.B.magnitude_at_quadrature(mesh)
    pe = float(np.max(bmag)) * mesh.h / (2.0 * coeffs.lam)
    if pe > 1.0:
        warnings.warn(f"mesh Peclet number {pe:.3g} > 1; Galerkin solution may oscillate",
                      MeshPecletWarning, stacklevel=3)


def _assemble(coeffs, mesh, dual, validate):
    if validate:
        _validate(coeffs, mesh)
    _peclet_check(coeffs, mesh)
    D = _local_drift(mesh, coeffs.B)
    if dual:
        D = np.swapaxes(D, 1, 2)
    local = _local_stiffness(mesh, coeffs.A) + D + _local_mass(mesh, coeffs.c)
    M = interior_mass(mesh)
    K0 = restrict(_scatter(mesh, local), mesh)
    K = (K0 + coeffs.alpha * M).tocsr() if coeffs.alpha else K0
    b = assemble_load(coeffs.f, coeffs.F, mesh)
    return AssembledSystem(K, M, b, coeffs.alpha, mesh, coeffs)


def assemble_primal(coeffs, mesh, validate=True):
    """Galerkin matrix of ``int <A grad u, grad v> + (<B, grad u> + (c + alpha) u) v``.

    Raises :class:`AssumptionError` when a coefficient validator fails,
    unless `validate` is false.
    """
    return _assemble(coeffs, mesh, dual=False, validate=validate)


def assemble_dual(coeffs, mesh, validate=True):
    """Galerkin matrix of ``int <A grad w + w B, grad v> + (c + alpha) w v``."""
    return _assemble(coeffs, mesh, dual=True, validate=validate)


def zero_data():
    """Zero load fields, handy when only the operator matters."""
    return constant(0.0), constant([0.0, 0.0])


def write_coo(mat, path):
    """Write a sparse matrix (or a vector) as ``row col value`` lines."""
    with open(path, "w") as fh:
        if sp.issparse(mat):
            m = mat.tocoo()
            fh.write(f"# shape {m.shape[0]} {m.shape[1]}\n")
            order = np.lexsort((m.col, m.row))
            for i, j, v in zip(m.row[order], m.col[order], m.data[order]):
                fh.write(f"{i} {j} {v:.17g}\n")
        else:
            v = np.asarray(mat).ravel()
            fh.write(f"# shape {v.size} 1\n")
            for i, x in enumerate(v):
                fh.write(f"{i} 0 {x:.17g}\n")


def read_coo(path):
    with open(path) as fh:
        n, m = map(int, fh.readline().split()[2:4])
        rows = [ln.split() for ln in fh if ln.strip()]
    if not rows:
        return sp.csr_matrix((n, m))
    i, j, v = zip(*rows)
    return sp.coo_matrix((np.array(v, dtype=float), (np.array(i, dtype=int), np.array(j, dtype=int))),
                         shape=(n, m)).tocsr()
