import numpy as np
import pytest
import scipy.sparse as sp

from driftfem.assembly import (
    MeshPecletWarning,
    assemble_dual,
    assemble_load,
    assemble_primal,
    coefficient_fingerprint,
    mass_matrix,
    read_coo,
    restrict,
    stiffness_matrix,
    write_coo,
)
from driftfem.fields import AssumptionError, CoefficientSet, constant, from_expression, make_singular_drift
from driftfem.mesh import Mesh, Rect, build_structured_mesh
from driftfem.resolvent import is_m_matrix
from oracles import p1_stiffness_reference_triangle

I2 = constant([[1.0, 0.0], [0.0, 1.0]])
Z, Z2 = constant(0.0), constant([0.0, 0.0])


def coeffs(**kw):
    base = dict(A=I2, B=Z2, c=Z, alpha=0.0, f=Z, F=Z2, lam=1.0, a_max=1.0)
    base.update(kw)
    return CoefficientSet(**base)


def general():
    return coeffs(
        A=from_expression("2 + x", "0.5*y", "-0.3", "1.5"),
        B=from_expression("-(y - 0.5) - 0.2*x", "x - 0.5 - 0.2*y"),
        c=from_expression("1 + x*y"),
        alpha=0.7,
        f=from_expression("sin(3*x) + y"),
        F=from_expression("x*y", "cos(y)"),
        lam=0.9,
        a_max=3.0,
    )


def test_reference_triangle_stiffness():
    m = Mesh(np.array([[0, 0], [1, 0], [0, 1.0]]), np.array([[0, 1, 2]]), Rect())
    K = stiffness_matrix(m).toarray()
    assert np.allclose(K, p1_stiffness_reference_triangle(), atol=1e-15)
    assert np.allclose(K.sum(axis=1), 0, atol=1e-15)
    Kq = stiffness_matrix(m, I2).toarray()
    assert np.allclose(Kq, K, atol=1e-15)


def test_reference_mass():
    m = Mesh(np.array([[0, 0], [1, 0], [0, 1.0]]), np.array([[0, 1, 2]]), Rect())
    M = mass_matrix(m).toarray()
    assert np.allclose(M, (np.ones((3, 3)) + np.eye(3)) / 24, atol=1e-15)


def test_alpha_enters_through_mass(mesh8):
    cs = general()
    K0 = assemble_primal(cs.replace(alpha=0.0), mesh8)
    K2 = assemble_primal(cs.replace(alpha=2.0), mesh8)
    assert abs(K2.K - K0.K - 2.0 * K0.M).max() <= 1e-14


def test_symmetric_when_no_drift(mesh8):
    cs = coeffs(A=from_expression("2 + x", "0.3*y", "0.3*y", "1.5"), lam=0.5, a_max=3.0,
                c=from_expression("x"))
    K = assemble_primal(cs, mesh8).K
    assert abs(K - K.T).max() <= 1e-14
    D = assemble_dual(cs, mesh8).K
    assert abs(D - K).max() <= 1e-14


def test_dual_is_transpose_of_primal_with_At():
    mesh = build_structured_mesh(3, 3)
    cs = general()
    D = assemble_dual(cs, mesh).K
    Kt = assemble_primal(cs.replace(A=cs.A.transpose()), mesh).K.T
    assert abs(D - Kt).max() <= 1e-14


def test_drift_antisymmetry(mesh8):
    cs = coeffs(B=constant([1.0, 0.0]))
    K = assemble_primal(cs, mesh8).K
    D = assemble_dual(cs, mesh8).K
    assert abs((D - D.T) + (K - K.T)).max() <= 1e-14


def test_mass_spd(mesh8):
    M = assemble_primal(coeffs(), mesh8).M.toarray()
    assert np.allclose(M, M.T)
    assert np.linalg.eigvalsh(M).min() > 0


def test_same_sparsity(mesh8):
    s = assemble_primal(general(), mesh8)
    assert set(zip(*s.K.nonzero())) <= set(zip(*s.M.nonzero()))


def test_laplacian_scaling(mesh8):
    lam = 2.5
    K = assemble_primal(coeffs(A=constant([[lam, 0.0], [0.0, lam]]), lam=lam, a_max=lam), mesh8).K
    L = restrict(stiffness_matrix(mesh8), mesh8)
    assert abs(K - lam * L).max() <= 1e-13


def test_pure_diffusion_m_matrix(mesh16):
    assert is_m_matrix(assemble_primal(coeffs(), mesh16).K)


def test_load_zero(mesh8):
    assert not np.any(assemble_load(Z, Z2, mesh8))


def test_load_partition_of_unity():
    mesh = build_structured_mesh(5, 3, Rect(0, 0, 2, 1.5))
    assert assemble_load(constant(1.0), Z2, mesh, full=True).sum() == pytest.approx(3.0, rel=1e-12)
    assert abs(assemble_load(Z, constant([0.3, -2.0]), mesh, full=True).sum()) < 1e-12


def test_validation_refuses(mesh8):
    with pytest.raises(AssumptionError) as exc:
        assemble_primal(coeffs(B=from_expression("x", "y")), mesh8)
    assert exc.value.clause == "div B <= 0"
    with pytest.raises(AssumptionError) as exc:
        assemble_primal(coeffs(c=constant(-1.0)), mesh8)
    assert exc.value.clause == "c >= 0"
    with pytest.raises(AssumptionError) as exc:
        assemble_primal(coeffs(lam=2.0), mesh8)
    assert exc.value.clause == "ellipticity"
    # override flag
    assemble_primal(coeffs(B=from_expression("x", "y")), mesh8, validate=False)


def test_peclet_warning():
    mesh = build_structured_mesh(4, 4)
    with pytest.warns(MeshPecletWarning):
        assemble_primal(coeffs(B=constant([20.0, 0.0])), mesh)


def test_singular_drift_assembles(mesh16):
    s = assemble_primal(coeffs(B=make_singular_drift(1.5), alpha=1.0), mesh16)
    assert np.all(np.isfinite(s.K.data))


def test_fingerprint(mesh8):
    a = coefficient_fingerprint(general(), mesh8)
    assert a == coefficient_fingerprint(general(), mesh8)
    assert a != coefficient_fingerprint(general().replace(alpha=1.0), mesh8)
    assert assemble_primal(general(), mesh8).fingerprint == a


def test_coo_roundtrip(tmp_path, mesh8):
    s = assemble_primal(general(), mesh8)
    write_coo(s.K, tmp_path / "K.coo")
    assert abs(read_coo(tmp_path / "K.coo") - s.K).max() == 0
    write_coo(s.b, tmp_path / "b.coo")
    b = read_coo(tmp_path / "b.coo").toarray().ravel()
    assert np.array_equal(b, s.b)
    assert (tmp_path / "K.coo").read_text().startswith(f"# shape {s.K.shape[0]} {s.K.shape[1]}\n")


def test_empty_coo(tmp_path):
    write_coo(sp.csr_matrix((3, 3)), tmp_path / "z.coo")
    assert read_coo(tmp_path / "z.coo").nnz == 0
