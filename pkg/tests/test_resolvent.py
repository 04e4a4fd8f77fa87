import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from driftfem.fields import CoefficientSet, constant, from_expression, make_singular_drift
from driftfem.mesh import build_structured_mesh
from driftfem.resolvent import (
    DiscreteResolvent,
    apply_resolvent,
    check_lr_contraction,
    check_submarkov,
    is_m_matrix,
    strong_continuity_sweep,
)
from oracles import dense_resolvent

I2 = constant([[1.0, 0.0], [0.0, 1.0]])
Z, Z2 = constant(0.0), constant([0.0, 0.0])


def coeffs(**kw):
    base = dict(A=I2, B=Z2, c=Z, alpha=0.0, f=Z, F=Z2, lam=1.0, a_max=1.0)
    base.update(kw)
    return CoefficientSet(**base)


@pytest.fixture(scope="module")
def R_lap():
    return DiscreteResolvent.from_coefficients(coeffs(), build_structured_mesh(32, 32))


@pytest.fixture(scope="module")
def R_drift():
    cs = coeffs(B=make_singular_drift(1.5) + from_expression("-(y - 0.5)", "x - 0.5"),
                c=from_expression("1/norm(x - 1, y - 1)"))
    return DiscreteResolvent.from_coefficients(cs, build_structured_mesh(16, 16))


def test_zero(R_lap):
    assert not np.any(apply_resolvent(R_lap, 1.0, np.zeros(R_lap.n)))


def test_alpha_positive(R_lap):
    with pytest.raises(ValueError):
        R_lap.apply(0.0, np.ones(R_lap.n))


def test_matches_dense_oracle(R_drift):
    rng = np.random.default_rng(0)
    f = rng.standard_normal(R_drift.n)
    G = dense_resolvent(R_drift.K0, R_drift.M, 2.0)
    assert np.allclose(R_drift.apply(2.0, f), G @ f, rtol=1e-10, atol=1e-13)


@pytest.mark.parametrize("a, b", [(0.5, 10.0), (1.0, 2.0), (2.0, 0.5)])
def test_resolvent_identity(R_drift, a, b):
    rng = np.random.default_rng(1)
    f = rng.standard_normal(R_drift.n)
    Ga = R_drift.apply(a, f)
    gap = Ga - R_drift.apply(b, f) - (b - a) * R_drift.apply(b, Ga)
    Mn = math.sqrt(gap @ (R_drift.M @ gap))
    assert Mn <= 1e-10 * math.sqrt(f @ (R_drift.M @ f))


@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 1000))
@settings(max_examples=15, deadline=None)
def test_linearity(a, b, seed):
    mesh = build_structured_mesh(6, 6)
    R = DiscreteResolvent.from_coefficients(coeffs(B=from_expression("-x", "-y")), mesh)
    rng = np.random.default_rng(seed)
    f, g = rng.standard_normal((2, R.n))
    lhs = R.apply(1.5, a * f + b * g)
    rhs = a * R.apply(1.5, f) + b * R.apply(1.5, g)
    assert np.allclose(lhs, rhs, rtol=1e-10, atol=1e-12)


def test_positivity_and_max_principle(R_lap):
    u = R_lap.apply(1.0, np.ones(R_lap.n))
    assert np.all(u > 0) and np.all(u < 1)


def test_m_matrix_tier(R_lap, R_drift):
    assert is_m_matrix(R_lap.K0) and R_lap.submarkov_tol == 1e-12
    assert R_drift.submarkov_tol in (1e-12, 1e-3)


def test_m_matrix_negative():
    import scipy.sparse as sp

    assert not is_m_matrix(sp.csr_matrix([[2.0, 0.5], [-1.0, 2.0]]))
    assert not is_m_matrix(sp.csr_matrix([[1.0, -2.0], [0.0, 1.0]]))


def test_submarkov_cases(R_lap):
    assert check_submarkov(R_lap, 1.0, np.zeros(R_lap.n)).detail == {"min": 0.0, "max": 0.0}
    for a in (0.5, 1.0, 10.0, 100.0):
        assert check_submarkov(R_lap, a, np.ones(R_lap.n))


def test_submarkov_needs_resolved_mass_term(R_lap):
    # the consistent mass matrix has positive off-diagonal entries; once
    # alpha h^2 is large the discrete maximum principle is lost on this mesh
    res = check_submarkov(R_lap, 1e4, np.ones(R_lap.n))
    assert not res.passed and res.detail["max"] < 1.05
    R64 = DiscreteResolvent.from_coefficients(coeffs(), build_structured_mesh(64, 64))
    assert check_submarkov(R64, 1e4, np.ones(R64.n))


def test_submarkov_drift(R_drift):
    f = np.random.default_rng(2).uniform(0, 1, R_drift.n)
    assert check_submarkov(R_drift, 1.0, f)


def test_submarkov_range_check(R_lap):
    with pytest.raises(ValueError):
        check_submarkov(R_lap, 1.0, 2 * np.ones(R_lap.n))


def test_contraction_eigenfunction(R_lap):
    f = from_expression("sin(pi*x)*sin(pi*y)")
    for r in (1, 2, math.inf):
        res = check_lr_contraction(R_lap, 1.0, f, r)
        assert res.passed
        assert res.measured / res.bound == pytest.approx(1 / (2 * math.pi**2 + 1), rel=5e-3)


def test_contraction_zero(R_lap):
    res = check_lr_contraction(R_lap, 1.0, np.zeros(R_lap.n), 1)
    assert res.passed and res.measured == 0


@pytest.mark.parametrize("alpha", [1.0, 10.0])
def test_contraction_singular_coefficients(R_drift, alpha):
    f = from_expression("1 + sin(2*pi*x)*y")
    assert check_lr_contraction(R_drift, alpha, f, 1, slack=0.02)


def test_strong_continuity_eigenfunction(R_lap):
    f = from_expression("sin(pi*x)*sin(pi*y)")
    alphas = [1.0, 10.0, 100.0]
    errs = strong_continuity_sweep(R_lap, f, alphas)
    f1 = 4 / math.pi**2
    for a, e in zip(alphas, errs):
        assert e == pytest.approx(2 * math.pi**2 / (2 * math.pi**2 + a) * f1, rel=1e-2)
    assert errs[2] / f1 == pytest.approx(0.165, abs=2e-3)


def test_strong_continuity_decreasing(R_drift):
    f = from_expression("exp(-40*((x - 0.5)^2 + (y - 0.5)^2))")
    errs = strong_continuity_sweep(R_drift, f, [10.0, 100.0, 1000.0])
    assert np.all(np.diff(errs) < 0)
    assert not np.any(strong_continuity_sweep(R_drift, np.zeros(R_drift.n), [1.0, 2.0]))


def test_sweep_validates_alphas(R_lap):
    with pytest.raises(ValueError):
        strong_continuity_sweep(R_lap, np.zeros(R_lap.n), [2.0, 1.0])


def test_threaded_sweeps_agree(R_drift):
    from concurrent.futures import ThreadPoolExecutor

    f = np.linspace(0, 1, R_drift.n)
    alphas = [0.5, 1.0, 2.0, 10.0, 0.5, 1.0]
    with ThreadPoolExecutor(3) as ex:
        par = list(ex.map(lambda a: R_drift.apply(a, f), alphas))
    for a, u in zip(alphas, par):
        assert np.array_equal(u, R_drift.apply(a, f))


def test_full_length_input(R_lap):
    mesh = R_lap.mesh
    full = np.ones(mesh.n_vertices)
    assert np.array_equal(R_lap.apply(1.0, full), R_lap.apply(1.0, np.ones(R_lap.n)))
