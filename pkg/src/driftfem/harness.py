"""Verification experiments: discrete solutions measured against the continuum bounds.

Every bound is built from :mod:`driftfem.estimates`; nothing is fitted.
Discrete solutions are compared against continuum estimates, so bound
checks carry a relative slack (2 % by default at 128 x 128).
"""

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .assembly import assemble_dual, assemble_load, assemble_primal, mass_matrix, restrict, stiffness_matrix
from .estimates import compute_constants, stability_rhs
from .fields import (
    AssumptionError,
    Field,
    NodalField,
    check_ellipticity,
    constant,
    from_expression,
    lp_norm,
    make_singular_drift,
    mollify_field,
)
from .linsolve import SolveOptions, solve_sparse
from .mesh import build_structured_mesh

__all__ = [
    "Solution",
    "CheckRecord",
    "EstimateReport",
    "REPORT_COLUMNS",
    "solve_primal",
    "ManufacturedCase",
    "manufactured_case",
    "mms_convergence_study",
    "verify_solution_bounds",
    "duality_check",
    "extended_l1_check",
    "stability_sweep",
    "mollified_drift_schedule",
    "random_suite",
    "run_suite",
    "required_slack",
]

INF = math.inf

# short labels for the estimate each check certifies
REFS = {
    "energy": "energy estimate (H1_0 norm)",
    "linf": "L-infinity bound",
    "contraction": "L^r contraction with F term",
    "duality": "primal/dual duality identity",
    "extended_l1": "extended L1 contraction",
    "stability": "L1 stability under coefficient perturbation",
    "resolvent_identity": "resolvent identity",
    "submarkov": "sub-Markov range of alpha G_alpha",
    "mms": "manufactured-solution convergence order",
    "continuity": "strong continuity of alpha G_alpha",
}


class Solution:
    """Discrete solution on interior nodes with lazily computed norms."""

    def __init__(self, u, mesh, residual=0.0, method="direct"):
        self.u = np.asarray(u, dtype=float)
        self.mesh = mesh
        self.residual = residual
        self.method = method

    @cached_property
    def full(self):
        v = np.zeros(self.mesh.n_vertices)
        v[self.mesh.interior] = self.u
        return v

    @cached_property
    def field(self):
        return NodalField(self.full)

    @cached_property
    def grad(self):
        """Elementwise constant gradient, ``(T, 2)``."""
        return np.einsum("tk,tkd->td", self.full[self.mesh.triangles], self.mesh.grads)

    def norm(self, p):
        return lp_norm(self.field, p, self.mesh)

    @cached_property
    def L1(self):
        return self.norm(1)

    @cached_property
    def L2(self):
        return self.norm(2)

    @cached_property
    def Linf(self):
        return self.norm(INF)

    @cached_property
    def grad_L2(self):
        return math.sqrt(float(np.sum(self.mesh.signed_areas * np.sum(self.grad**2, axis=1))))

    @cached_property
    def H1(self):
        return math.hypot(self.L2, self.grad_L2)


@dataclass
class CheckRecord:
    case_id: str
    check: str
    paper_ref: str
    measured: float
    bound: float
    slack: float
    kind: str = "bound"  # "bound": measured <= bound (1 + slack); "identity": |measured| <= bound

    @property
    def passed(self):
        if not (math.isfinite(self.measured) and not math.isnan(self.bound)):
            return False
        if self.kind == "identity":
            return abs(self.measured) <= self.bound
        return self.measured <= self.bound * (1.0 + self.slack)

    @property
    def verdict(self):
        return "pass" if self.passed else "fail"


REPORT_COLUMNS = ("case_id", "check", "paper_ref", "measured", "bound", "slack", "verdict")


@dataclass
class EstimateReport:
    records: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(r.passed for r in self.records)

    def add(self, *args, **kw):
        rec = CheckRecord(*args, **kw)
        self.records.append(rec)
        return rec

    def extend(self, other):
        self.records.extend(other.records)
        for k, v in other.meta.items():
            self.meta.setdefault(k, v)
        return self

    def failures(self):
        return [r for r in self.records if not r.passed]

    def sorted(self):
        return EstimateReport(sorted(self.records, key=lambda r: r.case_id), dict(self.meta))

    def to_csv(self, header=None):
        """Comma-separated table; numbers with 17 significant digits."""
        buf = io.StringIO()
        if header:
            buf.write(f"# {header}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in self.records:
            w.writerow([r.case_id, r.check, r.paper_ref, f"{r.measured:.17g}", f"{r.bound:.17g}",
                        f"{r.slack:.17g}", r.verdict])
        return buf.getvalue()

    def summary(self):
        lines = []
        for k in sorted(self.meta):
            lines.append(f"{k}: {self.meta[k]}")
        n_fail = len(self.failures())
        lines.append(f"checks: {len(self.records)}, failed: {n_fail}")
        for r in self.records:
            lines.append(f"  [{r.verdict.upper()}] {r.case_id:>10s} {r.check:<24s} "
                         f"measured={r.measured:.6g} bound={r.bound:.6g}")
        return "\n".join(lines) + "\n"


def required_slack(rec):
    """Smallest relative slack that would make a bound record pass."""
    if rec.bound > 0:
        return max(0.0, rec.measured / rec.bound - 1.0)
    return 0.0 if rec.measured <= 0 else INF


def solve_primal(coeffs, mesh, opts=None, validate=True):
    """Galerkin solution of the primal problem."""
    sys = assemble_primal(coeffs, mesh, validate=validate)
    rep = solve_sparse(sys.K, sys.b, opts)
    return Solution(rep.u, mesh, rep.residual, rep.method)


# ----------------------------------------------------------------------------
# manufactured solutions
# ----------------------------------------------------------------------------


@dataclass
class ManufacturedCase:
    name: str
    coeffs: object
    exact: callable
    exact_grad: callable


_IDENTITY = constant([[1.0, 0.0], [0.0, 1.0]])
_ZERO = constant(0.0)
_ZERO_VEC = constant([0.0, 0.0])


def manufactured_case(name):
    """Known-solution problems on the unit square.

    ``diffusion``: ``-Lap u = 2 pi^2 sin(pi x) sin(pi y)``.
    ``drift``: same exact solution with ``B = (1, 0)``.
    ``zero``: zero data, zero solution.
    """
    pi = math.pi

    def exact(x, y):
        return np.sin(pi * x) * np.sin(pi * y)

    def exact_grad(x, y):
        return np.stack([pi * np.cos(pi * x) * np.sin(pi * y), pi * np.sin(pi * x) * np.cos(pi * y)], axis=-1)

    if name == "diffusion":
        f = from_expression("2*pi^2*sin(pi*x)*sin(pi*y)")
        B = _ZERO_VEC
    elif name == "drift":
        f = from_expression("2*pi^2*sin(pi*x)*sin(pi*y) + pi*cos(pi*x)*sin(pi*y)")
        B = constant([1.0, 0.0])
    elif name == "zero":
        f, B = _ZERO, _ZERO_VEC
        return ManufacturedCase(
            name, _base_coeffs(B=B, f=f), lambda x, y: 0.0 * x, lambda x, y: np.zeros(np.shape(x) + (2,))
        )
    else:
        raise ValueError(f"unknown manufactured case {name!r}")
    return ManufacturedCase(name, _base_coeffs(B=B, f=f), exact, exact_grad)


def _base_coeffs(**kw):
    from .fields import CoefficientSet

    base = dict(A=_IDENTITY, B=_ZERO_VEC, c=_ZERO, alpha=0.0, f=_ZERO, F=_ZERO_VEC, lam=1.0, a_max=1.0)
    base.update(kw)
    return CoefficientSet(**base)


def _errors(sol, case):
    m = sol.mesh
    qp = m.quad_points
    uh = sol.field.at_quadrature(m)
    ue = case.exact(qp[..., 0], qp[..., 1])
    ge = case.exact_grad(qp[..., 0], qp[..., 1])
    e2 = math.sqrt(m.integrate((uh - ue) ** 2))
    e1 = math.sqrt(m.integrate(np.sum((sol.grad[:, None, :] - ge) ** 2, axis=-1)))
    return e2, e1


@dataclass
class MMSResult:
    case: str
    rows: list  # (n, h, err_L2, err_H1, order_L2, order_H1)
    min_order_L2: float = 1.8
    min_order_H1: float = 0.9

    @property
    def last_orders(self):
        if len(self.rows) < 2:
            return (INF, INF)
        return self.rows[-1][4], self.rows[-1][5]

    @property
    def passed(self):
        if all(r[2] == 0 and r[3] == 0 for r in self.rows):
            return True
        o2, o1 = self.last_orders
        return o2 >= self.min_order_L2 and o1 >= self.min_order_H1

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("case", "n", "h", "err_L2", "err_H1", "order_L2", "order_H1"))
        for n, h, a, b, oa, ob in self.rows:
            w.writerow((self.case, n, f"{h:.17g}", f"{a:.17g}", f"{b:.17g}", f"{oa:.17g}", f"{ob:.17g}"))
        return buf.getvalue()


def mms_convergence_study(case, levels=(16, 32, 64), rect=None):
    """L2 and H1-seminorm errors per level, with observed orders between levels."""
    if isinstance(case, str):
        case = manufactured_case(case)
    rows = []
    prev = None
    for n in levels:
        mesh = build_structured_mesh(n, n, rect)
        sol = solve_primal(case.coeffs, mesh)
        e2, e1 = _errors(sol, case)
        if prev is None:
            o2 = o1 = math.nan
        else:
            ratio = math.log(prev[1] / mesh.h)
            o2 = math.log(prev[2] / e2) / ratio if e2 > 0 and prev[2] > 0 else INF
            o1 = math.log(prev[3] / e1) / ratio if e1 > 0 and prev[3] > 0 else INF
        prev = (n, mesh.h, e2, e1)
        rows.append((n, mesh.h, e2, e1, o2, o1))
    return MMSResult(case.name, rows)


# ----------------------------------------------------------------------------
# estimate checks
# ----------------------------------------------------------------------------


def _constants(coeffs, mesh, lam=None):
    return compute_constants(coeffs.lam if lam is None else lam, coeffs.d, coeffs.q, coeffs.two_star, mesh.volume)


def verify_solution_bounds(coeffs, mesh, rs=(1, 2, INF), slack=0.02, case_id="case", opts=None, sol=None):
    """Energy, L-infinity and L^r bounds for the primal solution.

    Records, for the discrete solution ``u_h``:

    * ``||u_h||_{H1_0} <= C1 (||f||_{two_star} + ||F||_2)``
    * ``||u_h||_inf <= C2 (||f||_q + ||F||_{2q})``
    * ``||u_h||_r <= ||f||_r / alpha + C2 |U|^{1/r} ||F||_{2q}`` for every r in `rs`
      (only when alpha > 0)
    """
    if sol is None:
        sol = solve_primal(coeffs, mesh, opts)
    k = _constants(coeffs, mesh)
    q = coeffs.q
    f_2s = lp_norm(coeffs.f, coeffs.two_star, mesh)
    F_2 = lp_norm(coeffs.F, 2, mesh)
    f_q = lp_norm(coeffs.f, q, mesh)
    F_2q = lp_norm(coeffs.F, 2 * q, mesh)

    rep = EstimateReport(meta={"mesh": f"{mesh.n_triangles} triangles, h={mesh.h:.6g}"})
    rep.add(case_id, "energy", REFS["energy"], sol.H1, k.C1 * (f_2s + F_2), slack)
    rep.add(case_id, "linf", REFS["linf"], sol.Linf, k.C2 * (f_q + F_2q), slack)
    if coeffs.alpha > 0:
        for r in rs:
            vol_r = 1.0 if r == INF else mesh.volume ** (1.0 / r)
            bound = lp_norm(coeffs.f, r, mesh) / coeffs.alpha + k.C2 * vol_r * F_2q
            rep.add(case_id, f"contraction_L{_rname(r)}", REFS["contraction"], sol.norm(r), bound, slack)
    return rep


def _rname(r):
    return "inf" if r == INF else f"{r:g}"


def _as_load(psi, mesh, M):
    if isinstance(psi, Field):
        return assemble_load(psi, _ZERO_VEC, mesh)
    return M @ np.asarray(psi, dtype=float)


def duality_check(coeffs, mesh, psi, opts=None, return_parts=False):
    """Residual of the discrete duality identity ``int psi u = int f w + <F, grad w>``.

    Solves the primal system ``K u = b`` and the dual system for the
    transposed diffusion, ``D(A^T, B) w = M psi``; the dual matrix is
    assembled independently and equals ``K^T`` up to rounding.
    """
    prim = assemble_primal(coeffs, mesh)
    # A^T has the same symmetric part as A, and B, c are unchanged: already validated
    dual = assemble_dual(coeffs.replace(A=coeffs.A.transpose()), mesh, validate=False)
    opts = opts or SolveOptions(tol=1e-12)
    u = solve_sparse(prim.K, prim.b, opts).u
    mpsi = _as_load(psi, mesh, prim.M)
    w = solve_sparse(dual.K, mpsi, opts).u
    lhs = float(mpsi @ u)
    rhs = float(w @ prim.b)
    res = abs(lhs - rhs) / max(1.0, abs(lhs))
    if return_parts:
        transpose_gap = abs(dual.K - prim.K.T).max() if prim.K.nnz else 0.0
        return res, {"psi_u": lhs, "w_b": rhs, "transpose_gap": float(transpose_gap)}
    return res


def extended_l1_check(coeffs, mesh, g, G, slack=0.02, case_id="case", opts=None):
    """``||v||_1 <= ||g||_1 / alpha + |U|^{1/2} C1 ||G||_2`` for data ``(g, G)`` of low integrability."""
    if coeffs.alpha <= 0:
        raise ValueError("the L1 bound needs alpha > 0")
    data = coeffs.replace(f=g, F=G)
    sol = solve_primal(data, mesh, opts)
    k = _constants(coeffs, mesh)
    bound = lp_norm(g, 1, mesh) / coeffs.alpha + k.C3 * lp_norm(G, 2, mesh)
    rep = EstimateReport()
    rep.add(case_id, "extended_l1", REFS["extended_l1"], sol.L1, bound, slack)
    return rep


@dataclass
class StabilityRow:
    n: int
    diff_L1: float
    bound: float
    dB2: float
    dc: float
    dA_grad_u: float
    df1: float
    dF2: float


def mollified_drift_schedule(base, mesh, delta=0.25):
    """``n -> base`` with ``B`` replaced by its mollification at radius ``delta / (2n)``."""

    def schedule(n):
        return base.replace(B=mollify_field(base.B, n, delta, mesh))

    return schedule


def _eventually_decreasing(vals, rtol=1e-12):
    """Non-increasing from the midpoint of the sequence onward."""
    tail = vals[len(vals) // 2 :]
    return all(b <= a * (1 + rtol) + 1e-300 for a, b in zip(tail, tail[1:]))


def stability_sweep(base, mesh, schedule, n_values=range(1, 17), slack=0.05, threshold=1e-3,
                    case_id="stability", opts=None, jobs=1):
    """Solve perturbed problems and compare ``||u_n - u||_1`` with the stability bound.

    `schedule` maps ``n`` to a perturbed :class:`CoefficientSet`; every
    perturbed matrix must stay elliptic with the base ``lam``.  The matrix
    term uses the gradient of the base discrete solution.  The sequence of
    differences must be eventually non-increasing and end below
    ``threshold * ||u||_1``.
    """
    n_values = list(n_values)
    sol = solve_primal(base, mesh, opts)
    k = _constants(base, mesh)
    f_2s = lp_norm(base.f, base.two_star, mesh)
    F_2 = lp_norm(base.F, 2, mesh)
    A0 = base.A.at_quadrature(mesh)

    def one(n):
        pert = schedule(n)
        ell = check_ellipticity(pert.A, mesh, base.lam, max(pert.a_max, base.a_max))
        if not ell.passed:
            raise AssumptionError("ellipticity", f"perturbation n={n} loses ellipticity with lam={base.lam}")
        pert = pert.replace(lam=base.lam)
        sol_n = solve_primal(pert, mesh, opts, validate=False)
        diff = lp_norm(NodalField(sol_n.full - sol.full), 1, mesh)
        dB2 = lp_norm(base.B - pert.B, 2, mesh)
        dc = lp_norm(base.c - pert.c, base.two_star, mesh)
        dA = pert.A.at_quadrature(mesh) - A0
        vec = np.einsum("tqde,te->tqd", dA, sol.grad)
        dA_grad_u = math.sqrt(mesh.integrate(np.sum(vec**2, axis=-1)))
        df1 = lp_norm(base.f - pert.f, 1, mesh)
        dF2 = lp_norm(base.F - pert.F, 2, mesh)
        bound = stability_rhs(k, dB2, dc, dA_grad_u, df1, dF2, base.alpha, f_2s, F_2)
        return StabilityRow(n, diff, bound, dB2, dc, dA_grad_u, df1, dF2)

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as ex:
            rows = list(ex.map(one, n_values))
    else:
        rows = [one(n) for n in n_values]

    rep = EstimateReport(meta={"u_L1": sol.L1})
    for r in rows:
        rep.add(f"{case_id}_n{r.n:03d}", "stability", REFS["stability"], r.diff_L1, r.bound, slack)
    diffs = [r.diff_L1 for r in rows]
    rep.add(case_id, "stability_decreasing", REFS["stability"], 0.0 if _eventually_decreasing(diffs) else 1.0,
            0.0, 0.0, kind="identity")
    rep.add(case_id, "stability_final", REFS["stability"], diffs[-1], threshold * sol.L1, 0.0)
    return rows, rep


# ----------------------------------------------------------------------------
# seeded coefficient suite
# ----------------------------------------------------------------------------

_CORNERS = ((0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0))


def _num(v):
    return repr(round(float(v), 6))


def random_suite(seed=0, n_cases=20):
    """Seeded coefficient sets on the unit square, described by expressions.

    Cycles through drift types (none, singular, compressive linear,
    rotational, singular plus rotational) and zero-order terms (none,
    constant, singular ``1/|x - corner|``, smooth), with non-symmetric
    variable ``A``.  Half of the cases carry a divergence-form load ``F``.

    Returns a list of ``(case_id, CoefficientSet)``.
    """
    from .fields import CoefficientSet

    rng = np.random.default_rng(seed)
    cases = []
    for i in range(n_cases):
        amp_d = rng.uniform(0.0, 0.4)
        amp_o = rng.uniform(0.0, 0.3)
        amp_k = rng.uniform(0.0, 1.0)
        k1, k2 = rng.integers(1, 4, size=2)
        lam = 1.0 - amp_d - amp_o
        a11 = f"1 + {_num(amp_d)}*sin({k1}*pi*x)*cos({k2}*pi*y)"
        a22 = f"1 + {_num(amp_d)}*cos({k2}*pi*x)"
        off = f"{_num(amp_o)}*sin({k2}*pi*(x+y))"
        skew = f"{_num(amp_k)}*cos({k1}*pi*y)"
        A = from_expression(a11, f"{off} + {skew}", f"{off} - ({skew})", a22)
        a_max = 1.0 + amp_d + amp_o + amp_k

        corner = _CORNERS[rng.integers(0, 4)]
        cx, cy = corner
        gamma = rng.uniform(1.2, 1.8)
        bs = rng.uniform(0.2, 1.5)
        kind_b = i % 5
        if kind_b == 0:
            B, bdesc = _ZERO_VEC, "0"
        elif kind_b == 1:
            B = make_singular_drift(gamma, corner, bs)
            bdesc = B.description
        elif kind_b == 2:
            x0, y0 = rng.uniform(0, 1, size=2)
            B = from_expression(f"-{_num(bs)}*(x - {_num(x0)})", f"-{_num(bs)}*(y - {_num(y0)})")
            bdesc = B.description
        elif kind_b == 3:
            B = from_expression(f"-{_num(3 * bs)}*(y - 0.5)", f"{_num(3 * bs)}*(x - 0.5)")
            bdesc = B.description
        else:
            rot = from_expression(f"-{_num(bs)}*(y - 0.5)", f"{_num(bs)}*(x - 0.5)")
            B = make_singular_drift(gamma, corner, bs) + rot
            bdesc = f"singular(gamma={gamma:.6g}, c={corner}) + {rot.description}"

        cc = rng.uniform(0.1, 2.0)
        kind_c = (i // 5) % 4
        if kind_c == 0:
            c = from_expression("0")
        elif kind_c == 1:
            c = from_expression(_num(cc))
        elif kind_c == 2:
            c = from_expression(f"{_num(cc)}/norm(x - {cx!r}, y - {cy!r})")
        else:
            c = from_expression(f"{_num(cc)}*(1 + sin(pi*x)*sin(pi*y))")

        alpha = float(round(rng.uniform(0.5, 5.0), 6))
        fa, fb = rng.uniform(-2, 2, size=2)
        m1, m2 = rng.integers(1, 4, size=2)
        f = from_expression(f"{_num(fa)}*sin({m1}*pi*x)*sin({m2}*pi*y) + {_num(fb)}*cos({m2}*pi*x)")
        if i % 2:
            ga, gb = rng.uniform(-1, 1, size=2)
            F = from_expression(f"{_num(ga)}*sin(pi*y)", f"{_num(gb)}*cos(pi*x)")
        else:
            F = _ZERO_VEC

        desc = {"A": A.description, "B": bdesc, "c": c.description, "f": f.description,
                "F": getattr(F, "description", "0"), "alpha": alpha, "lam": lam}
        cs = CoefficientSet(A, B, c, alpha, f, F, lam, a_max, description=desc)
        cases.append((f"s{seed}-{i:02d}", cs))
    return cases


def run_suite(cases, mesh, rs=(1, 2, INF), slack=0.02, jobs=1, with_duality=True, psi=None):
    """Bound checks (and duality residuals) for every case; order-deterministic report."""
    psi = psi if psi is not None else from_expression("1 + x*y")

    def one(item):
        cid, cs = item
        rep = verify_solution_bounds(cs, mesh, rs, slack, cid)
        if with_duality:
            rep.add(cid, "duality", REFS["duality"], duality_check(cs, mesh, psi), 1e-9, 0.0, kind="identity")
        return rep

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as ex:
            parts = list(ex.map(one, cases))
    else:
        parts = [one(c) for c in cases]
    out = EstimateReport(meta={"cases": len(cases), "mesh": f"{mesh.n_triangles} triangles"})
    for p in parts:
        out.extend(p)
    return out.sorted()


def laplace_and_mass(mesh):
    """Interior pure-Laplacian stiffness and mass matrices."""
    return restrict(stiffness_matrix(mesh), mesh), restrict(mass_matrix(mesh), mesh)
