"""Coefficient fields, their validation, norms and mollification.

A field is anything that can be sampled at the quadrature points of a mesh.
Three storage kinds exist: analytic (a callable of ``x, y``), per-element
constant, and per-vertex nodal with linear interpolation.  The value rank
is 0 (scalar), 1 (2-vector) or 2 (2x2 matrix).

Analytic fields may declare singular points.  Sampling exactly at one of
them raises :class:`FieldEvaluationError`; structured meshes never put a
quadrature point on a vertex, so a singularity sitting on a vertex or on
the boundary is harmless for assembly.
"""

import ast
import math
import operator
import weakref
from dataclasses import dataclass, field as dc_field

import numpy as np

from .mesh import QUAD_BARY, shrink_domain

__all__ = [
    "FieldEvaluationError",
    "AssumptionError",
    "Field",
    "AnalyticField",
    "ElementField",
    "NodalField",
    "constant",
    "from_expression",
    "parse_expression",
    "CoefficientSet",
    "ValidationReport",
    "check_ellipticity",
    "check_weak_divergence",
    "check_nonnegative",
    "make_singular_drift",
    "mollify_field",
    "lp_norm",
    "bump",
]

_SINGULAR_ATOL = 1e-13


class FieldEvaluationError(ValueError):
    """Raised when a field is sampled at one of its declared singular points."""


class AssumptionError(ValueError):
    """Problem data violating one of the standing structural assumptions."""

    def __init__(self, clause, message):
        self.clause = clause
        super().__init__(f"[{clause}] {message}")


def _value_shape(rank):
    return {0: (), 1: (2,), 2: (2, 2)}[rank]


class Field:
    """Base class; subclasses implement :meth:`at_quadrature`."""

    rank = 0

    def at_quadrature(self, mesh):
        raise NotImplementedError

    def magnitude_at_quadrature(self, mesh):
        v = self.at_quadrature(mesh)
        if self.rank == 0:
            return np.abs(v)
        return np.sqrt(np.sum(v.reshape(v.shape[:2] + (-1,)) ** 2, axis=-1))

    # arithmetic is evaluated lazily on the quadrature points
    def __add__(self, other):
        return _Combined(operator.add, self, other)

    def __sub__(self, other):
        return _Combined(operator.sub, self, other)

    def __mul__(self, t):
        if not np.isscalar(t):
            return NotImplemented
        return _Combined(lambda a, _: t * a, self, None)

    __rmul__ = __mul__

    def __neg__(self):
        return -1.0 * self

    def transpose(self):
        if self.rank != 2:
            raise ValueError("transpose needs a matrix field")
        return _Combined(lambda a, _: np.swapaxes(a, -1, -2), self, None)


class _Combined(Field):
    def __init__(self, op, a, b):
        if b is not None and a.rank != b.rank:
            raise ValueError("cannot combine fields of different rank")
        self.op, self.a, self.b = op, a, b
        self.rank = a.rank

    def at_quadrature(self, mesh):
        bv = None if self.b is None else self.b.at_quadrature(mesh)
        return self.op(self.a.at_quadrature(mesh), bv)


class AnalyticField(Field):
    """Field given by a vectorised callable ``func(x, y)``.

    `func` returns an array broadcastable to ``x.shape`` (scalar), a pair of
    arrays (vector) or a 2x2 nested sequence of arrays (matrix, row-major).

    Parameters
    ----------
    func : callable
    rank : {0, 1, 2}
    singular_points : sequence of (x, y)
        Points where evaluation is refused.
    cap : float, optional
        Clip the pointwise magnitude to `cap`.  Off by default; only meant
        for stress tests.
    description : str, optional
        Human readable form, echoed in reports.
    """

    def __init__(self, func, rank=0, singular_points=(), cap=None, description=None):
        self.func = func
        self.rank = rank
        self.singular_points = tuple(tuple(map(float, p)) for p in singular_points)
        self.cap = cap
        self.description = description

    def __repr__(self):
        return f"AnalyticField({self.description or self.func!r}, rank={self.rank})"

    def _check_singular(self, x, y):
        for sx, sy in self.singular_points:
            hit = (np.abs(x - sx) <= _SINGULAR_ATOL) & (np.abs(y - sy) <= _SINGULAR_ATOL)
            if np.any(hit):
                k = np.flatnonzero(hit.ravel())[0]
                raise FieldEvaluationError(
                    f"{self!r} evaluated at its singular point ({x.ravel()[k]}, {y.ravel()[k]})"
                )

    def at_points(self, pts):
        pts = np.asarray(pts, dtype=float)
        x, y = pts[..., 0], pts[..., 1]
        self._check_singular(x, y)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self.func(x, y)
        shape = x.shape + _value_shape(self.rank)
        if self.rank == 0:
            v = np.broadcast_to(np.asarray(out, dtype=float), x.shape).copy()
        elif self.rank == 1:
            v = np.stack([np.broadcast_to(np.asarray(c, dtype=float), x.shape) for c in out], axis=-1)
        else:
            v = np.stack(
                [np.stack([np.broadcast_to(np.asarray(c, dtype=float), x.shape) for c in row], axis=-1) for row in out],
                axis=-2,
            )
        v = v.reshape(shape)
        if not np.all(np.isfinite(v)):
            raise FieldEvaluationError(f"{self!r} produced non-finite values")
        if self.cap is not None:
            v = _cap(v, self.rank, self.cap)
        return v

    def at_quadrature(self, mesh):
        # samples on the most recent mesh are kept; fields are immutable
        cached = getattr(self, "_qcache", None)
        if cached is not None and cached[0]() is mesh:
            return cached[1]
        v = self.at_points(mesh.quad_points)
        v.flags.writeable = False
        self._qcache = (weakref.ref(mesh), v)
        return v

    def transpose(self):
        if self.rank != 2:
            raise ValueError("transpose needs a matrix field")
        f = self.func
        out = _TransposedField(
            lambda x, y: _transpose_nested(f(x, y)),
            rank=2,
            singular_points=self.singular_points,
            cap=self.cap,
            description=None if self.description is None else f"transpose({self.description})",
        )
        out._parent = self
        return out


class _TransposedField(AnalyticField):
    """Transpose that reuses the parent's quadrature samples."""

    def at_quadrature(self, mesh):
        return np.swapaxes(self._parent.at_quadrature(mesh), -1, -2)


def _transpose_nested(m):
    return ((m[0][0], m[1][0]), (m[0][1], m[1][1]))


def _cap(v, rank, cap):
    if rank == 0:
        return np.clip(v, -cap, cap)
    mag = np.sqrt(np.sum(v.reshape(v.shape[: v.ndim - rank] + (-1,)) ** 2, axis=-1))
    scale = np.minimum(1.0, cap / np.maximum(mag, 1e-300))
    return v * scale.reshape(scale.shape + (1,) * rank)


class ElementField(Field):
    """Piecewise-constant field, one value per triangle."""

    def __init__(self, values, rank=0):
        self.values = np.asarray(values, dtype=float)
        self.rank = rank

    def at_quadrature(self, mesh):
        nq = QUAD_BARY.shape[0]
        v = self.values[:, None, ...]
        return np.broadcast_to(v, (mesh.n_triangles, nq) + _value_shape(self.rank)).copy()


class NodalField(Field):
    """Continuous piecewise-linear field from per-vertex values."""

    def __init__(self, values, rank=0):
        self.values = np.asarray(values, dtype=float)
        self.rank = rank

    @classmethod
    def from_interior(cls, mesh, u):
        """Embed interior nodal values, setting boundary vertices to zero."""
        full = np.zeros(mesh.n_vertices)
        full[mesh.interior] = u
        return cls(full)

    def at_quadrature(self, mesh):
        if self.values.shape[0] != mesh.n_vertices:
            raise ValueError("nodal field does not match the mesh vertex count")
        vt = self.values[mesh.triangles]
        return np.einsum("qk,tk...->tq...", QUAD_BARY, vt)


def constant(value):
    """Constant scalar, vector or matrix field."""
    v = np.asarray(value, dtype=float)
    rank = v.ndim
    if rank == 0:
        return AnalyticField(lambda x, y: np.full(np.shape(x), float(v)), 0, description=repr(float(v)))
    if rank == 1:
        return AnalyticField(lambda x, y: (np.full(np.shape(x), v[0]), np.full(np.shape(x), v[1])), 1,
                             description=repr(v.tolist()))
    return AnalyticField(
        lambda x, y: tuple(tuple(np.full(np.shape(x), v[i, j]) for j in range(2)) for i in range(2)),
        2,
        description=repr(v.tolist()),
    )


# ----------------------------------------------------------------------------
# expression grammar
# ----------------------------------------------------------------------------

_FUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "log": np.log,
}
_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}


def _compile(node, centers):
    """Turn a whitelisted AST into a closure ``g(x, y)``."""
    if isinstance(node, ast.Expression):
        return _compile(node.body, centers)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        c = float(node.value)
        return lambda x, y: c
    if isinstance(node, ast.Name):
        if node.id == "x":
            return lambda x, y: x
        if node.id == "y":
            return lambda x, y: y
        if node.id == "pi":
            return lambda x, y: math.pi
        raise ValueError(f"unknown name {node.id!r}")
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        g = _compile(node.operand, centers)
        if isinstance(node.op, ast.USub):
            return lambda x, y: -g(x, y)
        return g
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        op = _BINOPS[type(node.op)]
        a, b = _compile(node.left, centers), _compile(node.right, centers)
        return lambda x, y: op(a(x, y), b(x, y))
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and not node.keywords:
        name = node.func.id
        args = [_compile(a, centers) for a in node.args]
        if name == "norm":
            if len(args) != 2:
                raise ValueError("norm takes two arguments: norm(x - a, y - b)")
            centers.append((_offset(node.args[0], "x"), _offset(node.args[1], "y")))
            a, b = args
            return lambda x, y: np.sqrt(a(x, y) ** 2 + b(x, y) ** 2)
        if name in _FUNCS and len(args) == 1:
            fn, (a,) = _FUNCS[name], args
            return lambda x, y: fn(a(x, y))
        raise ValueError(f"unknown function {name!r}/{len(args)}")
    raise ValueError(f"unsupported syntax: {ast.dump(node)}")


def _offset(node, var):
    """Shift ``a`` of an argument written as ``var - a`` / ``var + a`` / ``var``."""
    if isinstance(node, ast.Name) and node.id == var:
        return 0.0
    if isinstance(node, ast.BinOp) and isinstance(node.left, ast.Name) and node.left.id == var:
        c = _compile(node.right, [])(0.0, 0.0)
        if isinstance(node.op, ast.Sub):
            return float(c)
        if isinstance(node.op, ast.Add):
            return -float(c)
    raise ValueError(f"norm arguments must look like '{var} - a', got {ast.unparse(node)!r}")


def parse_expression(text):
    """Compile an expression over ``x, y``.

    Supports numbers, ``pi``, ``+ - * / ^`` (``^`` is power), and the
    functions ``sin cos exp sqrt abs log`` plus ``norm(x - a, y - b)``.

    Returns
    -------
    func : callable
        ``func(x, y)`` evaluated with numpy broadcasting.
    centers : list of (float, float)
        Centers of every ``norm(...)`` call, declared as singular points.
    """
    src = text.replace("^", "**").strip()
    if not src:
        raise ValueError("empty expression")
    try:
        tree = ast.parse(src, mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"malformed expression {text!r}: {exc.msg}") from None
    centers = []
    g = _compile(tree, centers)
    return g, sorted(set(centers))


def from_expression(*exprs, cap=None):
    """Field from one (scalar), two (vector) or four (row-major matrix) expressions."""
    if len(exprs) == 1 and isinstance(exprs[0], str) and ";" in exprs[0]:
        exprs = tuple(e.strip() for e in exprs[0].split(";"))
    compiled = [parse_expression(e) for e in exprs]
    funcs = [c[0] for c in compiled]
    centers = sorted({p for c in compiled for p in c[1]})
    desc = "; ".join(e.strip() for e in exprs)
    if len(funcs) == 1:
        (g,) = funcs
        return AnalyticField(lambda x, y: g(x, y), 0, centers, cap, desc)
    if len(funcs) == 2:
        g0, g1 = funcs
        return AnalyticField(lambda x, y: (g0(x, y), g1(x, y)), 1, centers, cap, desc)
    if len(funcs) == 4:
        a, b, c, d = funcs
        return AnalyticField(lambda x, y: ((a(x, y), b(x, y)), (c(x, y), d(x, y))), 2, centers, cap, desc)
    raise ValueError(f"expected 1, 2 or 4 expressions, got {len(funcs)}")


# ----------------------------------------------------------------------------
# problem data
# ----------------------------------------------------------------------------


@dataclass
class CoefficientSet:
    """Data of the Dirichlet problem plus its structural constants.

    ``lam`` is the ellipticity constant, ``a_max`` the entrywise bound on
    ``A``.  ``two_star`` is the lower Sobolev exponent (free in (1, 2) for
    d = 2), ``q`` the integrability exponent used by the boundedness and
    contraction bounds.
    """

    A: Field
    B: Field
    c: Field
    alpha: float
    f: Field
    F: Field
    lam: float
    a_max: float
    two_star: float = 1.5
    q: float = 2.0
    d: int = 2
    description: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        if self.alpha < 0:
            raise AssumptionError("alpha", f"alpha must be >= 0, got {self.alpha}")
        if self.lam <= 0:
            raise AssumptionError("ellipticity", f"lambda must be positive, got {self.lam}")
        if self.a_max <= 0:
            raise AssumptionError("ellipticity", f"Lambda must be positive, got {self.a_max}")
        if self.d == 2 and not (1.0 < self.two_star < 2.0):
            raise AssumptionError("lower exponent", f"two_star must lie in (1, 2) when d = 2, got {self.two_star}")
        if self.d >= 3 and not math.isclose(self.two_star, 2 * self.d / (self.d + 2)):
            raise AssumptionError("lower exponent", "two_star is fixed to 2d/(d+2) for d >= 3")
        if not (self.q > self.d / 2 and self.q >= self.two_star):
            raise AssumptionError("exponent q", f"need q > d/2 and q >= two_star, got q={self.q}")
        ranks = [(self.A, 2), (self.B, 1), (self.c, 0), (self.f, 0), (self.F, 1)]
        for fld, r in ranks:
            if fld.rank != r:
                raise ValueError(f"field {fld!r} has rank {fld.rank}, expected {r}")

    def replace(self, **changes):
        kw = {k: getattr(self, k) for k in self.__dataclass_fields__}
        kw.update(changes)
        return CoefficientSet(**kw)

    def validate(self, mesh, div_tol=1e-10):
        """Run every validator; returns the list of reports."""
        return [
            check_ellipticity(self.A, mesh, self.lam, self.a_max),
            check_weak_divergence(self.B, mesh, div_tol),
            check_nonnegative(self.c, mesh),
        ]


@dataclass
class ValidationReport:
    name: str
    passed: bool
    value: float
    location: tuple = None
    detail: dict = dc_field(default_factory=dict)

    def __bool__(self):
        return self.passed


def check_ellipticity(A, mesh, lam, a_max):
    """Check the lower ellipticity bound and the entrywise upper bound of `A`.

    The smaller eigenvalue of the symmetric part is compared against `lam`
    and ``max |a_ij|`` against `a_max`, both at every quadrature point.
    """
    a = A.at_quadrature(mesh)
    s11 = a[..., 0, 0]
    s22 = a[..., 1, 1]
    s12 = 0.5 * (a[..., 0, 1] + a[..., 1, 0])
    mean = 0.5 * (s11 + s22)
    rad = np.sqrt((0.5 * (s11 - s22)) ** 2 + s12**2)
    lmin = mean - rad
    amax = np.max(np.abs(a), axis=(-2, -1))
    k = np.unravel_index(np.argmin(lmin), lmin.shape)
    ka = np.unravel_index(np.argmax(amax), amax.shape)
    ok_low = lmin[k] >= lam - 1e-12
    ok_high = amax[ka] <= a_max + 1e-12
    return ValidationReport(
        "ellipticity",
        bool(ok_low and ok_high),
        float(lmin[k]),
        tuple(mesh.quad_points[k].tolist()),
        {"min_sym_eig": float(lmin[k]), "max_abs_entry": float(amax[ka]),
         "max_abs_location": tuple(mesh.quad_points[ka].tolist()), "lam": lam, "a_max": a_max},
    )


def hat_divergence_integrals(B, mesh):
    """``int <B, grad phi_i>`` for every vertex hat function ``phi_i``."""
    b = B.at_quadrature(mesh)
    # per element and local vertex: sum_q w_q B(q) . grad phi_k
    bw = np.einsum("tq,tqd->td", mesh.quad_weights, b)
    local = np.einsum("td,tkd->tk", bw, mesh.grads)
    out = np.zeros(mesh.n_vertices)
    np.add.at(out, mesh.triangles.ravel(), local.ravel())
    return out


def check_weak_divergence(B, mesh, tol=1e-10, region=None):
    """Discrete test of ``div B <= 0``: hat-function integrals must be ``>= -tol``.

    With `region` (a :class:`Rect`), only hat functions whose support lies
    inside it are tested.
    """
    nodes = mesh.interior
    if region is not None:
        t = mesh.triangles
        inside = region.contains(mesh.vertices)
        # a node qualifies when every triangle touching it is inside the region
        bad = np.zeros(mesh.n_vertices, dtype=bool)
        outside_tri = ~np.all(inside[t], axis=1)
        bad[t[outside_tri].ravel()] = True
        nodes = nodes[~bad[nodes]]
    vals = hat_divergence_integrals(B, mesh)[nodes]
    if vals.size == 0:
        return ValidationReport("weak_divergence", True, 0.0)
    k = int(np.argmin(vals))
    node = nodes[k]
    return ValidationReport(
        "weak_divergence", bool(vals[k] >= -tol), float(vals[k]), tuple(mesh.vertices[node].tolist()), {"tol": tol}
    )


def check_nonnegative(c, mesh):
    v = c.at_quadrature(mesh)
    k = np.unravel_index(np.argmin(v), v.shape)
    return ValidationReport("nonnegative_c", bool(v[k] >= 0), float(v[k]), tuple(mesh.quad_points[k].tolist()))


def make_singular_drift(gamma, center=(0.0, 0.0), scale=1.0):
    """Drift ``-scale * (x - center) / |x - center|^gamma``.

    Its length ``|x - center|^(1 - gamma)`` blows up at `center` but is
    square integrable in two dimensions for ``gamma < 2``; its divergence
    ``-(2 - gamma) |x - center|^(-gamma)`` is negative.
    """
    if not (1.0 < gamma < 2.0):
        raise ValueError(f"gamma must lie in (1, 2), got {gamma}")
    cx, cy = map(float, center)

    def func(x, y):
        dx, dy = x - cx, y - cy
        r = np.sqrt(dx * dx + dy * dy)
        s = -scale * r ** (-gamma)
        return s * dx, s * dy

    return AnalyticField(func, 1, [(cx, cy)],
                         description=f"-{scale!r}*(x-c)|x-c|^-{gamma!r}, c=({cx!r},{cy!r})")


def bump(z):
    """Unnormalised standard bump ``exp(-1 / (1 - |z|^2))`` supported in the unit ball."""
    r2 = np.sum(np.asarray(z) ** 2, axis=-1)
    out = np.zeros_like(r2)
    inside = r2 < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
    return out


def mollify_field(fld, n, delta, mesh, subgrid=16, chunk=4096):
    """Convolve the zero extension of `fld` with the bump of radius ``delta / (2 n)``.

    The convolution is computed with a midpoint rule on a ``subgrid x subgrid``
    grid covering the kernel support, whose weights are normalised to unit
    mass so that constants are reproduced exactly away from the boundary.
    Sub-grid points that fall on a declared singular point are skipped.

    Returns
    -------
    NodalField
        Mollified values at the mesh vertices.
    """
    if not isinstance(fld, AnalyticField):
        raise TypeError("mollification needs an analytic field")
    if n < 1 or delta <= 0:
        raise ValueError("need n >= 1 and delta > 0")
    if shrink_domain(mesh.rect, delta) is None:
        raise ValueError(f"shrunk domain is empty for delta={delta}")
    rho = delta / (2.0 * n)
    t = (np.arange(subgrid) + 0.5) / subgrid * 2.0 - 1.0
    zx, zy = np.meshgrid(t, t)
    z = np.column_stack([zx.ravel(), zy.ravel()])
    w = bump(z)
    keep = w > 0
    z, w = z[keep] * rho, w[keep] / w[keep].sum()

    shape = _value_shape(fld.rank)
    out = np.zeros((mesh.n_vertices,) + shape)
    rect = mesh.rect
    for start in range(0, mesh.n_vertices, chunk):
        v = mesh.vertices[start : start + chunk]
        pts = v[:, None, :] + z[None, :, :]
        mask = rect.contains(pts, strict=True)
        for sx, sy in fld.singular_points:
            mask &= ~((np.abs(pts[..., 0] - sx) <= _SINGULAR_ATOL) & (np.abs(pts[..., 1] - sy) <= _SINGULAR_ATOL))
        vals = np.zeros(pts.shape[:2] + shape)
        vals[mask] = fld.at_points(pts[mask])
        out[start : start + chunk] = np.tensordot(w, vals, axes=([0], [1]))
    return NodalField(out, fld.rank)


def lp_norm(fld, p, mesh):
    """Quadrature approximation of the L^p norm; ``p = inf`` is the quadrature-point max.

    Vector and matrix fields use the pointwise Euclidean (Frobenius) length.
    """
    if not (p == np.inf or p >= 1):
        raise ValueError(f"p must lie in [1, inf], got {p}")
    mag = fld.magnitude_at_quadrature(mesh)
    if p == np.inf:
        return float(np.max(mag))
    return float(np.sum(mesh.quad_weights * mag**p) ** (1.0 / p))
