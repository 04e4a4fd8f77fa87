"""Conforming triangulations of axis-aligned rectangles.

Only structured right-triangle meshes and their uniform refinements are
produced here. Every integral in the package goes through the single
quadrature rule defined in this module, so that primal, dual, mass and
load assembly stay algebraically consistent.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = [
    "Rect",
    "Mesh",
    "QUAD_BARY",
    "QUAD_WEIGHTS",
    "QUAD_DEGREE",
    "build_structured_mesh",
    "refine_uniform",
    "shrink_domain",
    "write_mesh",
    "read_mesh",
]


# Symmetric 6-point rule (Dunavant), exact for polynomials of degree <= 4.
# Weights are relative to the triangle area and sum to one.
_A1, _B1 = 0.445948490915965, 0.108103018168070
_A2, _B2 = 0.091576213509771, 0.816847572980459
_W1, _W2 = 0.223381589678011, 0.109951743655322

QUAD_BARY = np.array(
    [
        [_A1, _A1, _B1],
        [_A1, _B1, _A1],
        [_B1, _A1, _A1],
        [_A2, _A2, _B2],
        [_A2, _B2, _A2],
        [_B2, _A2, _A2],
    ]
)
QUAD_WEIGHTS = np.array([_W1, _W1, _W1, _W2, _W2, _W2])
QUAD_DEGREE = 4


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle ``[x0, x1] x [y0, y1]``."""

    x0: float = 0.0
    y0: float = 0.0
    x1: float = 1.0
    y1: float = 1.0

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ValueError(f"rectangle must have positive side lengths, got {self}")

    @property
    def width(self):
        return self.x1 - self.x0

    @property
    def height(self):
        return self.y1 - self.y0

    @property
    def area(self):
        return self.width * self.height

    def contains(self, pts, strict=False):
        """Boolean mask of points inside the (closed or open) rectangle."""
        pts = np.asarray(pts, dtype=float)
        x, y = pts[..., 0], pts[..., 1]
        if strict:
            return (x > self.x0) & (x < self.x1) & (y > self.y0) & (y < self.y1)
        return (x >= self.x0) & (x <= self.x1) & (y >= self.y0) & (y <= self.y1)


def shrink_domain(rect, eps):
    """Inner rectangle of points farther than `eps` from the boundary.

    Returns ``None`` (the empty domain) once `eps` reaches half of the
    shorter side.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if 2 * eps >= min(rect.width, rect.height):
        return None
    return Rect(rect.x0 + eps, rect.y0 + eps, rect.x1 - eps, rect.y1 - eps)


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangulation with counter-clockwise oriented triangles.

    Parameters
    ----------
    vertices : (V, 2) array
    triangles : (T, 3) int array
    rect : Rect
        Domain the mesh tiles; used for the volume |U|.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    rect: Rect = field(default_factory=Rect)

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 2 or t.ndim != 2 or t.shape[1] != 3:
            raise ValueError("vertices must be (V, 2) and triangles (T, 3)")
        v.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        if np.any(self.signed_areas <= 0):
            raise ValueError("triangles must have positive signed area")

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_triangles(self):
        return self.triangles.shape[0]

    @property
    def volume(self):
        return self.rect.area

    @cached_property
    def signed_areas(self):
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @property
    def element_areas(self):
        return self.signed_areas

    @cached_property
    def edges(self):
        """Unique undirected edges ``(E, 2)`` and the triangle count per edge."""
        t = self.triangles
        all_edges = np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        all_edges.sort(axis=1)
        uniq, counts = np.unique(all_edges, axis=0, return_counts=True)
        return uniq, counts

    @property
    def n_edges(self):
        return self.edges[0].shape[0]

    @cached_property
    def h(self):
        """Mesh diameter: the longest edge."""
        e, _ = self.edges
        return float(np.max(np.linalg.norm(self.vertices[e[:, 1]] - self.vertices[e[:, 0]], axis=1)))

    @cached_property
    def boundary_vertex_flags(self):
        e, counts = self.edges
        flags = np.zeros(self.n_vertices, dtype=bool)
        flags[e[counts == 1].ravel()] = True
        flags.setflags(write=False)
        return flags

    @cached_property
    def interior(self):
        """Indices of the free (non-Dirichlet) vertices."""
        return np.flatnonzero(~self.boundary_vertex_flags)

    @cached_property
    def grads(self):
        """Gradients of the three hat functions on every element, ``(T, 3, 2)``."""
        p = self.vertices[self.triangles]
        x, y = p[..., 0], p[..., 1]
        # grad(phi_k) = (y_{k+1} - y_{k+2}, x_{k+2} - x_{k+1}) / (2 |T|)
        gx = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
        gy = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
        g = np.stack([gx, gy], axis=-1) / (2.0 * self.signed_areas)[:, None, None]
        g.setflags(write=False)
        return g

    @cached_property
    def quad_points(self):
        """Physical quadrature points, ``(T, Q, 2)``."""
        p = self.vertices[self.triangles]
        q = np.einsum("qk,tkd->tqd", QUAD_BARY, p)
        q.setflags(write=False)
        return q

    @cached_property
    def quad_weights(self):
        """Physical quadrature weights, ``(T, Q)``."""
        w = self.signed_areas[:, None] * QUAD_WEIGHTS[None, :]
        w.setflags(write=False)
        return w

    def integrate(self, values):
        """Quadrature of values sampled at :attr:`quad_points`."""
        return float(np.sum(self.quad_weights * values))


def build_structured_mesh(nx, ny, rect=None):
    """Structured mesh of `rect` with ``nx * ny`` cells split into right triangles.

    Each cell is cut along the lower-left to upper-right diagonal.
    """
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise ValueError(f"subdivision counts must be positive integers, got nx={nx}, ny={ny}")
    nx, ny = int(nx), int(ny)
    rect = Rect() if rect is None else rect
    xs = np.linspace(rect.x0, rect.x1, nx + 1)
    ys = np.linspace(rect.y0, rect.y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    j, i = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    v00 = (j * (nx + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + nx + 1
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.empty((2 * nx * ny, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper
    return Mesh(vertices, triangles, rect)


def refine_uniform(mesh):
    """Split every triangle into four by joining edge midpoints."""
    edges, _ = mesh.edges
    V = mesh.n_vertices
    mids = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])

    # lookup of the midpoint index for each (sorted) local edge
    key = edges[:, 0] * V + edges[:, 1]
    order = np.argsort(key)
    sorted_key = key[order]

    def mid_index(a, b):
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        pos = np.searchsorted(sorted_key, lo * V + hi)
        return V + order[pos]

    t = mesh.triangles
    m01 = mid_index(t[:, 0], t[:, 1])
    m12 = mid_index(t[:, 1], t[:, 2])
    m20 = mid_index(t[:, 2], t[:, 0])
    new = np.concatenate(
        [
            np.column_stack([t[:, 0], m01, m20]),
            np.column_stack([m01, t[:, 1], m12]),
            np.column_stack([m20, m12, t[:, 2]]),
            np.column_stack([m01, m12, m20]),
        ]
    )
    return Mesh(np.vstack([mesh.vertices, mids]), new, mesh.rect)


def write_mesh(mesh, path):
    """Write `mesh` as a plain-text vertex table followed by a triangle table.

    Layout::

        # rect x0 y0 x1 y1
        # vertices V
        <id> <x> <y> <boundary 0|1>      (V lines)
        # triangles T
        <id> <v0> <v1> <v2>              (T lines)
    """
    r = mesh.rect
    with open(path, "w") as fh:
        fh.write(f"# rect {r.x0!r} {r.y0!r} {r.x1!r} {r.y1!r}\n")
        fh.write(f"# vertices {mesh.n_vertices}\n")
        flags = mesh.boundary_vertex_flags
        for k, (x, y) in enumerate(mesh.vertices):
            fh.write(f"{k} {x:.17g} {y:.17g} {int(flags[k])}\n")
        fh.write(f"# triangles {mesh.n_triangles}\n")
        for k, (a, b, c) in enumerate(mesh.triangles):
            fh.write(f"{k} {a} {b} {c}\n")


def read_mesh(path):
    """Inverse of :func:`write_mesh`."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    rect = Rect(*map(float, lines[0].split()[2:6]))
    nv = int(lines[1].split()[2])
    vert = np.array([list(map(float, ln.split()[1:3])) for ln in lines[2 : 2 + nv]])
    nt = int(lines[2 + nv].split()[2])
    tri = np.array([list(map(int, ln.split()[1:4])) for ln in lines[3 + nv : 3 + nv + nt]])
    return Mesh(vert, tri, rect)
