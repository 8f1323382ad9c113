"""Planar domains (disk, annulus), uniform chart grids, P2 triangle meshes,
loops and a dual basis for relative cohomology.

Conventions
-----------
* Grids are cell centred with ``indexing='ij'``: axis 0 is ``x``, axis 1 is
  ``y``.
* The metric is ``alpha2(x, y) * (dx^2 + dy^2)``; ``alpha2`` defaults to 1.
* Boundary circles carry the orientation induced as the boundary of the
  domain: the outer circle is counter-clockwise (+1), the inner one clockwise
  (-1).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import Delaunay

from .errors import DomainError
from .fields import SmoothForm, smooth_step, smooth_step_derivative

ArrayFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


# ----------------------------------------------------------------------------
# domains
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundaryCircle:
    radius: float
    orientation: int  # +1 counter-clockwise, -1 clockwise
    index: int

    def points(self, n: int) -> np.ndarray:
        """``n`` equispaced points (complex), ordered by increasing angle."""
        t = 2 * np.pi * np.arange(n) / n
        return self.radius * np.exp(1j * t)


@dataclass(frozen=True)
class Domain:
    """Disk ``|z| < outer`` or annulus ``inner < |z| < outer`` with a
    conformal factor ``alpha2``."""

    kind: str
    outer: float = 1.0
    inner: float = 0.0
    alpha2: Optional[ArrayFn] = None

    @property
    def is_annulus(self) -> bool:
        return self.kind == "annulus"

    @property
    def boundary(self) -> Tuple[BoundaryCircle, ...]:
        outer = BoundaryCircle(self.outer, +1, 0)
        if self.is_annulus:
            return (outer, BoundaryCircle(self.inner, -1, 1))
        return (outer,)

    @property
    def area(self) -> float:
        return np.pi * (self.outer ** 2 - self.inner ** 2)

    @property
    def genus_rank(self) -> int:
        """Rank of the relative first cohomology."""
        return 1 if self.is_annulus else 0

    def metric(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.alpha2 is None:
            return np.ones(np.broadcast(x, np.asarray(y)).shape)
        return np.asarray(self.alpha2(x, np.asarray(y, dtype=float)), dtype=float)

    def signed_distance(self, x, y) -> np.ndarray:
        """Negative inside, positive outside."""
        r = np.hypot(x, y)
        d = r - self.outer
        if self.is_annulus:
            d = np.maximum(d, self.inner - r)
        return d

    def contains(self, x, y) -> np.ndarray:
        return self.signed_distance(x, y) < 0

    def boundary_index(self, z: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        """Index of the boundary circle each point lies on (-1 if none)."""
        r = np.abs(z)
        out = np.full(r.shape, -1, dtype=int)
        for c in self.boundary:
            out[np.abs(r - c.radius) <= tol * max(1.0, c.radius)] = c.index
        return out


def build_domain(kind: str, inner: Optional[float] = None, outer: float = 1.0,
                 alpha2: Optional[ArrayFn] = None) -> Domain:
    """Validate and build a :class:`Domain`.

    Raises
    ------
    DomainError
        Unknown kind, non-positive radii or ``inner >= outer``.
    """
    if kind not in ("disk", "annulus"):
        raise DomainError(f"unknown domain kind {kind!r}")
    if not outer > 0:
        raise DomainError("outer radius must be positive")
    if kind == "disk":
        if inner not in (None, 0, 0.0):
            raise DomainError("a disk has no inner radius")
        return Domain("disk", float(outer), 0.0, alpha2)
    if inner is None or not (0 < inner < outer):
        raise DomainError("annulus needs 0 < inner < outer")
    return Domain("annulus", float(outer), float(inner), alpha2)


# ----------------------------------------------------------------------------
# uniform grids
# ----------------------------------------------------------------------------

@dataclass
class ChartGrid:
    """Cell-centred uniform grid covering a domain plus an extension collar.

    Attributes
    ----------
    coverage : ndarray
        Fraction of each cell lying inside the domain (supersampled near the
        boundary); used as quadrature weights for integrals over the domain.
    collar : ndarray
        Smooth cut-off equal to 1 on the domain and 0 beyond distance
        ``collar_width`` outside it.  Multiplying by it is the smooth
        extension operator.
    """

    domain: Domain
    spacing: float
    x: np.ndarray
    y: np.ndarray
    coverage: np.ndarray
    collar: np.ndarray
    collar_width: float
    alpha2: np.ndarray = field(repr=False, default=None)

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.x.size, self.y.size)

    @property
    def X(self) -> np.ndarray:
        return np.broadcast_to(self.x[:, None], self.shape)

    @property
    def Y(self) -> np.ndarray:
        return np.broadcast_to(self.y[None, :], self.shape)

    @property
    def z(self) -> np.ndarray:
        return self.x[:, None] + 1j * self.y[None, :]

    @property
    def mask(self) -> np.ndarray:
        return self.coverage > 0

    @property
    def interior(self) -> np.ndarray:
        """Cells entirely inside the domain."""
        return self.coverage >= 1.0

    def sample(self, f: ArrayFn) -> np.ndarray:
        return np.asarray(f(self.X, self.Y))

    def integrate(self, values: np.ndarray, metric: bool = False) -> complex:
        """Integral over the domain (``dx dy``, or ``alpha2 dx dy``)."""
        w = self.coverage * (self.alpha2 if metric else 1.0)
        return np.sum(values * w) * self.spacing ** 2

    def l2_norm(self, values: np.ndarray, metric: bool = True) -> float:
        return float(np.sqrt(np.real(self.integrate(np.abs(values) ** 2, metric))))

    def lp_norm(self, values: np.ndarray, p: float, metric: bool = True) -> float:
        return float(np.real(self.integrate(np.abs(values) ** p, metric)) ** (1.0 / p))

    def extend(self, values: np.ndarray, mode: str = "collar") -> np.ndarray:
        """Extension operator: smooth collar cut-off or zero extension."""
        if mode == "collar":
            return values * self.collar
        if mode == "zero":
            return values * self.coverage
        raise ValueError(f"unknown extension mode {mode!r}")


def _coverage(domain: Domain, x: np.ndarray, y: np.ndarray, h: float, ss: int) -> np.ndarray:
    X, Y = np.meshgrid(x, y, indexing="ij")
    d = domain.signed_distance(X, Y)
    cov = (d < 0).astype(float)
    edge = np.abs(d) < 0.75 * h
    if np.any(edge):
        off = (np.arange(ss) + 0.5) / ss - 0.5
        ox, oy = np.meshgrid(off * h, off * h, indexing="ij")
        xe, ye = X[edge][:, None], Y[edge][:, None]
        inside = domain.contains(xe + ox.ravel()[None, :], ye + oy.ravel()[None, :])
        cov[edge] = inside.mean(axis=1)
    return cov


def make_grid(domain: Domain, spacing: float, collar_width: Optional[float] = None,
              supersample: int = 8) -> ChartGrid:
    """Uniform grid with spacing ``spacing`` covering the domain and collar."""
    if not spacing > 0:
        raise DomainError("spacing must be positive")
    if collar_width is None:
        collar_width = 0.125 * domain.outer
        if domain.is_annulus:
            collar_width = min(collar_width, 0.5 * domain.inner)
    half = domain.outer + collar_width + 2 * spacing
    n = int(np.ceil(2 * half / spacing))
    x = (np.arange(n) - 0.5 * (n - 1)) * spacing
    y = x.copy()
    cov = _coverage(domain, x, y, spacing, supersample)
    X, Y = np.meshgrid(x, y, indexing="ij")
    d = domain.signed_distance(X, Y)
    collar = 1.0 - smooth_step(d / collar_width) if collar_width > 0 else (d < 0).astype(float)
    a2 = domain.metric(X, Y)
    return ChartGrid(domain, float(spacing), x, y, cov, collar, float(collar_width), a2)


# ----------------------------------------------------------------------------
# triangle meshes (quadratic, isoparametric boundary)
# ----------------------------------------------------------------------------

@dataclass
class TriMesh:
    """Six-node triangle mesh.

    Attributes
    ----------
    nodes : (n, 2) float
        Vertices followed by edge midpoints; boundary midpoints lie on the
        boundary circle.
    tris : (m, 6) int
        ``v0, v1, v2, m01, m12, m20`` (counter-clockwise vertices).
    bedges : (k, 3) int
        Boundary edges ``a, b, mid`` oriented along the boundary orientation.
    bcomp : (k,) int
        Boundary circle index of each boundary edge.
    n_vertices : int
        Number of corner nodes (the first ``n_vertices`` rows of ``nodes``).
    """

    domain: Domain
    nodes: np.ndarray
    tris: np.ndarray
    bedges: np.ndarray
    bcomp: np.ndarray
    n_vertices: int
    size: float

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def boundary_nodes(self) -> np.ndarray:
        return np.unique(self.bedges.ravel())

    def boundary_nodes_of(self, comp: int) -> np.ndarray:
        return np.unique(self.bedges[self.bcomp == comp].ravel())


def _ring_points(r0: float, r1: float, h: float, include_center: bool) -> np.ndarray:
    k = max(2, int(np.ceil((r1 - r0) / h)))
    radii = np.linspace(r0, r1, k + 1)
    pts = [np.zeros((1, 2))] if include_center else []
    for i, r in enumerate(radii):
        if r <= 0:
            continue
        m = max(6, int(np.round(2 * np.pi * r / h)))
        t = 2 * np.pi * (np.arange(m) + 0.5 * (i % 2)) / m
        pts.append(np.column_stack([r * np.cos(t), r * np.sin(t)]))
    return np.vstack(pts)


def build_mesh(domain: Domain, size: float) -> TriMesh:
    """Quadratic triangle mesh of the domain with target edge length ``size``."""
    if not size > 0:
        raise DomainError("mesh size must be positive")
    if domain.is_annulus:
        pts = _ring_points(domain.inner, domain.outer, size, False)
    else:
        pts = _ring_points(0.0, domain.outer, size, True)
    tri = Delaunay(pts).simplices
    c = pts[tri].mean(axis=1)
    rc = np.hypot(c[:, 0], c[:, 1])
    if domain.is_annulus:
        tri = tri[rc > domain.inner]
    # counter-clockwise orientation
    p = pts[tri]
    det = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - \
          (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])
    tri[det < 0] = tri[det < 0][:, [0, 2, 1]]

    nv = pts.shape[0]
    e = np.vstack([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
    es = np.sort(e, axis=1)
    uniq, inv, counts = np.unique(es, axis=0, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    mid = 0.5 * (pts[uniq[:, 0]] + pts[uniq[:, 1]])
    # boundary edges: used by exactly one triangle
    bmask = counts == 1
    bcomp = np.full(uniq.shape[0], -1, dtype=int)
    rm = np.hypot(mid[:, 0], mid[:, 1])
    for circ in domain.boundary:
        ends_on = (np.abs(np.hypot(*pts[uniq[:, 0]].T) - circ.radius) < 1e-9) & \
                  (np.abs(np.hypot(*pts[uniq[:, 1]].T) - circ.radius) < 1e-9)
        sel = bmask & ends_on
        bcomp[sel] = circ.index
        mid[sel] *= (circ.radius / rm[sel])[:, None]
    if np.any(bmask & (bcomp < 0)):
        raise DomainError("mesh boundary edge not on a boundary circle")
    nodes = np.vstack([pts, mid])
    m = tri.shape[0]
    mids = (inv + nv).reshape(3, m).T
    tris = np.column_stack([tri, mids])

    # boundary edges oriented with the interior on the left
    b_ids = np.nonzero(bmask)[0]
    start = np.empty(uniq.shape[0], dtype=int)
    end = np.empty(uniq.shape[0], dtype=int)
    edge_of = inv.reshape(3, m)
    for k in range(3):
        eid = edge_of[k]
        sel = bmask[eid]
        start[eid[sel]] = tri[sel, k]
        end[eid[sel]] = tri[sel, (k + 1) % 3]
    bed = np.column_stack([start[b_ids], end[b_ids], b_ids + nv])
    return TriMesh(domain, nodes, tris, bed, bcomp[b_ids], nv, float(size))


# ----------------------------------------------------------------------------
# loops and path integrals
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class Loop:
    """Polyline curve; closed loops repeat the first point at the end.

    ``closed=False`` describes a relative cycle (an arc with end points on
    the boundary).
    """

    points: np.ndarray  # complex, shape (n,)
    closed: bool = True
    tag: str = ""

    def __post_init__(self):
        p = np.asarray(self.points, dtype=complex)
        if p.ndim != 1 or p.size < 2:
            raise DomainError("a loop needs at least two points")
        if self.closed and abs(p[0] - p[-1]) > 1e-12 * max(1.0, abs(p[0])):
            raise DomainError("closed loop must end at its first point")

    def winding_number(self, center: complex = 0.0) -> int:
        d = np.diff(np.unwrap(np.angle(np.asarray(self.points) - center)))
        return int(np.round(d.sum() / (2 * np.pi)))

    def reversed(self) -> "Loop":
        return Loop(np.asarray(self.points)[::-1].copy(), self.closed, self.tag)


def circle_loop(radius: float, n: int = 512, winding: int = 1, center: complex = 0.0) -> Loop:
    """Circle traversed ``winding`` times (negative for clockwise)."""
    m = max(8, n * max(1, abs(winding)))
    t = 2 * np.pi * winding * np.arange(m + 1) / m
    pts = center + radius * np.exp(1j * t)
    pts[-1] = pts[0]
    return Loop(pts, True, f"circle(w={winding})")


def radial_arc(r0: float, r1: float, angle: float = 0.0, n: int = 64) -> Loop:
    """Straight radial segment from radius ``r0`` to ``r1`` at a fixed angle."""
    r = np.linspace(r0, r1, n + 1)
    return Loop(r * np.exp(1j * angle), False, "radial")


_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


def loop_integral(X: SmoothForm, loop: Loop, domain: Optional[Domain] = None) -> complex:
    """Line integral of a 1-form along a polyline.

    Each straight segment is integrated with 8-point Gauss-Legendre
    quadrature (exact for polynomial pull-backs of degree <= 15).

    Raises
    ------
    DomainError
        ``domain`` is given and the loop leaves its closure.
    """
    p = np.asarray(loop.points, dtype=complex)
    if domain is not None and np.any(domain.signed_distance(p.real, p.imag) > 1e-12):
        raise DomainError("loop exits the domain")
    a, b = p[:-1], p[1:]
    t = 0.5 * (_GL_X + 1.0)
    pts = a[:, None] + (b - a)[:, None] * t[None, :]
    fx, fy = X(pts.real, pts.imag)
    d = (b - a)[:, None]
    vals = fx * d.real + fy * d.imag
    out = np.sum(vals * (0.5 * _GL_W)[None, :])
    return complex(out) if np.iscomplexobj(out) else float(out)


# ----------------------------------------------------------------------------
# relative cohomology
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class CohomologyGenerator:
    """A closed form vanishing near the boundary and its dual relative cycle."""

    form: SmoothForm
    cycle: Loop
    potential: ArrayFn  # single-valued primitive of ``form``


def cohomology_dual_basis(domain: Domain, margin: float = 0.1) -> List[CohomologyGenerator]:
    """Closed 1-forms ``omega_k`` dual to generators of relative homology.

    For the disk the list is empty.  For the annulus the single generator is
    the radial arc from the inner to the outer circle and
    ``omega = d chi(r)``, where ``chi`` rises smoothly from 0 to 1 and is flat
    within ``margin * (outer - inner)`` of both circles, so ``omega``
    vanishes near the boundary and integrates to 1 along the arc.
    """
    if not domain.is_annulus:
        return []
    r0, r1 = domain.inner, domain.outer
    w = r1 - r0
    a, b = r0 + margin * w, r1 - margin * w

    def chi(x, y):
        return smooth_step((np.hypot(x, y) - a) / (b - a))

    def dchi_dr(r):
        return smooth_step_derivative((r - a) / (b - a)) / (b - a)

    def ax(x, y):
        r = np.hypot(x, y)
        return dchi_dr(r) * x / r

    def ay(x, y):
        r = np.hypot(x, y)
        return dchi_dr(r) * y / r

    form = SmoothForm(ax, ay, lambda x, y: np.zeros(np.broadcast(x, y).shape), "omega1")
    return [CohomologyGenerator(form, radial_arc(r0, r1, 0.0, 256), chi)]
