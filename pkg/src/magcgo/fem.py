"""Quadratic (P2) finite elements on isoparametric triangle meshes.

The space precomputes, per element and quadrature point, the physical
coordinates, Jacobian weights, shape values and physical gradients, so that
forms are assembled by dense per-element contractions followed by a single
sparse scatter.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from .geometry import TriMesh

ArrayFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


def triangle_rule(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Collapsed Gauss rule on the reference triangle ``{xi, eta >= 0, xi + eta <= 1}``.

    ``n * n`` points, exact for polynomials of degree ``2n - 1``; the
    weights sum to 1/2.
    """
    g, w = np.polynomial.legendre.leggauss(n)
    g = 0.5 * (g + 1.0)
    w = 0.5 * w
    u, v = np.meshgrid(g, g, indexing="ij")
    wu, wv = np.meshgrid(w, w, indexing="ij")
    xi = u.ravel()
    eta = (v * (1.0 - u)).ravel()
    ww = (wu * wv * (1.0 - u)).ravel()
    return np.column_stack([xi, eta]), ww


def p2_shape(xi: np.ndarray, eta: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Shape values ``(..., 6)`` and reference gradients ``(..., 6, 2)``.

    Node order ``v0, v1, v2, m01, m12, m20``.
    """
    l0 = 1.0 - xi - eta
    l1, l2 = xi, eta
    N = np.stack([l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
                  4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0], axis=-1)
    # d/dxi, d/deta with dl0 = (-1, -1), dl1 = (1, 0), dl2 = (0, 1)
    dxi = np.stack([-(4 * l0 - 1), 4 * l1 - 1, 0 * l2,
                    4 * (l0 - l1), 4 * l2, -4 * l2], axis=-1)
    deta = np.stack([-(4 * l0 - 1), 0 * l1, 4 * l2 - 1,
                     -4 * l1, 4 * l1, 4 * (l0 - l2)], axis=-1)
    return N, np.stack([dxi, deta], axis=-1)


# reference coordinates of the six nodes and of the three sides
_REF_NODES = np.array([[0, 0], [1, 0], [0, 1], [0.5, 0], [0.5, 0.5], [0, 0.5]], float)
_SIDES = ((0, 1, 3), (1, 2, 4), (2, 0, 5))


@dataclass
class BoundaryQuadrature:
    """Gauss points on the (curved) boundary edges.

    Attributes
    ----------
    z : (k, g) complex
        Physical points.
    dz : (k, g) complex
        ``dz/dt * weight``: integrate ``f dz`` as ``sum(f * dz)``.
    ds : (k, g) float
        Arc length weights ``|dz|``.
    theta : (k, g) float
        Polar angle of each point.
    elem : (k,) int
        Owning element of each edge.
    N : (k, g, 6), grad : (k, g, 6, 2)
        Shape values and physical gradients of the owning element.
    comp : (k,) int
        Boundary circle index.
    """

    z: np.ndarray
    dz: np.ndarray
    ds: np.ndarray
    theta: np.ndarray
    elem: np.ndarray
    N: np.ndarray
    grad: np.ndarray
    comp: np.ndarray


class P2Space:
    """Quadratic Lagrange space on a :class:`TriMesh`."""

    def __init__(self, mesh: TriMesh, order: int = 4):
        self.mesh = mesh
        self.tris = mesh.tris
        self.n = mesh.n_nodes
        ref, w = triangle_rule(order)
        self.ref_points = ref
        self.ref_weights = w
        N, dN = p2_shape(ref[:, 0], ref[:, 1])
        self.N = N                                      # (nq, 6)
        xe = mesh.nodes[self.tris]                      # (m, 6, 2)
        self.xq = np.einsum("qa,mak->mqk", N, xe)       # (m, nq, 2)
        J = np.einsum("qad,mak->mqkd", dN, xe)          # (m, nq, 2, 2) dx_k/dxi_d
        det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
        if np.any(det <= 0):
            raise ValueError("inverted element in mesh")
        inv = np.empty_like(J)
        inv[..., 0, 0] = J[..., 1, 1] / det
        inv[..., 1, 1] = J[..., 0, 0] / det
        inv[..., 0, 1] = -J[..., 0, 1] / det
        inv[..., 1, 0] = -J[..., 1, 0] / det
        # physical gradient: dN/dx_k = dN/dxi_d * dxi_d/dx_k
        self.grad = np.einsum("qad,mqdk->mqak", dN, inv)  # (m, nq, 6, 2)
        self.jw = det * w[None, :]                      # (m, nq)

    # ------------------------------------------------------------------ basics
    @property
    def m(self) -> int:
        return self.tris.shape[0]

    @property
    def zq(self) -> np.ndarray:
        return self.xq[..., 0] + 1j * self.xq[..., 1]

    def sample_quad(self, f: ArrayFn) -> np.ndarray:
        return np.asarray(f(self.xq[..., 0], self.xq[..., 1]))

    def interpolate(self, f: ArrayFn) -> np.ndarray:
        x = self.mesh.nodes
        return np.asarray(f(x[:, 0], x[:, 1]))

    def values(self, U: np.ndarray) -> np.ndarray:
        """Quadrature-point values of a nodal vector (or a stack ``(n, k)``)."""
        Ue = U[self.tris]
        if U.ndim == 1:
            return np.einsum("qa,ma->mq", self.N, Ue)
        return np.einsum("qa,mak->mqk", self.N, Ue)

    def gradients(self, U: np.ndarray) -> np.ndarray:
        return np.einsum("mqak,ma->mqk", self.grad, U[self.tris])

    def integrate(self, vals: np.ndarray) -> complex:
        return np.sum(vals * self.jw)

    def scatter_matrix(self, local: np.ndarray) -> sp.csr_matrix:
        """Assemble ``(m, 6, 6)`` element matrices (row = test node)."""
        rows = np.repeat(self.tris, 6, axis=1).ravel()
        cols = np.tile(self.tris, (1, 6)).ravel()
        return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(self.n, self.n))

    def scatter_vector(self, local: np.ndarray) -> np.ndarray:
        out = np.zeros(self.n, dtype=np.result_type(local.dtype, float))
        np.add.at(out, self.tris.ravel(), local.ravel())
        return out

    # ------------------------------------------------------- standard matrices
    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        loc = np.einsum("mqak,mqbk,mq->mab", self.grad, self.grad, self.jw)
        return self.scatter_matrix(loc)

    def mass(self, weight: Optional[np.ndarray] = None) -> sp.csr_matrix:
        w = self.jw if weight is None else self.jw * weight
        loc = np.einsum("qa,qb,mq->mab", self.N, self.N, w)
        return self.scatter_matrix(loc)

    def quad_operator(self, kind: str = "value") -> sp.csr_matrix:
        """Sparse map nodal vector -> quadrature values, flattened ``(m*nq,)``.

        ``kind`` is ``value``, ``dx``, ``dy``, ``dz`` or ``dzbar``.
        """
        m, nq = self.m, self.N.shape[0]
        if kind == "value":
            data = np.broadcast_to(self.N, (m, nq, 6))
        else:
            gx, gy = self.grad[..., 0], self.grad[..., 1]
            data = {"dx": gx, "dy": gy, "dz": 0.5 * (gx - 1j * gy),
                    "dzbar": 0.5 * (gx + 1j * gy)}[kind]
        rows = np.repeat(np.arange(m * nq), 6)
        cols = np.repeat(self.tris, nq, axis=0).ravel()
        return sp.csr_matrix((np.asarray(data).ravel(), (rows, cols)), shape=(m * nq, self.n))

    # ---------------------------------------------------------------- boundary
    @cached_property
    def boundary_quadrature(self) -> BoundaryQuadrature:
        return self.make_boundary_quadrature(6)

    def make_boundary_quadrature(self, g: int) -> BoundaryQuadrature:
        mesh = self.mesh
        # map sorted vertex pair -> (element, side)
        tri = self.tris
        pairs = []
        for s, (a, b, _) in enumerate(_SIDES):
            pairs.append(np.column_stack([np.minimum(tri[:, a], tri[:, b]),
                                          np.maximum(tri[:, a], tri[:, b]),
                                          np.arange(self.m), np.full(self.m, s)]))
        pairs = np.vstack(pairs)
        be = mesh.bedges
        bkey = np.column_stack([np.minimum(be[:, 0], be[:, 1]), np.maximum(be[:, 0], be[:, 1])])
        n = self.n
        code_all = pairs[:, 0].astype(np.int64) * n + pairs[:, 1]
        code_b = bkey[:, 0].astype(np.int64) * n + bkey[:, 1]
        order = np.argsort(code_all)
        pos = np.searchsorted(code_all[order], code_b)
        hit = order[pos]
        elem = pairs[hit, 2]
        side = pairs[hit, 3]

        gx, gw = np.polynomial.legendre.leggauss(g)
        t = 0.5 * (gx + 1.0)
        gw = 0.5 * gw
        k = be.shape[0]
        # the side runs from local node a to local node b; orient along bedges
        sa = np.array([s[0] for s in _SIDES])[side]
        sb = np.array([s[1] for s in _SIDES])[side]
        start_is_a = tri[elem, sa] == be[:, 0]
        ra = _REF_NODES[sa]
        rb = _REF_NODES[sb]
        r0 = np.where(start_is_a[:, None], ra, rb)
        r1 = np.where(start_is_a[:, None], rb, ra)
        ref = r0[:, None, :] + (r1 - r0)[:, None, :] * t[None, :, None]  # (k, g, 2)
        N, dN = p2_shape(ref[..., 0], ref[..., 1])                          # (k,g,6), (k,g,6,2)
        xe = mesh.nodes[tri[elem]]                                          # (k, 6, 2)
        x = np.einsum("kga,kac->kgc", N, xe)
        J = np.einsum("kgad,kac->kgcd", dN, xe)
        det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
        inv = np.empty_like(J)
        inv[..., 0, 0] = J[..., 1, 1] / det
        inv[..., 1, 1] = J[..., 0, 0] / det
        inv[..., 0, 1] = -J[..., 0, 1] / det
        inv[..., 1, 0] = -J[..., 1, 0] / det
        grad = np.einsum("kgad,kgdc->kgac", dN, inv)
        tang = np.einsum("kgcd,kd->kgc", J, (r1 - r0))  # dx/dt
        dzdt = tang[..., 0] + 1j * tang[..., 1]
        z = x[..., 0] + 1j * x[..., 1]
        return BoundaryQuadrature(z=z, dz=dzdt * gw[None, :], ds=np.abs(dzdt) * gw[None, :],
                                  theta=np.angle(z), elem=elem, N=N, grad=grad,
                                  comp=mesh.bcomp.copy())

    def boundary_values(self, U: np.ndarray, bq: Optional[BoundaryQuadrature] = None) -> np.ndarray:
        bq = bq or self.boundary_quadrature
        return np.einsum("kga,ka->kg", bq.N, U[self.tris[bq.elem]])

    def boundary_gradients(self, U: np.ndarray, bq: Optional[BoundaryQuadrature] = None) -> np.ndarray:
        bq = bq or self.boundary_quadrature
        return np.einsum("kgac,ka->kgc", bq.grad, U[self.tris[bq.elem]])
