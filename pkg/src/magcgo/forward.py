"""Forward solvers: the magnetic Schrodinger operator ``(d+iX)*(d+iX) + q``
and the first-order system ``D + V`` on scalars plus (0,1)-forms.

Magnetic operator
-----------------
The sesquilinear form ``a(u, v) = int (d+iX)u . conj((d+iX)v) + q u conj(v) dv``
is discretised with a gauge-covariant quadratic basis
``phi_a(x) = N_a(x) exp(-i theta_a(x))``, where ``theta_a(x)`` is the integral
of ``X`` along the segment from node ``a`` to ``x``.  Then
``(d+iX) phi_a = exp(-i theta_a) (dN_a + i N_a R_a)`` with
``R_a = X - d theta_a``, which only depends on the curvature ``dX``.  A gauge
change ``X -> X + d f`` multiplies every basis function by a unimodular
constant times ``exp(-i f)``, so the discrete Dirichlet-to-Neumann map is
invariant to roundoff whenever ``f`` vanishes on the boundary.

Nodal coefficients are point values: ``u(node_a) = U_a``.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import FormatError, NumericalError, SpectralError
from .fem import BoundaryQuadrature, P2Space
from .fields import SmoothForm, zero_form
from .geometry import Domain, TriMesh, build_mesh

ArrayFn = Callable[[np.ndarray, np.ndarray], np.ndarray]

_GL8_X, _GL8_W = np.polynomial.legendre.leggauss(8)
_GL8_T = 0.5 * (_GL8_X + 1.0)
_GL8_W = 0.5 * _GL8_W


def _as_fn(q) -> ArrayFn:
    if q is None:
        return lambda x, y: np.zeros(np.broadcast(x, y).shape)
    if callable(q):
        return q
    c = complex(q)
    return lambda x, y: np.full(np.broadcast(x, y).shape, c)


def segment_gauge(X: SmoothForm, start: np.ndarray, end: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Straight-line gauge data from ``start`` to ``end`` (arrays ``(..., 2)``).

    Returns
    -------
    theta : (...) array
        ``int_start^end X`` along the segment.
    R : (..., 2) array
        ``X(end) - d theta(end)`` computed from the curl ``B`` of ``X`` as
        ``(-int t dy B, int t dx B)`` along the segment.
    """
    d = end - start
    p = start[..., None, :] + d[..., None, :] * _GL8_T[:, None]
    ax, ay = X(p[..., 0], p[..., 1])
    theta = np.einsum("...g,g->...", ax * d[..., 0, None] + ay * d[..., 1, None], _GL8_W)
    B = X.curl(p[..., 0], p[..., 1])
    tB = np.einsum("...g,g->...", B, _GL8_W * _GL8_T)
    R = np.stack([-d[..., 1] * tB, d[..., 0] * tB], axis=-1)
    return theta, R


def _covariant_data(space: P2Space, X: SmoothForm, points: np.ndarray, elem: np.ndarray,
                    chunk: int = 1500) -> Tuple[np.ndarray, np.ndarray]:
    """Phases ``exp(-i theta_a)`` and ``R_a`` at ``points[e, g]`` for the six
    nodes of element ``elem[e]``."""
    k, g = points.shape[:2]
    E = np.empty((k, g, 6), dtype=complex)
    R = np.empty((k, g, 6, 2))
    nodes = space.mesh.nodes
    for s in range(0, k, chunk):
        sl = slice(s, min(k, s + chunk))
        start = nodes[space.tris[elem[sl]]][:, None, :, :]          # (c, 1, 6, 2)
        end = points[sl][:, :, None, :]                              # (c, g, 1, 2)
        start, end = np.broadcast_arrays(start, end)
        th, r = segment_gauge(X, start, end)
        E[sl] = np.exp(-1j * th)
        R[sl] = r
    return E, R


@dataclass
class MagneticOperator:
    """``L = (d+iX)*(d+iX) + q`` on a domain, discretised on a P2 mesh.

    Parameters
    ----------
    X : SmoothForm
        Real connection 1-form.
    q : callable or complex
        Potential.
    domain : Domain
    mesh_size : float
        Target edge length.
    quad_order : int
        Collapsed-Gauss order per direction (exact to degree ``2n-1``).
    """

    X: SmoothForm
    q: Union[ArrayFn, complex, None]
    domain: Domain
    mesh_size: float = 0.02
    quad_order: int = 4
    mesh: Optional[TriMesh] = None

    def __post_init__(self):
        self.qfn = _as_fn(self.q)
        if self.mesh is None:
            self.mesh = build_mesh(self.domain, self.mesh_size)

    @cached_property
    def space(self) -> P2Space:
        return P2Space(self.mesh, self.quad_order)

    @cached_property
    def _gauge(self):
        S = self.space
        elem = np.arange(S.m)
        return _covariant_data(S, self.X, S.xq, elem)

    def with_(self, X: Optional[SmoothForm] = None, q=None) -> "MagneticOperator":
        """Same mesh, different coefficients."""
        return MagneticOperator(self.X if X is None else X, self.q if q is None else q,
                                self.domain, self.mesh_size, self.quad_order, self.mesh)

    def covariant_basis(self):
        """``(E, G)`` at quadrature points: values ``E_a N_a`` of the basis
        and ``(d+iX)phi_a = E_a (dN_a + i N_a R_a)``."""
        S = self.space
        E, R = self._gauge
        G = E[..., None] * (S.grad + 1j * S.N[None, :, :, None] * R)
        return E * S.N[None], G

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        """Global matrix ``A[a, b] = a(phi_b, phi_a)``."""
        S = self.space
        Phi, G = self.covariant_basis()
        w = S.jw
        q = S.sample_quad(self.qfn) * S.sample_quad(self.domain.metric)
        loc = np.einsum("mqbk,mqak,mq->mab", G, np.conj(G), w)
        loc += np.einsum("mqb,mqa,mq->mab", Phi, np.conj(Phi), w * q)
        return S.scatter_matrix(loc)

    @cached_property
    def mass_matrix(self) -> sp.csr_matrix:
        S = self.space
        Phi, _ = self.covariant_basis()
        w = S.jw * S.sample_quad(self.domain.metric)
        return S.scatter_matrix(np.einsum("mqb,mqa,mq->mab", Phi, np.conj(Phi), w))

    @property
    def is_hermitian_form(self) -> bool:
        x = self.mesh.nodes
        qv = self.qfn(x[:, 0], x[:, 1])
        return bool(np.all(np.abs(np.imag(qv)) == 0))

    # ------------------------------------------------------------- partition
    @cached_property
    def boundary_nodes(self) -> np.ndarray:
        return self.mesh.boundary_nodes

    @cached_property
    def interior_nodes(self) -> np.ndarray:
        mask = np.ones(self.mesh.n_nodes, bool)
        mask[self.boundary_nodes] = False
        return np.nonzero(mask)[0]

    @cached_property
    def _factor(self):
        I = self.interior_nodes
        A = self.matrix[I][:, I].tocsc()
        lu = spla.splu(A)
        self._check_spectrum(lu, A)
        return lu

    def _check_spectrum(self, lu, A, rel: float = 1e-5) -> None:
        """Inverse iteration on ``M^{-1} A``: smallest eigenvalue magnitude.

        Zero counts as an eigenvalue when the estimate falls below
        ``rel * (1 + max|q|)``, the scale of the discretization shift.
        """
        I = self.interior_nodes
        M = self.mass_matrix[I][:, I]
        rng = np.random.default_rng(0)
        x = rng.standard_normal(len(I)) + 0j
        lam = np.inf
        for _ in range(6):
            y = lu.solve(M @ x)
            nrm = np.sqrt(abs(np.vdot(y, M @ y)))
            lam = np.sqrt(abs(np.vdot(x, M @ x))) / nrm
            x = y / nrm
        qmax = float(np.max(np.abs(self.space.sample_quad(self.qfn))))
        if not np.isfinite(lam) or lam < rel * (1.0 + qmax):
            raise SpectralError("Dirichlet spectrum hit; perturb q "
                                f"(smallest |eigenvalue| estimate {lam:.3e})")
        self.smallest_eigenvalue = lam


@dataclass
class FemSolution:
    """Solution of a Dirichlet problem: nodal values and diagnostics."""

    op: MagneticOperator
    U: np.ndarray
    residual: float

    def nodal_values(self) -> np.ndarray:
        return self.U

    def neumann_functional(self) -> np.ndarray:
        """Row vector ``a(u, phi_a)`` for boundary nodes ``a`` (zero elsewhere
        up to the residual): the weak magnetic Neumann trace."""
        return self.op.matrix @ self.U


def _boundary_data(op: MagneticOperator, f) -> np.ndarray:
    x = op.mesh.nodes[op.boundary_nodes]
    if callable(f):
        return np.asarray(f(x[:, 0], x[:, 1]), dtype=complex)
    f = np.asarray(f, dtype=complex)
    if f.shape[0] != len(op.boundary_nodes):
        raise ValueError("boundary data must match the boundary nodes")
    return f


def solve_dirichlet(op: MagneticOperator, f, tol: float = 1e-10) -> Union[FemSolution, list]:
    """Solve ``L u = 0`` with ``u = f`` on the boundary.

    ``f`` is a callable ``f(x, y)`` or an array of values at
    ``op.boundary_nodes`` (a 2-D array solves several problems at once and
    returns a list).

    Raises
    ------
    SpectralError
        Zero is (numerically) a Dirichlet eigenvalue.
    NumericalError
        Weak-form residual above ``tol``.
    """
    fb = _boundary_data(op, f)
    multi = fb.ndim == 2
    Fb = fb if multi else fb[:, None]
    I, B = op.interior_nodes, op.boundary_nodes
    A = op.matrix
    rhs = -(A[I][:, B] @ Fb)
    lu = op._factor
    UI = lu.solve(np.ascontiguousarray(rhs))
    res = np.linalg.norm(A[I][:, I] @ UI - rhs, axis=0) / np.maximum(np.linalg.norm(rhs, axis=0), 1e-300)
    if np.any(res > tol):
        raise NumericalError(f"Dirichlet solve residual {res.max():.2e} exceeds {tol:.0e}")
    U = np.zeros((op.mesh.n_nodes, Fb.shape[1]), dtype=complex)
    U[I] = UI
    U[B] = Fb
    sols = [FemSolution(op, U[:, k], float(res[k])) for k in range(Fb.shape[1])]
    return sols if multi else sols[0]


# ----------------------------------------------------------------------------
# Cauchy data
# ----------------------------------------------------------------------------

_MAGIC = b"MCGOCDM1"
_KINDS = {"dtn": 0, "dirac": 1}


@dataclass
class CauchyDataMap:
    """Discrete Cauchy data in a boundary Fourier basis.

    ``kind == "dtn"``: ``matrix`` maps Dirichlet mode coefficients to
    magnetic Neumann mode coefficients.  Rows and columns are ordered by
    boundary circle, then mode ``-N..N``.

    ``kind == "dirac"``: ``matrix`` has orthonormal columns spanning the
    traces ``(u, w)`` of solutions (``w`` is the ``dzbar`` coefficient).  Rows
    are ordered by component (u then w), boundary circle, mode.
    """

    kind: str
    N: int
    radii: Tuple[float, ...]
    matrix: np.ndarray
    metadata: Dict = field(default_factory=dict)

    @property
    def ncomp(self) -> int:
        return len(self.radii)

    @property
    def modes(self) -> np.ndarray:
        return np.arange(-self.N, self.N + 1)

    def hermitian_defect(self) -> float:
        M = self.matrix
        return float(np.linalg.norm(M - M.conj().T) / max(np.linalg.norm(M), 1e-300))

    def distance(self, other: "CauchyDataMap") -> float:
        """Matrix 2-norm distance (DtN) or largest principal angle (Dirac)."""
        if (self.kind, self.N, self.radii) != (other.kind, other.N, other.radii):
            raise FormatError("Cauchy data maps use different bases")
        if self.kind == "dtn":
            return float(np.linalg.norm(self.matrix - other.matrix, 2))
        if self.matrix.shape[1] != other.matrix.shape[1]:
            return float(np.pi / 2)
        return float(np.max(sla.subspace_angles(self.matrix, other.matrix)))

    # ------------------------------------------------------------- serialise
    def to_bytes(self) -> bytes:
        meta = json.dumps(self.metadata, sort_keys=True).encode()
        r = list(self.radii) + [0.0] * (2 - len(self.radii))
        M = np.ascontiguousarray(self.matrix, dtype="<c16")
        head = struct.pack("<8sIIIIIddI", _MAGIC, 1, _KINDS[self.kind], self.N,
                           self.ncomp, M.shape[0], r[0], r[1], len(meta))
        head += struct.pack("<I", M.shape[1])
        return head + meta + M.tobytes()

    @classmethod
    def from_bytes(cls, buf: bytes) -> "CauchyDataMap":
        hs = struct.calcsize("<8sIIIIIddI")
        if len(buf) < hs + 4:
            raise FormatError(f"truncated header at offset {len(buf)} (need {hs + 4} bytes)")
        magic, ver, kind, N, nc, rows, r0, r1, mlen = struct.unpack_from("<8sIIIIIddI", buf, 0)
        if magic != _MAGIC:
            raise FormatError("bad magic at offset 0")
        if ver != 1:
            raise FormatError(f"unsupported version {ver} at offset 8")
        kinds = {v: k for k, v in _KINDS.items()}
        if kind not in kinds:
            raise FormatError(f"unknown kind {kind} at offset 12")
        if nc not in (1, 2):
            raise FormatError(f"bad component count {nc} at offset 20")
        (cols,) = struct.unpack_from("<I", buf, hs)
        off = hs + 4
        try:
            meta = json.loads(buf[off:off + mlen].decode()) if mlen else {}
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FormatError(f"bad metadata at offset {off}: {exc}") from None
        off += mlen
        need = rows * cols * 16
        if len(buf) - off != need:
            raise FormatError(f"payload size mismatch at offset {off}: "
                              f"expected {need} bytes, found {len(buf) - off}")
        M = np.frombuffer(buf, dtype="<c16", count=rows * cols, offset=off).reshape(rows, cols)
        radii = (r0,) if nc == 1 else (r0, r1)
        return cls(kinds[kind], int(N), radii, M.astype(complex), meta)

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "CauchyDataMap":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())

    def to_csv(self, path) -> None:
        """Rows ``i,j,re,im`` in row-major order."""
        M = self.matrix
        with open(path, "w") as fh:
            fh.write("row,col,re,im\n")
            for i in range(M.shape[0]):
                for j in range(M.shape[1]):
                    fh.write(f"{i},{j},{M[i, j].real:.12e},{M[i, j].imag:.12e}\n")


def _node_angles(op_mesh: TriMesh, nodes: np.ndarray) -> np.ndarray:
    x = op_mesh.nodes[nodes]
    return np.arctan2(x[:, 1], x[:, 0])


def cauchy_data_map(op: MagneticOperator, N: int = 32) -> CauchyDataMap:
    """Dirichlet-to-magnetic-Neumann map on Fourier modes ``|n| <= N``.

    The Neumann trace is extracted weakly: for a boundary test function
    ``g`` with finite element extension ``Eg``,
    ``<(d+iX)_nu u, g> = a(u, Eg)``; ``u`` solves the homogeneous equation
    so any extension gives the same value.
    """
    mesh = op.mesh
    comps = [c.index for c in op.domain.boundary]
    radii = tuple(c.radius for c in op.domain.boundary)
    B = op.boundary_nodes
    bc = np.full(mesh.n_nodes, -1)
    for c in comps:
        bc[mesh.boundary_nodes_of(c)] = c
    th = _node_angles(mesh, B)
    modes = np.arange(-N, N + 1)
    K = len(modes)
    F = np.zeros((len(B), len(comps) * K), dtype=complex)
    for ci, c in enumerate(comps):
        on = bc[B] == c
        F[on, ci * K:(ci + 1) * K] = np.exp(1j * np.outer(th[on], modes))
    sols = solve_dirichlet(op, F)
    Ucols = np.column_stack([s.U for s in sols])
    flux = (op.matrix @ Ucols)[B]                  # a(u, phi_b)
    M = np.zeros((len(comps) * K, len(comps) * K), dtype=complex)
    for ci, c in enumerate(comps):
        on = bc[B] == c
        E = np.exp(1j * np.outer(th[on], modes))
        M[ci * K:(ci + 1) * K] = (E.conj().T @ flux[on]) / (2 * np.pi * radii[ci])
    meta = {"mesh_size": op.mesh_size, "n_nodes": int(mesh.n_nodes),
            "quad_order": op.quad_order, "X": op.X.name}
    return CauchyDataMap("dtn", N, radii, M, meta)


# ----------------------------------------------------------------------------
# first-order system
# ----------------------------------------------------------------------------

@dataclass
class DiracOperator:
    """``D + V`` with ``D(u, w) = (dbar* w, dbar u)`` and ``V = diag(v, v')``.

    ``w`` is the coefficient of ``dzbar``; ``dbar* w = -(2/alpha^2) d_z w``.
    """

    v: Union[ArrayFn, complex, None]
    vp: Union[ArrayFn, complex, None]
    domain: Domain
    mesh_size: float = 0.03
    quad_order: int = 4
    mesh: Optional[TriMesh] = None

    def __post_init__(self):
        self.vfn = _as_fn(self.v)
        self.vpfn = _as_fn(self.vp)
        if self.mesh is None:
            self.mesh = build_mesh(self.domain, self.mesh_size)

    @cached_property
    def space(self) -> P2Space:
        return P2Space(self.mesh, self.quad_order)

    def adjoint(self) -> "DiracOperator":
        """``D + V*`` with ``V* = diag(conj v, conj v')``."""
        v, vp = self.vfn, self.vpfn
        return DiracOperator(lambda x, y: np.conj(v(x, y)), lambda x, y: np.conj(vp(x, y)),
                             self.domain, self.mesh_size, self.quad_order, self.mesh)

    @cached_property
    def _quad_ops(self):
        S = self.space
        a2 = S.sample_quad(self.domain.metric).ravel()
        val = S.quad_operator("value")
        dz = S.quad_operator("dz")
        dzb = S.quad_operator("dzbar")
        v = S.sample_quad(self.vfn).ravel()
        vp = S.sample_quad(self.vpfn).ravel()
        return a2, val, dz, dzb, v, vp

    def operator_matrices(self, adjoint: bool = False) -> sp.csr_matrix:
        """Sparse map from nodal ``(u, w)`` to quadrature values of
        ``(D+V)(u, w)`` (or ``(D+V*)``), stacked ``[first; second]``."""
        a2, val, dz, dzb, v, vp = self._quad_ops
        if adjoint:
            v, vp = np.conj(v), np.conj(vp)
        first = sp.hstack([sp.diags(v) @ val, sp.diags(-2.0 / a2) @ dz])
        second = sp.hstack([dzb, sp.diags(vp) @ val])
        return sp.vstack([first, second]).tocsr()

    def weights(self) -> np.ndarray:
        a2 = self._quad_ops[0]
        jw = self.space.jw.ravel()
        return np.concatenate([a2 * jw, 2.0 * jw])

    @cached_property
    def interior_nodes(self) -> np.ndarray:
        mask = np.ones(self.mesh.n_nodes, bool)
        mask[self.mesh.boundary_nodes] = False
        return np.nonzero(mask)[0]

    @cached_property
    def _normal_factor(self):
        """LU of ``<(D+V)* W, (D+V)* Phi>`` on ``H^1_0 x H^1_0``."""
        n = self.mesh.n_nodes
        I = self.interior_nodes
        idx = np.concatenate([I, I + n])
        Gs = self.operator_matrices(adjoint=True)[:, idx]
        K = (Gs.conj().T @ sp.diags(self.weights()) @ Gs).tocsc()
        val = self._quad_ops[1]
        Vq = sp.block_diag([val, val]).tocsr()[:, idx]
        return spla.splu(K), Vq, idx

    def min_norm_correction(self, PA: np.ndarray) -> np.ndarray:
        """Solve ``<(D+V)*W, (D+V)*Phi> = <PA, Phi>`` for ``W`` in ``H^1_0``.

        ``PA`` is a stack ``(2*m*nq, k)`` of quadrature values of ``(D+V)A``.
        Returns ``W`` as full nodal vectors ``(2n, k)``; the corrected field is
        ``A - (D+V)* W``, the smallest ``L^2`` correction solving
        ``(D+V)(A + Z) = 0`` weakly.
        """
        lu, Vq, idx = self._normal_factor
        rhs = Vq.conj().T @ (self.weights()[:, None] * PA)
        Wi = lu.solve(np.ascontiguousarray(rhs))
        W = np.zeros((2 * self.mesh.n_nodes, PA.shape[1]), dtype=complex)
        W[idx] = Wi
        return W

    def adjoint_boundary_trace(self, W: np.ndarray, bq: BoundaryQuadrature) -> Tuple[np.ndarray, np.ndarray]:
        """Boundary values of ``(D+V)* W`` for ``W`` vanishing on the boundary."""
        S = self.space
        n = self.mesh.n_nodes
        out = []
        a2 = self.domain.metric(bq.z.real, bq.z.imag)
        for k in range(W.shape[1]):
            g1 = S.boundary_gradients(W[:n, k], bq)
            g2 = S.boundary_gradients(W[n:, k], bq)
            w1 = S.boundary_values(W[:n, k], bq)
            w2 = S.boundary_values(W[n:, k], bq)
            v = np.conj(self.vfn(bq.z.real, bq.z.imag))
            vp = np.conj(self.vpfn(bq.z.real, bq.z.imag))
            c1 = -2.0 / a2 * 0.5 * (g2[..., 0] - 1j * g2[..., 1]) + v * w1
            c2 = 0.5 * (g1[..., 0] + 1j * g1[..., 1]) + vp * w2
            out.append((c1, c2))
        return np.stack([o[0] for o in out], -1), np.stack([o[1] for o in out], -1)


def _fourier_rows(bq: BoundaryQuadrature, vals: np.ndarray, comps, N: int) -> np.ndarray:
    """Fourier coefficients ``(1/2pi) int f e^{-in theta} dtheta`` per circle."""
    modes = np.arange(-N, N + 1)
    rows = []
    for c in comps:
        sel = bq.comp == c
        th = bq.theta[sel].ravel()
        dth = (bq.ds[sel] / np.abs(bq.z[sel])).ravel()
        E = np.exp(-1j * np.outer(modes, th)) * dth[None, :] / (2 * np.pi)
        rows.append(E @ vals[sel].reshape(-1, vals.shape[-1]))
    return np.vstack(rows)


def _harmonic_extension(space: P2Space, boundary_nodes: np.ndarray, data: np.ndarray) -> np.ndarray:
    n = space.n
    mask = np.ones(n, bool)
    mask[boundary_nodes] = False
    I = np.nonzero(mask)[0]
    K = space.stiffness
    U = np.zeros((n, data.shape[1]), dtype=complex)
    U[boundary_nodes] = data
    rhs = -(K[I][:, boundary_nodes] @ data)
    U[I] = spla.splu(K[I][:, I].tocsc().astype(complex)).solve(np.ascontiguousarray(rhs))
    return U


def dirac_solutions_from_traces(op: DiracOperator, N: int):
    """Solutions of ``(D+V)U = 0`` obtained by least-squares correction of the
    harmonic extensions of all boundary Fourier modes of ``u`` and ``w``.

    Returns the boundary quadrature and the traces ``(u, w)`` at its points,
    shape ``(k, g, ncols)`` each.
    """
    S = op.space
    mesh = op.mesh
    comps = [c.index for c in op.domain.boundary]
    B = mesh.boundary_nodes
    x = mesh.nodes[B]
    th = np.arctan2(x[:, 1], x[:, 0])
    bc = np.full(mesh.n_nodes, -1)
    for c in comps:
        bc[mesh.boundary_nodes_of(c)] = c
    modes = np.arange(-N, N + 1)
    K = len(modes)
    F = np.zeros((len(B), len(comps) * K), dtype=complex)
    for ci, c in enumerate(comps):
        on = bc[B] == c
        F[on, ci * K:(ci + 1) * K] = np.exp(1j * np.outer(th[on], modes))
    H = _harmonic_extension(S, B, F)
    n = mesh.n_nodes
    zeros = np.zeros_like(H)
    A0 = np.hstack([np.vstack([H, zeros]), np.vstack([zeros, H])])   # (2n, 2*ncomp*K)
    P = op.operator_matrices()
    PA = P @ A0
    W = op.min_norm_correction(PA)
    bq = S.boundary_quadrature
    c1, c2 = op.adjoint_boundary_trace(W, bq)
    u0 = np.einsum("kga,kac->kgc", bq.N, A0[:n][S.tris[bq.elem]])
    w0 = np.einsum("kga,kac->kgc", bq.N, A0[n:][S.tris[bq.elem]])
    return bq, u0 - c1, w0 - c2


def dirac_cauchy_data(op: DiracOperator, N: int = 32, rank_tol: float = 1e-8) -> CauchyDataMap:
    """Orthonormal basis of the boundary traces of solutions of ``(D+V)U = 0``.

    Traces are projected onto modes ``|n| <= N`` per circle and component;
    the basis keeps the singular directions above ``rank_tol`` (relative).
    The expected dimension is ``ncomp*(2N+1)`` plus one on the disk.

    Raises
    ------
    NumericalError
        Numerical rank below the expected dimension.
    """
    comps = [c.index for c in op.domain.boundary]
    radii = tuple(c.radius for c in op.domain.boundary)
    bq, ut, wt = dirac_solutions_from_traces(op, N)
    T = np.vstack([_fourier_rows(bq, ut, comps, N), _fourier_rows(bq, wt, comps, N)])
    Ub, s, _ = np.linalg.svd(T, full_matrices=False)
    expected = len(comps) * (2 * N + 1) + (0 if op.domain.is_annulus else 1)
    rank = int(np.sum(s > rank_tol * s[0]))
    if rank < expected:
        raise NumericalError(f"Dirac trace space rank {rank} below expected {expected}")
    basis = Ub[:, :expected]
    meta = {"mesh_size": op.mesh_size, "singular_gap": float(s[expected] / s[0]) if len(s) > expected else 0.0}
    return CauchyDataMap("dirac", N, radii, basis, meta)
