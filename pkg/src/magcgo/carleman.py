"""Exponentially weighted magnetic operators ``L_phi = e^{-phi/h} L e^{phi/h}``.

* :func:`carleman_ratio` samples the ratio
  ``||L_phi u||^2 / (||u||^2/h + ||du||^2)`` over random compactly supported
  test functions on a uniform grid (finite differences of the strong form).
* :func:`weighted_solve` returns the solution of ``L_phi u = f`` with least
  semiclassical norm ``||u||^2 + h^2 ||(d+iX)u||^2``; no boundary condition
  is imposed on ``u`` (the equation is tested against ``H^1_0``).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DomainError, NumericalError
from .fields import SmoothForm, smooth_step
from .forms import dx as fd_x, dy as fd_y
from .forward import MagneticOperator
from .geometry import ChartGrid, make_grid

ArrayFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


def gradient_fn(phi: ArrayFn, eps: float = 1e-4):
    """Gradient of a scalar callable: ``phi.grad`` when present, otherwise
    fourth-order central differences."""
    g = getattr(phi, "grad", None)
    if g is not None:
        return g

    def grad(x, y):
        def d(ex, ey):
            return (-phi(x + 2 * ex, y + 2 * ey) + 8 * phi(x + ex, y + ey)
                    - 8 * phi(x - ex, y - ey) + phi(x - 2 * ex, y - 2 * ey)) / (12 * eps)
        return d(eps, 0.0), d(0.0, eps)
    return grad


def check_harmonic(phi: ArrayFn, grid: ChartGrid, tol: float = 1e-6) -> float:
    """Relative Laplacian residual of ``phi`` on the interior of ``grid``."""
    f = grid.sample(phi)
    lap = fd_x(fd_x(f, grid), grid) + fd_y(fd_y(f, grid), grid)
    hess = np.abs(fd_x(fd_x(f, grid), grid)) + np.abs(fd_y(fd_y(f, grid), grid))
    gx, gy = fd_x(f, grid), fd_y(f, grid)
    inner = grid.domain.signed_distance(grid.X, grid.Y) < -4 * grid.spacing
    scale = max(np.max(hess[inner]), np.max(np.hypot(gx, gy)[inner]), 1e-300)
    res = float(np.max(np.abs(lap[inner])) / scale)
    if res > tol:
        raise DomainError(f"weight is not harmonic (relative Laplacian residual {res:.2e})")
    return res


def apply_weighted(u: np.ndarray, grid: ChartGrid, X: SmoothForm, q: ArrayFn,
                   phi: ArrayFn, h: float) -> np.ndarray:
    """Strong form of ``e^{-phi/h} L e^{phi/h} u`` by finite differences.

    ``L u = -lap u - 2i X.grad u - i div(X) u + |X|^2 u + q u`` (Euclidean).
    """
    ax, ay = X(grid.X, grid.Y)
    ax = np.asarray(ax, float) * np.ones(grid.shape)
    ay = np.asarray(ay, float) * np.ones(grid.shape)
    gx, gy = gradient_fn(phi)(grid.X, grid.Y)
    ux, uy = fd_x(u, grid), fd_y(u, grid)
    lap = fd_x(ux, grid) + fd_y(uy, grid)
    div = fd_x(ax, grid) + fd_y(ay, grid)
    qv = np.asarray(q(grid.X, grid.Y)) * np.ones(grid.shape)
    return (-lap - (2 / h) * (gx * ux + gy * uy) - (gx ** 2 + gy ** 2) * u / h ** 2
            - 2j * (ax * (ux + u * gx / h) + ay * (uy + u * gy / h))
            - 1j * div * u + (ax ** 2 + ay ** 2) * u + qv * u)


def random_test_function(grid: ChartGrid, rng: np.random.Generator, h: float,
                         margin: float = 0.05, phi: Optional[ArrayFn] = None) -> np.ndarray:
    """Smooth function supported in a random disk inside the domain,
    modulated by a plane wave.

    With ``phi`` given, half of the draws use the characteristic wave of the
    conjugated operator at the bump centre (frequency ``|grad phi|/h``
    orthogonal to ``grad phi``), where the weighted operator is smallest;
    the other draws use a random frequency up to ``1/h``.
    """
    d = grid.domain
    for _ in range(1000):
        r = rng.uniform(0.1, 0.35) * d.outer
        ang = rng.uniform(0, 2 * np.pi)
        rho = rng.uniform(0, d.outer - r - margin)
        c = rho * np.exp(1j * ang)
        if d.is_annulus and abs(c) - r < d.inner + margin:
            continue
        if abs(c) + r <= d.outer - margin:
            break
    else:
        raise DomainError("domain too small for test functions")
    s = np.abs(grid.z - c) / r
    bump = 1.0 - smooth_step(2 * s - 1.0)
    bump[s >= 1] = 0.0
    if phi is not None and rng.uniform() < 0.5:
        gx, gy = gradient_fn(phi)(np.array(c.real), np.array(c.imag))
        k = float(np.hypot(gx, gy)) / h
        th = float(np.arctan2(gy, gx)) + np.pi / 2 * rng.choice([-1, 1])
    else:
        k = rng.uniform(0, 1) / h
        th = rng.uniform(0, 2 * np.pi)
    wave = np.exp(1j * k * (np.cos(th) * grid.X + np.sin(th) * grid.Y))
    amp = rng.standard_normal(2) @ np.array([1.0, 1j])
    return amp * bump * wave


def carleman_ratio(X: SmoothForm, q: ArrayFn, phi: ArrayFn, h: float, domain,
                   trials: int = 50, seed: int = 0, spacing: float = 2.0 ** -8,
                   grid: Optional[ChartGrid] = None) -> float:
    """Minimum over random test functions of
    ``||L_phi u||^2 / (||u||^2/h + ||du||^2)``.

    Raises
    ------
    DomainError
        ``phi`` is not harmonic.
    """
    grid = grid or make_grid(domain, spacing, collar_width=0.0)
    check_harmonic(phi, grid)
    rng = np.random.default_rng(seed)
    best = np.inf
    for _ in range(trials):
        u = random_test_function(grid, rng, h, phi=phi)
        Lu = apply_weighted(u, grid, X, q, phi, h)
        du2 = np.abs(fd_x(u, grid)) ** 2 + np.abs(fd_y(u, grid)) ** 2
        lhs = grid.integrate(np.abs(Lu) ** 2).real
        rhs = grid.integrate(np.abs(u) ** 2).real / h + grid.integrate(du2).real
        best = min(best, lhs / rhs)
    return float(best)


# ----------------------------------------------------------------------------
# weighted solver
# ----------------------------------------------------------------------------

@dataclass
class WeightedSolution:
    """Least-norm solution of ``L_phi u = f`` with diagnostics."""

    U: np.ndarray
    h: float
    residual: float
    l2: float
    dl2: float
    f_l2: float

    @property
    def l2_gain(self) -> float:
        return self.l2 / self.f_l2 if self.f_l2 > 0 else 0.0

    @property
    def h1_gain(self) -> float:
        return self.dl2 / self.f_l2 if self.f_l2 > 0 else 0.0


def weighted_matrices(op: MagneticOperator, phi: ArrayFn, h: float,
                      shift: Optional[SmoothForm] = None):
    """``B[a, b] = int ((d+iX)phi_b + phi_b dphi/h).conj((d+iX)phi_a - phi_a dphi/h)
    + q phi_b conj(phi_a)``, the covariant stiffness ``K`` and mass ``M``.

    ``shift`` adds a 1-form ``Y`` to the connection (``X -> X + Y``) while
    keeping the basis adapted to ``X``.
    """
    S = op.space
    Phi, G = op.covariant_basis()
    if shift is not None:
        yx, yy = shift(S.xq[..., 0], S.xq[..., 1])
        Y = np.stack(np.broadcast_arrays(yx, yy), axis=-1)        # (m, nq, 2)
        G = G + 1j * Phi[..., None] * Y[:, :, None, :]
    gx, gy = gradient_fn(phi)(S.xq[..., 0], S.xq[..., 1])
    gp = np.stack([gx, gy], axis=-1) / h                      # (m, nq, 2)
    w = S.jw
    a2 = S.sample_quad(op.domain.metric)
    q = S.sample_quad(op.qfn) * a2
    Gp = G + Phi[..., None] * gp[:, :, None, :]
    Gm = G - Phi[..., None] * gp[:, :, None, :]
    loc = np.einsum("mqbk,mqak,mq->mab", Gp, np.conj(Gm), w)
    loc += np.einsum("mqb,mqa,mq->mab", Phi, np.conj(Phi), w * q)
    Bm = S.scatter_matrix(loc)
    K = S.scatter_matrix(np.einsum("mqbk,mqak,mq->mab", G, np.conj(G), w))
    M = op.mass_matrix
    return Bm, K, M


def load_vector(op: MagneticOperator, f) -> np.ndarray:
    """``F_a = int f conj(phi_a) dv`` for a callable or nodal ``f``."""
    S = op.space
    Phi, _ = op.covariant_basis()
    if callable(f):
        fq = S.sample_quad(f)
    else:
        fq = np.einsum("mqa,ma->mq", Phi, np.asarray(f)[S.tris])
    w = S.jw * S.sample_quad(op.domain.metric)
    return S.scatter_vector(np.einsum("mq,mqa,mq->ma", fq, np.conj(Phi), w))


def weighted_solve(op: MagneticOperator, phi: ArrayFn, h: float, f=None,
                   F: Optional[np.ndarray] = None, tol: float = 1e-8,
                   shift: Optional[SmoothForm] = None) -> WeightedSolution:
    """Solve ``e^{-phi/h} L e^{phi/h} u = f`` weakly with least norm.

    Minimises ``||u||^2 + h^2 ||(d+iX)u||^2`` subject to the equation tested
    against interior basis functions.  ``F`` may be given directly as the
    load vector (interior rows are used).  ``shift`` is passed to
    :func:`weighted_matrices`.

    Raises
    ------
    NumericalError
        Residual above ``tol``; the message carries a condition estimate.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    Bm, K, M = weighted_matrices(op, phi, h, shift)
    I = op.interior_nodes
    n = op.mesh.n_nodes
    if F is None:
        F = load_vector(op, f)
    FI = F[I]
    fn = np.sqrt(abs(np.vdot(F, F)))
    if fn == 0:
        z = np.zeros(n, complex)
        return WeightedSolution(z, h, 0.0, 0.0, 0.0, 0.0)
    Mh = (M + h * h * K).tocsc()
    BI = Bm[I]
    kkt = sp.bmat([[Mh, BI.conj().T], [BI, None]]).tocsc()
    rhs = np.concatenate([np.zeros(n, complex), FI])
    try:
        lu = spla.splu(kkt)
    except RuntimeError as exc:
        raise NumericalError(f"weighted system singular: {exc}") from None
    sol = lu.solve(rhs)
    U = sol[:n]
    res = float(np.linalg.norm(BI @ U - FI) / np.linalg.norm(FI))
    if not np.isfinite(res) or res > tol:
        est = spla.onenormest(kkt) * np.abs(sol).max() / max(np.abs(rhs).max(), 1e-300)
        raise NumericalError(f"weighted solve residual {res:.2e} (condition estimate >= {est:.2e})")
    l2 = float(np.sqrt(abs(np.vdot(U, M @ U))))
    dl2 = float(np.sqrt(abs(np.vdot(U, K @ U))))
    # ||f|| in L^2: from the callable when available, else from the load vector dual norm
    if callable(f):
        S = op.space
        f_l2 = float(np.sqrt(S.integrate(np.abs(S.sample_quad(f)) ** 2 * S.sample_quad(op.domain.metric)).real))
    else:
        Ml = spla.splu(M.tocsc())
        f_l2 = float(np.sqrt(abs(np.vdot(F, Ml.solve(F)))))
    return WeightedSolution(U, h, res, l2, dl2, f_l2)
