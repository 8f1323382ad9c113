"""Integrating factors, holomorphic boundary values, reduction of the magnetic
operator to a Dirac system, holonomy and gauge isomorphisms.

Conventions
-----------
``X = X_x dx + X_y dy`` real, ``A = X_zbar dzbar`` its (0,1) part with
``X_zbar = (X_x + i X_y)/2``.  ``alpha`` solves ``dbar alpha = A`` and
``F_A = e^{i alpha}``, ``F_Abar = e^{i conj(alpha)}``, so
``conj(F_Abar) F_A = 1`` and ``|F_A|^2 = e^{-2 Im alpha}``.

With ``L u = -alpha^{-2} (grad + iX)^2 u + q u`` the factorization is

    L = 2 F_Abar^{-1} dbar* F_Abar F_A^{-1} dbar F_A + Q,   Q = q - *dX,

where ``*dX = curl(X) / alpha^2``.  The sign of the curvature term is
confirmed numerically in :func:`reduce_to_dirac`.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.ndimage import map_coordinates

from .cauchy import plan_for
from .errors import DomainError, HypothesisError, NumericalError
from .fields import SmoothForm
from .forms import OneForm, apply_magnetic, d_z, d_zbar, dx as fd_x, dy as fd_y
from .forward import DiracOperator, MagneticOperator, _as_fn
from .geometry import ChartGrid, Domain, Loop, circle_loop, cohomology_dual_basis, loop_integral, make_grid

ArrayFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


# ----------------------------------------------------------------------------
# alpha and integrating factors
# ----------------------------------------------------------------------------

@dataclass
class IntegratingFactor:
    """``alpha`` with ``dbar alpha = A`` on a grid, with spline evaluation.

    ``correction`` is an optional holomorphic factor multiplying ``F_A``
    (used for ``F_{-i alpha} e^{i alpha_1}``).
    """

    grid: ChartGrid
    alpha_grid: np.ndarray
    source: np.ndarray          # dzbar coefficient sampled on the grid (unextended)
    correction: Optional["HolomorphicFunction"] = None

    def alpha(self, z) -> np.ndarray:
        z = np.asarray(z, complex)
        g = self.grid
        coords = np.vstack([((z.real - g.x[0]) / g.spacing).ravel(),
                            ((z.imag - g.y[0]) / g.spacing).ravel()])
        a = self.alpha_grid
        out = (map_coordinates(a.real, coords, order=3, mode="nearest")
               + 1j * map_coordinates(a.imag, coords, order=3, mode="nearest"))
        return out.reshape(z.shape)

    def F(self, z) -> np.ndarray:
        """``F_A = e^{i alpha}`` (times the holomorphic correction)."""
        out = np.exp(1j * self.alpha(z))
        if self.correction is not None:
            out = out * self.correction(np.asarray(z, complex))
        return out

    def F_bar(self, z) -> np.ndarray:
        """``F_Abar = 1/conj(F_A)``; equals ``e^{i conj(alpha)}`` without correction."""
        return 1.0 / np.conj(self.F(z))

    def modulus2(self, x, y) -> np.ndarray:
        """``|F_A|^2``."""
        return np.abs(self.F(np.asarray(x) + 1j * np.asarray(y))) ** 2

    def on_grid(self) -> np.ndarray:
        cached = self.__dict__.get("_on_grid")
        if cached is None:
            cached = np.exp(1j * self.alpha_grid)
            if self.correction is not None:
                cached = cached * self.correction(self.grid.z)
            self.__dict__["_on_grid"] = cached
        return cached

    def with_correction(self, h: "HolomorphicFunction") -> "IntegratingFactor":
        return IntegratingFactor(self.grid, self.alpha_grid, self.source, h)

    def dbar_residual(self, margin: float = 0.02) -> float:
        """Relative ``||dbar F_A - i A F_A||`` on the domain interior."""
        g = self.grid
        F = self.on_grid()
        r = d_zbar(F, g) - 1j * self.source * F
        inner = g.domain.signed_distance(g.X, g.Y) < -margin
        den = np.sqrt(np.sum(np.abs(self.source * F)[inner] ** 2))
        num = np.sqrt(np.sum(np.abs(r[inner]) ** 2))
        return float(num / den) if den > 0 else float(num)

    def conjugate_product_residual(self) -> float:
        """``max |conj(F_Abar) F_A - 1|`` on the grid nodes inside the domain."""
        g = self.grid
        z = g.z[g.coverage > 0]
        return float(np.max(np.abs(np.conj(self.F_bar(z)) * self.F(z) - 1.0)))


def _zbar_coefficient(A, grid: ChartGrid) -> np.ndarray:
    if isinstance(A, SmoothForm):
        ax, ay = A(grid.X, grid.Y)
        return 0.5 * (np.asarray(ax) + 1j * np.asarray(ay)) * np.ones(grid.shape)
    return np.asarray(A(grid.X, grid.Y), complex) * np.ones(grid.shape)


def solve_alpha(A: Union[SmoothForm, ArrayFn], domain: Domain, spacing: float = 2.0 ** -7,
                tol: float = 1e-3, grid: Optional[ChartGrid] = None, refine: int = 2) -> IntegratingFactor:
    """``alpha = dbar^{-1} A`` (Cauchy transform of the collar extension).

    ``A`` is either a real connection form (its (0,1) part is used) or a
    callable returning the ``dzbar`` coefficient.  The collar extension keeps
    ``alpha`` smooth across the boundary.  The cell-averaged transform is
    second order; ``refine`` defect-correction sweeps
    ``alpha += T(A - dbar_h alpha)`` lift it to the order of the
    fourth-order difference ``dbar_h``.

    Raises
    ------
    NumericalError
        ``||dbar alpha - A|| > tol`` relative on the interior.
    """
    grid = grid or make_grid(domain, spacing)
    src = _zbar_coefficient(A, grid)
    plan = plan_for(grid)
    ext = grid.extend(src, "collar")
    alpha = plan.cauchy(ext)
    for _ in range(refine):
        r = ext - d_zbar(alpha, grid)
        r[:4, :] = r[-4:, :] = 0.0   # one-sided stencils at the grid edge
        r[:, :4] = r[:, -4:] = 0.0
        alpha = alpha + plan.cauchy(r)
    fac = IntegratingFactor(grid, alpha, src)
    inner = domain.signed_distance(grid.X, grid.Y) < -4 * grid.spacing
    r = d_zbar(alpha, grid) - src
    den = np.sqrt(np.sum(np.abs(src[inner]) ** 2))
    res = float(np.sqrt(np.sum(np.abs(r[inner]) ** 2)) / den) if den > 0 else 0.0
    if res > tol:
        raise NumericalError(f"dbar alpha - A residual {res:.2e} exceeds {tol:.0e}")
    return fac


# ----------------------------------------------------------------------------
# holomorphic boundary values
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class HolomorphicFunction:
    """Laurent sum ``sum_n c_n z^n`` (``n >= 0`` only on the disk)."""

    coeffs: Dict[int, complex]

    def __call__(self, z):
        z = np.asarray(z, complex)
        out = np.zeros_like(z)
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            for n, c in self.coeffs.items():
                out = out + c * z ** n
        # negative powers blow up deep inside the hole, where nothing is used
        return np.where(np.isfinite(out), out, 0.0)


def _trace_samples(f, domain: Domain, M: int) -> List[np.ndarray]:
    th = 2 * np.pi * np.arange(M) / M
    radii = [domain.outer] + ([domain.inner] if domain.is_annulus else [])
    out = []
    for i, R in enumerate(radii):
        if callable(f):
            out.append(np.asarray(f(R * np.exp(1j * th)), complex) * np.ones(M))
        else:
            out.append(np.asarray(f[i], complex))
    return out


@dataclass
class HolomorphyVerdict:
    holomorphic: bool
    defect_fourier: float
    defect_orthogonality: float
    tol: float


def _fourier_defect(samples: List[np.ndarray], domain: Domain) -> float:
    M = samples[0].size
    co = np.fft.fft(samples[0]) / M
    n = np.fft.fftfreq(M, 1.0 / M).astype(int)
    norm = np.sqrt(np.sum(np.abs(co) ** 2))
    if not domain.is_annulus:
        d = np.sqrt(np.sum(np.abs(co[n < 0]) ** 2))
        return float(d / norm) if norm > 0 else 0.0
    ci = np.fft.fft(samples[1]) / M
    rho = domain.inner / domain.outer
    norm = np.hypot(norm, np.sqrt(np.sum(np.abs(ci) ** 2)))
    pos = n >= 0
    d = np.sum(np.abs(ci[pos] - co[pos] * rho ** n[pos]) ** 2)
    d += np.sum(np.abs(co[~pos] - ci[~pos] * rho ** (-n[~pos])) ** 2)
    return float(np.sqrt(d) / norm) if norm > 0 else 0.0


def _orthogonality_defect(f, domain: Domain, M: int, nmax: int) -> float:
    """Integrals ``oint_{dM} f dPhi_k`` against holomorphic differentials
    ``d(z^k)/k`` (and ``dz/z``, ``d(z^{-k})`` on the annulus), i.e. against
    ``i *d phi`` for the harmonic ``phi = Re z^k, Re log z, ...``; each is
    normalized by the circle where the monomial is largest.

    Uses Gauss-Legendre panels rather than equispaced samples, so it is
    independent of the FFT test.
    """
    gx, gw = np.polynomial.legendre.leggauss(8)
    P = max(8, M // 4)
    t = (np.arange(P)[:, None] + 0.5 * (gx[None, :] + 1)) * (2 * np.pi / P)
    w = (0.5 * gw[None, :] * (2 * np.pi / P)) * np.ones_like(t)
    t, w = t.ravel(), w.ravel()
    circles = [(domain.outer, 1.0)] + ([(domain.inner, -1.0)] if domain.is_annulus else [])
    ks = range(0, nmax + 1) if not domain.is_annulus else range(-nmax, nmax + 1)
    tot, fn2 = 0.0, 0.0
    vals = []
    for R, sgn in circles:
        z = R * np.exp(1j * t)
        fv = np.asarray(f(z), complex) * np.ones_like(z) if callable(f) else None
        vals.append((R, sgn, z, fv))
        fn2 += np.sum(np.abs(fv) ** 2 * w) / (2 * np.pi)
    for k in ks:
        # z^k dz, k >= 0 on the disk; all k on the annulus
        acc = 0.0 + 0.0j
        for R, sgn, z, fv in vals:
            acc += sgn * np.sum(fv * z ** k * 1j * z * w)
        scale = 2 * np.pi * max(R ** (k + 1) for R, _, _, _ in vals)
        tot += abs(acc / scale) ** 2
    return float(np.sqrt(tot / fn2)) if fn2 > 0 else 0.0


def is_holomorphic_boundary_value(f, domain: Domain, tol: float = 1e-6, M: int = 512,
                                  nmax: Optional[int] = None) -> HolomorphyVerdict:
    """Test whether a boundary trace extends holomorphically into the domain.

    Two independent tests: (a) Fourier/Laurent consistency on the boundary
    circles; (b) vanishing of ``oint f dPhi`` against holomorphic
    differentials of harmonic functions with integer periods.

    Parameters
    ----------
    f : callable
        Function of complex ``z`` evaluated on the boundary circles.

    Raises
    ------
    NumericalError
        The two defects disagree about the verdict by more than ``10 tol``.
    """
    if not callable(f):
        raise TypeError("f must be a callable of complex z")
    nmax = nmax or min(48, M // 8)
    da = _fourier_defect(_trace_samples(f, domain, M), domain)
    db = _orthogonality_defect(f, domain, M, nmax)
    if (da < tol) != (db < tol) and max(da, db) > 10 * tol:
        raise NumericalError(f"holomorphy tests disagree (Fourier {da:.2e}, orthogonality {db:.2e}); "
                             "increase the boundary resolution")
    return HolomorphyVerdict(bool(max(da, db) < tol), da, db, tol)


def holomorphic_extension(f, domain: Domain, tol: float = 1e-6, M: int = 512) -> HolomorphicFunction:
    """Holomorphic function with boundary trace ``f``.

    Disk: nonnegative Fourier modes scaled by ``R^{-n}``.  Annulus: Laurent
    coefficients taken from the circle on which they are best conditioned
    (``n >= 0`` from the outer, ``n < 0`` from the inner circle).

    Raises
    ------
    HypothesisError
        ``f`` is not a holomorphic boundary value (carries the defect).
    """
    v = is_holomorphic_boundary_value(f, domain, tol, M)
    if not v.holomorphic:
        raise HypothesisError(f"not a holomorphic boundary value (defect {v.defect_fourier:.2e})")
    s = _trace_samples(f, domain, M)
    n = np.fft.fftfreq(M, 1.0 / M).astype(int)
    co = np.fft.fft(s[0]) / M
    # high modes are round-off (the trace passed the test) and are ruinous
    # under differentiation near the circles: cap the degree and drop noise
    kmax = M // 8
    floor = 1e-13 * max(float(np.max(np.abs(co))), 1e-300)
    coeffs = {}
    for k, c in zip(n, co):
        if 0 <= k <= kmax and abs(c) > floor:
            coeffs[int(k)] = complex(c / domain.outer ** k)
    if domain.is_annulus:
        ci = np.fft.fft(s[1]) / M
        for k, c in zip(n, ci):
            if -kmax <= k < 0 and abs(c) > floor:
                coeffs[int(k)] = complex(c / domain.inner ** k)
    return HolomorphicFunction(coeffs)


# ----------------------------------------------------------------------------
# reduction to a Dirac system
# ----------------------------------------------------------------------------

def curvature_potential(X: SmoothForm, q, domain: Domain, sign: int = -1) -> ArrayFn:
    """``Q = q + sign * *dX`` with ``*dX = curl X / alpha^2``."""
    qfn = _as_fn(q)

    def Q(x, y):
        return qfn(x, y) + sign * X.curl(x, y) / domain.metric(x, y)
    return Q


def _factored_apply(u: np.ndarray, fac: IntegratingFactor, Q: np.ndarray, grid: ChartGrid) -> np.ndarray:
    FA = fac.on_grid()
    FAb = 1.0 / np.conj(FA)
    w = d_zbar(FA * u, grid) / FA                         # (dbar + iA) u
    return 2.0 / FAb * (-2.0 / grid.alpha2) * d_z(FAb * w, grid) + Q * u


@dataclass
class Reduction:
    """Dirac system obtained from ``L`` and the diagnostics of the reduction."""

    dirac: DiracOperator
    factor: IntegratingFactor
    Q: ArrayFn
    sign: int                   # Q = q + sign * *dX
    residual: float
    residual_other: float


def reduce_to_dirac(op: MagneticOperator, factor: Optional[IntegratingFactor] = None,
                    trials: int = 10, tol: float = 1e-4, seed: int = 0,
                    mesh_size: Optional[float] = None) -> Reduction:
    """Dirac system ``v = Q |F_A|^{-2} / 2``, ``v' = -|F_A|^2`` equivalent to ``L``.

    The curvature sign in ``Q`` is chosen by comparing ``L u`` with the
    factored form on ``trials`` random smooth ``u``; the chosen sign must
    reach relative residual ``tol``.

    Raises
    ------
    NumericalError
        Neither sign convention reproduces ``L``.
    """
    factor = factor or solve_alpha(op.X, op.domain)
    g = factor.grid
    rng = np.random.default_rng(seed)
    Xg = OneForm.sample(op.X, g)
    qg = np.asarray(op.qfn(g.X, g.Y)) * np.ones(g.shape)
    inner = op.domain.signed_distance(g.X, g.Y) < -6 * g.spacing
    res = {}
    for sign in (-1, 1):
        Qg = curvature_potential(op.X, op.q, op.domain, sign)(g.X, g.Y) * np.ones(g.shape)
        worst = 0.0
        for _ in range(trials):
            c = complex(*rng.uniform(-0.5, 0.5, 2)) * op.domain.outer
            if op.domain.is_annulus:
                c = 0.65 * np.exp(1j * rng.uniform(0, 2 * np.pi))
            k = rng.normal(size=2) * 3
            u = np.exp(-np.abs(g.z - c) ** 2 / 0.05 + 1j * (k[0] * g.X + k[1] * g.Y))
            Lu = apply_magnetic(u, Xg, qg, g)
            Fu = _factored_apply(u, factor, Qg, g)
            worst = max(worst, float(np.linalg.norm((Lu - Fu)[inner]) / np.linalg.norm(Lu[inner])))
        res[sign] = worst
    sign = min(res, key=res.get)
    if res[sign] > tol:
        raise NumericalError(f"factorization residual {res[sign]:.2e} above {tol:.0e} for both "
                             f"curvature conventions (other {res[-sign]:.2e})")
    Q = curvature_potential(op.X, op.q, op.domain, sign)

    def v(x, y):
        return 0.5 * Q(x, y) / factor.modulus2(x, y)

    def vp(x, y):
        return -factor.modulus2(x, y)
    dirac = DiracOperator(v, vp, op.domain, mesh_size or op.mesh_size, op.quad_order,
                          op.mesh if mesh_size is None else None)
    return Reduction(dirac, factor, Q, sign, res[sign], res[-sign])


def transport_solution(u: np.ndarray, factor: IntegratingFactor) -> Tuple[np.ndarray, np.ndarray]:
    """``(F_A u, F_Abar F_A^{-1} dbar(F_A u))`` on the factor's grid."""
    g = factor.grid
    FA = factor.on_grid()
    FAb = 1.0 / np.conj(FA)
    return FA * u, FAb / FA * d_zbar(FA * u, g)


# ----------------------------------------------------------------------------
# curvature and potential from Dirac coefficients
# ----------------------------------------------------------------------------

@dataclass
class CurvatureReport:
    curl_difference: float
    q_difference: float
    curl: Tuple[np.ndarray, np.ndarray]
    q: Tuple[np.ndarray, np.ndarray]
    mask: np.ndarray


def coefficients_from_dirac(v: ArrayFn, vp: ArrayFn, grid: ChartGrid, sign: int = -1):
    """``(curl X, q)`` from ``v = Q/(2|F|^2)``, ``v' = -|F|^2``.

    ``Delta Im alpha = curl X`` and ``|F|^2 = e^{-2 Im alpha}`` give
    ``curl X = -Delta log(-v') / 2``; ``Q = -2 v v'`` and ``q = Q - sign *dX``.
    """
    vv = np.asarray(v(grid.X, grid.Y)) * np.ones(grid.shape)
    vpv = np.asarray(vp(grid.X, grid.Y)) * np.ones(grid.shape)
    lg = np.log(np.abs(vpv))
    curl = -0.5 * (fd_x(fd_x(lg, grid), grid) + fd_y(fd_y(lg, grid), grid))
    Q = -2.0 * vv * vpv
    return curl, Q - sign * curl / grid.alpha2


def identify_curvature_and_q(V1: Tuple[ArrayFn, ArrayFn], V2: Tuple[ArrayFn, ArrayFn], domain: Domain,
                             spacing: float = 2.0 ** -6, margin: float = 0.05, sign: int = -1) -> CurvatureReport:
    """Compare the curvature and potential encoded by two Dirac potentials.

    Returns max differences over the interior (``margin`` away from the
    boundary) relative to 1.
    """
    g = make_grid(domain, spacing, collar_width=0.0)
    c1, q1 = coefficients_from_dirac(*V1, g, sign)
    c2, q2 = coefficients_from_dirac(*V2, g, sign)
    mask = domain.signed_distance(g.X, g.Y) < -margin
    return CurvatureReport(float(np.max(np.abs(c1 - c2)[mask])), float(np.max(np.abs(q1 - q2)[mask])),
                           (c1, c2), (q1, q2), mask)


def laplacian_identity_residual(alpha: np.ndarray, grid: ChartGrid, margin: float = 0.1) -> float:
    """For ``X`` real with ``X_zbar = dbar alpha``: ``Delta Im alpha = curl X``."""
    a = d_zbar(alpha, grid)
    Xx, Xy = 2 * a.real, 2 * a.imag
    curl = fd_x(Xy, grid) - fd_y(Xx, grid)
    lap = fd_x(fd_x(alpha.imag, grid), grid) + fd_y(fd_y(alpha.imag, grid), grid)
    m = grid.domain.signed_distance(grid.X, grid.Y) < -margin
    return float(np.max(np.abs(lap - curl)[m]) / max(np.max(np.abs(curl)[m]), 1e-300))


# ----------------------------------------------------------------------------
# holonomy and fluxes
# ----------------------------------------------------------------------------

def parallel_transport(X: SmoothForm, loop: Loop) -> complex:
    """``exp(-i oint_loop X)``."""
    return complex(np.exp(-1j * loop_integral(X, loop)))


def reduce_mod_2pi(x: float) -> float:
    """Representative in ``(-pi, pi]``."""
    r = float(np.mod(x + np.pi, 2 * np.pi) - np.pi)
    return np.pi if r == -np.pi else r


@dataclass
class HolonomyReport:
    """Fluxes along the generators and the triviality verdict."""

    labels: List[str]
    fluxes: List[float]
    reduced: List[float]
    transports: List[complex]
    tol: float
    data_distance: Optional[float] = None

    @property
    def trivial(self) -> bool:
        return all(abs(r) < self.tol for r in self.reduced)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("generator,flux,reduced,transport_re,transport_im,tolerance\n")
        for l, f, r, p in zip(self.labels, self.fluxes, self.reduced, self.transports):
            buf.write(f"{l},{f:.12e},{r:.12e},{p.real:.12e},{p.imag:.12e},{self.tol:.3e}\n")
        return buf.getvalue()

    def text(self) -> str:
        lines = [f"{l}: flux {f:.6f}, mod 2pi {r:.6f}" for l, f, r in zip(self.labels, self.fluxes, self.reduced)]
        lines.append("holonomy trivial" if self.trivial else "holonomy NOT trivial")
        return "\n".join(lines)


def _log_theta_along(theta: Callable, pts: np.ndarray, max_refine: int = 6) -> np.ndarray:
    """Continuous ``log Theta`` along a polyline; refines until consecutive
    argument steps are below ``pi/4``."""
    for _ in range(max_refine):
        th = theta(pts)
        if np.any(np.abs(th) < 1e-300):
            raise NumericalError("integrating-factor quotient vanishes along the tube")
        d = np.angle(th[1:] / th[:-1])
        if np.all(np.abs(d) < np.pi / 4):
            ph = np.angle(th[0]) + np.concatenate([[0.0], np.cumsum(d)])
            return np.log(np.abs(th)) + 1j * ph
        mid = 0.5 * (pts[1:] + pts[:-1])
        pts = np.insert(pts, np.arange(1, pts.size), mid)
    raise NumericalError("phase continuation did not resolve (step > pi/4 after refinement)")


def tube_flux(theta: Callable, arc: np.ndarray, width: float) -> float:
    """``int_arc 2 Re(-i dbar log Theta) dzbar`` from a three-line strip.

    ``dbar log Theta = i Y_zbar`` for ``Theta = F_{A_1}/F_{A_2}`` (holomorphic
    factors drop out), so the result is ``int_arc (X_1 - X_2)``.
    """
    arc = np.asarray(arc, complex)
    t = np.gradient(arc)
    t = t / np.abs(t)
    nrm = 1j * t
    L0 = _log_theta_along(theta, arc, 1)
    Lp = _log_theta_along(theta, arc + width * nrm, 1)
    Lm = _log_theta_along(theta, arc - width * nrm, 1)
    # align branches of the side lines with the centre line
    Lp += 2j * np.pi * np.round((L0[0] - Lp[0]).imag / (2 * np.pi))
    Lm += 2j * np.pi * np.round((L0[0] - Lm[0]).imag / (2 * np.pi))
    s = np.concatenate([[0.0], np.cumsum(np.abs(np.diff(arc)))])
    Dt = np.gradient(L0, s)
    Dn = (Lp - Lm) / (2 * width)
    dbar = 0.5 * t * (Dt + 1j * Dn)
    Yzb = -1j * dbar
    # int Y = int 2 Re(Y_zbar dzbar) along the arc
    return float(np.trapezoid(2 * np.real(Yzb * np.conj(t)), s))


def recover_flux_mod_2pi(factor1: IntegratingFactor, factor2: IntegratingFactor, domain: Domain,
                         tol: float = 1e-2, n: int = 2001, data_distance: Optional[float] = None) -> HolonomyReport:
    """Fluxes of ``X_1 - X_2`` along the relative generators from ``Theta = F_{A_1}/F_{A_2}``.

    On the annulus the generator is the radial arc from the inner to the
    outer circle; the disk has none (trivial report).
    """
    labels, fl, red, tr = [], [], [], []
    for k, gen in enumerate(cohomology_dual_basis(domain)):
        p = np.asarray(gen.cycle.points, complex)
        arc = np.linspace(p[0], p[-1], n)

        def theta(z):
            return factor1.F(z) / factor2.F(z)
        f = tube_flux(theta, arc, factor1.grid.spacing)
        labels.append(f"relative_{k}")
        fl.append(f)
        red.append(reduce_mod_2pi(f))
        tr.append(complex(np.exp(-1j * f)))
    return HolonomyReport(labels, fl, red, tr, tol, data_distance)


# ----------------------------------------------------------------------------
# boundary normalization and gauge isomorphisms
# ----------------------------------------------------------------------------

def boundary_normalization(X1: SmoothForm, X2: SmoothForm, domain: Domain,
                           collar: Optional[float] = None) -> SmoothForm:
    """``X2 + d zeta`` with ``zeta = 0`` on the boundary and matching normal
    components, ``zeta = d * f * chi(|d|)`` where ``d`` is the signed distance
    to the nearest boundary circle (positive inside), ``f`` the normal mismatch at the foot point."""
    from .fields import smooth_step

    if collar is None:
        # wide transition: the mismatch can be O(1) and a thin collar is stiff
        collar = 0.8 * (0.5 * (domain.outer - domain.inner) if domain.is_annulus else domain.outer)

    def parts(x, y):
        r = np.hypot(x, y)
        th = np.arctan2(y, x)
        if domain.is_annulus:
            near_outer = (domain.outer - r) <= (r - domain.inner)
        else:
            near_outer = np.ones(np.shape(r), bool)
        R = np.where(near_outer, domain.outer, domain.inner if domain.is_annulus else domain.outer)
        s = np.where(near_outer, -1.0, 1.0)  # inward radial direction
        d = s * (r - R)  # signed, positive inside: zeta stays smooth across the circle
        fx, fy = R * np.cos(th), R * np.sin(th)
        a1 = X1(fx, fy)
        a2 = X2(fx, fy)
        # inward normal component of X1 - X2 at the foot point
        f = s * ((a1[0] - a2[0]) * np.cos(th) + (a1[1] - a2[1]) * np.sin(th))
        return r, th, d, s, f

    def zeta(x, y):
        r, th, d, s, f = parts(x, y)
        return d * f * (1 - smooth_step(np.abs(d) / collar))

    eps = 1e-6

    def ax(x, y):
        return (zeta(x + eps, y) - zeta(x - eps, y)) / (2 * eps)

    def ay(x, y):
        return (zeta(x, y + eps) - zeta(x, y - eps)) / (2 * eps)
    dz = SmoothForm(ax, ay, lambda x, y: np.zeros(np.broadcast(x, y).shape), "dzeta")
    return X2 + dz


@dataclass
class GaugeIsomorphism:
    """``F(z) = exp(i int_{gamma(z0, z)} Y)`` for a closed ``Y``."""

    Y: SmoothForm
    domain: Domain
    nodes: int = 64

    def _segment(self, a: np.ndarray, b: np.ndarray, arc: bool) -> np.ndarray:
        gx, gw = np.polynomial.legendre.leggauss(self.nodes)
        t = 0.5 * (gx + 1)
        w = 0.5 * gw
        if arc:
            # a, b complex with equal modulus; counter-clockwise sweep of arg(b)-arg(a) in [0, 2pi)
            R = np.abs(a)
            t0 = np.angle(a)
            dth = np.mod(np.angle(b) - t0, 2 * np.pi)
            ang = t0[:, None] + dth[:, None] * t[None, :]
            p = R[:, None] * np.exp(1j * ang)
            dp = 1j * p * dth[:, None]
        else:
            p = a[:, None] + (b - a)[:, None] * t[None, :]
            dp = (b - a)[:, None] * np.ones_like(t)[None, :]
        fx, fy = self.Y(p.real, p.imag)
        return np.sum((fx * dp.real + fy * dp.imag) * w[None, :], axis=1)

    def potential(self, z, path: int = 0) -> np.ndarray:
        """``int Y`` from ``outer`` (angle 0): path 0 goes along the outer
        circle then radially, path 1 radially then along the circle."""
        z = np.atleast_1d(np.asarray(z, complex)).ravel()
        R = self.domain.outer
        rho, th = np.abs(z), np.angle(z)
        out = np.zeros(z.shape, float)
        for s in range(0, z.size, 4096):
            sl = slice(s, s + 4096)
            zs, rs, ts = z[sl], rho[sl], th[sl]
            base = np.full(zs.shape, R + 0j)
            foot = R * np.exp(1j * ts)
            mid = rs * np.exp(0j * ts)
            if path == 0:
                out[sl] = self._segment(base, foot, True) + self._segment(foot, zs, False)
            else:
                out[sl] = self._segment(base, mid.astype(complex), False) + self._segment(mid.astype(complex), zs, True)
        return out

    def __call__(self, z) -> np.ndarray:
        z = np.asarray(z, complex)
        return np.exp(1j * self.potential(z)).reshape(z.shape)

    def single_valued_defect(self, radius: Optional[float] = None) -> float:
        """``|exp(i oint Y) - 1|`` around the hole (0 on the disk)."""
        if not self.domain.is_annulus:
            return 0.0
        r = radius or 0.5 * (self.domain.inner + self.domain.outer)
        return float(abs(np.exp(1j * loop_integral(self.Y, circle_loop(r, 2048))) - 1))

    def boundary_defect(self, M: int = 256) -> float:
        th = 2 * np.pi * np.arange(M) / M
        pts = [self.domain.outer * np.exp(1j * th)]
        if self.domain.is_annulus:
            pts.append(self.domain.inner * np.exp(1j * th))
        return float(max(np.max(np.abs(self(p) - 1)) for p in pts))

    def log_derivative_defect(self, spacing: float = 2.0 ** -7, margin: float = 0.05) -> float:
        """Relative ``||dF/F - iY||`` on interior grid nodes."""
        g = make_grid(self.domain, spacing, collar_width=0.0)
        m = self.domain.signed_distance(g.X, g.Y) < -margin
        P = np.zeros(g.shape)
        P[m] = self.potential(g.z[m])
        F = np.exp(1j * P)
        Fx, Fy = fd_x(F, g), fd_y(F, g)
        yx, yy = self.Y(g.X, g.Y)
        inner = self.domain.signed_distance(g.X, g.Y) < -margin - 3 * spacing
        ex = Fx / F - 1j * yx
        ey = Fy / F - 1j * yy
        den = max(np.max(np.hypot(np.abs(yx), np.abs(yy))[inner]), 1e-300)
        return float(np.max(np.hypot(np.abs(ex), np.abs(ey))[inner]) / den)


def build_gauge_isomorphism(Y: SmoothForm, domain: Domain, tol: float = 1e-4,
                            spacing: float = 2.0 ** -6) -> GaugeIsomorphism:
    """Unimodular ``F`` with ``dF/F = iY`` and ``F = 1`` on the boundary.

    Raises
    ------
    HypothesisError
        ``Y`` is not closed, has a nonzero tangential boundary trace, or its
        fluxes are not in ``2 pi Z`` ("fluxes not integral").
    """
    g = make_grid(domain, spacing, collar_width=0.0)
    m = domain.signed_distance(g.X, g.Y) < -0.02
    curl = np.asarray(Y.curl(g.X, g.Y)) * np.ones(g.shape)
    yx, yy = Y(g.X, g.Y)
    scale = max(float(np.max(np.hypot(yx, yy)[m])), 1.0)
    if np.max(np.abs(curl[m])) > tol * scale:
        raise HypothesisError(f"Y is not closed (max |dY| = {np.max(np.abs(curl[m])):.2e})")
    th = 2 * np.pi * np.arange(256) / 256
    for R in [domain.outer] + ([domain.inner] if domain.is_annulus else []):
        z = R * np.exp(1j * th)
        bx, by = Y(z.real, z.imag)
        tang = -np.sin(th) * bx + np.cos(th) * by
        if np.max(np.abs(tang)) > tol * scale:
            raise HypothesisError("Y has a nonzero tangential boundary trace")
    F = GaugeIsomorphism(Y, domain)
    if F.single_valued_defect() > tol or F.boundary_defect() > tol:
        raise HypothesisError("fluxes not integral")
    pts = g.z[m][:: max(1, int(m.sum()) // 500)]
    if np.max(np.abs(np.exp(1j * F.potential(pts, 0)) - np.exp(1j * F.potential(pts, 1)))) > tol:
        raise HypothesisError("fluxes not integral (path dependence)")
    return F
