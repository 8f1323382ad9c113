"""Complex geometric optics for ``D + V`` and the magnetic operator.

Conjugated unknowns
-------------------
A solution ``F = (e^{s Phi/h} P, e^{s conj(Phi)/h} Q)`` of ``(D+V)F = 0``
(``s = +1``; ``s = -1`` for the mirrored phase) corresponds to
``(D + V_psi)(P, Q) = 0`` with ``V_psi = diag(e^{2is psi/h} v, e^{-2is psi/h} v')``.
Writing ``P = p0 + r`` and ``Q = q0 + s`` with ``p0`` holomorphic and
``q0`` anti-holomorphic:

* ``r = -dbar_psi^{-1}(v' Q)``  and  ``s = -dbar*_psi^{-1}(v P)``.

For ``F_h`` (``p0 = 0, q0 = b``) this gives ``r = -sum_j S^j dbar_psi^{-1}(v' b)``
with ``S = dbar_psi^{-1} v' dbar*_psi^{-1} v``; for ``G_h`` (``p0 = a, q0 = 0``)
the mirror series in ``s``.  All transforms use zero extension from the
domain.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .cauchy import CauchyKernelPlan, DecayFit, plan_for, sweep_spacing
from .errors import ConvergenceError, DomainError, HypothesisError
from .fields import SmoothForm
from .forms import d_z, d_zbar
from .geometry import ChartGrid, Domain, circle_loop, loop_integral, make_grid

ArrayFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


# ----------------------------------------------------------------------------
# Morse phases
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class HolomorphicMorse:
    """Closed-form holomorphic Morse function.

    ``kind == "quadratic"``: ``Phi = (z - z0)^2 / 2``.
    ``kind == "joukowski"``: ``Phi = z + c^2 / z`` (critical points ``+-c``).
    """

    kind: str
    param: complex

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        if self.kind == "quadratic":
            return 0.5 * (z - self.param) ** 2
        return z + self.param ** 2 / z

    def derivative(self, z):
        z = np.asarray(z, dtype=complex)
        if self.kind == "quadratic":
            return z - self.param
        return 1.0 - self.param ** 2 / z ** 2

    def second_derivative(self, z):
        z = np.asarray(z, dtype=complex)
        if self.kind == "quadratic":
            return np.ones_like(z)
        return 2.0 * self.param ** 2 / z ** 3

    @property
    def critical_points(self) -> Tuple[complex, ...]:
        if self.kind == "quadratic":
            return (complex(self.param),)
        return (complex(self.param), complex(-self.param))

    @property
    def hessians(self) -> Tuple[complex, ...]:
        return tuple(complex(self.second_derivative(c)) for c in self.critical_points)

    def phi(self, x, y):
        return np.real(self(np.asarray(x) + 1j * np.asarray(y)))

    def psi(self, x, y):
        return np.imag(self(np.asarray(x) + 1j * np.asarray(y)))


def morse_phase(domain: Domain, z0: complex, margin: float = 0.02,
                kind: Optional[str] = None) -> HolomorphicMorse:
    """Catalog Morse phase with a nondegenerate critical point at ``z0``.

    Disk: ``(z - z0)^2/2``.  Annulus: ``z + z0^2/z`` (critical points
    ``+-z0``, both inside since the annulus is symmetric).  ``kind`` may force
    ``"quadratic"`` on the annulus.

    Raises
    ------
    DomainError
        ``z0`` closer than ``margin`` to the boundary (or outside).
    """
    z0 = complex(z0)
    if -domain.signed_distance(z0.real, z0.imag) < margin:
        raise DomainError(f"critical point {z0} must lie at distance >= {margin} inside the domain "
                          f"(catalog: disk |z0| < R; annulus r < |z0| < R, mate -z0 is used too)")
    kind = kind or ("joukowski" if domain.is_annulus else "quadratic")
    if kind not in ("quadratic", "joukowski"):
        raise DomainError(f"unknown phase kind {kind!r}")
    if kind == "joukowski" and not domain.is_annulus:
        raise DomainError("z + c^2/z has a pole at 0; use it on the annulus only")
    return HolomorphicMorse(kind, z0)


@dataclass(frozen=True)
class Amplitude:
    """Polynomial ``p`` (numpy coefficient order, highest first).

    As an anti-holomorphic 1-form ``b = conj(p(z)) dzbar``; as a holomorphic
    amplitude ``a = p(z)``.
    """

    coeffs: Tuple[complex, ...]

    def __call__(self, z):
        return np.polyval(np.asarray(self.coeffs), np.asarray(z, dtype=complex))

    def conj_coefficient(self, z):
        """``dzbar`` coefficient of ``b``."""
        return np.conj(self(z))

    def scaled(self, c: complex) -> "Amplitude":
        return Amplitude(tuple(c * np.asarray(self.coeffs)))


def antiholomorphic_b(phase: HolomorphicMorse, keep: Optional[complex] = None) -> Amplitude:
    """Polynomial vanishing at every critical point except ``keep``."""
    crit = phase.critical_points
    keep = crit[0] if keep is None else complex(keep)
    if min(abs(c - keep) for c in crit) > 1e-12:
        raise DomainError(f"{keep} is not a critical point of the phase")
    others = [c for c in crit if abs(c - keep) > 1e-12]
    coeffs = np.poly(others) if others else np.array([1.0 + 0j])
    return Amplitude(tuple(complex(c) for c in np.atleast_1d(coeffs)))


# ----------------------------------------------------------------------------
# operator S_h
# ----------------------------------------------------------------------------

class WeightedTransforms:
    """Zero-extension weighted right inverses on one grid.

    ``sign = +1`` uses ``dbar_psi^{-1} = dbar^{-1} e^{-2i psi/h}`` and
    ``dbar*_psi^{-1} = dbar*^{-1} e^{2i psi/h}``; ``sign = -1`` flips ``psi``.
    Adjoints are taken for the pairing ``sum u conj(w) coverage``.
    """

    def __init__(self, grid: ChartGrid, psi: np.ndarray, h: float, sign: int = 1,
                 plan: Optional[CauchyKernelPlan] = None):
        if not h > 0:
            raise ValueError("h must be positive")
        self.grid = grid
        self.plan = plan or plan_for(grid)
        self.c = grid.coverage
        self.a2 = grid.alpha2
        # phases outside the domain are irrelevant (zero extension); keep them finite
        psi = np.where(self.c > 0, np.nan_to_num(np.asarray(psi, float) * np.ones(grid.shape)), 0.0)
        self.em = np.exp(-2j * sign * psi / h)   # weight of dbar^{-1}
        self.ep = np.conj(self.em)               # weight of dbar*^{-1}

    def dbar_inv(self, f):
        return self.plan.cauchy(self.c * self.em * f)

    def dbar_star_inv(self, f):
        return -0.5 * self.plan.cauchy_conj(self.c * self.a2 * self.ep * f)

    def dbar_inv_adj(self, w):
        return self.ep * (-self.plan.cauchy_conj(self.c * w))

    def dbar_star_inv_adj(self, w):
        return 0.5 * self.a2 * self.em * self.plan.cauchy(self.c * w)


class SOperator:
    """``S = dbar_psi^{-1} v' dbar*_psi^{-1} v`` (``kind="F"``) or the mirror
    ``dbar*_psi^{-1} v dbar_psi^{-1} v'`` (``kind="G"``)."""

    def __init__(self, T: WeightedTransforms, v: np.ndarray, vp: np.ndarray, kind: str = "F"):
        self.T, self.v, self.vp, self.kind = T, v, vp, kind

    def __call__(self, u):
        T = self.T
        if self.kind == "F":
            return T.dbar_inv(self.vp * T.dbar_star_inv(self.v * u))
        return T.dbar_star_inv(self.v * T.dbar_inv(self.vp * u))

    def adjoint(self, w):
        T = self.T
        if self.kind == "F":
            return np.conj(self.v) * T.dbar_star_inv_adj(np.conj(self.vp) * T.dbar_inv_adj(w))
        return np.conj(self.vp) * T.dbar_inv_adj(np.conj(self.v) * T.dbar_star_inv_adj(w))


def _lp(u, c, p, dA):
    return float((np.sum(np.abs(u) ** p * c) * dA) ** (1.0 / p))


def _sample_inside(grid: ChartGrid, f) -> np.ndarray:
    """Samples of ``f`` on the grid, zero where the coverage vanishes."""
    with np.errstate(all="ignore"):
        vals = np.asarray(f(grid.X, grid.Y)) * np.ones(grid.shape)
    return np.where(grid.coverage > 0, np.nan_to_num(vals), 0.0)


def operator_norm(S: SOperator, r: float = 2.0, tol: float = 1e-3, max_iter: int = 60,
                  seed: int = 0) -> float:
    """Power-iteration estimate of ``||S||_{L^r(M0) -> L^r(M0)}``.

    For ``r = 2`` the iteration is on ``S*S``; otherwise the nonlinear power
    method with duality maps ``u -> |u|^{r-1} sign(u)`` is used.

    Raises
    ------
    ConvergenceError
        Relative change above ``tol`` after ``max_iter`` iterations.
    """
    g = S.T.grid
    c = g.coverage
    dA = g.spacing ** 2
    rng = np.random.default_rng(seed)
    x = (rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape)) * (c > 0)
    x /= _lp(x, c, r, dA)
    rs = r / (r - 1.0)
    est = 0.0
    for it in range(max_iter):
        y = S(x) * (c > 0)
        ny = _lp(y, c, r, dA)
        if ny == 0.0:
            return 0.0
        new = ny
        if r == 2.0:
            z = S.adjoint(y) * (c > 0)
        else:
            dual = np.abs(y) ** (r - 1) * np.exp(1j * np.angle(y)) / ny ** (r - 1)
            z = S.adjoint(dual) * (c > 0)
            z = np.abs(z) ** (rs - 1) * np.exp(1j * np.angle(z))
        nz = _lp(z, c, r, dA)
        if nz == 0.0:
            return 0.0
        x = z / nz
        if it > 2 and abs(new - est) <= tol * new:
            return new
        est = new
    raise ConvergenceError(f"power iteration did not converge (last estimate {est:.4e})")


def s_h_operator_norm(v: ArrayFn, vp: ArrayFn, phase: HolomorphicMorse, h: float, domain: Domain,
                      r: float = 2.0, spacing: Optional[float] = None, kind: str = "F",
                      tol: float = 1e-3) -> float:
    """Operator norm of ``S_h`` on ``L^r(M0)`` (grid estimate)."""
    grid = make_grid(domain, spacing or sweep_spacing(h), collar_width=0.0)
    T = WeightedTransforms(grid, _sample_inside(grid, phase.psi), h)
    S = SOperator(T, _sample_inside(grid, v).astype(complex), _sample_inside(grid, vp).astype(complex), kind)
    if not np.any(S.v) or not np.any(S.vp):
        return 0.0
    return operator_norm(S, r, tol)


# ----------------------------------------------------------------------------
# CGO solutions
# ----------------------------------------------------------------------------

@dataclass
class CgoSolution:
    """CGO solution in conjugated form.

    ``F = (e^{s Phi/h} P, e^{s conj(Phi)/h} Q)`` with ``P = p0 + r``,
    ``Q = q0 + s_rem``.
    """

    kind: str                 # "F" or "G"
    h: float
    sign: int
    phase: HolomorphicMorse
    amplitude: Amplitude
    grid: ChartGrid
    p0: np.ndarray
    q0: np.ndarray
    r: np.ndarray
    s: np.ndarray
    terms: int
    term_norms: List[float]
    tail_bound: float
    residual: float
    v: np.ndarray = field(repr=False, default=None)
    vp: np.ndarray = field(repr=False, default=None)
    transforms: WeightedTransforms = field(repr=False, default=None)

    @property
    def P(self) -> np.ndarray:
        return self.p0 + self.r

    @property
    def Q(self) -> np.ndarray:
        return self.q0 + self.s

    def remainder_norms(self) -> Tuple[float, float]:
        g = self.grid
        return g.l2_norm(self.r), g.l2_norm(np.sqrt(2.0 / g.alpha2) * self.s)

    def spinor(self) -> Tuple[np.ndarray, np.ndarray]:
        """Unconjugated components on the grid (may overflow for small h)."""
        Phi = self.phase(self.grid.z)
        return (np.exp(self.sign * Phi / self.h) * self.P,
                np.exp(self.sign * np.conj(Phi) / self.h) * self.Q)

    def boundary_traces(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """``(P, Q)`` at off-grid points (e.g. on the boundary), evaluating
        the same discrete transforms that define ``r`` and ``s``."""
        T = self.transforms
        pts = np.asarray(points, complex)
        if self.kind == "F":
            r = -T.plan.evaluate(T.c * T.em * self.vp * self.Q, pts)
            s = 0.5 * T.plan.evaluate(T.c * T.a2 * T.ep * self.v * self.P, pts, conjugate=True)
            return r, self.amplitude.conj_coefficient(pts) + s
        s = 0.5 * T.plan.evaluate(T.c * T.a2 * T.ep * self.v * self.P, pts, conjugate=True)
        r = -T.plan.evaluate(T.c * T.em * self.vp * self.Q, pts)
        return self.amplitude(pts) + r, s


def _neumann(S: SOperator, first: np.ndarray, grid: ChartGrid, tail: float, cap: int,
             norm_S: Optional[float]):
    total = first.copy()
    t = first
    norms = [grid.l2_norm(first, metric=False)]
    j = 0
    while norms[-1] >= tail:
        j += 1
        if j > cap:
            raise ConvergenceError(f"Neumann series not converged after {cap} terms "
                                   f"(last term {norms[-1]:.2e})")
        t = S(t)
        n = grid.l2_norm(t, metric=False)
        if j > 3 and n > norms[-1] * 1.5 and n > norms[0]:
            raise ConvergenceError("Neumann series divergent: decrease h")
        total += t
        norms.append(n)
    if norm_S is not None and norm_S < 1:
        bound = norms[0] * norm_S ** (j + 1) / (1 - norm_S)
    else:
        ratios = [norms[i + 1] / norms[i] for i in range(len(norms) - 1) if norms[i] > 0]
        q = max(ratios[-3:]) if ratios else 0.0
        bound = norms[-1] * q / (1 - q) if q < 1 else np.inf
    return total, j + 1, norms, bound


def build_cgo(kind: str, v: ArrayFn, vp: ArrayFn, phase: HolomorphicMorse, amplitude: Amplitude,
              h: float, domain: Domain, sign: int = 1, spacing: Optional[float] = None,
              grid: Optional[ChartGrid] = None, tail: float = 1e-12, cap: int = 200,
              check_norm: bool = False) -> CgoSolution:
    """Neumann-series construction of ``F_h`` (``kind="F"``) or ``G_h``.

    Parameters
    ----------
    v, vp : callable
        Diagonal entries of the potential of the system being solved (pass
        conjugates for the adjoint system).
    sign : {+1, -1}
        Phase ``e^{sign Phi/h}``.
    check_norm : bool
        Estimate ``||S_h||`` first and refuse to sum when it is >= 1.

    Raises
    ------
    ConvergenceError
        ``||S_h|| >= 1`` or the series does not converge within ``cap`` terms.
    """
    if kind not in ("F", "G"):
        raise ValueError("kind must be 'F' or 'G'")
    grid = grid or make_grid(domain, spacing or sweep_spacing(h), collar_width=0.0)
    T = WeightedTransforms(grid, _sample_inside(grid, phase.psi), h, sign)
    inside = grid.coverage > 0
    vv = _sample_inside(grid, v).astype(complex)
    vpv = _sample_inside(grid, vp).astype(complex)
    S = SOperator(T, vv, vpv, kind)
    nS = None
    if check_norm and np.any(vv) and np.any(vpv):
        nS = operator_norm(S)
        if nS >= 1:
            raise ConvergenceError(f"Neumann series divergent: decrease h (||S_h|| = {nS:.3f})")
    z = np.where(inside, grid.z, 0.0)
    if kind == "F":
        p0 = np.zeros(grid.shape, complex)
        q0 = amplitude.conj_coefficient(z)
        first = -T.dbar_inv(vpv * q0)
        r, n_terms, norms, bound = _neumann(S, first, grid, tail, cap, nS)
        s = -T.dbar_star_inv(vv * r)
    else:
        p0 = amplitude(z)
        q0 = np.zeros(grid.shape, complex)
        first = -T.dbar_star_inv(vv * p0)
        s, n_terms, norms, bound = _neumann(S, first, grid, tail, cap, nS)
        r = -T.dbar_inv(vpv * s)
    sol = CgoSolution(kind, h, sign, phase, amplitude, grid, p0, q0, r, s, n_terms, norms,
                      float(bound), 0.0, vv, vpv, T)
    sol.residual = integral_equation_residual(sol)
    return sol


def build_F_h(v, vp, phase, b: Amplitude, h, domain, **kw) -> CgoSolution:
    """``F_h = (e^{Phi/h} r, e^{conj(Phi)/h}(b + s))``."""
    return build_cgo("F", v, vp, phase, b, h, domain, **kw)


def build_G_h(v, vp, phase, a: Amplitude, h, domain, **kw) -> CgoSolution:
    """``G_h = (e^{Phi/h}(a + r), e^{conj(Phi)/h} s)``."""
    return build_cgo("G", v, vp, phase, a, h, domain, **kw)


def integral_equation_residual(sol: CgoSolution) -> float:
    """Relative residual of ``r = -dbar_psi^{-1}(v' Q)``, ``s = -dbar*_psi^{-1}(v P)``
    in ``L^2(M0)``, relative to the norm of ``(P, Q)``."""
    T, g = sol.transforms, sol.grid
    e1 = sol.r + T.dbar_inv(sol.vp * sol.Q)
    e2 = sol.s + T.dbar_star_inv(sol.v * sol.P)
    w = np.sqrt(2.0 / g.alpha2)
    num = np.hypot(g.l2_norm(e1), g.l2_norm(w * e2))
    den = np.hypot(g.l2_norm(sol.P), g.l2_norm(w * sol.Q))
    return float(num / den) if den > 0 else 0.0


def dirac_apply(u: np.ndarray, w: np.ndarray, v, vp, grid: ChartGrid) -> Tuple[np.ndarray, np.ndarray]:
    """``(D + diag(v, v'))(u, w dzbar)`` by finite differences."""
    return (-2.0 / grid.alpha2 * d_z(w, grid) + v * u, d_zbar(u, grid) + vp * w)


def differential_residual(sol: CgoSolution, margin: float = 0.05) -> float:
    """Finite-difference residual of the conjugated system away from the
    boundary (diagnostic; limited by stencil error on the oscillating weight)."""
    g, T = sol.grid, sol.transforms
    e1, e2 = dirac_apply(sol.P, sol.Q, T.ep * sol.v, T.em * sol.vp, g)
    inner = g.domain.signed_distance(g.X, g.Y) < -margin
    w = np.sqrt(2.0 / g.alpha2)
    num = np.sqrt(np.sum((np.abs(e1) ** 2 + np.abs(w * e2) ** 2)[inner]))
    den = np.sqrt(np.sum((np.abs(sol.v * sol.P) ** 2 + np.abs(w * sol.vp * sol.Q) ** 2)[inner]))
    return float(num / den) if den > 0 else float(num)


def stationary_phase_constant(phase: HolomorphicMorse, z0: complex, h: float, grid: ChartGrid,
                              sign: int = -1, width: Optional[float] = None,
                              amplitude: Optional[ArrayFn] = None) -> complex:
    """``(1/h) int e^{2 i sign psi/h} g dA / g(z0)`` for a Gaussian ``g`` at ``z0``
    (times ``amplitude`` when given), by the grid quadrature.

    The stationary-phase limit is ``pi e^{2 i sign psi(z0)/h} / |Phi''(z0)|``.
    """
    z0 = complex(z0)
    if width is None:
        width = min(0.25, 0.25 * -grid.domain.signed_distance(z0.real, z0.imag))
    g = np.exp(-np.abs(grid.z - z0) ** 2 / width ** 2)
    if amplitude is not None:
        g = g * _sample_inside(grid, amplitude)
        g0 = complex(amplitude(np.array(z0.real), np.array(z0.imag)))
    else:
        g0 = 1.0
    psi = _sample_inside(grid, phase.psi)
    val = grid.integrate(np.exp(2j * sign * psi / h) * g) / (h * g0)
    return complex(val)


def stationary_phase_limit(phase: HolomorphicMorse, z0: complex, h: float, sign: int = -1) -> complex:
    z0 = complex(z0)
    return complex(np.pi * np.exp(2j * sign * phase.psi(z0.real, z0.imag) / h)
                   / abs(phase.second_derivative(z0)))


def remainder_sweep(v, vp, phase, amp, domain, hs: Sequence[float], kind: str = "F") -> Tuple[DecayFit, List[CgoSolution]]:
    """``||r_h|| + ||s_h||`` over an h-sweep with its log-log fit."""
    sols, norms = [], []
    for h in hs:
        sol = build_cgo(kind, v, vp, phase, amp, h, domain)
        sols.append(sol)
        norms.append(sum(sol.remainder_norms()))
    return DecayFit.fit(hs, norms, f"cgo_{kind}_remainder"), sols


# ----------------------------------------------------------------------------
# harmonic functions with integer periods
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class PeriodicHarmonic:
    """``phi = c log|z| + Re(sum_n a_n z^n)`` and ``F = z^c exp(sum_n a_n z^n)``.

    ``F`` is single valued iff ``c`` is an integer, i.e. the period
    ``M(phi) = int *dphi`` over the hole loop lies in ``2 pi Z``.
    ``psi = c arg z + Im(...)`` is the (multivalued) conjugate with
    ``d psi = *d phi``, so ``F = e^{phi + i psi}`` and ``dF = 2 F d phi``.
    """

    c: float
    coeffs: Tuple[complex, ...]   # a_1, a_2, ...

    @property
    def integer_periods(self) -> bool:
        return abs(self.c - round(self.c)) < 1e-12

    def _poly(self, z):
        z = np.asarray(z, complex)
        out = np.zeros_like(z)
        for n, a in enumerate(self.coeffs, start=1):
            out = out + a * z ** n
        return out

    def _dpoly(self, z):
        z = np.asarray(z, complex)
        out = np.zeros_like(z)
        for n, a in enumerate(self.coeffs, start=1):
            out = out + n * a * z ** (n - 1)
        return out

    def __call__(self, x, y):
        z = np.asarray(x) + 1j * np.asarray(y)
        out = np.real(self._poly(z))
        if self.c:
            out = out + self.c * np.log(np.abs(z))
        return out

    def grad(self, x, y):
        z = np.asarray(x) + 1j * np.asarray(y)
        # for holomorphic G = phi + i psi: dphi/dx - i dphi/dy = G'(z)
        G1 = self._dpoly(z) + (self.c / z if self.c else 0.0)
        return np.real(G1), -np.imag(G1)

    def star_d(self) -> SmoothForm:
        """``*d phi = -phi_y dx + phi_x dy`` (closed; equals ``d psi``)."""
        def ax(x, y):
            return -self.grad(x, y)[1]

        def ay(x, y):
            return self.grad(x, y)[0]
        return SmoothForm(ax, ay, lambda x, y: np.zeros(np.broadcast(x, y).shape), "*dphi")

    def F(self, z, k: int = 1):
        """``F^k`` (requires integer periods)."""
        if not self.integer_periods:
            raise HypothesisError("F is multivalued for non-integer periods")
        z = np.asarray(z, complex)
        return z ** (k * int(round(self.c))) * np.exp(k * self._poly(z))

    def period(self, radius: float = 0.65, n: int = 2048) -> float:
        """``int *d phi`` over a counter-clockwise circle."""
        return float(np.real(loop_integral(self.star_d(), circle_loop(radius, n))))


def periodic_harmonic(domain: Domain, periods: Sequence[float] = (), coeffs: Sequence[complex] = (0.5,),
                      tol: float = 1e-9) -> PeriodicHarmonic:
    """Harmonic function with prescribed periods in ``2 pi Z``.

    Raises
    ------
    HypothesisError
        A target period is not an integer multiple of ``2 pi`` (or periods
        are given on the disk).
    """
    periods = list(periods)
    if not domain.is_annulus:
        if any(abs(p) > tol for p in periods):
            raise HypothesisError("the disk has no periods")
        return PeriodicHarmonic(0.0, tuple(complex(a) for a in coeffs))
    if len(periods) != 1:
        raise HypothesisError("the annulus has exactly one period")
    k = periods[0] / (2 * np.pi)
    if abs(k - round(k)) > tol:
        raise HypothesisError(f"period {periods[0]} is not in 2 pi Z")
    return PeriodicHarmonic(float(round(k)), tuple(complex(a) for a in coeffs))


@dataclass
class GeneralizedCgo:
    """``u = F^k (e^{-i alpha} + r)`` at mesh nodes."""

    k: int
    nodes: np.ndarray
    base: np.ndarray          # e^{-i alpha} at nodes
    r: np.ndarray
    r_l2: float
    r_h1: float
    residual: float

    def values(self, phi: PeriodicHarmonic) -> np.ndarray:
        z = self.nodes[:, 0] + 1j * self.nodes[:, 1]
        return phi.F(z, self.k) * (self.base + self.r)


def connection_primitive(X: SmoothForm, domain: Domain, points: np.ndarray,
                         spacing: float = 2.0 ** -8) -> np.ndarray:
    """``alpha`` with ``dbar alpha = X_zbar`` (``X_zbar = (X_x + i X_y)/2``) at
    ``points``: Cauchy transform of the zero extension of ``X_zbar``."""
    grid = make_grid(domain, spacing, collar_width=0.0)
    ax, ay = X(grid.X, grid.Y)
    xz = 0.5 * (np.asarray(ax) + 1j * np.asarray(ay)) * np.ones(grid.shape)
    return plan_for(grid).evaluate(grid.coverage * xz, np.asarray(points, complex))


def generalized_cgo(op, phi: PeriodicHarmonic, k: int, alpha: Optional[ArrayFn] = None,
                    adjoint: bool = False) -> GeneralizedCgo:
    """Generalized CGO ``u = F^k (e^{-i alpha} + r)`` solving ``L u = 0``.

    Conjugating ``L`` by ``F^k = e^{k phi} e^{i k psi}`` gives the weighted
    operator with weight ``phi``, ``h = 1/k`` and connection ``X + k *d phi``;
    ``r`` is its least-norm solution with right-hand side
    ``-L_conj(e^{-i alpha})`` (assembled weakly).  The order-``k`` part of
    that right-hand side vanishes when ``dbar alpha = X_zbar``, which is the
    default ``alpha``.

    With ``adjoint=True`` the factor is ``conj(F)^{-k}`` (weight ``-phi``,
    same connection shift) and the default is ``alpha = conj(beta)`` with
    ``dbar beta = X_zbar``, so that ``d alpha = X_z``.

    Raises
    ------
    HypothesisError
        Non-integer periods.
    NumericalError
        Weighted solve failure (increase ``k``).
    """
    from .carleman import weighted_matrices, weighted_solve
    from .errors import NumericalError

    if not phi.integer_periods:
        raise HypothesisError("generalized CGOs need integer periods")
    if k < 1:
        raise ValueError("k must be a positive integer")
    nodes = op.mesh.nodes
    zn = nodes[:, 0] + 1j * nodes[:, 1]
    if alpha is None:
        a = connection_primitive(op.X, op.domain, zn)
        a = np.conj(a) if adjoint else a
    else:
        a = np.asarray(alpha(nodes[:, 0], nodes[:, 1]))
    weight = _ScaledHarmonic(phi, -1.0 if adjoint else 1.0)
    shift = phi.star_d() * float(k)
    h = 1.0 / k
    base = np.exp(-1j * a)
    Bm, _, _ = weighted_matrices(op, weight, h, shift)
    F = -(Bm @ base)
    try:
        sol = weighted_solve(op, weight, h, F=F, shift=shift)
    except NumericalError as exc:
        raise NumericalError(f"generalized CGO solve failed at k={k}; use a larger k ({exc})") from None
    I = op.interior_nodes
    fn = np.linalg.norm(F[I])
    res = float(np.linalg.norm((Bm @ (base + sol.U))[I]) / fn) if fn > 0 else 0.0
    return GeneralizedCgo(k, nodes, base, sol.U, sol.l2, sol.dl2, res)


class _ScaledHarmonic:
    """``s * phi`` with analytic gradient."""

    def __init__(self, phi: PeriodicHarmonic, s: float):
        self.phi, self.s = phi, s

    def __call__(self, x, y):
        return self.s * self.phi(x, y)

    def grad(self, x, y):
        gx, gy = self.phi.grad(x, y)
        return self.s * gx, self.s * gy
