"""Solid Cauchy transforms on chart grids and their phase-weighted versions.

``dbar_inverse`` is the convolution ``u(z) = (1/pi) int f(z') / (z - z') dA'``
so that ``d_zbar u = f``.  ``dbar_star_inverse`` returns the ``dzbar``
coefficient ``w(z) = -(1/(2 pi)) int f(z') alpha2(z') / (conj z - conj z') dA'``,
which satisfies ``dbar^*(w dzbar) = -(2/alpha2) d_z w = f``.

Grid data are treated as cell averages: the kernel is integrated exactly over
every grid cell (closed-form antiderivative near the singularity, a
fourth-order moment expansion further out) and the convolution is carried
out with zero-padded FFTs.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.fft as sfft
from scipy.ndimage import map_coordinates

from .geometry import ChartGrid, Domain, make_grid

ArrayFn = Callable[[np.ndarray, np.ndarray], np.ndarray]

_NEAR = 8  # cells (Chebyshev distance) integrated with the exact formula


def _antiderivative(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """``G`` with ``d^2 G / dx dy = 1 / (x + i y)``."""
    r2 = x * x + y * y
    lg = np.log(np.where(r2 > 0, r2, 1.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        f1 = np.where(x != 0, x * np.arctan(y / np.where(x != 0, x, 1.0)), 0.0) + 0.5 * y * lg
        f2 = np.where(y != 0, y * np.arctan(x / np.where(y != 0, y, 1.0)), 0.0) + 0.5 * x * lg
    return f1 - 1j * f2


def cell_integral(w: np.ndarray, h: float) -> np.ndarray:
    """``int_{square of side h centred at w} dA(s) / s`` for complex ``w``."""
    w = np.asarray(w, dtype=complex)
    x, y = w.real, w.imag
    a, b = 0.5 * h, 0.5 * h
    out = (_antiderivative(x + a, y + b) - _antiderivative(x - a, y + b)
           - _antiderivative(x + a, y - b) + _antiderivative(x - a, y - b))
    far = np.maximum(np.abs(x), np.abs(y)) > _NEAR * h
    if np.any(far):
        wf = w[far]
        out[far] = h * h / wf - h ** 6 / (60.0 * wf ** 5)
    return out


def _lattice_kernel(n: int, h: float) -> np.ndarray:
    """``(1/pi) cell_integral`` at lattice offsets ``-(n-1)..(n-1)`` per axis."""
    m = np.arange(-(n - 1), n) * h
    W = m[:, None] + 1j * m[None, :]
    k = np.empty(W.shape, complex)
    near = (np.abs(W.real) <= _NEAR * h) & (np.abs(W.imag) <= _NEAR * h)
    k[near] = cell_integral(W[near], h)
    wf = W[~near]
    k[~near] = h * h / wf - h ** 6 / (60.0 * wf ** 5)
    return k / np.pi


class CauchyKernelPlan:
    """FFT plan for linear convolution with the cell-integrated ``1/(pi z)``.

    Parameters
    ----------
    grid : ChartGrid
        Square grid; inputs must have ``grid.shape``.
    dtype : numpy dtype
        ``complex128`` (default) or ``complex64`` for large sweeps.
    split_radius : float
        Width, in cells, of the Gaussian near/far split used by
        :meth:`evaluate`.
    """

    def __init__(self, grid: ChartGrid, dtype=np.complex128, split_radius: float = 4.0):
        n1, n2 = grid.shape
        if n1 != n2:
            raise ValueError("plan requires a square grid")
        self.grid = grid
        self.n = n1
        self.dtype = np.dtype(dtype)
        self.size = sfft.next_fast_len(2 * n1 - 1)
        if self.size < 2 * n1 - 1:
            raise ValueError("padded size too small for linear convolution")
        self.h = grid.spacing
        self._khat = self._transform(_lattice_kernel(n1, self.h))
        self._split = split_radius * self.h
        self._far_hat: Optional[np.ndarray] = None

    # internal --------------------------------------------------------------
    def _transform(self, k: np.ndarray) -> np.ndarray:
        n, N = self.n, self.size
        pad = np.zeros((N, N), dtype=self.dtype)
        # offsets 0..n-1 at the start, negative offsets wrapped to the end
        pad[:n, :n] = k[n - 1:, n - 1:]
        pad[:n, N - n + 1:] = k[n - 1:, :n - 1]
        pad[N - n + 1:, :n] = k[:n - 1, n - 1:]
        pad[N - n + 1:, N - n + 1:] = k[:n - 1, :n - 1]
        return sfft.fft2(pad, overwrite_x=True)

    def _convolve(self, f: np.ndarray, khat: np.ndarray) -> np.ndarray:
        n, N = self.n, self.size
        pad = np.zeros((N, N), dtype=self.dtype)
        pad[:n, :n] = f
        F = sfft.fft2(pad, overwrite_x=True)
        F *= khat
        out = sfft.ifft2(F, overwrite_x=True)[:n, :n]
        return np.asarray(out, dtype=np.complex128)

    # public ----------------------------------------------------------------
    def cauchy(self, f: np.ndarray) -> np.ndarray:
        """``(1/pi) int f(z') / (z - z') dA'`` at the grid nodes."""
        return self._convolve(f, self._khat)

    def cauchy_conj(self, f: np.ndarray) -> np.ndarray:
        """``(1/pi) int f(z') / (conj z - conj z') dA'`` at the grid nodes."""
        return np.conj(self._convolve(np.conj(f), self._khat))

    def _far_kernel(self, w: np.ndarray) -> np.ndarray:
        r2 = np.abs(w) ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            k = -np.expm1(-r2 / self._split ** 2) * self.h ** 2 / (np.pi * w)
        return np.where(r2 > 0, k, 0.0)

    def evaluate(self, f: np.ndarray, points: np.ndarray, conjugate: bool = False) -> np.ndarray:
        """Evaluate the same discrete Cauchy sum at arbitrary points.

        The kernel is split into a Gaussian-localized near part, summed
        directly, and a smooth far part, convolved on the grid and
        interpolated with quintic splines.
        """
        if conjugate:
            return np.conj(self.evaluate(np.conj(f), points, False))
        pts = np.asarray(points, dtype=complex).ravel()
        g, h, n = self.grid, self.h, self.n
        if self._far_hat is None:
            m = np.arange(-(n - 1), n) * h
            self._far_hat = self._transform(self._far_kernel(m[:, None] + 1j * m[None, :]))
        far = self._convolve(f, self._far_hat)
        ix = (pts.real - g.x[0]) / h
        iy = (pts.imag - g.y[0]) / h
        coords = np.vstack([ix, iy])
        val = (map_coordinates(far.real, coords, order=5, mode="nearest")
               + 1j * map_coordinates(far.imag, coords, order=5, mode="nearest"))
        # near part
        rad = int(np.ceil(6.0 * self._split / h))
        off = np.arange(-rad, rad + 1)
        ox, oy = np.meshgrid(off, off, indexing="ij")
        ox, oy = ox.ravel(), oy.ravel()
        keep = ox ** 2 + oy ** 2 <= (rad + 1) ** 2
        ox, oy = ox[keep], oy[keep]
        cx, cy = np.rint(ix).astype(int), np.rint(iy).astype(int)
        out = np.empty(pts.size, complex)
        chunk = max(1, 200000 // ox.size)
        for s in range(0, pts.size, chunk):
            sl = slice(s, s + chunk)
            jx = cx[sl, None] + ox[None, :]
            jy = cy[sl, None] + oy[None, :]
            ok = (jx >= 0) & (jx < n) & (jy >= 0) & (jy < n)
            jx, jy = np.clip(jx, 0, n - 1), np.clip(jy, 0, n - 1)
            w = pts[sl, None] - (g.x[jx] + 1j * g.y[jy])
            kern = cell_integral(w, h) / np.pi - self._far_kernel(w)
            out[sl] = np.sum(np.where(ok, f[jx, jy] * kern, 0.0), axis=1)
        return (out + val).reshape(np.shape(points))


_PLANS: Dict[Tuple[float, int, int, str], CauchyKernelPlan] = {}


def plan_for(grid: ChartGrid, dtype=np.complex128) -> CauchyKernelPlan:
    """Cached plan for a grid (keyed by spacing, size, origin and dtype)."""
    key = (grid.spacing, grid.shape[0], float(grid.x[0]), np.dtype(dtype).str)
    p = _PLANS.get(key)
    if p is None:
        if len(_PLANS) >= 4:
            _PLANS.pop(next(iter(_PLANS)))
        p = CauchyKernelPlan(grid, dtype)
        _PLANS[key] = p
    return p


# ----------------------------------------------------------------------------
# right inverses
# ----------------------------------------------------------------------------

def dbar_inverse(w: np.ndarray, grid: ChartGrid, plan: Optional[CauchyKernelPlan] = None,
                 extension: str = "zero") -> np.ndarray:
    """Right inverse of ``dbar`` on ``w dzbar`` (coefficient array ``w``)."""
    plan = plan or plan_for(grid)
    return plan.cauchy(grid.extend(w, extension))


def dbar_star_inverse(f: np.ndarray, grid: ChartGrid, plan: Optional[CauchyKernelPlan] = None,
                      extension: str = "zero") -> np.ndarray:
    """Right inverse of ``dbar^*``; returns the ``dzbar`` coefficient."""
    plan = plan or plan_for(grid)
    return -0.5 * plan.cauchy_conj(grid.extend(f, extension) * grid.alpha2)


def _phase(psi: np.ndarray, h: float, sign: float) -> np.ndarray:
    if not h > 0:
        raise ValueError("h must be positive")
    return np.exp(sign * 2j * psi / h)


def dbar_inverse_weighted(w: np.ndarray, psi: np.ndarray, h: float, grid: ChartGrid,
                          plan: Optional[CauchyKernelPlan] = None, extension: str = "zero") -> np.ndarray:
    """``R dbar^{-1} e^{-2i psi/h} E w``."""
    return dbar_inverse(_phase(psi, h, -1.0) * w, grid, plan, extension)


def dbar_star_inverse_weighted(f: np.ndarray, psi: np.ndarray, h: float, grid: ChartGrid,
                               plan: Optional[CauchyKernelPlan] = None, extension: str = "zero") -> np.ndarray:
    """``R dbar^{*-1} e^{2i psi/h} E f`` (``dzbar`` coefficient)."""
    return dbar_star_inverse(_phase(psi, h, 1.0) * f, grid, plan, extension)


def dbar_inverse_adjoint_weighted(v: np.ndarray, psi: np.ndarray, h: float, grid: ChartGrid,
                                  plan: Optional[CauchyKernelPlan] = None) -> np.ndarray:
    """``E^* (dbar^{-1})^* R^* (e^{-2i psi/h} v)`` for the Euclidean pairing.

    The ``L^2`` adjoint of ``f -> (1/pi) int f/(z - z')`` is
    ``g -> -(1/pi) int g(z') / (conj z - conj z') dA'``.
    """
    plan = plan or plan_for(grid)
    return -plan.cauchy_conj(_phase(psi, h, -1.0) * v * grid.coverage) * grid.coverage


# ----------------------------------------------------------------------------
# decay measurements
# ----------------------------------------------------------------------------

@dataclass
class DecayFit:
    """Least-squares fit ``log norm = slope * log h + intercept``."""

    h: np.ndarray
    norms: np.ndarray
    slope: float
    intercept: float
    residual: float
    label: str = ""

    def __post_init__(self):
        self.h = np.asarray(self.h, float)
        self.norms = np.asarray(self.norms, float)
        if self.h.size < 6:
            raise ValueError("a decay fit needs at least 6 h values")
        if np.log10(self.h.max() / self.h.min()) < 2.0 - 1e-9:
            raise ValueError("h values must span at least two decades")

    @classmethod
    def fit(cls, h: Sequence[float], norms: Sequence[float], label: str = "") -> "DecayFit":
        h = np.asarray(h, float)
        norms = np.asarray(norms, float)
        if h.size < 6:
            raise ValueError("a decay fit needs at least 6 h values")
        lh, ln = np.log(h), np.log(np.maximum(norms, np.finfo(float).tiny))
        A = np.column_stack([lh, np.ones_like(lh)])
        coef, *_ = np.linalg.lstsq(A, ln, rcond=None)
        res = float(np.sqrt(np.mean((A @ coef - ln) ** 2)))
        return cls(h, norms, float(coef[0]), float(coef[1]), res, label)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["h", "norm"])
            for a, b in zip(self.h, self.norms):
                w.writerow([f"{a:.12e}", f"{b:.12e}"])
            w.writerow(["# slope", f"{self.slope:.12e}"])
            w.writerow(["# intercept", f"{self.intercept:.12e}"])
            w.writerow(["# residual", f"{self.residual:.12e}"])

    @classmethod
    def from_csv(cls, path) -> "DecayFit":
        hs, ns, meta = [], [], {}
        with open(path) as fh:
            for row in csv.reader(fh):
                if not row or row[0] == "h":
                    continue
                if row[0].startswith("#"):
                    meta[row[0][1:].strip()] = float(row[1])
                else:
                    hs.append(float(row[0]))
                    ns.append(float(row[1]))
        return cls(np.array(hs), np.array(ns), meta["slope"], meta["intercept"], meta["residual"])


def default_h_sweep(n: int = 12, lo: float = 1e-3, hi: float = 1e-1) -> np.ndarray:
    return np.geomspace(hi, lo, n)


def sweep_spacing(h: float, max_spacing: float = 2.0 ** -8, ratio: float = 1.0) -> float:
    """Grid spacing used at semiclassical parameter ``h``."""
    return min(max_spacing, ratio * h)


OPERATORS = ("dbar_inverse", "dbar_star_inverse", "dbar_inverse_adjoint")


def measure_decay(operator: str, psi: ArrayFn, data: ArrayFn, domain: Domain,
                  hs: Optional[Sequence[float]] = None, q: float = 2.0,
                  spacing_ratio: float = 1.0, max_spacing: float = 2.0 ** -8,
                  dtype=np.complex128) -> DecayFit:
    """Measure ``||op_psi(data)||_{L^q(M0)}`` over an h-sweep and fit a slope.

    Parameters
    ----------
    operator : {"dbar_inverse", "dbar_star_inverse", "dbar_inverse_adjoint"}
    psi, data : callable
        ``f(x, y)`` giving the weight and the input coefficient.
    """
    if operator not in OPERATORS:
        raise ValueError(f"unknown operator {operator!r}")
    hs = default_h_sweep() if hs is None else np.asarray(hs, float)
    if hs.size < 6:
        raise ValueError("measure_decay needs at least 6 h values")
    norms = []
    for h in hs:
        grid = make_grid(domain, sweep_spacing(h, max_spacing, spacing_ratio), collar_width=0.0)
        plan = plan_for(grid, dtype)
        ps, f = grid.sample(psi), grid.sample(data).astype(complex)
        if operator == "dbar_inverse":
            out = dbar_inverse_weighted(f, ps, h, grid, plan)
            nrm = grid.lp_norm(out, q)
        elif operator == "dbar_star_inverse":
            out = dbar_star_inverse_weighted(f, ps, h, grid, plan)
            nrm = grid.lp_norm(np.sqrt(2.0 / grid.alpha2) * out, q)
        else:
            out = dbar_inverse_adjoint_weighted(f, ps, h, grid, plan)
            nrm = grid.lp_norm(out, q, metric=False)
        norms.append(nrm)
    return DecayFit.fit(hs, norms, operator)
