"""Analytic scalar and 1-form fields on the plane.

Grid-based operators act on sampled arrays; the types here describe fields
symbolically (as callables) so that they can be sampled on any grid, mesh or
curve.  Real 1-forms are written ``a dx + b dy``; the scalar curl
``db/dx - da/dy`` is carried along so that exactness can
be checked without numerical differentiation.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

ArrayFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _const(c: complex) -> ArrayFn:
    return lambda x, y: np.full(np.broadcast(np.asarray(x), np.asarray(y)).shape, c)


def _fd_curl(ax: ArrayFn, ay: ArrayFn, x, y, eps: float = 1e-4):
    # 4th-order central differences of the component callables
    def d(f, dx, dy):
        return (-f(x + 2 * dx, y + 2 * dy) + 8 * f(x + dx, y + dy)
                - 8 * f(x - dx, y - dy) + f(x - 2 * dx, y - 2 * dy)) / (12 * eps)
    return d(ay, eps, 0.0) - d(ax, 0.0, eps)


@dataclass(frozen=True)
class SmoothForm:
    """A 1-form ``ax dx + ay dy`` on (part of) the plane.

    Parameters
    ----------
    ax, ay : callable
        Components ``f(x, y) -> array``; may be complex valued.
    curl_fn : callable, optional
        Exact ``d(ax dx + ay dy) / (dx ^ dy)``.  Falls back to finite
        differences of the callables when omitted.
    name : str
        Label used in reports.
    """

    ax: ArrayFn
    ay: ArrayFn
    curl_fn: Optional[ArrayFn] = None
    name: str = "form"

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return self.ax(x, y), self.ay(x, y)

    def curl(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.curl_fn is not None:
            return self.curl_fn(x, y)
        return _fd_curl(self.ax, self.ay, x, y)

    def complex_components(self, x, y):
        """Return ``(f_z, f_zbar)`` with ``a dx + b dy = f_z dz + f_zbar dzbar``."""
        a, b = self(x, y)
        return 0.5 * (a - 1j * b), 0.5 * (a + 1j * b)

    # algebra -----------------------------------------------------------------
    def __add__(self, other: "SmoothForm") -> "SmoothForm":
        c1, c2 = self.curl_fn, other.curl_fn
        curl = None if (c1 is None or c2 is None) else (lambda x, y: c1(x, y) + c2(x, y))
        return SmoothForm(lambda x, y: self.ax(x, y) + other.ax(x, y),
                          lambda x, y: self.ay(x, y) + other.ay(x, y),
                          curl, f"{self.name}+{other.name}")

    def __mul__(self, s: complex) -> "SmoothForm":
        c = self.curl_fn
        curl = None if c is None else (lambda x, y: s * c(x, y))
        return SmoothForm(lambda x, y: s * self.ax(x, y), lambda x, y: s * self.ay(x, y),
                          curl, f"{s}*{self.name}")

    __rmul__ = __mul__

    def __neg__(self) -> "SmoothForm":
        return self * (-1.0)

    def __sub__(self, other: "SmoothForm") -> "SmoothForm":
        return self + (-other)


# catalogue ---------------------------------------------------------------------

def zero_form() -> SmoothForm:
    z = _const(0.0)
    return SmoothForm(z, z, z, "0")


def exact_form(phi: ArrayFn, grad: Callable, name: str = "dphi") -> SmoothForm:
    """``d phi`` from a potential and its gradient ``grad(x, y) -> (px, py)``."""
    return SmoothForm(lambda x, y: grad(x, y)[0], lambda x, y: grad(x, y)[1],
                      _const(0.0), name)


def uniform_field(b: float = 1.0) -> SmoothForm:
    """Symmetric-gauge potential ``(b/2)(-y dx + x dy)`` with constant curl ``b``."""
    return SmoothForm(lambda x, y: -0.5 * b * y, lambda x, y: 0.5 * b * x,
                      _const(float(b)), f"uniform({b})")


def angular_form(c: float = 1.0) -> SmoothForm:
    """``c dtheta``: closed away from the origin, period ``2 pi c``."""
    def ax(x, y):
        return -c * y / (x * x + y * y)

    def ay(x, y):
        return c * x / (x * x + y * y)
    return SmoothForm(ax, ay, _const(0.0), f"{c}*dtheta")


def gaussian_vortex(b: float = 1.0, center=(0.0, 0.0), width: float = 0.3) -> SmoothForm:
    """Potential of a Gaussian flux tube, ``curl = b exp(-|z-c|^2 / w^2)``.

    The potential is ``A_theta(r) dtheta`` with
    ``A_theta = b w^2 (1 - exp(-r^2/w^2)) / 2``; smooth at the centre.
    """
    cx, cy = center
    w2 = width * width

    def g(x, y):
        r2 = (x - cx) ** 2 + (y - cy) ** 2
        # (1 - e^{-s})/s, safe at s = 0
        s = r2 / w2
        return 0.5 * b * np.where(s > 1e-8, -np.expm1(-s) / np.where(s > 1e-8, s, 1.0), 1.0 - 0.5 * s)

    return SmoothForm(lambda x, y: -g(x, y) * (y - cy), lambda x, y: g(x, y) * (x - cx),
                      lambda x, y: b * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / w2),
                      f"vortex({b})")


def gaussian(amplitude: complex = 1.0, center=(0.0, 0.0), width: float = 0.5) -> ArrayFn:
    """Scalar ``amplitude * exp(-|z - center|^2 / width^2)``."""
    cx, cy = center
    w2 = width * width
    return lambda x, y: amplitude * np.exp(-((np.asarray(x) - cx) ** 2 + (np.asarray(y) - cy) ** 2) / w2)


def constant(c: complex) -> ArrayFn:
    return _const(c)


def smooth_step(t):
    """C-infinity transition: 0 for t <= 0, 1 for t >= 1."""
    t = np.asarray(t, dtype=float)

    def f(s):
        out = np.zeros_like(s)
        pos = s > 0
        out[pos] = np.exp(-1.0 / s[pos])
        return out
    a, b = f(t), f(1.0 - t)
    return a / (a + b)


def smooth_step_derivative(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = (t > 0) & (t < 1)
    s = t[inside]
    fa, fb = np.exp(-1.0 / s), np.exp(-1.0 / (1.0 - s))
    dfa, dfb = fa / s ** 2, -fb / (1.0 - s) ** 2
    out[inside] = (dfa * (fa + fb) - fa * (dfa + dfb)) / (fa + fb) ** 2
    return out
