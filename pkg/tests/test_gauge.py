import numpy as np
import pytest
from hypothesis import given, strategies as st

from magcgo.errors import HypothesisError
from magcgo.fields import angular_form, exact_form, gaussian, gaussian_vortex, uniform_field, zero_form
from magcgo.forward import MagneticOperator
from magcgo.gauge import (boundary_normalization, build_gauge_isomorphism, holomorphic_extension,
                          identify_curvature_and_q, is_holomorphic_boundary_value, laplacian_identity_residual,
                          parallel_transport, recover_flux_mod_2pi, reduce_mod_2pi, reduce_to_dirac, solve_alpha)
from magcgo.geometry import circle_loop, cohomology_dual_basis


def bump_potential(x, y, inner=0.3):
    r2 = x * x + y * y
    return (r2 - inner ** 2) * (1 - r2) * (1 + 0.5 * x)


def bump_grad(x, y, inner=0.3):
    r2 = x * x + y * y
    g = (r2 - inner ** 2) * (1 - r2)
    dg = 2 * (1 + inner ** 2 - 2 * r2)
    return dg * x * (1 + 0.5 * x) + 0.5 * g, dg * y * (1 + 0.5 * x)


@pytest.mark.parametrize("A", [lambda x, y: 0 * x + 1.0, lambda x, y: x + 1j * y,
                               lambda x, y: np.exp(-(x * x + y * y))])
def test_alpha_solves_dbar(disk, A):
    fac = solve_alpha(A, disk, spacing=2.0 ** -7)
    assert fac.dbar_residual() < 1e-5


def test_alpha_of_constant_is_zbar(disk):
    # dbar zbar = 1; the two differ by an entire function
    fac = solve_alpha(lambda x, y: 0 * x + 1.0, disk, spacing=2.0 ** -7)
    z = np.array([0.1 + 0.2j, -0.4, 0.3j])
    diff = fac.alpha(z) - np.conj(z)
    assert is_holomorphic_boundary_value(lambda w: fac.alpha(0.5 * w) - np.conj(0.5 * w), disk,
                                         tol=1e-3, M=128).holomorphic
    assert np.all(np.isfinite(diff))


def test_laplacian_identity(annulus):
    X = gaussian_vortex(1.0, (0.1, 0.0), 0.5)
    fac = solve_alpha(X, annulus, spacing=2.0 ** -7)
    assert laplacian_identity_residual(fac.alpha_grid, fac.grid) < 1e-3


@pytest.mark.parametrize("f,expected", [(lambda z: z ** 3 - 2 * z, True), (lambda z: np.conj(z), False),
                                        (lambda z: np.exp(z), True), (lambda z: np.abs(z) ** 2 * z, True)])
def test_holomorphy_on_disk(disk, f, expected):
    # |z|^2 z equals z on the unit circle, hence extends holomorphically
    v = is_holomorphic_boundary_value(f, disk)
    assert v.holomorphic is expected
    assert (v.defect_fourier < v.tol) == (v.defect_orthogonality < v.tol)


@pytest.mark.parametrize("f,expected", [(lambda z: 1 / z + z ** 2, True), (lambda z: np.log(np.abs(z)) + 0j, False),
                                        (lambda z: np.conj(z) ** 2, False)])
def test_holomorphy_on_annulus(annulus, f, expected):
    assert is_holomorphic_boundary_value(f, annulus).holomorphic is expected


@given(st.lists(st.complex_numbers(max_magnitude=2.0), min_size=1, max_size=5),
       st.lists(st.complex_numbers(max_magnitude=0.2), min_size=0, max_size=3))
def test_laurent_polynomials_are_holomorphic(pos, neg):
    from magcgo.geometry import build_domain
    ann = build_domain("annulus", 0.3)

    def f(z):
        out = sum(c * z ** k for k, c in enumerate(pos))
        return out + sum(c * z ** -(k + 1) for k, c in enumerate(neg)) + 0 * z
    assert is_holomorphic_boundary_value(f, ann).holomorphic


def test_extension_reproduces_interior_values(annulus):
    f = lambda z: 0.2 / z + z ** 2 - 1j
    F = holomorphic_extension(f, annulus)
    z = np.array([0.5, 0.6j, -0.45 - 0.3j])
    assert np.max(np.abs(F(z) - f(z))) < 1e-10


def test_extension_rejects_non_holomorphic(disk):
    with pytest.raises(HypothesisError):
        holomorphic_extension(lambda z: np.conj(z), disk)


@given(st.floats(-100, 100))
def test_reduce_mod_2pi(x):
    r = reduce_mod_2pi(x)
    assert -np.pi < r <= np.pi
    k = (x - r) / (2 * np.pi)
    assert abs(k - round(k)) < 1e-9


@given(st.floats(-3, 3))
def test_parallel_transport_of_angular_form(c):
    T = parallel_transport(angular_form(c), circle_loop(0.6, 1024))
    assert abs(T - np.exp(-2j * np.pi * c)) < 1e-9


def test_gauge_isomorphism_of_exact_form(annulus):
    Y = exact_form(bump_potential, bump_grad)
    F = build_gauge_isomorphism(Y, annulus)
    z = np.array([0.5 + 0.1j, -0.7j, 0.4 - 0.4j])
    assert np.max(np.abs(F(z) - np.exp(1j * bump_potential(z.real, z.imag)))) < 1e-8
    assert F.boundary_defect() < 1e-10
    assert F.log_derivative_defect() < 1e-3


def test_gauge_isomorphism_with_integer_flux(annulus):
    om = cohomology_dual_basis(annulus)[0].form
    F = build_gauge_isomorphism(om * (2 * np.pi), annulus)
    assert F.single_valued_defect() < 1e-6 and F.boundary_defect() < 1e-6
    z = np.array([0.5, 0.65j])
    assert np.allclose(np.abs(F(z)), 1.0)


def test_gauge_isomorphism_rejects_half_flux(annulus):
    om = cohomology_dual_basis(annulus)[0].form
    with pytest.raises(HypothesisError, match="fluxes not integral"):
        build_gauge_isomorphism(om * np.pi, annulus)


def test_gauge_isomorphism_rejects_curvature(disk):
    with pytest.raises(HypothesisError, match="not closed"):
        build_gauge_isomorphism(uniform_field(1.0), disk)


def test_boundary_normalization_matches_normal_component(annulus):
    X1 = gaussian_vortex(1.0, (0.2, 0.0), 0.6)
    X2 = X1 + uniform_field(0.7)  # not a gauge shift; only normal traces are compared
    N = boundary_normalization(X1, X2, annulus)
    th = np.linspace(0, 2 * np.pi, 33)
    for R in (1.0, 0.3):
        x, y = R * np.cos(th), R * np.sin(th)
        a1, an = X1(x, y), N(x, y)
        n1 = a1[0] * np.cos(th) + a1[1] * np.sin(th)
        nn = an[0] * np.cos(th) + an[1] * np.sin(th)
        assert np.max(np.abs(n1 - nn)) < 1e-5
    # the added form is exact
    pts = np.array([[0.5, 0.1], [-0.2, 0.7], [0.9, -0.1]])
    d = N.curl(pts[:, 0], pts[:, 1]) - X2.curl(pts[:, 0], pts[:, 1])
    assert np.max(np.abs(d)) < 1e-3


def test_reduction_to_dirac(disk):
    op = MagneticOperator(uniform_field(1.0), gaussian(0.5, (0.1, 0.1), 0.4), disk, mesh_size=0.08)
    red = reduce_to_dirac(op)
    assert red.residual < 1e-4 < red.residual_other
    z = np.array([0.1, 0.5j])
    assert np.all(red.dirac.vp(z.real, z.imag).real < 0)


def test_dirac_coefficients_encode_curvature(disk):
    X = gaussian_vortex(1.0, (0.0, 0.0), 0.5)
    q = gaussian(0.4, (0.2, 0.0), 0.3)
    op = MagneticOperator(X, q, disk, mesh_size=0.08)
    red = reduce_to_dirac(op)
    V = (red.dirac.v, red.dirac.vp)
    rep = identify_curvature_and_q(V, V, disk)
    assert rep.curl_difference == 0 and rep.q_difference == 0
    c = rep.curl[0][rep.mask]
    from magcgo.geometry import make_grid
    g = make_grid(disk, 2.0 ** -6, collar_width=0.0)
    truth = X.curl(g.X, g.Y)[rep.mask]
    assert np.max(np.abs(c - truth)) < 2e-2 * np.max(np.abs(truth))


@pytest.mark.parametrize("t", [0.0, 0.5, 1.0])
def test_flux_recovery(annulus, t):
    X = gaussian_vortex(1.0, (0.0, 0.0), 0.6)
    om = cohomology_dual_basis(annulus)[0].form
    f1 = solve_alpha(X, annulus, spacing=2.0 ** -7)
    f2 = solve_alpha(X + om * (t * 2 * np.pi), annulus, spacing=2.0 ** -7)
    rep = recover_flux_mod_2pi(f2, f1, annulus)
    assert abs(rep.fluxes[0] - t * 2 * np.pi) < 1e-2
    assert rep.trivial is (t != 0.5)
