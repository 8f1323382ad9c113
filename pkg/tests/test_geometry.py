import numpy as np
import pytest
from hypothesis import given, strategies as st

from magcgo.errors import DomainError
from magcgo.fields import angular_form, exact_form
from magcgo.geometry import (build_domain, build_mesh, circle_loop, cohomology_dual_basis, loop_integral,
                             make_grid, radial_arc)


def test_disk_has_one_outward_circle(disk):
    (c,) = disk.boundary
    assert c.radius == 1.0 and c.orientation == 1


def test_annulus_circles_have_opposite_orientation(annulus):
    outer, inner = annulus.boundary
    assert (outer.radius, inner.radius) == (1.0, 0.3)
    assert outer.orientation == -inner.orientation


@pytest.mark.parametrize("inner,outer", [(1.0, 0.3), (0.0, 1.0), (-0.2, 1.0), (0.5, 0.5)])
def test_invalid_annulus_radii_rejected(inner, outer):
    with pytest.raises(DomainError):
        build_domain("annulus", inner, outer)


def test_unknown_kind_rejected():
    with pytest.raises(DomainError):
        build_domain("square")


def test_signed_distance_sign(annulus):
    assert annulus.signed_distance(0.6, 0.0) < 0
    assert annulus.signed_distance(0.1, 0.0) > 0
    assert annulus.signed_distance(1.2, 0.0) > 0


def test_disk_has_no_cohomology(disk):
    assert cohomology_dual_basis(disk) == []


def test_cohomology_form_period_along_relative_cycle(annulus):
    (g,) = cohomology_dual_basis(annulus)
    assert abs(loop_integral(g.form, radial_arc(0.3, 1.0, 0.7, 256)) - 1.0) < 1e-6
    # exact with a single-valued primitive: every closed loop integral vanishes
    for w in (1, 2):
        assert abs(loop_integral(g.form, circle_loop(0.6, 512, w))) < 1e-8


def test_cohomology_form_vanishes_near_boundary(annulus):
    (g,) = cohomology_dual_basis(annulus)
    t = np.linspace(0, 2 * np.pi, 50)
    for r in (0.301, 0.999):
        ax, ay = g.form(r * np.cos(t), r * np.sin(t))
        assert np.max(np.abs(ax)) + np.max(np.abs(ay)) < 1e-10


def test_cohomology_form_is_closed(annulus):
    (g,) = cohomology_dual_basis(annulus)
    r = np.linspace(0.35, 0.95, 40)
    x, y = r * np.cos(1.1), r * np.sin(1.1)
    assert np.max(np.abs(g.form.curl(x, y))) < 1e-6


def test_loop_integral_dtheta_unit_circle():
    assert abs(loop_integral(angular_form(1.0), circle_loop(1.0, 1024)) - 2 * np.pi) < 1e-10


@given(st.floats(-3, 3), st.floats(0.35, 0.95), st.integers(-2, 2))
def test_loop_integral_angular_form(c, r, w):
    val = loop_integral(angular_form(c), circle_loop(r, 512, w))
    assert abs(val - 2 * np.pi * c * w) < 1e-6 * max(1.0, abs(c))


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.1, 0.9))
def test_exact_forms_integrate_to_zero(a, b, r):
    f = exact_form(lambda x, y: a * x * y + b * np.sin(x),
                   lambda x, y: (a * y + b * np.cos(x), a * x))
    assert abs(loop_integral(f, circle_loop(r, 256, 1, 0.05))) < 1e-8


def test_loop_integral_converges_under_refinement():
    f = angular_form(0.37)
    errs = [abs(loop_integral(f, circle_loop(0.6, n)) - 2 * np.pi * 0.37) for n in (8, 16)]
    assert errs[1] <= errs[0] / 4 or errs[1] < 1e-12


def test_loop_exiting_domain_rejected(disk):
    with pytest.raises(DomainError):
        loop_integral(angular_form(1.0), circle_loop(1.5), disk)


def test_grid_area_matches_domain(annulus):
    g = make_grid(annulus, 2.0 ** -7)
    assert abs(g.integrate(np.ones(g.shape)).real - annulus.area) < 1e-3


def test_mesh_covers_domain(annulus):
    m = build_mesh(annulus, 0.05)
    assert np.all(annulus.signed_distance(m.nodes[:, 0], m.nodes[:, 1]) < 1e-9)
