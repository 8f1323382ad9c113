import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from magcgo.cauchy import (DecayFit, dbar_inverse, dbar_inverse_weighted, dbar_star_inverse,
                           dbar_star_inverse_weighted, measure_decay, plan_for)
from magcgo.forms import d_z, d_zbar, dbar_star
from magcgo.geometry import build_domain, make_grid


@pytest.fixture(scope="module")
def g8():
    return make_grid(build_domain("disk"), 2.0 ** -8, collar_width=0.0)


def _bump(x, y, c=(0.1, -0.2), w=0.3):
    return np.exp(-((x - c[0]) ** 2 + (y - c[1]) ** 2) / w ** 2) * (1 + 0.5j * x)


def _cauchy_quad(f, z):
    """(1/pi) int f(zeta)/(z - zeta) dA in polar coordinates about z."""
    def re(rho, th):
        return np.real(f(z.real + rho * np.cos(th), z.imag + rho * np.sin(th)) * -np.exp(-1j * th)) / np.pi

    def im(rho, th):
        return np.imag(f(z.real + rho * np.cos(th), z.imag + rho * np.sin(th)) * -np.exp(-1j * th)) / np.pi
    opts = dict(epsabs=1e-10, epsrel=1e-10)
    a = integrate.dblquad(re, 0, 2 * np.pi, 0, 3.0, **opts)[0]
    b = integrate.dblquad(im, 0, 2 * np.pi, 0, 3.0, **opts)[0]
    return a + 1j * b


def test_cauchy_of_indicator_is_zbar(g8):
    u = dbar_inverse(np.ones(g8.shape), g8)
    m = g8.domain.signed_distance(g8.X, g8.Y) < -0.02
    assert np.max(np.abs(u - np.conj(g8.z))[m]) < 1e-4


def test_cauchy_matches_adaptive_quadrature():
    g = make_grid(build_domain("disk", outer=1.0), 2.0 ** -7, collar_width=0.6)
    f = g.sample(_bump) * (np.abs(g.z) < 1.6)
    u = plan_for(g).cauchy(f)
    rng = np.random.default_rng(0)
    for _ in range(4):
        i, j = rng.integers(20, g.shape[0] - 20, 2)
        assert abs(u[i, j] - _cauchy_quad(_bump, g.z[i, j])) < 1e-4


def test_zero_input_gives_zero(g8):
    assert np.all(dbar_inverse(np.zeros(g8.shape), g8) == 0)
    assert np.all(dbar_star_inverse(np.zeros(g8.shape), g8) == 0)


@pytest.mark.parametrize("k", range(3))
def test_right_inverse_identities(k):
    rng = np.random.default_rng(k)
    g = make_grid(build_domain("disk"), 2.0 ** -8, collar_width=0.0)
    c = rng.uniform(-0.3, 0.3, 2)
    f = g.sample(lambda x, y: _bump(x, y, c, 0.2)) * rng.normal()
    m = np.abs(g.z - complex(*c)) < 0.5
    u = dbar_inverse(f, g)
    assert np.linalg.norm((d_zbar(u, g) - f)[m]) / np.linalg.norm(f[m]) < 1e-3
    w = dbar_star_inverse(f, g)
    assert np.linalg.norm((dbar_star(w, g) - f)[m]) / np.linalg.norm(f[m]) < 1e-3


def test_weighted_large_h_is_unweighted(g8):
    f = g8.sample(_bump)
    psi = g8.X * g8.Y
    assert np.max(np.abs(dbar_inverse_weighted(f, psi, 1e6, g8) - dbar_inverse(f, g8))) < 1e-6
    assert np.max(np.abs(dbar_star_inverse_weighted(f, psi, 1e6, g8) - dbar_star_inverse(f, g8))) < 1e-6


def test_weighted_zero_phase_is_unweighted(g8):
    f = g8.sample(_bump)
    z = np.zeros(g8.shape)
    assert np.array_equal(dbar_inverse_weighted(f, z, 0.1, g8), dbar_inverse(f, g8))
    assert np.array_equal(dbar_star_inverse_weighted(f, z, 0.1, g8), dbar_star_inverse(f, g8))


def test_nonpositive_h_rejected(g8):
    with pytest.raises(ValueError):
        dbar_inverse_weighted(np.ones(g8.shape), np.zeros(g8.shape), 0.0, g8)


def test_decay_fit_needs_six_points():
    with pytest.raises(ValueError):
        DecayFit.fit([1e-3, 1e-2, 1e-1], [1, 2, 3])


@given(st.floats(-2, 2), st.floats(0.1, 10))
def test_decay_fit_recovers_power_law(s, c):
    h = np.geomspace(1e-3, 1e-1, 8)
    fit = DecayFit.fit(h, c * h ** s)
    assert abs(fit.slope - s) < 1e-9


def test_decay_csv_round_trip(tmp_path):
    h = np.geomspace(1e-3, 1e-1, 6)
    fit = DecayFit.fit(h, 2 * h ** 0.5)
    fit.to_csv(tmp_path / "f.csv")
    back = DecayFit.from_csv(tmp_path / "f.csv")
    assert np.allclose(back.norms, fit.norms) and abs(back.slope - fit.slope) < 1e-12


def test_zero_phase_control_has_no_decay():
    d = build_domain("disk")
    fit = measure_decay("dbar_inverse", lambda x, y: 0 * x, lambda x, y: _bump(x, y),
                        d, np.geomspace(1e-3, 1e-1, 6), q=2.0, max_spacing=2.0 ** -6)
    assert abs(fit.slope) < 0.05
