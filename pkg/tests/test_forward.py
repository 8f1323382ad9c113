import numpy as np
import pytest

from magcgo.errors import FormatError, SpectralError
from magcgo.fields import angular_form, exact_form, gaussian, gaussian_vortex, uniform_field, zero_form
from magcgo.forward import (CauchyDataMap, DiracOperator, MagneticOperator, cauchy_data_map, dirac_cauchy_data,
                            solve_dirichlet)
from magcgo.geometry import build_domain


@pytest.fixture(scope="module")
def free_disk():
    return MagneticOperator(zero_form(), 0.0, build_domain("disk"), mesh_size=0.05)


def test_constant_boundary_data_gives_constant(free_disk):
    sol = solve_dirichlet(free_disk, lambda x, y: np.ones_like(x))
    assert np.max(np.abs(sol.U - 1)) < 1e-10


@pytest.mark.parametrize("n", [1, -2, 3])
def test_disk_fourier_modes(n):
    op = MagneticOperator(zero_form(), 0.0, build_domain("disk"), mesh_size=0.02)
    sol = solve_dirichlet(op, lambda x, y: np.exp(1j * n * np.arctan2(y, x)))
    x, y = op.mesh.nodes.T
    exact = np.hypot(x, y) ** abs(n) * np.exp(1j * n * np.arctan2(y, x))
    assert np.max(np.abs(sol.U - exact)) < 1e-4


@pytest.mark.parametrize("n,c", [(1, 0.3), (-2, 0.45), (3, -0.2)])
def test_annulus_aharonov_bohm_modes(n, c):
    r0, r1 = 0.3, 1.0
    op = MagneticOperator(angular_form(c), 0.0, build_domain("annulus", r0, r1), mesh_size=0.02)
    sol = solve_dirichlet(op, lambda x, y: np.where(np.hypot(x, y) > 0.65, np.exp(1j * n * np.arctan2(y, x)), 0))
    x, y = op.mesh.nodes.T
    r, th = np.hypot(x, y), np.arctan2(y, x)
    m = abs(n + c)
    # A r^m + B r^-m with u(r1) = 1, u(r0) = 0
    M = np.array([[r1 ** m, r1 ** -m], [r0 ** m, r0 ** -m]])
    A, B = np.linalg.solve(M, [1.0, 0.0])
    exact = (A * r ** m + B * r ** -m) * np.exp(1j * n * th)
    assert np.max(np.abs(sol.U - exact)) < 1e-3


def test_disk_dtn_eigenvalues():
    op = MagneticOperator(zero_form(), 0.0, build_domain("disk"), mesh_size=0.02)
    cdm = cauchy_data_map(op, 8)
    assert np.max(np.abs(np.diag(cdm.matrix) - np.abs(cdm.modes))) < 1e-3
    off = cdm.matrix - np.diag(np.diag(cdm.matrix))
    assert np.max(np.abs(off)) < 1e-3


def test_gauge_shift_vanishing_on_boundary_keeps_map():
    d = build_domain("disk")
    X = gaussian_vortex(1.0, (0.1, 0.0), 0.4)
    phi = lambda x, y: 0.7 * (1 - x * x - y * y) * np.exp(x)
    grad = lambda x, y: (0.7 * np.exp(x) * (1 - x * x - y * y - 2 * x), 0.7 * np.exp(x) * (-2 * y))
    op1 = MagneticOperator(X, 0.2, d, mesh_size=0.05)
    op2 = MagneticOperator(X + exact_form(phi, grad), 0.2, d, mesh=op1.mesh)
    a, b = cauchy_data_map(op1, 6), cauchy_data_map(op2, 6)
    assert np.max(np.abs(a.matrix - b.matrix)) < 1e-8


def test_potential_shift_changes_map(free_disk):
    a = cauchy_data_map(free_disk, 6)
    b = cauchy_data_map(free_disk.with_(q=1.0), 6)
    assert np.linalg.norm(a.matrix - b.matrix) > 1e-3


def test_map_is_hermitian_for_real_data():
    op = MagneticOperator(uniform_field(1.5), gaussian(0.5, (0.2, 0.1), 0.3), build_domain("disk"), mesh_size=0.05)
    assert cauchy_data_map(op, 6).hermitian_defect() < 1e-8


def test_dirichlet_eigenvalue_detected():
    # first Dirichlet eigenvalue of the unit disk: j_{0,1}^2
    op = MagneticOperator(zero_form(), -2.404825557695773 ** 2, build_domain("disk"), mesh_size=0.05)
    with pytest.raises(SpectralError):
        solve_dirichlet(op, lambda x, y: np.ones_like(x))


def test_binary_round_trip(free_disk, tmp_path):
    cdm = cauchy_data_map(free_disk, 4)
    cdm.save(tmp_path / "m.bin")
    back = CauchyDataMap.load(tmp_path / "m.bin")
    assert np.array_equal(back.matrix, cdm.matrix) and back.N == 4


def test_corrupted_header_names_offset(free_disk):
    buf = bytearray(cauchy_data_map(free_disk, 2).to_bytes())
    buf[0:8] = b"XXXXXXXX"
    with pytest.raises(FormatError, match="offset 0"):
        CauchyDataMap.from_bytes(bytes(buf))
    with pytest.raises(FormatError, match="offset"):
        CauchyDataMap.from_bytes(bytes(cauchy_data_map(free_disk, 2).to_bytes())[:-5])


def test_dirac_data_of_free_system_contains_holomorphic_traces():
    d = build_domain("disk")
    cdm = dirac_cauchy_data(DiracOperator(0.0, 0.0, d, mesh_size=0.05), 6)
    Q = cdm.matrix
    assert np.allclose(Q.conj().T @ Q, np.eye(Q.shape[1]), atol=1e-8)
