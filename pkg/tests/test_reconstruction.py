import numpy as np
import pytest
from hypothesis import given, strategies as st

from magcgo.cgo import antiholomorphic_b, build_cgo, morse_phase
from magcgo.errors import DomainError, FormatError, HypothesisError
from magcgo.fields import gaussian
from magcgo.geometry import build_domain
from magcgo.reconstruction import (BoundaryProbe, DiracMeasurement, RecordedMeasurement, boundary_probe,
                                   boundary_rule, eta, eta_derivative, integral_identity, interior_pairing,
                                   reconstruct_v_prime_at, richardson)

V1 = gaussian(0.6, (0.1, 0.0), 0.4)
VP1 = gaussian(0.5, (0.0, 0.1), 0.4)
V2 = gaussian(0.3, (-0.1, 0.1), 0.5)
VP2 = gaussian(-0.2, (0.1, -0.1), 0.5)


def test_boundary_rule_length(annulus):
    rule = boundary_rule(annulus, 256)
    # oint dz = 0 on each circle; total |dz| = perimeter
    assert abs(np.sum(rule.dz)) < 1e-12
    assert abs(np.sum(np.abs(rule.dz)) - 2 * np.pi * 1.3) < 1e-12


@pytest.mark.parametrize("kind", ["F", "G"])
def test_boundary_identity_matches_interior_pairing(disk, kind):
    ph = morse_phase(disk, 0.2)
    amp = antiholomorphic_b(ph)
    h, sp = 0.05, 2.0 ** -7
    B = integral_identity(DiracMeasurement(V1, VP1, disk), (V2, VP2), kind, ph, amp, h, spacing=sp)
    s1 = build_cgo(kind, V1, VP1, ph, amp, h, disk, sign=1, spacing=sp)
    s2 = build_cgo(kind, lambda x, y: np.conj(V2(x, y)), lambda x, y: np.conj(VP2(x, y)), ph, amp, h, disk,
                   sign=-1, spacing=sp)
    I = interior_pairing(s1, s2, V1, VP1, V2, VP2)
    assert abs(B - I) < 2e-3 * abs(I)


def test_identity_vanishes_for_equal_potentials(disk):
    ph = morse_phase(disk, 0.2)
    amp = antiholomorphic_b(ph)
    m = DiracMeasurement(V1, VP1, disk)
    B = integral_identity(m, (V1, VP1), "F", ph, amp, 0.05, spacing=2.0 ** -7)
    B2 = integral_identity(m, (V2, VP2), "F", ph, amp, 0.05, spacing=2.0 ** -7)
    assert abs(B) < 1e-4 * abs(B2)


def test_measurement_hides_potential(disk):
    m = DiracMeasurement(V1, VP1, disk)
    assert not hasattr(m, "v") and not hasattr(m, "vp")


@given(st.complex_numbers(max_magnitude=10), st.complex_numbers(max_magnitude=10),
       st.floats(0.01, 0.1), st.floats(1.5, 4))
def test_richardson_exact_on_linear_data(a, b, t1, ratio):
    t = [t1 * ratio, t1]
    val, br = richardson(t, [a + b * s for s in t])
    assert abs(val - a) < 1e-9 * (1 + abs(a) + abs(b))
    assert br >= abs(b) * t1 * (1 - 1e-9) - 1e-9


def test_cutoff():
    s = np.array([0.0, 0.5, 1.0, 2.0, 3.0])
    assert np.allclose(eta(s), [1, 1, 1, 0, 0])
    x = np.linspace(1.05, 1.95, 19)
    num = (eta(x + 1e-6) - eta(x - 1e-6)) / 2e-6
    assert np.allclose(num, eta_derivative(x), atol=1e-6)


@pytest.mark.parametrize("orientation,p", [(1, np.exp(0.4j)), (-1, 0.3 * np.exp(-1j))])
def test_probe_dbar(orientation, p):
    pr = BoundaryProbe(p, 0.05, orientation=orientation)
    # transition band |w| in (eps, 2 eps) of the chart w = -i o log(z/p), close to the boundary
    w = 1.5 * 0.05 ** (1 / 3) * np.exp(1j * np.concatenate([np.linspace(0.01, 0.1, 4),
                                                            np.pi - np.linspace(0.01, 0.1, 4)]))
    z = p * np.exp(1j * orientation * w)
    e = 1e-6
    num = 0.5 * ((pr.a(z + e) - pr.a(z - e)) / (2 * e) + 1j * (pr.a(z + 1j * e) - pr.a(z - 1j * e)) / (2 * e))
    assert np.allclose(num, pr.dbar_a(z), atol=1e-4 * np.max(np.abs(num)) + 1e-8)


def test_probe_rejects_interior_point(disk):
    with pytest.raises(DomainError):
        boundary_probe(DiracMeasurement(0, 0, disk), (0, 0), 0.5)


@pytest.fixture(scope="module")
def recording():
    disk = build_domain("disk")
    m = DiracMeasurement(V1, VP1, disk)
    return m, RecordedMeasurement.record(m, [("F", 0.3, 0.1), ("F", 0.3, 0.05)])


def test_recording_round_trip(recording, tmp_path):
    m, rec = recording
    rec.save(tmp_path / "t.bin")
    back = RecordedMeasurement.load(tmp_path / "t.bin", m.domain)
    assert back.to_bytes() == rec.to_bytes()
    assert [(r.kind, r.z0, r.h) for r in back.records] == [("F", 0.3, 0.1), ("F", 0.3, 0.05)]


def test_recording_replays_reconstruction(recording):
    m, rec = recording
    a = reconstruct_v_prime_at(m, 0.3, hs=(0.1, 0.05), check=False)
    b = reconstruct_v_prime_at(rec, 0.3, hs=(0.1, 0.05), check=False)
    assert a.value == b.value


def test_recording_basis_mismatch(recording):
    m, rec = recording
    with pytest.raises(HypothesisError, match="basis mismatch"):
        reconstruct_v_prime_at(rec, 0.2, hs=(0.1, 0.05), check=False)
    with pytest.raises(HypothesisError, match="basis mismatch"):
        RecordedMeasurement.from_bytes(rec.to_bytes(), build_domain("annulus", 0.3))


@pytest.mark.parametrize("edit,offset", [(lambda b: b"XXXX" + b[4:], "offset 0"),
                                         (lambda b: b[:20], "offset 20"),
                                         (lambda b: b[:-5], "offset"),
                                         (lambda b: b + b"\0", "trailing")])
def test_recording_corruption(recording, edit, offset):
    _, rec = recording
    with pytest.raises(FormatError, match=offset):
        RecordedMeasurement.from_bytes(edit(rec.to_bytes()))


def test_zero_potential_reconstructs_zero(disk):
    r = reconstruct_v_prime_at(DiracMeasurement(0, 0, disk), 0.3, hs=(0.1, 0.05))
    assert r.value == 0 and r.bracket <= 1e-12
