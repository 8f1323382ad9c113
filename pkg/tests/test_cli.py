import csv
import json
import os
from pathlib import Path

import numpy as np
import pytest

from magcgo.cli import EXIT_NEGATIVE, EXIT_OK, EXIT_USAGE, main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def run(cmd, cfg, out, *extra):
    return main([cmd, "--config", str(cfg), "--out", str(out), *extra])


def rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def write_cfg(tmp_path, cfg, name="c.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


@pytest.fixture(scope="module")
def forward_out(tmp_path_factory):
    out = tmp_path_factory.mktemp("fwd")
    assert run("forward", CONFIGS / "forward_disk.json", out) == EXIT_OK
    return out


def test_forward_dtn_diagonal(forward_out):
    r = rows(forward_out / "dtn_diagonal.csv")
    modes = np.array([int(x["mode"]) for x in r])
    vals = np.array([float(x["re"]) for x in r])
    assert set(modes) == set(range(-8, 9))
    assert np.max(np.abs(vals - np.abs(modes))) < 1e-3
    assert all(float(x["hermitian_defect"]) < 1e-8 for x in r)


def test_forward_is_deterministic(forward_out, tmp_path):
    assert run("forward", CONFIGS / "forward_disk.json", tmp_path, "--seed", "0") == EXIT_OK
    for name in ("cauchy_data.bin", "cauchy_data.csv", "dtn_diagonal.csv"):
        assert (tmp_path / name).read_bytes() == (forward_out / name).read_bytes()


def test_missing_radius_is_a_schema_error(tmp_path, capsys):
    assert run("forward", CONFIGS / "forward_missing_radius.json", tmp_path) == EXIT_USAGE
    assert "radius" in capsys.readouterr().err


def test_malformed_json_reports_position(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{"domain": {"kind": "disk",, "radius": 1}}')
    assert run("forward", p, tmp_path) == EXIT_USAGE
    assert "line 1, column" in capsys.readouterr().err


def test_unknown_subcommand_is_usage_error():
    assert main(["frobnicate"]) == EXIT_USAGE


def test_annulus_needs_inner_radius(tmp_path, capsys):
    p = write_cfg(tmp_path, {"domain": {"kind": "annulus", "radius": 1.0}})
    assert run("forward", p, tmp_path) == EXIT_USAGE
    assert "inner_radius" in capsys.readouterr().err


@pytest.fixture(scope="module")
def zero_recording(tmp_path_factory):
    out = tmp_path_factory.mktemp("rec0")
    assert run("cauchy-data", CONFIGS / "reconstruct_zero.json", out) == EXIT_OK
    return out


def test_zero_potential_reconstructs_zeros(zero_recording, tmp_path):
    code = run("reconstruct", CONFIGS / "reconstruct_zero.json", tmp_path, "--data",
               str(zero_recording / "traces.bin"))
    assert code == EXIT_OK
    r = rows(tmp_path / "reconstruction.csv")
    assert len(r) == 2
    for x in r:
        assert float(x["value_re"]) == 0 and float(x["value_im"]) == 0
        assert "bracket" in x
    assert (tmp_path / "decay.svg").read_text().startswith("<svg")
    assert "verdict" in (tmp_path / "verdict.txt").read_text()


@pytest.mark.parametrize("offset, expected", [(0, 0), (12, 12), (40, 36)])
def test_corrupted_recording_names_offset(zero_recording, tmp_path, capsys, offset, expected):
    blob = bytearray((zero_recording / "traces.bin").read_bytes())
    if offset == 0:
        blob[:8] = b"NOTMAGIC"
    elif offset == 12:
        blob[12:16] = (7).to_bytes(4, "little")
    else:
        blob = blob[:offset]
    bad = tmp_path / "bad.bin"
    bad.write_bytes(bytes(blob))
    assert run("reconstruct", CONFIGS / "reconstruct_zero.json", tmp_path, "--data", str(bad)) == EXIT_USAGE
    assert f"offset {expected}" in capsys.readouterr().err


def test_recording_on_other_domain_is_basis_mismatch(zero_recording, tmp_path, capsys):
    cfg = json.loads((CONFIGS / "reconstruct_zero.json").read_text())
    cfg["domain"]["radius"] = 0.9
    p = write_cfg(tmp_path, cfg)
    assert run("reconstruct", p, tmp_path, "--data", str(zero_recording / "traces.bin")) == EXIT_USAGE
    assert "basis mismatch" in capsys.readouterr().err


@pytest.mark.slow
def test_gaussian_reconstruction(tmp_path):
    cfg = CONFIGS / "reconstruct_gaussian.json"
    assert run("cauchy-data", cfg, tmp_path) == EXIT_OK
    assert run("reconstruct", cfg, tmp_path, "--data", str(tmp_path / "traces.bin")) == EXIT_OK
    (x,) = rows(tmp_path / "reconstruction.csv")
    truth = 1.0 + 0.5
    assert abs(float(x["value_re"]) - truth) < 0.05 * truth
    assert float(x["bracket"]) < 0.2 * truth


def test_flux_half_quantum(tmp_path):
    assert run("flux", CONFIGS / "flux_annulus.json", tmp_path) == EXIT_NEGATIVE
    (x,) = rows(tmp_path / "holonomy.csv")
    assert abs(float(x["flux"]) - np.pi) < 1e-2
    assert float(x["tolerance"]) > 0
    assert "NOT trivial" in (tmp_path / "holonomy.txt").read_text()


def test_flux_integral_shift_is_trivial(tmp_path):
    cfg = json.loads((CONFIGS / "flux_annulus.json").read_text())
    cfg["sides"][1]["X"][1]["coefficient"] = 2 * np.pi
    assert run("flux", write_cfg(tmp_path, cfg), tmp_path) == EXIT_OK


@pytest.mark.slow
def test_verify_control_reports_no_decay(tmp_path):
    assert run("verify", CONFIGS / "verify_control.json", tmp_path) == EXIT_OK
    r = rows(tmp_path / "verify.csv")
    assert len(r) == 9
    for x in r:
        assert x["check"].endswith("_control")
        assert abs(float(x["measured"])) < float(x["threshold"]) == 0.05
    assert "no decay" in (tmp_path / "verify.txt").read_text()


@pytest.mark.slow
def test_verify_coarse_grid_flags_limited_entries(tmp_path):
    code = run("verify", CONFIGS / "verify_coarse.json", tmp_path)
    assert code == EXIT_OK
    r = rows(tmp_path / "verify.csv")
    assert r and all(x["discretization_limited"] == "1" for x in r)


@pytest.mark.slow
def test_verify_default_passes(tmp_path):
    assert run("verify", CONFIGS / "verify_default.json", tmp_path) == EXIT_OK
    r = rows(tmp_path / "verify.csv")
    assert {x["check"].split("_q")[0] for x in r} >= {"decay_dbar_inverse", "neumann_s_h_norm",
                                                      "carleman_ratio_small_over_large", "weighted_l2_gain"}
    assert all(x["passed"] == "1" and x["discretization_limited"] == "0" for x in r)
    assert "FAIL" not in (tmp_path / "verify.txt").read_text()
