import json

import numpy as np
import pytest

from hermwave.cli import parse_and_dispatch
from hermwave.hermite_sim import read_path

IDX = ["--N", "8", "--beta", "0.6", "--gamma", "0.55", "--d", "3"]


def run(capsys, *argv):
    code = parse_and_dispatch(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def error_line(err):
    lines = err.strip().splitlines()
    return json.loads(lines[-1])


@pytest.fixture
def fbm_file(tmp_path, capsys):
    out = tmp_path / "p.bin"
    code, _, _ = run(capsys, "simulate", "--q", "1", "--hurst", "0.7", *IDX, "--seed", "1",
                     "--out", str(out))
    assert code == 0
    return out


def test_gamma_not_below_beta_is_validation_error(fbm_file, capsys):
    code, _, err = run(capsys, "estimate", "--input", str(fbm_file), "--N", "12", "--beta",
                       "0.5", "--gamma", "0.6")
    assert code == 3
    msg = error_line(err)
    assert msg["error"] == "validation" and "gamma < beta" in msg["message"]


@pytest.mark.parametrize("argv", [
    ["validate", "--q", "1", "--hurst", "0.5", *IDX],
    ["validate", "--q", "1", "--hurst", "0.7", "--N", "8", "--beta", "0.6", "--gamma", "0.55",
     "--d", "1"],
    ["kmatrix", "--q", "2", "--hurst", "0.7", "--method", "analytic"],
    ["simulate", "--q", "2", "--hurst", "0.7", "--backend", "fbm", "--n", "16"],
])
def test_inconsistent_flags_rejected_before_work(argv, capsys):
    code, _, err = run(capsys, *argv)
    assert code == 3
    assert len(err.strip().splitlines()) == 1


def test_usage_errors(capsys):
    code, _, err = run(capsys, "simulate", "--hurst", "0.7")
    assert code == 2 and error_line(err)["error"] == "usage"
    code, _, _ = run(capsys, "frobnicate")
    assert code == 2


def test_runtime_error_exit_one(tmp_path, capsys):
    code, _, err = run(capsys, "estimate", "--input", str(tmp_path / "missing.bin"), *IDX)
    assert code == 1
    assert error_line(err)["exit"] == 1


def test_simulate_prints_plan(tmp_path, capsys):
    code, out, _ = run(capsys, "simulate", "--q", "1", "--hurst", "0.7", *IDX)
    plan = json.loads(out)["plan"]
    assert code == 0 and plan["n"] == 49920 and plan["step"] == 1 / (256 * 3 * 256)


def test_simulate_nclt_bytes_identical(tmp_path, capsys):
    a, b = tmp_path / "a.bin", tmp_path / "b.bin"
    for f in (a, b):
        code, _, _ = run(capsys, "simulate", "--q", "2", "--hurst", "0.7", "--backend", "nclt",
                         "--n", "1048576", "--seed", "1", "--out", str(f))
        assert code == 0
    assert a.read_bytes() == b.read_bytes()
    assert read_path(a).n == 1048576


def test_estimate_json_schema(fbm_file, tmp_path, capsys):
    out = tmp_path / "e.json"
    code, _, _ = run(capsys, "estimate", "--input", str(fbm_file), *IDX, "--with-sigma2",
                     "--out", str(out))
    doc = json.loads(out.read_text())
    assert code == 0
    assert set(doc) == {"hhat", "shat", "N", "beta", "gamma", "d", "wavelet", "sigma2",
                        "k_provenance"}
    assert len(doc["shat"]) == 3 and doc["k_provenance"] == "analytic-q1"


def test_estimate_rejects_under_resolved_path(tmp_path, capsys):
    out = tmp_path / "coarse.bin"
    run(capsys, "simulate", "--q", "1", "--hurst", "0.7", "--n", "1000", "--step", "0.001",
        "--out", str(out))
    code, _, err = run(capsys, "estimate", "--input", str(out), *IDX)
    assert code == 1 and "coarser" in error_line(err)["message"]


def test_coeffs_csv(fbm_file, tmp_path, capsys):
    out, shat = tmp_path / "c.csv", tmp_path / "s.csv"
    code, _, _ = run(capsys, "coeffs", "--input", str(fbm_file), *IDX, "--out", str(out),
                     "--shat-out", str(shat))
    assert code == 0
    assert out.read_text().splitlines()[0] == "M,ell,e_point,E_value"
    assert len(shat.read_text().splitlines()) == 4


def test_validate_to_stdout(capsys):
    code, out, _ = run(capsys, "validate", "--q", "1", "--hurst", "0.7", *IDX, "--reps", "30",
                       "--seed", "2")
    doc = json.loads(out)
    assert code == 0 and len(doc["hhat"]) == 30 and doc["sigma2"] > 0


def test_manifest_echoes_inputs_exactly(fbm_file, tmp_path, capsys):
    out = tmp_path / "e.json"
    argv = ["estimate", "--input", str(fbm_file), "--N", "8", "--beta", "0.6000000000000001",
            "--gamma", "0.55", "--out", str(out)]
    run(capsys, *argv)
    man = json.loads((tmp_path / "e.json.manifest.json").read_text())
    assert man["argv"] == argv
    assert man["params"]["beta"] == 0.6000000000000001
    assert man["tool"] == "hermwave" and "version" in man and man["subcommand"] == "estimate"
    assert "time" not in json.dumps(man).lower()


def test_replay_detects_tampering(fbm_file, tmp_path, capsys):
    out = tmp_path / "c.csv"
    run(capsys, "coeffs", "--input", str(fbm_file), *IDX, "--out", str(out))
    code, text, _ = run(capsys, "replay", str(tmp_path / "c.csv.manifest.json"))
    assert code == 0 and json.loads(text)["replay"] == "identical"
    man_path = tmp_path / "c.csv.manifest.json"
    man = json.loads(man_path.read_text())
    man["outputs"]["out"]["sha256"] = "0" * 64
    man_path.write_text(json.dumps(man))
    code, text, _ = run(capsys, "replay", str(man_path))
    assert code == 1 and json.loads(text)["replay"] == "differs"


def test_wavelet_export(tmp_path, capsys):
    out = tmp_path / "psi.csv"
    code, _, _ = run(capsys, "--wavelet", "poly", "--wavelet-res", "8", "wavelet", "--out", str(out))
    data = np.loadtxt(out, delimiter=",", skiprows=1)
    assert code == 0 and data.shape == (257, 2)


def test_memory_ceiling_enforced(monkeypatch, capsys):
    monkeypatch.setenv("HERMWAVE_MEMORY_CEILING", "1K")
    code, _, err = run(capsys, "simulate", "--q", "1", "--hurst", "0.7", *IDX)
    assert code != 0 and "deficit" in error_line(err)["message"]


def test_global_flags_accepted_before_or_after_subcommand(tmp_path, capsys):
    before, after, poly = tmp_path / "a.csv", tmp_path / "b.csv", tmp_path / "p.csv"
    run(capsys, "--wavelet", "db3", "--wavelet-res", "8", "wavelet", "--out", str(before))
    run(capsys, "wavelet", "--wavelet", "db3", "--wavelet-res", "8", "--out", str(after))
    run(capsys, "wavelet", "--wavelet-res", "8", "--out", str(poly))
    assert before.read_bytes() == after.read_bytes()
    assert before.read_bytes() != poly.read_bytes()
