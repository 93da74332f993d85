import numpy as np
import pytest

from mbpetc import certificates
from mbpetc.cli import EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_OK, main


@pytest.fixture()
def manifest(pend_constants, tmp_path):
    path = tmp_path / "constants.txt"
    certificates.save_constants(pend_constants, path)
    return path


def _write_spec(tmp_path, manifest, horizon=0.5):
    spec = tmp_path / "exp.ini"
    spec.write_text(
        f"""
[common]
model = pendulum
constants = {manifest}
x0 = 0.3 0.0
horizon = {horizon}
substeps = 1
h = 0.01
unsafe_h_override = true
checks = convergence nonmonotone

[scenario:zoh]
prediction = zoh

[scenario:euler]
prediction = scaled_euler
scale = 1.05
"""
    )
    return spec


def test_certify_subcommand(tmp_path, capsys):
    out = tmp_path / "c.txt"
    code = main(["certify", "--grid", "40", "--out", str(out)])
    assert code == EXIT_OK
    text = capsys.readouterr().out
    assert "sigma-MASP" in text and "active term" in text
    constants = certificates.load_constants(out)
    assert constants.model == "pendulum"
    assert 0 < constants.h_sigma_masp < 1e-3


def test_run_subcommand(tmp_path, manifest, capsys):
    spec = _write_spec(tmp_path, manifest)
    out_dir = tmp_path / "results"
    code = main(["run", "--spec", str(spec), "--out", str(out_dir)])
    text = capsys.readouterr().out
    assert code == EXIT_OK, text
    for name in ("zoh", "euler"):
        assert (out_dir / f"{name}.csv").is_file()
        assert (out_dir / f"{name}.events.csv").is_file()
        assert (out_dir / f"{name}.summary.txt").is_file()
        assert (out_dir / f"{name}.checks.txt").is_file()
    assert (out_dir / "comparison.txt").is_file()
    assert "active term" in text


def test_run_parallel_matches_sequential(tmp_path, manifest):
    spec = _write_spec(tmp_path, manifest, horizon=0.2)
    seq_dir, par_dir = tmp_path / "seq", tmp_path / "par"
    assert main(["run", "--spec", str(spec), "--out", str(seq_dir)]) == EXIT_OK
    assert main(["run", "--spec", str(spec), "--out", str(par_dir), "--jobs", "2"]) == EXIT_OK
    for name in ("zoh", "euler"):
        assert (seq_dir / f"{name}.csv").read_bytes() == (par_dir / f"{name}.csv").read_bytes()


def test_run_missing_spec_is_config_error(tmp_path, capsys):
    code = main(["run", "--spec", str(tmp_path / "nope.ini")])
    assert code == EXIT_CONFIG
    assert "error:" in capsys.readouterr().err


def test_run_bad_section_is_config_error(tmp_path, manifest, capsys):
    spec = tmp_path / "bad.ini"
    spec.write_text("[common]\nx0 = 0 0\n[weird]\nkey = 1\n")
    assert main(["run", "--spec", str(spec)]) == EXIT_CONFIG


def test_compare_subcommand(tmp_path, manifest, capsys):
    spec = _write_spec(tmp_path, manifest, horizon=0.2)
    out_dir = tmp_path / "results"
    assert main(["run", "--spec", str(spec), "--out", str(out_dir)]) == EXIT_OK
    capsys.readouterr()
    code = main(["compare", str(out_dir / "zoh"), str(out_dir / "euler")])
    assert code == EXIT_OK
    text = capsys.readouterr().out
    assert "transmissions" in text and "zoh" in text and "euler" in text


def test_accept_rejects_unknown_criterion(capsys):
    assert main(["accept", "--only", "A9"]) == EXIT_CONFIG
    assert "unknown criteria" in capsys.readouterr().err
