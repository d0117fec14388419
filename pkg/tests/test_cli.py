"""Command-line interface."""
from __future__ import annotations

from viscshock.cli import main


def test_dry_run_writes_nothing(tmp_path, capsys):
    out = tmp_path / "runs"
    assert main(["rates", "--config", "burgers_lax.cfg", "--out", str(out), "--dry-run"]) == 0
    assert "valid" in capsys.readouterr().out
    assert not out.exists()


def test_acceptance_dry_run(capsys):
    assert main(["acceptance", "--dry-run"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 11 and lines[0].startswith("criterion  1")


def test_undercompressive_names_stage(tmp_path, capsys):
    code = main(["rates", "--config", "undercompressive.cfg", "--out", str(tmp_path)])
    assert code == 1
    assert "classify_shock" in capsys.readouterr().err


def test_missing_config_is_an_error(capsys):
    assert main(["rates", "--config", "nope.cfg"]) == 2
    assert "error" in capsys.readouterr().err
    assert main(["rates"]) == 2


def test_check_model(capsys):
    assert main(["check-model", "--config", "cubic.cfg"]) == 0
    assert "overcompressive, ell = 2" in capsys.readouterr().out


def test_profile_writes_csv(tmp_path, capsys):
    assert main(["profile", "--config", "lax2x2.cfg", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "lax2x2" / "profile.csv").read_text().startswith("# config_hash=")


def test_rates_then_report(tmp_path, capsys):
    assert main(["rates", "--config", "burgers_lax.cfg", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "delta_0 slope" in out
    assert main(["report", str(tmp_path / "burgers_lax")]) == 0
    assert "mass_defect" in capsys.readouterr().out
