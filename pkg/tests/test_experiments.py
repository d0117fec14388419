"""End-to-end pipeline runs, artifacts and reports."""
from __future__ import annotations

import filecmp

import numpy as np
import pytest

from viscshock import asymptotics as A
from viscshock.config import load_config
from viscshock.errors import IncompleteRunError, TrackingLossError
from viscshock.experiments import ExperimentError, emit_report, run_experiment, write_run


@pytest.fixture(scope="module")
def burgers_run(tmp_path_factory):
    result = run_experiment(load_config("burgers_lax.cfg"))
    return result, write_run(result, tmp_path_factory.mktemp("runs"))


def test_burgers_report_populated(burgers_run):
    result, run_dir = burgers_run
    names = {(r.quantity, r.p) for r in result.report.rows}
    assert {("v", "1"), ("v", "2"), ("v", "inf"), ("delta_0", "")} <= names
    rows = emit_report(run_dir)
    assert rows and all(r.verdict == "pass" for r in rows)
    assert all(np.isfinite(float(r.measured)) for r in rows)


def test_burgers_residual_decays(burgers_run):
    dec = burgers_run[0].decomposition
    vinf = dict(zip(dec.times, dec.v_norms[np.inf]))
    assert vinf[128.0] < vinf[8.0] / 3


def test_every_file_carries_config_hash(burgers_run):
    result, run_dir = burgers_run
    files = sorted(run_dir.iterdir())
    assert len(files) >= 8
    for f in files:
        assert f.read_text().splitlines()[0] == f"# config_hash={result.digest}"


def test_undercompressive_fails_at_classification():
    with pytest.raises(ExperimentError) as info:
        run_experiment(load_config("undercompressive.cfg"))
    assert info.value.stage == "classify_shock"


def test_incomplete_run(tmp_path, burgers_run):
    with pytest.raises(IncompleteRunError):
        emit_report(tmp_path)
    _, run_dir = burgers_run
    partial = tmp_path / "partial"
    partial.mkdir()
    (partial / "provenance.txt").write_text((run_dir / "provenance.txt").read_text())
    with pytest.raises(IncompleteRunError):
        emit_report(partial)


def test_tracking_loss_marks_shift_rows(monkeypatch, tmp_path):
    real = A.extract_delta
    calls = []

    def flaky(*args, **kw):
        # lose the shock after the first few checkpoints
        calls.append(1)
        if len(calls) > 6:
            raise TrackingLossError("forced")
        return real(*args, **kw)

    monkeypatch.setattr(A, "extract_delta", flaky)
    result = run_experiment(load_config("burgers_lax.cfg"))
    assert result.decomposition.tracking_lost
    rows = emit_report(write_run(result, tmp_path))
    for r in rows:
        if r.item.startswith("delta") and r.item.endswith("slope"):
            assert r.verdict == "N/A"
    assert any(r.item.startswith("v ") and r.verdict != "N/A" for r in rows)


def test_identical_configs_give_identical_files(tmp_path):
    cfg = load_config("burgers_lax.cfg")
    a = write_run(run_experiment(cfg), tmp_path / "a")
    b = write_run(run_experiment(cfg), tmp_path / "b")
    names = sorted(p.name for p in a.iterdir())
    emit_report(a)
    emit_report(b)
    match, mismatch, errors = filecmp.cmpfiles(a, b, names + ["acceptance.csv"], shallow=False)
    assert not mismatch and not errors
