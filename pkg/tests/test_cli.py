import json

import pytest

from vibtrotter.cli import OUT_ENV, PipelineError, RunConfig, main


def test_stage_by_stage_pipeline(tmp_path):
    out = str(tmp_path)
    args = ["--scheme", "rs", "--out", out, "--k-max", "20"]
    for stage in ("build", "fragment", "plan", "resources", "simulate", "spectrum"):
        assert main([stage, *args]) == 0
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["schema"] == "v1"
    assert man["stages"] == ["build", "fragment", "plan", "resources", "simulate", "spectrum"]
    assert set(man["artifacts"]) >= {"fragments.json", "plan.json", "spectrum.csv", "resources.json"}
    assert json.loads((tmp_path / "resources.json").read_text())["qubits"] > 0


def test_missing_stage_is_actionable(tmp_path, capsys):
    assert main(["plan", "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "fragments.json" in err and "fragment" in err


def test_vscf_requires_christiansen_scheme():
    with pytest.raises(PipelineError, match="vscf"):
        RunConfig(model="two_mode_quartic", scheme="bf", basis="vscf").validate()


def test_unknown_model(tmp_path, capsys):
    assert main(["build", "--model", "nope", "--out", str(tmp_path)]) == 2
    assert "bundled" in capsys.readouterr().err


def test_out_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(OUT_ENV, str(tmp_path / "envout"))
    assert main(["build"]) == 0
    assert (tmp_path / "envout" / "model.json").exists()


def test_vscf_pipeline(tmp_path):
    out = str(tmp_path)
    assert main(["all", "--basis", "vscf", "--scheme", "fc", "--N", "3", "--out", out, "--k-max", "20"]) == 0
    v = json.loads((tmp_path / "vscf.json").read_text())
    assert v["converged"]
    assert v["energies"] == sorted(v["energies"], reverse=True)


def test_config_hash_changes_with_config():
    a = RunConfig(model="two_mode_quartic")
    b = RunConfig(model="two_mode_quartic", seed=1)
    assert a.hash() != b.hash()
