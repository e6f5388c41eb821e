import json

import pytest

from burgulence.cli import build_parser, main
from burgulence.experiment import default_config, load_config, write_config


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.cfg"
    write_config(path, default_config(nu_sweep=(0.1,), ensemble_size=2, T_total=3,
                                      output_dir=str(tmp_path / "out")))
    return path


def test_parser_requires_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])


def test_run(small_config, tmp_path, capsys):
    out = tmp_path / "override"
    code = main(["run", str(small_config), "--out-dir", str(out), "--seed", "7"])
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seeds"]["master_seed"] == 7
    assert load_config(out / "config.cfg").master_seed == 7
    assert "violations: 0" in capsys.readouterr().out


def test_run_reports_violations(tmp_path):
    path = tmp_path / "strict.cfg"
    write_config(path, default_config(nu_sweep=(0.1,), ensemble_size=2, T_total=3,
                                      dissipation_tol=1e-16, output_dir=str(tmp_path / "o")))
    assert main(["run", str(path)]) == 1


def test_check_invariants(small_config, capsys):
    code = main(["check-invariants", str(small_config), "--t-total", "3", "--realizations", "2"])
    out = capsys.readouterr().out
    assert code == 0
    assert "dissipation_identity" in out and out.strip().endswith("ok")


def test_show_config(small_config, capsys):
    assert main(["show-config", str(small_config), "--seed", "3"]) == 0
    assert "master_seed = 3" in capsys.readouterr().out


def test_independence(small_config, capsys):
    code = main(["independence", str(small_config), "--u0-a", "zero", "--u0-b", "zero"])
    assert code == 0
    assert "agree" in capsys.readouterr().out


@pytest.mark.slow
def test_oracle_verify(capsys):
    assert main(["oracle-verify"]) == 0
    out = capsys.readouterr().out
    assert "N= 512" in out and out.strip().endswith("ok")
