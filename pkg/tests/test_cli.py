import json

import pytest

from bicrit.cli import main
from bicrit.harness import ExperimentConfig
from bicrit.weights import point_mass


@pytest.fixture()
def config_file(tmp_path):
    cfg = ExperimentConfig(spec_b=point_mass(1.0), spec_w=point_mass(1.0),
                           theta=1.0, n=100, replicates=20, seed=1,
                           top_k=2, features="masses")
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg.to_dict()))
    return str(path)


def test_cli_simulate(config_file, tmp_path, capsys):
    out = tmp_path / "run"
    rc = main(["simulate", "--config", config_file, "--out", str(out)])
    assert rc == 0
    assert (out / "report.json").exists()
    assert "hash=" in capsys.readouterr().out


def test_cli_check(capsys):
    rc = main(["check", "--instances", "5", "--seed", "4", "--max-side", "15"])
    assert rc == 0
    text = capsys.readouterr().out
    assert "PASS load-composition" in text


def test_cli_limit(tmp_path, capsys):
    rc = main(["limit", "--regime", "1", "--paths", "3", "--horizon", "2.0",
               "--step", "0.002", "--keep-paths", "1",
               "--out", str(tmp_path / "lim")])
    assert rc == 0
    assert (tmp_path / "lim" / "excursions.csv").exists()
    assert (tmp_path / "lim" / "path0.csv").exists()


def test_cli_clustering(capsys):
    rc = main(["clustering", "--n", "40", "--trials", "300", "--seed", "2"])
    assert rc == 0
    assert "CL=" in capsys.readouterr().out


def test_cli_compare_small(config_file, capsys):
    rc = main(["compare", "--config", config_file, "--replicates", "60",
               "--threshold", "0.5"])
    out = capsys.readouterr().out
    assert "KS(y-mass)" in out
    assert rc == 0
