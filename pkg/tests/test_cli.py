import csv
import os

import pytest

from ddimlab import __version__
from ddimlab.cli import main
from ddimlab.config import ExperimentConfig
from ddimlab.errors import ConfigError

SMALL = """
process = ou
data_var = 4
T = 1
h = 0.01
ell = 8
N = 2000
seed = 5
"""


def write(tmp_path, text, name="c.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def read_csv(path):
    with open(path) as fh:
        first = fh.readline()
        return first, list(csv.reader(fh))


def test_config_unknown_key_and_bad_values():
    with pytest.raises(ConfigError, match="unknown key"):
        ExperimentConfig.from_text("stepsize = 0.1", env={})
    with pytest.raises(ConfigError, match="bad value"):
        ExperimentConfig.from_text("ell = four", env={})
    with pytest.raises(ConfigError, match="duplicate"):
        ExperimentConfig.from_text("ell = 4\nell = 8", env={})


def test_config_env_override_and_hash():
    a = ExperimentConfig.from_text(SMALL, env={})
    b = ExperimentConfig.from_text(SMALL, env={"DDIMLAB_SEED": "6"})
    assert b["seed"] == 6 and a.config_hash() != b.config_hash()
    c = ExperimentConfig.from_text(SMALL, env={"DDIMLAB_THREADS": "8", "DDIMLAB_OUT_DIR": "x"})
    assert a.config_hash() == c.config_hash()
    with pytest.raises(ConfigError):
        ExperimentConfig.from_text(SMALL, env={"DDIMLAB_NOPE": "1"})


def test_sweep_cells():
    cfg = ExperimentConfig.from_text(SMALL + "sweep_ell = 4, 8\nsweep_lambda = 0, 1\n", env={})
    assert cfg.sweep_cells() == [(0.01, 4, 0.0), (0.01, 4, 1.0), (0.01, 8, 0.0), (0.01, 8, 1.0)]
    cfg = ExperimentConfig.from_text(SMALL + "sweep_ellh = 0.08\nsweep_ell = 4, 8\n", env={})
    assert [(c[0] * c[1], c[1]) for c in cfg.sweep_cells()] == [(0.08, 4), (0.08, 8)]
    with pytest.raises(ConfigError):
        ExperimentConfig.from_text(SMALL + "sweep_ell = 2, 4\nsweep_lambda = 0, 1, 0.5\nsweep_mode = paired\n",
                                   env={}).sweep_cells()


def test_sample_outputs(tmp_path, capsys):
    cfg = write(tmp_path, SMALL)
    assert main(["sample", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    first, rows = read_csv(tmp_path / "a" / "samples.csv")
    assert first.startswith(f"# ddimlab {__version__} config_sha256=")
    assert rows[0] == ["trajectory_id", "x_0"] and len(rows) == 2001
    _, rows = read_csv(tmp_path / "a" / "excess.csv")
    assert rows[0] == ["step", "mean_sq_v1", "mean_sq_v2", "mean_sq_v3"]
    _, rows = read_csv(tmp_path / "a" / "summary.csv")
    summary = dict(rows[1:])
    assert float(summary["kl"]) >= 0


def test_sample_reproducible_and_seed_flag(tmp_path):
    cfg = write(tmp_path, SMALL + "lambda = 1\n")
    for out, extra in (("a", []), ("b", ["--threads", "4"]), ("c", ["--seed", "9"])):
        assert main(["sample", "--config", cfg, "--out", str(tmp_path / out)] + extra) == 0
    a = (tmp_path / "a" / "samples.csv").read_bytes()
    assert a == (tmp_path / "b" / "samples.csv").read_bytes()
    assert a != (tmp_path / "c" / "samples.csv").read_bytes()


def test_exit_codes(tmp_path, capsys):
    bad = write(tmp_path, SMALL.replace("ell = 8", "ell = 4") + "lambda = 2\n")
    assert main(["sample", "--config", bad, "--out", str(tmp_path / "x")]) == 2
    assert "lambda^2 < ell - 1" in capsys.readouterr().err
    assert main(["sweep", "--config", write(tmp_path, SMALL), "--out", str(tmp_path / "x")]) == 2
    assert main(["sample", "--config", str(tmp_path / "missing.cfg")]) == 2
    assert main(["verify", "nonsense"]) == 2
    assert main(["frobnicate"]) == 2


def test_failure_fraction_exit(tmp_path):
    # a VE run from a wide start with a tiny data variance and a huge step diverges
    text = "process = ve\nve_rate = 1\ndata_var = 1e-6\nT = 4\nh = 1\nell = 2\nN = 500\n"
    code = main(["sample", "--config", write(tmp_path, text), "--out", str(tmp_path / "f")])
    assert code in (0, 3)
    _, rows = read_csv(tmp_path / "f" / "summary.csv")
    frac = float(dict(rows[1:])["failure_fraction"])
    assert (code == 3) == (frac > 0.01)


def test_sweep_outputs(tmp_path):
    cfg = write(tmp_path, SMALL + "sweep_ell = 2, 4, 8\nsweep_ellh = 0.08\n")
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "s")]) == 0
    _, rows = read_csv(tmp_path / "s" / "report.csv")
    assert rows[0][:3] == ["h", "ell", "lam"] and len(rows) == 4
    _, rows = read_csv(tmp_path / "s" / "slopes.csv")
    assert any(r[0] == "ell" and r[1] == "kl" for r in rows[1:])


def test_verify_identities(capsys):
    assert main(["verify", "identities"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 4 and "FAIL" not in out
