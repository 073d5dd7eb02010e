import json
import math
import os
import subprocess
import sys

import pytest

from spde_powvar import cli


def run(tmp_path, *args):
    return cli.main([*args, "--output-dir", str(tmp_path)])


def test_mu_prints_repr(tmp_path, capsys):
    assert run(tmp_path, "kernels-table", "--op", "mu", "--a", "1", "--b", "0", "--gamma", "1") == 0
    assert capsys.readouterr().out.strip() == "0.6666666666666666"
    assert (tmp_path / "kernels_table.csv").read_text().splitlines()[0] == "mu"


def test_kernel_tables(tmp_path, capsys):
    assert run(tmp_path, "kernels-table", "--op", "q_expectations", "--N", "20", "--M", "1",
               "--domain", "line") == 0
    header, row = capsys.readouterr().out.splitlines()
    assert header == "q_diag,q_nd,q_nd_restricted,total"
    assert float(row.split(",")[0]) == 40.0
    assert run(tmp_path, "kernels-table", "--op", "ux_cov", "--N", "4", "--M", "2") == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "t_k,t_l,lag,cov" and len(lines) == 1 + 3 * 4
    assert run(tmp_path, "kernels-table", "--op", "tau") == 0
    tau = float(capsys.readouterr().out)
    assert tau == pytest.approx(0.01 / (0.1**1.5 * math.sqrt(math.pi)), rel=1e-14)


def test_simulate_is_deterministic(tmp_path):
    args = ["simulate", "--N", "16", "--M", "2", "--modes", "100", "--seed", "4"]
    assert run(tmp_path / "a", *args) == 0
    assert run(tmp_path / "b", *args) == 0
    for name in ("field.csv", "field.json", "config_echo.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_config_echo_reproduces_run(tmp_path):
    assert run(tmp_path / "a", "simulate", "--N", "12", "--t", "0.3", "--modes", "50",
               "--kind", "delta_u_increments", "--gamma", "1.5", "--seed", "9") == 0
    echo = tmp_path / "a" / "config_echo.json"
    assert json.loads(echo.read_text())["subcommand"] == "simulate"
    assert run(tmp_path / "b", "simulate", "--config", str(echo)) == 0
    assert (tmp_path / "a" / "field.csv").read_bytes() == (tmp_path / "b" / "field.csv").read_bytes()


def test_key_value_config_and_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# small run\nN = 10\nsigma = 0.2\nM=3\nestimator = sigma2_ux\n")
    out = tmp_path / "o"
    assert cli.main(["estimate", "--config", str(cfg), "--set", "sigma=0.3", "--N", "8",
                     "--output-dir", str(out)]) == 0
    echo = json.loads((out / "config_echo.json").read_text())
    assert echo["N"] == 8 and echo["sigma"] == 0.3 and echo["M"] == 3
    assert echo["times"] == [1 / 3, 2 / 3, 1.0]
    assert (out / "estimate.csv").read_text().startswith("estimator_id,")


def test_preset_with_override(tmp_path, capsys):
    assert run(tmp_path, "mc-normality", "--preset", "paper-fig2", "--reps", "3", "--N", "64",
               "--modes", "200") == 0
    for name in ("normality.csv", "histogram.csv", "qq.csv", "summary.json"):
        assert (tmp_path / name).exists()
    echo = json.loads((tmp_path / "config_echo.json").read_text())
    assert echo["times"] == [0.2] and echo["reps"] == 3 and echo["n_values"] is None
    assert capsys.readouterr().out.startswith("ks_stat=")


def test_consistency_sweep(tmp_path, capsys):
    assert run(tmp_path, "mc-consistency", "--estimator", "sigma2_ux", "--simulator", "cov_line",
               "--B", "1", "--n-values", "[8,16]", "--reps", "3", "--M", "2") == 0
    lines = (tmp_path / "consistency.csv").read_text().splitlines()
    assert lines[0] == "N,mean,stderr,failures" and len(lines) == 3
    assert capsys.readouterr().out.splitlines() == lines


def test_estimate_from_input(tmp_path, capsys):
    assert run(tmp_path / "s", "simulate", "--N", "32", "--M", "2", "--modes", "300") == 0
    assert run(tmp_path / "e", "estimate", "--input", str(tmp_path / "s" / "field.json")) == 0
    line = capsys.readouterr().out.splitlines()[-1]
    assert line.startswith("sigma2_check,") and line.endswith(",")


def test_outputs_stay_in_output_dir(tmp_path, monkeypatch):
    cwd = tmp_path / "cwd"
    cwd.mkdir()
    monkeypatch.chdir(cwd)
    assert cli.main(["estimate", "--N", "16", "--modes", "50", "--output-dir", str(tmp_path / "o")]) == 0
    assert not any(cwd.iterdir())


@pytest.mark.parametrize("args,code", [
    (["bogus"], 1),
    (["simulate", "--N", "ten"], 1),
    (["simulate", "--set", "nonsense"], 1),
    (["simulate", "--set", "colour=red"], 1),
    (["simulate", "--config", "/nonexistent/cfg"], 1),
    (["estimate", "--input", "/nonexistent/field.json"], 1),
    (["simulate", "--theta", "-1"], 2),
    (["simulate", "--N", "0"], 2),
    (["simulate", "--domain", "line", "--kind", "u_values"], 2),
    (["simulate", "--domain", "line", "--kind", "ux_increments", "--N", "5000"], 2),
    (["kernels-table", "--op", "mu", "--a", "0", "--b", "0"], 2),
    (["mc-normality", "--estimator", "theta2_ux", "--sigma", "0", "--simulator", "cov_line",
      "--B", "1", "--N", "8", "--reps", "2"], 3),
])
def test_exit_codes(tmp_path, args, code, capsys):
    assert run(tmp_path, *args) == code
    if code:
        assert capsys.readouterr().err.startswith("spde-powvar:")


def test_help_exits_zero(capsys):
    assert cli.main(["--help"]) == 0
    assert "simulate" in capsys.readouterr().out


def test_console_script_and_thread_env(tmp_path):
    env = dict(os.environ, SPDE_POWVAR_THREADS="2")
    args = ["mc-consistency", "--estimator", "sigma2_ux", "--simulator", "cov_line", "--B", "1",
            "--N", "16", "--reps", "4", "--output-dir"]
    a = subprocess.run([sys.executable, "-m", "spde_powvar", *args, str(tmp_path / "a")],
                       env=env, capture_output=True, text=True)
    b = subprocess.run([sys.executable, "-m", "spde_powvar", *args, str(tmp_path / "b"), "--threads", "1"],
                       capture_output=True, text=True)
    assert a.returncode == 0 and b.returncode == 0, a.stderr + b.stderr
    assert a.stdout == b.stdout


def test_verify_writes_report(tmp_path):
    assert run(tmp_path, "verify", "--trials", "2", "--seed", "1") == 0
    data = json.loads((tmp_path / "verify.json").read_text())
    assert data["passed"] is True
