import subprocess
import sys

import pytest

from asflow.cli import run
from asflow.scenarios import data_dir


def summary(out):
    return dict(line.split("=", 1) for line in (out / "summary.txt").read_text().splitlines())


def test_opt_prints_80(tmp_path, capsys):
    assert run(["opt", "--instance", "fig2.instance", "--out", str(tmp_path)]) == 0
    assert capsys.readouterr().out == "80\n"
    assert summary(tmp_path)["OPT"] == "80"


def test_simulate_mirror_bundle(tmp_path):
    out = tmp_path / "runs" / "mirror"
    code = run(["simulate", "--instance", "fig2.instance", "--strategy", "p1=mirror:p2",
                "--strategy", "p2=@p2.strategy", "--out", str(out)])
    assert code == 0
    s = summary(out)
    assert float(s["PAYOFF_p1"]) == pytest.approx(40) and float(s["PAYOFF_p2"]) == pytest.approx(40)
    assert float(s["R_e1"]) == pytest.approx(10) and float(s["R_e2"]) == pytest.approx(10)
    for name in ("inflow_e1_p1.csv", "outflow_e2_p2.csv", "queue_e1.csv", "exit_time_e2.csv", "analysis.csv"):
        assert (out / name).exists()


def test_simulate_twice_is_byte_identical(tmp_path):
    args = ["simulate", "--instance", "fig2.instance", "--strategy", "p1=@response.strategy",
            "--strategy", "p2=@p2.strategy"]
    assert run(args + ["--out", str(tmp_path / "a")]) == 0
    assert run(args + ["--out", str(tmp_path / "b")]) == 0
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert files == sorted(p.name for p in (tmp_path / "b").iterdir())
    for name in files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_simulate_fixed_mode(tmp_path):
    code = run(["simulate", "--instance", "fig2.instance", "--strategy", "p1=equilibrium",
                "--strategy", "p2=equilibrium", "--mode", "fixed", "--step", "0.01", "--out", str(tmp_path)])
    assert code == 0
    assert summary(tmp_path)["MODE"] == "fixed_step"


def test_verify_exit_codes(tmp_path):
    assert run(["verify", "--instance", "fig2.instance", "--equilibrium", "--out", str(tmp_path / "a")]) == 0
    assert summary(tmp_path / "a")["VERDICT_FIG2"] == "VERIFIED"
    starve = '{"table": {"s": [{"from": 0, "to": 21, "proportions": {"e1": 1.0}}]}}'
    code = run(["verify", "--instance", "fig2.instance", "--strategy", f"p1={starve}", "--strategy",
                f"p2={starve}", "--out", str(tmp_path / "b")])
    assert code == 2
    assert run(["verify", "--instance", "fig5.instance", "--out", str(tmp_path / "c")]) == 1


def test_verify_directory_batch(tmp_path):
    code = run(["verify", "--instance", str(data_dir() / "suites" / "staged"), "--equilibrium",
                "--out", str(tmp_path)])
    assert code == 0
    assert sum(k.startswith("VERDICT_") for k in summary(tmp_path)) == 3


def test_counterexample(tmp_path, capsys):
    code = run(["counterexample", "--instance", "fig2.instance", "--opponent", "@p2.strategy",
                "--out", str(tmp_path)])
    assert code == 0
    s = summary(tmp_path)
    assert float(s["RESPONSE_PAYOFF"]) > 40
    assert float(s["R_HAT_2"]) < 10 < float(s["R_HAT_1"])
    assert {"EPSILON", "DELTA"} <= set(s) and s["RESULT"] == "PASS"
    assert "RESPONSE_PAYOFF=" in capsys.readouterr().out
    assert (tmp_path / "response_p1.strategy").exists()


def test_counterexample_random_opponent(tmp_path):
    assert run(["counterexample", "--instance", "fig2.instance", "--opponent", "random", "--seed", "5",
                "--out", str(tmp_path)]) == 0


def test_replay_check_single(tmp_path):
    code = run(["replay-check", "--instance", "single_edge.instance", "--strategy", "p1=@single_edge.strategy",
                "--out", str(tmp_path)])
    assert code == 0 and summary(tmp_path)["RESULT"] == "PASS"


def test_export_round_trip(tmp_path):
    assert run(["export", "--instance", "fig2.instance", "--strategy", "p1=mirror:p2", "--strategy",
                "p2=@p2.strategy", "--out", str(tmp_path / "x")]) == 0
    x = tmp_path / "x"
    code = run(["simulate", "--instance", str(x / "instance.json"), "--strategy", f"p1=@{x / 'p1.strategy'}",
                "--strategy", f"p2=@{x / 'p2.strategy'}", "--out", str(tmp_path / "y")])
    assert code == 0
    assert float(summary(tmp_path / "y")["PAYOFF_p1"]) == pytest.approx(40)


@pytest.mark.parametrize("argv", [
    ["bogus"],
    [],
    ["opt"],
    ["opt", "--instance", "no_such.instance"],
    ["simulate", "--instance", "fig2.instance", "--strategy", "p1"],
    ["simulate", "--instance", "fig2.instance", "--mode", "fixed"],
    ["opt", "--instance", "fig5.instance"],
])
def test_usage_and_input_errors(argv, tmp_path, capsys):
    assert run(argv + (["--out", str(tmp_path)] if argv and argv[0] != "bogus" else [])) == 1
    assert capsys.readouterr().err


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "asflow", "opt", "--instance", "fig2.instance",
                          "--out", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout == "80\n"
