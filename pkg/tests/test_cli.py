import shutil

import numpy as np
import pytest

from etcsim import backstepping as bs
from etcsim import cli, config
from etcsim import gains as G
from etcsim.errors import ConfigError


def _kv(text):
    return dict(line.split("=", 1) for line in text.strip().splitlines() if "=" in line)


# ------------------------------------------------------------- config

@pytest.mark.parametrize("expr,s,expected", [
    ("linear:10", 2.0, 20.0),
    ("poly:70,40,15,3.56,0.27", 1.0, 128.83),
    ("power:2,0.5", 4.0, 4.0),
    ("scale(1/0.99, linear:70)", 1.0, 70 / 0.99),
    ("compose(linear:2, poly:0,1)", 3.0, 18.0),
    ("max(identity, poly:0,1)", 2.0, 4.0),
    ("add(linear:1, linear:2)", 1.0, 3.0),
    ("zero", 5.0, 0.0),
])
def test_gain_expressions(expr, s, expected):
    assert config.parse_gain(expr).scalar(s) == pytest.approx(expected)


@pytest.mark.parametrize("bad", ["", "cubic:1", "linear:1,2", "max(linear:1", "scale(2)",
                                 "poly:-1", "linear:abc", "frob(linear:1)"])
def test_bad_gain_expressions(bad):
    with pytest.raises(ConfigError):
        config.parse_gain(bad)


def test_fraction_numbers():
    assert config.parse_number("1/0.99") == pytest.approx(1.0101010101)
    with pytest.raises(ConfigError):
        config.parse_number("1/0")


def test_describe_gain():
    assert config.describe_gain(G.linear(2)) == "2s"
    assert config.describe_gain(G.polynomial([1, 0, 3])) == "3s^3 + 1s"
    assert config.describe_gain(G.zero_gain()) == "0"


def test_shipped_design_file_matches_builtin():
    d_file, opts = config.load_design("paper_sec4_design")
    d_builtin = bs.benchmark_design()
    s = G.default_grid()
    assert opts["xi"] == "declared"
    for a, b in zip(bs.synthesize(d_file).synthesized, bs.synthesize(d_builtin).synthesized):
        np.testing.assert_array_equal(a.gamma_bar_Z(s), b.gamma_bar_Z(s))
        np.testing.assert_array_equal(a.gamma_bar_X(s), b.gamma_bar_X(s))
    for fa, fb in zip(d_file.declared_xi, d_builtin.declared_xi):
        np.testing.assert_array_equal(fa(s), fb(s))


def test_scenario_overrides_and_trigger():
    sc, cp = config.load_scenario("paper_sec4", ["scenario.horizon=2", "params.w1=0.25"])
    assert sc.horizon == 2.0 and sc.params["w1"] == 0.25
    assert sc.gamma_bar.slope == pytest.approx(70 / 0.99)
    assert sc.T_pred == pytest.approx(0.99 / 70)
    assert config.required_checks(cp) == ("zeno", "interval_bound", "convergence")
    with pytest.raises(ConfigError):
        config.load_scenario("paper_sec4", ["noseparator"])
    with pytest.raises(ConfigError):
        config.load_scenario("paper_sec4", ["checks.require=zeno,bogus"])


def test_trigger_from_gamma_and_eps(tmp_path):
    p = tmp_path / "s.ini"
    p.write_text("[scenario]\nsystem = scalar_demo\n[trigger]\ngamma = poly:0,1\n"
                 "eps1 = 2\neps2 = 1\n")
    sc, _ = config.load_scenario(str(p))
    assert sc.gamma_bar.scalar(3.0) == pytest.approx(21.0)
    p.write_text("[scenario]\nsystem = scalar_demo\n[trigger]\ngamma = linear:1\neps = 0.5\n")
    with pytest.raises(ConfigError):
        config.load_scenario(str(p))


# ---------------------------------------------------------------- cli

def test_simulate_shipped_scenario(tmp_path, capsys):
    code = cli.main(["simulate", "paper_sec4", "--out", str(tmp_path)])
    out = _kv(capsys.readouterr().out)
    assert code == 0
    assert float(out["tail_interval"]) == pytest.approx(0.0141, rel=0.05)
    for f in ("series.csv", "events.csv", "summary.txt"):
        assert (tmp_path / f).is_file()
    assert _kv((tmp_path / "summary.txt").read_text())["status"] == "ok"


def test_simulate_is_byte_deterministic(tmp_path):
    for d in ("a", "b"):
        assert cli.main(["simulate", "scalar_demo", "--out", str(tmp_path / d),
                         "--set", "scenario.horizon=2", "--set", "checks.require=zeno"]) == 0
    for f in ("series.csv", "events.csv", "summary.txt"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_invariant_failure_exits_one(tmp_path, capsys):
    code = cli.main(["simulate", "paper_sec4", "--out", str(tmp_path),
                     "--set", "scenario.horizon=1", "--set", "checks.require=stabilization"])
    err = capsys.readouterr().err
    assert code == 1 and "reason=invariant" in err and "stabilization" in err


def test_divergence_exits_one(tmp_path, capsys):
    code = cli.main(["simulate", "scalar_demo", "--out", str(tmp_path),
                     "--set", "params.k=-1", "--set", "scenario.horizon=20"])
    assert code == 1 and "reason=divergence" in capsys.readouterr().err
    assert (tmp_path / "summary.txt").is_file()


@pytest.mark.parametrize("argv", [
    ["simulate", "no_such_scenario"],
    ["simulate", "paper_sec4", "--set", "scenario.step=abc"],
    ["simulate", "paper_sec4", "--set", "trigger.gamma_bar=cubic:1"],
    ["frobnicate"],
    ["analyze"],
])
def test_parse_errors_exit_two(argv, tmp_path, capsys):
    try:
        code = cli.main(argv + ["--out", str(tmp_path)] if argv[0] != "frobnicate" else argv)
    except SystemExit as exc:
        code = exc.code
    assert code == 2
    assert "reason=" in capsys.readouterr().err


def test_analyze_linear(tmp_path, capsys):
    assert cli.main(["analyze", "--gamma-bar", "linear:10", "--r-sup", "1",
                     "--out", str(tmp_path)]) == 0
    out = _kv(capsys.readouterr().out)
    assert float(out["T_pred"]) == pytest.approx(0.1)
    assert float(out["T_max"]) == pytest.approx(0.1)
    assert (tmp_path / "analysis.txt").is_file()


def test_analyze_certificate_file(tmp_path, capsys):
    assert cli.main(["analyze", "analyze_certificate", "--out", str(tmp_path)]) == 0
    out = _kv(capsys.readouterr().out)
    assert float(out["certificate.T_pred_gamma_tilde"]) <= float(out["certificate.T_pred_gamma"])


def test_analyze_infinite_slope_fails(tmp_path, capsys):
    assert cli.main(["analyze", "--gamma-bar", "power:1,0.5", "--out", str(tmp_path)]) == 1
    assert "reason=zeno_risk" in capsys.readouterr().err


def test_synthesize_reports(tmp_path, capsys):
    assert cli.main(["synthesize", "paper_sec4_design", "--out", str(tmp_path)]) == 0
    out = _kv(capsys.readouterr().out)
    assert out["level1.psi_passed"] == out["level2.psi_passed"] == "true"
    assert out["level2.gamma_bar_Z"] == "2s"
    assert out["level2.gamma_bar_X"] == "1s"
    assert float(out["gamma_bar_slope"]) == pytest.approx(70.707, rel=1e-3)
    assert (tmp_path / "synthesis.txt").read_text().endswith("status=ok\n")


def test_synthesize_failure_reports_level(tmp_path, capsys):
    assert cli.main(["synthesize", "cubic_controller_design", "--out", str(tmp_path)]) == 1
    cap = capsys.readouterr()
    assert "reason=synthesis level=2" in cap.err
    assert "level2.psi_passed=false" in cap.out


def test_batch_directory_with_jobs(tmp_path, capsys):
    src = config.SCENARIO_DIR
    d = tmp_path / "batch"
    d.mkdir()
    for name in ("scalar_demo", "interconnected_demo"):
        shutil.copy(src / f"{name}.ini", d)
    code = cli.main(["simulate", str(d), "--jobs", "2", "--out", str(tmp_path / "o"),
                     "--set", "scenario.horizon=2", "--set", "checks.require=zeno"])
    assert code == 0
    assert (tmp_path / "o" / "scalar_demo" / "events.csv").is_file()
    assert (tmp_path / "o" / "interconnected_demo" / "events.csv").is_file()
