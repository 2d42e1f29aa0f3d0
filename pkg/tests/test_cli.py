from __future__ import annotations

import json
import subprocess
import sys

import pytest

from rrk_lab.cli import DEFAULTS, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, EXIT_OK, main, parse_config
from rrk_lab.errors import ConfigError


def test_defaults_are_applied():
    spec = parse_config("integrate")
    assert (spec.problem, spec.method, spec.dt, spec.t_end) == ("duffing", "rk44", 0.5, 500.0)
    assert parse_config("converge").dts == (0.4, 0.2, 0.1, 0.05, 0.025)
    assert set(DEFAULTS) >= {"integrate", "converge", "errgrowth", "poincare", "volume"}


def test_unknown_key_suggests_correction():
    with pytest.raises(ConfigError) as exc:
        parse_config("integrate", {"stepsize": 0.1})
    assert "stepsize" in str(exc.value) and "'dt'" in str(exc.value)
    with pytest.raises(ConfigError) as exc:
        parse_config("integrate", {"t-end": 3})
    assert "'t_end'" in str(exc.value)


def test_flags_override_file_override_defaults(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"dt": 0.1, "t_end": 7}))
    assert parse_config("integrate", cfg).dt == 0.1
    spec = parse_config("integrate", cfg, {"dt": 0.05})
    assert spec.dt == 0.05 and spec.t_end == 7.0


def test_validation_of_invariant_and_partition():
    with pytest.raises(ConfigError):
        parse_config("integrate", {"problem": "duffing", "invariant": "mass"})
    with pytest.raises(ConfigError):
        parse_config("integrate", {"problem": "kdv", "scheme": "symplectic-euler"})
    parse_config("integrate", {"problem": "duffing", "scheme": "symplectic-euler"})
    with pytest.raises(ConfigError):
        parse_config("integrate", {"method": "rk5"})
    with pytest.raises(ConfigError):
        parse_config("integrate", {"dt": "fast"})


def test_lemma_command(tmp_path, capsys):
    out = tmp_path / "lemma.csv"
    assert main(["lemma-a2", "--output", str(out)]) == EXIT_OK
    assert "all residuals zero" in capsys.readouterr().out
    lines = out.read_text().splitlines()
    assert lines[0] == "s,m,lhs,rhs,residual"
    assert lines[1] == "1,1,1,1,0"
    assert len(lines) == 1 + 42


def test_converge_json_summary(tmp_path):
    out = tmp_path / "conv.csv"
    assert main(["converge", "--output", str(out)]) == EXIT_OK
    data = json.loads(out.with_suffix(".json").read_text())
    assert data["status"] == "ok"
    order = data["fits"]["order"]
    assert order["slope"] == pytest.approx(4.0, abs=0.25)
    assert order["r_squared"] >= 0.98
    assert order["window"][0] > order["window"][1]
    assert data["spec"]["method"] == "heun3"
    assert data["version"] == "0.1.0"


def test_integrate_duffing_baseline_drifts(tmp_path):
    out = tmp_path / "duff.csv"
    code = main(["integrate", "--scheme", "baseline", "--t-end", "100", "--output", str(out)])
    assert code == EXIT_OK
    summary = json.loads(out.with_suffix(".json").read_text())["summary"]
    assert summary["max_drift_energy"] >= 1e-6
    header = out.read_text().splitlines()[0]
    assert header == "time,gamma,energy,u0,u1"


def test_numerical_failure_exit_code(tmp_path):
    out = tmp_path / "lv.csv"
    code = main(["integrate", "--problem", "lotka-volterra", "--scheme", "baseline",
                 "--dt", "3", "--t-end", "30", "--output", str(out)])
    assert code == EXIT_NUMERIC
    data = json.loads(out.with_suffix(".json").read_text())
    assert data["status"] == "numerical-failure"
    assert data["error"]["type"] == "DomainViolation"
    assert isinstance(data["error"]["step_index"], int)
    assert not out.exists()


def test_config_and_io_exit_codes(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"stepsize": 0.1}))
    assert main(["integrate", "--config", str(bad)]) == EXIT_CONFIG
    assert main(["integrate", "--config", str(tmp_path / "missing.json")]) == EXIT_IO
    out = tmp_path / "no" / "such" / "dir.csv"
    assert main(["lemma-a2", "--max-s", "3", "--output", str(out)]) == EXIT_IO


def test_show_defaults(capsys):
    assert main(["poincare", "--show-defaults"]) == EXIT_OK
    data = json.loads(capsys.readouterr().out)
    assert data["problem"] == "henon-heiles" and data["record_coords"] == [1, 3]


@pytest.mark.parametrize("argv", [
    ["volume", "--n-points", "20", "--t-end", "10"],
    ["integrate", "--problem", "henon-heiles", "--method", "ssprk33", "--dt", "0.1",
     "--t-end", "20"],
])
def test_repeat_runs_are_byte_identical(tmp_path, argv):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(argv + ["--output", str(a)]) == EXIT_OK
    assert main(argv + ["--output", str(b)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()


def test_module_entry_point(tmp_path):
    out = tmp_path / "g.csv"
    proc = subprocess.run([sys.executable, "-m", "rrk_lab.cli", "gamma-asymptotic",
                           "--output", str(out)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    summary = json.loads(proc.stdout.strip().splitlines()[-1])
    assert summary["exponent"] == pytest.approx(2.0, abs=0.1)
    assert summary["relative_constant_error"] <= 0.05
