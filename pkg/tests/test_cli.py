import subprocess
import sys

import numpy as np
import pytest

from mlpattern.cli import main
from mlpattern.io import read_spacetime
from mlpattern.model import load_config


def header(path):
    return path.read_text().splitlines()[0].split(",")


def test_help_and_unknown_command(capsys):
    assert main(["--help"]) == 0
    assert main(["no-such-command"]) == 2
    assert main([]) == 2


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "mlpattern", "validate-config", "/dev/null"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "psi = 0.1665" in r.stdout


def test_validate_config(tmp_path, capsys):
    empty = tmp_path / "empty.cfg"
    empty.write_text("")
    assert main(["validate-config", str(empty)]) == 0
    out = capsys.readouterr().out
    assert "changed" not in out and "v1 = -0.2813" in out

    changed = tmp_path / "c.cfg"
    changed.write_text("v1 = -0.25\n")
    assert main(["validate-config", str(changed)]) == 0
    assert "v1 = -0.25   (changed)" in capsys.readouterr().out

    bad = tmp_path / "bad.cfg"
    bad.write_text("psi = -1\nfoo = 2\n")
    assert main(["validate-config", str(bad)]) == 2
    err = capsys.readouterr().err
    assert "psi" in err and "foo" in err

    assert main(["validate-config", str(tmp_path / "missing.cfg")]) == 2
    assert main(["validate-config", str(tmp_path)]) == 2


def test_bad_set_override(tmp_path):
    assert main(["turing-check", "--set", "psi=abc", "--out", str(tmp_path / "d.csv")]) == 2
    assert main(["turing-check", "--set", "psi", "--out", str(tmp_path / "d.csv")]) == 2


def test_turing_check(tmp_path, capsys):
    out = tmp_path / "disp.csv"
    assert main(["turing-check", "--param-at", "v1=-0.325", "--branch", "upper", "--out", str(out)]) == 0
    assert "NoTuring" in capsys.readouterr().out
    assert header(out) == ["k", "T", "Delta", "re_lambda_plus", "im_lambda_plus",
                           "re_lambda_minus", "im_lambda_minus"]
    data = np.loadtxt(out, delimiter=",", skiprows=1)
    assert data.shape == (2001, 7) and np.all(data[:, 3] < 0)


def test_turing_check_unstable_is_usage_error(tmp_path):
    assert main(["turing-check", "--set", "v1=-0.25", "--branch", "upper", "--out", str(tmp_path / "d.csv")]) == 2


def test_bifurcate_outputs(tmp_path):
    out = tmp_path / "scan"
    assert main(["bifurcate", "--param", "v1", "--from", "-0.35", "--to", "-0.2", "--steps", "100",
                 "--out", str(out)]) == 0
    assert header(out / "branches.csv") == ["param", "branch_id", "V", "N", "re_lambda1", "im_lambda1",
                                            "re_lambda2", "im_lambda2", "stability"]
    assert header(out / "events.csv") == ["param", "kind", "evidence"]
    assert header(out / "cycles.csv") == ["param", "period", "v_min", "v_max"]
    kinds = [l.split(",")[1] for l in (out / "events.csv").read_text().splitlines()[1:]]
    assert "Hopf" in kinds and "SNIC" in kinds
    p, L = load_config(out / "meta.txt")
    assert L == 1.0


def test_bifurcate_bad_steps(tmp_path):
    assert main(["bifurcate", "--param", "v1", "--from", "-0.35", "--to", "-0.2", "--steps", "10",
                 "--out", str(tmp_path / "s")]) == 2
    assert main(["bifurcate", "--param", "gK", "--from", "0", "--to", "1"]) == 2


SIM = ["simulate", "--set", "v1=-0.325", "--t-end", "20", "--n-per-unit", "50"]


def test_simulate_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(SIM + ["--out", str(a)]) == 0
    assert main(SIM + ["--out", str(b)]) == 0
    for name in ("spacetime_V.csv", "spacetime_N.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert header(a / "spacetime_V.csv")[:2] == ["tau", "-1"]
    x, t, V = read_spacetime(a / "spacetime_V.csv")
    assert x.size == 101 and t[-1] == 20.0 and V.shape == (21, 101)
    assert "classification = " in (a / "summary.txt").read_text()
    p, L = load_config(a / "meta.txt")
    assert p.v1 == -0.325
    assert "# ic_resolved:" in (a / "meta.txt").read_text()


def test_output_env_var(tmp_path, monkeypatch):
    monkeypatch.setenv("MLPATTERN_OUT", str(tmp_path))
    assert main(SIM + ["--out", "rel"]) == 0
    assert (tmp_path / "rel" / "spacetime_V.csv").exists()


def test_simulate_bad_ic():
    assert main(SIM + ["--ic", "square"]) == 2
    assert main(SIM + ["--ic", "gaussian:sigma=-1"]) == 2


def test_simulate_bad_branch(tmp_path):
    assert main(SIM + ["--branch", "middle", "--out", str(tmp_path / "x")]) == 2


def test_wavespeed_on_written_csv(tmp_path, capsys):
    x = np.linspace(-1, 1, 401)
    t = np.arange(0, 101.0)
    V = -0.7 + 0.6 / (1 + np.exp((np.abs(x)[None, :] - (0.05 + 0.004 * t)[:, None]) / 0.05))
    path = tmp_path / "spacetime_V.csv"
    np.savetxt(path, np.column_stack([t, V]), delimiter=",", fmt="%.17g",
               header=",".join(["tau"] + ["%.17g" % v for v in x]), comments="")
    assert main(["wavespeed", "--spacetime", str(path)]) == 0
    speed = float(capsys.readouterr().out.split()[0])
    assert speed == pytest.approx(0.004, abs=1e-4)
    # flat field: no crossings is a numerical failure
    np.savetxt(path, np.column_stack([t, np.full_like(V, -0.7)]), delimiter=",",
               header=",".join(["tau"] + ["%.17g" % v for v in x]), comments="")
    assert main(["wavespeed", "--spacetime", str(path), "--level", "-0.4"]) == 3
    assert main(["wavespeed", "--spacetime", str(tmp_path / "nope.csv")]) == 2


def test_shoot_front(tmp_path, capsys):
    out = tmp_path / "front"
    assert main(["shoot", "--set", "v1=-0.2465", "--set", "psi=0.5", "--from", "upper", "--to", "lower",
                 "--c-min", "0.003", "--c-max", "0.006", "--out", str(out)]) == 0
    assert header(out / "orbit.csv") == ["zeta", "V", "W", "N"]
    text = (out / "speed.txt").read_text()
    assert "kind = Heteroclinic" in text
    c = float(text.split("\n")[0].split("=")[1])
    assert c == pytest.approx(0.0043, rel=0.1)


def test_shoot_without_connection_is_numeric_failure(tmp_path):
    assert main(["shoot", "--set", "v1=-0.2465", "--set", "psi=0.1", "--c-min", "0.02", "--c-max", "0.04",
                 "--out", str(tmp_path / "s")]) == 3


def test_repro_unknown_figure(tmp_path):
    assert main(["repro", "9.9", "--out", str(tmp_path)]) == 2


def test_repro_panel(tmp_path, capsys):
    assert main(["repro", "5.1a", "--n-per-unit", "100", "--out", str(tmp_path)]) == 0
    assert "HomogeneousSteady" in (tmp_path / "fig5.1a" / "summary.txt").read_text()
