import json
import subprocess
import sys

from critbubble.cli import main


def test_constants_to_file(tmp_path):
    out = tmp_path / "c.json"
    assert main(["constants", "--n", "5", "--k", "2", "--beta", "1", "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["result"]["gamma_tilde"] == 6.5625
    assert data["config"]["n"] == 5


def test_expansion_csv_to_stdout(capsys):
    assert main(["expansion", "--n", "5", "--k", "2", "--beta", "1", "--lambda", "12", "--points", "6"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "eps,dirichlet,l2,lq,Q_lambda,regime_prediction"
    assert len(lines) == 7


def test_bad_config_exits_with_message(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("n = 3\nbogus = 2\n")
    assert main(["eigen", "--config", str(cfg)]) == 2
    assert "bogus" in capsys.readouterr().err


def test_minimize_then_pohozaev(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("n = 5\nbeta = 1\ngrid_M = 2048\ngrid_ratio = 0.99\n")
    sol = tmp_path / "m.json"
    assert main(["minimize", "--config", str(cfg), "--lambda", "19", "--refine", "--out", str(sol)]) == 0
    assert json.loads(sol.read_text())["result"]["verdict"] == "achieved"
    out = tmp_path / "p.json"
    assert main(["pohozaev", "--config", str(cfg), "--solution", str(sol), "--lambda", "19",
                 "--out", str(out)]) == 0
    assert json.loads(out.read_text())["result"]["relative_residual"] < 1e-2


def test_cache_dir_serves_identical_bytes(tmp_path, monkeypatch):
    monkeypatch.delenv("CRITBUBBLE_CACHE_DIR", raising=False)
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    args = ["certify", "--n", "3", "--beta", "1", "--lambda", "1", "--cache-dir", str(tmp_path / "store")]
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert json.loads(a.read_text())["result"]["kind"] == "no-solution-below-alpha"


def test_curve_and_family(tmp_path):
    out = tmp_path / "curve.csv"
    assert main(["curve", "--n", "3", "--beta", "1", "--lambda-from", "0", "--lambda-to", "10",
                 "--steps", "4", "--grid-M", "256", "--out", str(out)]) == 0
    assert out.read_text().splitlines()[0] == "lambda,S_lambda,iterations"
    fam = tmp_path / "fam.json"
    assert main(["family", "--n", "4", "--beta", "1", "--t", "0.5", "--out", str(fam)]) == 0
    assert abs(json.loads(fam.read_text())["result"]["Gamma"]) < 1e-8


def test_console_script_help():
    res = subprocess.run([sys.executable, "-m", "critbubble.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("constants", "expansion", "family", "minimize", "eigen", "annulus", "curve",
                "pohozaev", "certify"):
        assert cmd in res.stdout
