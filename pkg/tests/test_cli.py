import json
import subprocess
import sys

import pytest

from ruelle_lab import __version__
from ruelle_lab.cli import BUILTINS, EXIT_CAP, EXIT_CONFIG, EXIT_OK, main, resolve_config
from ruelle_lab.errors import ConfigError

PRESSURE = """
[system]
builtin = "doubling"
roof = { kind = "constant", value = 1.0 }

[task.pressure]
N = 1024
"""


def run_cli(tmp_path, text, *extra):
    cfg = tmp_path / "exp.toml"
    cfg.write_text(text)
    out = tmp_path / "out"
    code = main(["--config", str(cfg), "--out", str(out), *extra])
    return code, out


def test_pressure_report(tmp_path):
    code, out = run_cli(tmp_path, PRESSURE)
    assert code == EXIT_OK
    doc = json.loads((out / "pressure.json").read_text())
    assert doc["version"] == __version__
    assert doc["config"]["task"]["pressure"]["potential"] == "zero"
    assert abs(doc["result"]["pressure"] - 0.693147) < 1e-6


def test_theorem42_report(tmp_path):
    code, out = run_cli(tmp_path, '[system]\nbuiltin = "doubling"\n[task.theorem42]\nm_max = 6\n')
    assert code == EXIT_OK
    res = json.loads((out / "theorem42.json").read_text())["result"]
    assert res["rhoA"] == 0.5 and res["p0"] == 1
    csv = (out / "theorem42.csv").read_text().splitlines()
    assert csv[0].startswith("# ") and csv[1] == "depth,minRatio,maxRatio"


@pytest.mark.parametrize(
    "text",
    [
        '[system]\nbuiltin = "doubling"\n[task.pressure]\n[task.orbits]\n',
        '[system]\nbuiltin = "doubling"\n[task.unknown]\n',
        '[system]\nbuiltin = "nope"\n[task.pressure]\n',
        '[system]\nbuiltin = "doubling"\n[task.pressure]\nN = "big"\n',
        '[system]\nbuiltin = "doubling"\n[task.pressure]\nbogus = 1\n',
        '[system]\nbuiltin = "cat2d"\n[task.pressure]\n',
        '[system]\nbuiltin = "cat2d"\neps = 0.5\n[task.lyapunov]\n',
        "not toml [",
    ],
)
def test_config_errors_leave_no_output(tmp_path, capsys, text):
    code, out = run_cli(tmp_path, text)
    assert code == EXIT_CONFIG
    assert not out.exists()
    err = json.loads(capsys.readouterr().err.strip())
    assert err["exit_code"] == EXIT_CONFIG and err["message"]


def test_resource_cap_exit(tmp_path, capsys):
    code, out = run_cli(tmp_path, '[system]\nbuiltin = "doubling"\n[task.cylinders]\ndepth = 30\n')
    assert code == EXIT_CAP
    assert not out.exists()
    assert json.loads(capsys.readouterr().err)["error"] == "resource-cap"


def test_resolve_defaults():
    cfg = resolve_config({"system": {"builtin": "doubling"}, "task": {"scan": {"m": 5}}, "seed": 3})
    assert cfg["task"]["scan"]["b"] == [10.0, 20.0, 50.0, 100.0, 200.0]
    assert cfg["seed"] == 3
    with pytest.raises(ConfigError):
        resolve_config({"system": {"builtin": "doubling"}, "task": {}})


def test_list_builtins(capsys):
    assert main(["--list-builtins", "--format", "json"]) == EXIT_OK
    cat = json.loads(capsys.readouterr().out)
    names = {b["name"] for b in cat}
    assert {"doubling", "perturbed-doubling", "golden-mean", "cat2d", "block4d"} <= names
    assert len(cat) == len(BUILTINS) >= 5
    assert main(["--list-builtins"]) == EXIT_OK
    assert "block4d" in capsys.readouterr().out


def test_unknown_flag_is_usage_error():
    proc = subprocess.run([sys.executable, "-m", "ruelle_lab", "--bogus"], capture_output=True, text=True)
    assert proc.returncode == 2 and "usage" in proc.stderr


def test_reports_identical_across_threads(tmp_path):
    text = '[system]\nbuiltin = "doubling"\n[task.scan]\nN = 256\nm = 8\nb = [10.0, 40.0]\n'
    outputs = []
    for threads in ("1", "2"):
        sub = tmp_path / threads
        sub.mkdir()
        code, out = run_cli(sub, text, "--threads", threads, "--seed", "7")
        assert code == EXIT_OK
        outputs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    assert outputs[0] == outputs[1]
    assert set(outputs[0]) == {"scan.json", "scan.csv"}
