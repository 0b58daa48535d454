import json
import subprocess
import sys
from pathlib import Path

import pytest

from buriedfem import cli
from buriedfem.errors import SchemaError

ROOT = Path(__file__).resolve().parents[1]
SMOKE = ROOT / "configs" / "smoke.toml"


def write(tmp_path, text, name="c.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_list_constellations(capsys):
    assert cli.main(["list-constellations"]) == 0
    out = capsys.readouterr().out
    assert "cube_minus_sigma1" in out and "D_PARALLEL_C" in out
    assert len(out.strip().splitlines()) == 17


def test_smoke_run(tmp_path):
    assert cli.main(["run", "--config", str(SMOKE), "--out-dir", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["schema_version"] == cli.SCHEMA_VERSION
    assert rep["config"]["seed"] == 0
    assert rep["scenarios"][0]["checks"]["solve"]["pass"]
    assert (tmp_path / "cube_n4.vtk").read_text().startswith("# vtk DataFile")
    assert (tmp_path / "cube_n4_boundary.vtk").exists()


def test_console_script(tmp_path):
    r = subprocess.run([sys.executable, "-m", "buriedfem.cli", "run", "--config", str(SMOKE),
                        "--out-dir", str(tmp_path)], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert "PASS" in r.stdout


def test_reports_are_byte_identical(tmp_path):
    args = ["transform-check", "cube", "-n", "2", "--out-dir", str(tmp_path), "--seed", "7"]
    assert cli.main(args) == 0
    first = (tmp_path / "report.json").read_bytes()
    assert cli.main(args) == 0
    assert (tmp_path / "report.json").read_bytes() == first
    rep = json.loads(first)
    assert rep["config"]["seed"] == 7 and rep["scenarios"][0]["seed"] == 7


def test_threads_do_not_change_report(tmp_path):
    cfg = write(tmp_path, """
schema_version = 1
[[scenario]]
name = "a"
constellation = "cube"
levels = [2, 4]
[[scenario]]
name = "b"
constellation = "cube_minus_sigma1"
levels = [4]
""")
    outs = []
    for threads in ("1", "2"):
        d = tmp_path / threads
        assert cli.main(["run", "--config", str(cfg), "--out-dir", str(d), "--threads",
                         threads]) == 0
        outs.append(json.loads((d / "report.json").read_text())["scenarios"])
    assert outs[0] == outs[1]


@pytest.mark.parametrize("text,where", [
    ("schema_version = 2\n[[scenario]]\nconstellation = 'cube'\n", "schema_version"),
    ("[[scenario]]\nconstellation = 'nowhere'\n", "scenario[0].constellation"),
    ("[[scenario]]\nconstellation = 'cube'\nlevels = [3]\n", "scenario[0].levels"),
    ("[[scenario]]\nconstellation = 'cube'\nchecks = ['magic']\n", "scenario[0].checks"),
    ("[[scenario]]\nconstellation = 'cube'\ntol = 1.0\n", "scenario[0].tol"),
    ("[[scenario]]\nconstellation = 'cube'\nbogus = 1\n", "scenario[0]"),
    ("[[scenario]]\nconstellation = 'cube'\ncoefficient = { kind = 'constant', matrix = [1, 1] }\n",
     "scenario[0].coefficient.matrix"),
    ("[[scenario]]\nconstellation = 'cube'\nchecks = ['symmetry']\n", "scenario[0].checks"),
    ("[[scenario]]\nconstellation = 'cube'\nlevels = [4, 8]\nchecks = ['convergence']\n",
     "scenario[0].levels"),
    ("seed = 1\n", "scenario"),
])
def test_validation_names_field(tmp_path, capsys, text, where):
    cfg = write(tmp_path, text)
    assert cli.main(["run", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 2
    assert f"error: {where}:" in capsys.readouterr().err


def test_syntax_error_reports_line(tmp_path, capsys):
    cfg = write(tmp_path, "schema_version = 1\n\n[[scenario]\n")
    assert cli.main(["run", "--config", str(cfg)]) == 2
    assert "line 3" in capsys.readouterr().err


def test_missing_config(tmp_path, capsys):
    assert cli.main(["run", "--config", str(tmp_path / "none.toml")]) == 2
    assert cli.main(["run"]) == 2


def test_non_identity_coefficient_needs_matrix(capsys):
    assert cli.main(["solve", "cube", "--coefficient", "constant"]) == 2
    assert "--matrix" in capsys.readouterr().err


def test_env_overrides(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.ENV_OUT_DIR, str(tmp_path / "env"))
    monkeypatch.setenv(cli.ENV_THREADS, "3")
    cfg = cli.resolve_config(cli.load_config(SMOKE))
    assert cfg["out_dir"] == str(tmp_path / "env") and cfg["threads"] == 3
    cfg = cli.resolve_config(cli.load_config(SMOKE), {"out_dir": "flag", "threads": 2})
    assert cfg["out_dir"] == "flag" and cfg["threads"] == 2
    monkeypatch.setenv(cli.ENV_THREADS, "many")
    with pytest.raises(cli.ValidationError, match=cli.ENV_THREADS):
        cli.resolve_config(cli.load_config(SMOKE))


def test_failed_expectation_exits_one(tmp_path):
    cfg = write(tmp_path, """
[[scenario]]
constellation = "cube"
levels = [2]
checks = ["transform"]
transforms = ["iota"]
expect = { transform = -1.0 }
""")
    assert cli.main(["run", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 1


def test_mesh_command(tmp_path):
    assert cli.main(["mesh", "cube_minus_sigma1", "-n", "2", "4", "--out-dir", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert [m["n"] for m in rep["meshes"]] == [2, 4]
    assert rep["meshes"][1]["volume"] == pytest.approx(8.0)
    assert (tmp_path / "cube_minus_sigma1_n4_mesh.vtk").exists()


def test_coarse_exponent_is_rejected(tmp_path, capsys):
    assert cli.main(["exponent", "cube_minus_sigma1", "-n", "8", "--out-dir",
                     str(tmp_path)]) == 2
    assert "too coarse" in capsys.readouterr().err


# ---------------------------------------------------------------- compare

def report(lam=0.5):
    return {"schema_version": 1, "scenarios": [{"exponent": {"lambda": lam, "flags": ["A"]},
                                                "n": 32}]}


def test_compare_identical_is_empty():
    assert cli.compare(report(), report()) == []


def test_compare_flags_lambda_shift():
    diffs = cli.compare(report(0.5), report(0.7))
    assert len(diffs) == 1 and "scenarios[0].exponent.lambda" in diffs[0]
    assert cli.compare(report(0.5), report(0.52)) == []  # within the λ tolerance


def test_compare_schema_errors():
    b = report()
    del b["scenarios"][0]["n"]
    with pytest.raises(SchemaError, match="n"):
        cli.compare(report(), b)
    c = report()
    c["schema_version"] = 2
    with pytest.raises(SchemaError):
        cli.compare(report(), c)


def test_compare_command(tmp_path, capsys):
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    a.write_text(json.dumps(report(0.5)))
    b.write_text(json.dumps(report(0.7)))
    assert cli.main(["compare", str(a), str(a)]) == 0
    assert cli.main(["compare", str(a), str(b)]) == 1
    assert cli.main(["compare", str(a), str(b), "--lambda-tol", "0.3"]) == 0
    b.write_text("{")
    assert cli.main(["compare", str(a), str(b)]) == 2
