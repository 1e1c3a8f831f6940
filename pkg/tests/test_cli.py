from __future__ import annotations

import json
import subprocess
import sys
from pathlib import Path

import pytest

from coarse_trees.cli import main

DATA = Path(__file__).resolve().parents[1] / "data"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_classify_summary(capsys, tmp_path):
    code, out, _ = run(capsys, "classify", DATA / "two_loops.json", "--out", tmp_path)
    assert code == 0 and out.strip() == "QiBs23"
    doc = json.loads((tmp_path / "classify.json").read_text())
    assert doc["result"]["kind"] == "QiBs23"
    assert doc["config"]["seed"] == 0 and doc["config"]["command"] == "classify"


@pytest.mark.parametrize(
    "argv",
    [
        ["classify", DATA / "trefoil.json"],
        ["ball", DATA / "bs23.json", "--depth", "2", "--format", "dot"],
        ["homogenize", DATA / "bs12.json"],
        ["laminate", "bs:2,3", "--beta", "0.2", "--depth", "4"],
        ["qi-build", "bs:2,3", "oriented:2,2", "--beta", "0.3", "--beta2", "0.2", "--depth", "4", "--samples", "50"],
        ["metric-compare", DATA / "bs23.json", "--depth", "4", "--samples", "40", "--seed", "7"],
        ["invariants", DATA / "diag23.json", DATA / "diag49.json"],
        ["invariants", "--bs", "2,3,2,5"],
    ],
)
def test_outputs_are_deterministic_and_embed_config(capsys, argv):
    code1, out1, _ = run(capsys, *argv)
    code2, out2, _ = run(capsys, *argv)
    assert code1 == code2 == 0
    assert out1 == out2
    if out1.startswith("{"):
        cfg = json.loads(out1)["config"]
    else:
        cfg = json.loads(out1.splitlines()[0].split("config: ", 1)[1])
    assert cfg["command"] == argv[0] and "seed" in cfg and "version" in cfg


def test_seed_changes_sampled_output(capsys):
    base = ["metric-compare", DATA / "bs23.json", "--depth", "4", "--samples", "40"]
    _, a, _ = run(capsys, *base, "--seed", "1")
    _, b, _ = run(capsys, *base, "--seed", "2")
    assert a != b


def test_invariants_verdicts(capsys):
    _, out, _ = run(capsys, "invariants", DATA / "diag23.json", DATA / "diag49.json")
    res = json.loads(out)["result"]["hnn_qi"]
    assert res["equivalent"] is True and abs(res["alpha"] - 2) < 1e-9
    _, out, _ = run(capsys, "invariants", "--bs", "2,3,2,3")
    assert json.loads(out)["result"]["bs_not_commensurable"] is False


@pytest.mark.parametrize(
    "argv,code,name",
    [
        (["laminate", "bs:2,3", "--beta", "0.5"], 1, "SlopeTooLarge"),
        (["qi-build", "bs:2,3", "oriented:2,2", "--beta", "0.3", "--beta2", "0.4"], 1, "MatchFailure"),
        (["classify", "/nonexistent/graph.json"], 3, "FileError"),
        (["laminate", "bs:2,3"], 2, "UsageError"),
        (["invariants", "--bs", "2,4,3,5"], 1, "NotCoprime"),
        (["ball", DATA / "bs23.json", "--format", "csv"], 2, "UsageError"),
    ],
)
def test_error_codes(capsys, argv, code, name):
    if code == 2 and "--format" in argv:
        with pytest.raises(SystemExit) as exc:
            main([str(a) for a in argv])
        assert exc.value.code == 2
        assert f"error: {name}:" in capsys.readouterr().err
        return
    try:
        got, _, err = run(capsys, *argv)
    except SystemExit as exc:
        got, err = exc.code, capsys.readouterr().err
    assert got == code
    assert f"error: {name}:" in err


def test_schema_error_exit(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"vertices": [}')
    code, _, err = run(capsys, "classify", bad)
    assert code == 1 and "SchemaError" in err and "line 1" in err


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "coarse_trees", "classify", str(DATA / "bs23.json")],
        capture_output=True,
        text=True,
        check=True,
    )
    assert json.loads(proc.stdout)["result"]["kind"] == "QiBs23"
