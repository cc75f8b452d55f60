import io
import json

import pytest

from atroforge import bundled
from atroforge.cli import EXIT_FOUND, EXIT_OK, EXIT_USAGE, main
from atroforge.dsl import parse_program

BANK = """\
schema ACC(id key, bal);
txn dep(a, n) {
    x := select bal from ACC where id = a;
    update ACC set bal = x.bal + n where id = a;
}
txn peek(a) { x := select bal from ACC where id = a; return x.bal; }
"""

BANK_WL = """\
domain ACC 2
init ACC(id = 0, bal = 5)
invoke dep(0, 1)
invoke dep(0, 2)
"""


def run(*argv):
    out = io.StringIO()
    code = main([str(a) for a in argv], out=out)
    return code, out.getvalue()


@pytest.fixture
def bank(tmp_path):
    (tmp_path / "bank.dbp").write_text(BANK)
    (tmp_path / "bank.wl").write_text(BANK_WL)
    return tmp_path


def test_check_repair_verify_cycle(bank):
    code, text = run("check", bank / "bank.dbp")
    assert code == EXIT_FOUND and "anomalous access pair" in text
    code, text = run("repair", bank / "bank.dbp", "--out-dir", bank / "out")
    assert code == EXIT_OK and "repaired" in text
    fixed = bank / "out" / "bank.repaired.dbp"
    assert {p.name for p in (bank / "out").iterdir()} == {
        "bank.repaired.dbp", "bank.vc", "bank.repair.json"}
    assert run("check", fixed)[0] == EXIT_OK
    code, text = run("verify", bank / "bank.dbp", fixed, bank / "out" / "bank.vc", bank / "bank.wl")
    assert code == EXIT_OK and text.startswith("refinement: pass")
    code, text = run("fmt", fixed)
    assert code == EXIT_OK and parse_program(text) == parse_program(fixed.read_text())


def test_verify_reports_failure(bank):
    (bank / "lossy.dbp").write_text(BANK.replace("x.bal + n", "x.bal"))
    (bank / "none.vc").write_text("")
    code, text = run(
        "verify", bank / "bank.dbp", bank / "lossy.dbp", bank / "none.vc", bank / "bank.wl")
    assert code == EXIT_FOUND and "FAIL" in text


def test_repair_json_report(bank):
    code, text = run("repair", bank / "bank.dbp", "--out-dir", bank / "o", "--json")
    doc = json.loads(text)
    assert code == EXIT_OK and doc["version"] == 1
    assert doc == json.loads((bank / "o" / "bank.repair.json").read_text())
    assert doc["final_pairs"] == [] and doc["pairs_in"]
    assert doc["outputs"] == {"program": "bank.repaired.dbp", "correspondences": "bank.vc"}


def test_simulate_modes(bank):
    p, w = bank / "bank.dbp", bank / "bank.wl"
    code, text = run("simulate", p, w, "--serial", "--json")
    doc = json.loads(text)
    assert code == EXIT_OK and doc["mode"] == "serial"
    assert doc["history"]["final"] == [{"schema": "ACC", "key": [0], "fields": {"id": 0, "bal": 8}}]
    doc = json.loads(run("simulate", p, w, "--json")[1])
    finals = {d["example"]["final"][0]["fields"]["bal"] for d in doc["distinct"]}
    assert finals == {6, 7, 8} and not doc["capped"]
    doc = json.loads(run("simulate", p, w, "--sample", 3, "--seed", 4, "--json")[1])
    assert len(doc["histories"]) == 3
    code, text = run("simulate", p, w, "--serial", "--dump")
    assert code == EXIT_OK and "wr" in text


@pytest.mark.parametrize("argv", [
    [],
    ["frobnicate"],
    ["check"],
    ["check", "--bounds", "views=0", "{bank}/bank.dbp"],
    ["check", "--bounds", "nonsense", "{bank}/bank.dbp"],
    ["check", "--jobs", "0", "{bank}/bank.dbp"],
    ["check", "{bank}/missing.dbp"],
    ["check", "{bank}/bank.wl"],
    ["simulate", "{bank}/bank.dbp", "{bank}/bank.wl", "--serial", "--sample", "2"],
    ["simulate", "{bank}/bank.dbp", "{bank}/bank.wl", "--sample", "0"],
    ["simulate", "{bank}/bank.dbp", "{bank}/bank.wl", "--schedule", "garbage"],
    ["verify", "{bank}/bank.dbp", "{bank}/bank.dbp", "{bank}/bank.wl", "{bank}/bank.wl"],
])
def test_usage_errors(bank, argv, capsys):
    code, _ = run(*[a.format(bank=bank) for a in argv])
    assert code == EXIT_USAGE
    assert capsys.readouterr().err


def test_parse_errors_carry_a_location(bank, capsys):
    (bank / "bad.dbp").write_text("schema A(a key);\ntxn t() { update B set a = 1 where a = 0; }\n")
    assert run("check", bank / "bad.dbp")[0] == EXIT_USAGE
    assert "bad.dbp:2" in capsys.readouterr().err


def test_bounds_from_environment(bank, monkeypatch):
    monkeypatch.setenv("ATROFORGE_BOUNDS", "views=0")
    assert run("check", bank / "bank.dbp")[0] == EXIT_USAGE


@pytest.mark.parametrize("cmd", ["check", "repair", "simulate", "verify", "fmt"])
def test_reports_are_byte_identical(bank, cmd):
    p, w = bank / "bank.dbp", bank / "bank.wl"
    if cmd == "verify":
        run("repair", p, "--out-dir", bank / "v")
        argv = ["verify", p, bank / "v" / "bank.repaired.dbp", bank / "v" / "bank.vc", w, "--json"]
    elif cmd == "simulate":
        argv = ["simulate", p, w, "--json"]
    elif cmd == "repair":
        argv = ["repair", p, "--out-dir", bank / "r", "--json"]
    else:
        argv = [cmd, p] + (["--json"] if cmd == "check" else [])
    first, second = run(*argv), run(*argv)
    assert first == second and first[1]
    if cmd == "simulate":
        sampled = ["simulate", p, w, "--sample", 5, "--seed", 9, "--json"]
        assert run(*sampled) == run(*sampled)


def test_check_courseware_json_shape(tmp_path):
    (tmp_path / "c.dbp").write_text(bundled("courseware.dbp"))
    # cheap bounds: the doc shape matters here, not the pair count
    code, text = run("check", tmp_path / "c.dbp", "--json", "--bounds", "instances=1")
    doc = json.loads(text)
    assert doc["version"] == 1 and doc["program"] == "c.dbp" and doc["seed"] == 0
    assert code == (EXIT_FOUND if doc["pairs"] else EXIT_OK)
