import json
import subprocess
import sys

import pytest

from topopoison.cli import main
from topopoison.fixtures import motivating_target
from topopoison.scenario import bundled_scenario

MOTIVATING = str(bundled_scenario("motivating_example.scenario"))


def run(capsys, *argv):
    rc = main(list(argv))
    return rc, capsys.readouterr()


def test_run_exit_code_and_report(capsys, tmp_path):
    rc, out = run(capsys, "run", MOTIVATING, "--out", str(tmp_path))
    assert rc == 0
    assert json.loads(out.out)["passed"] is True
    assert (tmp_path / "report.json").read_text() == out.out


def test_run_failing_scenario(capsys, tmp_path):
    sc = tmp_path / "bad.scenario"
    sc.write_text(json.dumps({"seed": 1, "topology": "fixture:motivating",
                              "phases": [{"op": "poison", "target": "fixture:motivating_target"},
                                         {"op": "discover"},
                                         {"op": "assert", "predicate": "view-equals-real"}]}))
    rc, _ = run(capsys, "run", str(sc))
    assert rc == 1


def test_run_parse_error(capsys, tmp_path):
    sc = tmp_path / "broken.scenario"
    sc.write_text("{not json")
    rc, out = run(capsys, "run", str(sc))
    assert rc == 2 and "error:" in out.err


def test_seed_env(capsys, monkeypatch):
    monkeypatch.setenv("SEED", "12")
    rc, out = run(capsys, "run", MOTIVATING)
    assert json.loads(out.out)["seed"] == 12


def test_discover(capsys, tmp_path):
    rc, out = run(capsys, "discover", "--topology", "fixture:motivating", "--rounds", "3",
                  "--trace", str(tmp_path / "t.jsonl"))
    doc = json.loads(out.out)
    assert rc == 0 and [r["matches_real"] for r in doc["rounds"]] == [True] * 3
    assert (tmp_path / "t.jsonl").read_text().count("packet_in") == 30


def test_poison_target_verify(capsys, tmp_path):
    target = tmp_path / "target.json"
    target.write_text(motivating_target().to_json())
    rc, out = run(capsys, "poison", "--topology", "fixture:motivating", "--target", str(target), "--verify")
    doc = json.loads(out.out)
    assert rc == 0 and doc["view_matches_target"] is True
    assert len(doc["plans"]["plans"]) == 6


def test_poison_link_fingerprint(capsys):
    rc, out = run(capsys, "poison", "--topology", "fixture:path_selection", "--link", "A:1->2:B",
                  "--mode", "vlan-inport-src", "--method", "loopback")
    doc = json.loads(out.out)
    assert rc == 0 and doc["plans"]["plans"][0]["method"] == "loopback"


def test_patch_modes(capsys):
    scen = str(bundled_scenario("reactive_patch.scenario"))
    rc, out = run(capsys, "patch", scen, "--mode", "reactive")
    doc = json.loads(out.out)
    assert rc == 0 and [i["unexpected"] for i in doc["injections"]] == [4, 0]
    # written after the poison tick, proactive patches still only land at the next tick
    rc, out = run(capsys, "patch", scen, "--mode", "proactive")
    assert [i["unexpected"] for i in json.loads(out.out)["injections"]] == [4, 0]
    rc, out = run(capsys, "patch", MOTIVATING, "--mode", "proactive")
    doc = json.loads(out.out)
    assert rc == 0 and [i["unexpected"] for i in doc["injections"]] == [0]
    assert {p["switch"] for p in doc["patches"]} == {"C", "D"}


def test_plan(capsys, tmp_path):
    rc, out = run(capsys, "plan", "--topology", "fixture:fattree", "--goal", "eavesdrop", "--target", "6",
                  "--similarity", "0.9", "--actions", "two-switch", "--actions-per-episode", "5", "--seed", "0",
                  "--out", str(tmp_path / "t.json"), "--trace", str(tmp_path / "trace.csv"))
    doc = json.loads(out.out)
    assert rc == 0 and doc["success"]
    assert (tmp_path / "t.json").exists()
    assert (tmp_path / "trace.csv").read_text().startswith("step,episode")


def test_plan_failure_exit(capsys):
    rc, out = run(capsys, "plan", "--topology", "fixture:motivating", "--goal", "eavesdrop", "--target", "C",
                  "--coverage", "50", "--flows", "3", "--budget", "50")
    assert rc == 1 and json.loads(out.out)["success"] is False


def test_dump_tables_and_view(capsys, tmp_path):
    rc, out = run(capsys, "dump-tables", MOTIVATING)
    tables = json.loads(out.out)["tables"]
    assert any(e["owner"] == "patcher" for e in tables["C"])
    rc, out = run(capsys, "view", "--scenario", MOTIVATING, "--dot", str(tmp_path / "v.dot"))
    doc = json.loads(out.out)
    assert doc["similarity"] == "2/5" and len(doc["fabricated"]) == 3
    assert 'color="red"' in (tmp_path / "v.dot").read_text()


def test_render_dot(capsys, tmp_path):
    target = tmp_path / "target.json"
    target.write_text(motivating_target().to_json())
    rc, out = run(capsys, "render-dot", "--topology", str(target), "--real", "fixture:motivating",
                  "--highlight", "C")
    assert rc == 0 and out.out.count('color="red"') == 3


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "topopoison", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for sub in ["run", "discover", "poison", "patch", "plan", "dump-tables", "view", "render-dot"]:
        assert sub in res.stdout


def test_unknown_subcommand():
    with pytest.raises(SystemExit):
        main(["explode"])
