from __future__ import annotations

import json
import subprocess
import sys
from importlib import resources

import jsonschema
import pytest

from rorscan.cli import main

from helpers import CREATED, EOA1, ROOT, fixture_path


def detect(tmp_path, name="fig2", target="Pool", *extra, out="report.json"):
    path = tmp_path / out
    code = main(["detect", "--snapshot", fixture_path(name), "--target", target, "-o", str(path), *extra])
    return code, path


def report_schema():
    return json.loads(resources.files("rorscan.schemas").joinpath("report.schema.json").read_text())


def test_findings_exit_two_and_report_validates(tmp_path):
    code, path = detect(tmp_path)
    assert code == 2
    doc = json.loads(path.read_text())
    jsonschema.validate(doc, report_schema())
    assert doc["schema_version"] == 1 and len(doc["findings"]) == 1
    assert "timing" not in doc


def test_clean_run_exits_zero(tmp_path):
    code, path = detect(tmp_path, "neg_settled_first")
    assert code == 0 and json.loads(path.read_text())["findings"] == []


def test_reports_are_byte_identical(tmp_path):
    _, a = detect(tmp_path, "fig8", "Periphery", "--seed", "5", out="a.json")
    _, b = detect(tmp_path, "fig8", "Periphery", "--seed", "5", out="b.json")
    assert a.read_bytes() == b.read_bytes()


def test_analyze_only_matches_full_run_up_to_verification(tmp_path):
    _, full = detect(tmp_path, out="full.json")
    code, part = detect(tmp_path, "fig2", "Pool", "--analyze-only", out="part.json")
    full, part = json.loads(full.read_text()), json.loads(part.read_text())
    assert code == 0
    for key in ("target", "dataset", "ranking", "candidates", "graphs"):
        assert full[key] == part[key]
    assert part["verification"] is None and part["findings"] == []


def test_address_and_name_targets_agree(tmp_path):
    _, by_name = detect(tmp_path, out="n.json")
    _, by_addr = detect(tmp_path, "fig2", "0x1000000000000000000000000000000000000001", out="a.json")
    a, b = json.loads(by_name.read_text()), json.loads(by_addr.read_text())
    a["config"].pop("target"), b["config"].pop("target")
    assert a == b


def test_option_effects(tmp_path):
    _, nofund = detect(tmp_path, "fig8", "Periphery", "--no-fund-fuzz", out="nf.json")
    assert json.loads(nofund.read_text())["findings"] == []
    _, off = detect(tmp_path, "fig2", "Pool", "--boundary-mode", "off", out="off.json")
    assert len(json.loads(off.read_text())["candidates"]) == 2
    _, rule = detect(tmp_path, "neg_owner_guard", "Pool", "--disable-rule", "2", "--analyze-only", out="r.json")
    assert json.loads(rule.read_text())["candidates"]
    _, timed = detect(tmp_path, "fig2", "Pool", "--timing", out="t.json")
    assert set(json.loads(timed.read_text())["timing"]) == {"boundaries", "context_and_analysis", "verification"}


def test_side_outputs(tmp_path):
    trace, graph, fuzz = tmp_path / "trace.jsonl", tmp_path / "g.dot", tmp_path / "fuzz.jsonl"
    detect(tmp_path, "fig2", "Pool", "--trace-out", str(trace), "--graph-out", str(graph), "--fuzz-log", str(fuzz))
    events = [json.loads(line) for line in trace.read_text().splitlines()]
    assert len(events) == 3 * 11 + 2 + 1  # three decreases, one deposit, one early revert
    assert graph.read_text().startswith("digraph")
    assert any(json.loads(line)["finding"] for line in fuzz.read_text().splitlines())


def test_text_format(tmp_path, capsys):
    code = main(["detect", "--snapshot", fixture_path("fig2"), "--target", "Pool", "--format", "text"])
    out = capsys.readouterr().out
    assert code == 2
    assert "exitVault -> decrease via getFunds on balance" in out
    assert "1. " in out and "5. " in out


@pytest.mark.parametrize("argv", [
    ["detect", "--snapshot", "/nonexistent.json", "--target", "Pool"],
    ["detect", "--snapshot", fixture_path("fig2"), "--target", "Nobody"],
    ["detect", "--snapshot", fixture_path("fig2"), "--target", "Pool", "--max-txs", "0"],
    ["detect", "--snapshot", fixture_path("fig2"), "--target", "Pool", "--disable-rule", "1"],
    ["detect", "--target", "Pool"],
    ["frobnicate"],
])
def test_errors_exit_one(argv, capsys):
    assert main(argv) == 1
    assert capsys.readouterr().err


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    assert "detect" in capsys.readouterr().out


def test_builder_subcommand(capsys):
    assert main(["builder", "--snapshot", fixture_path("fig4"), CREATED]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc == {"address": CREATED, "builder": EOA1, "dapp": "factoryDApp"}


def test_builders_override_file(tmp_path, capsys):
    override = tmp_path / "b.json"
    override.write_text(json.dumps([{"builder": EOA1, "dapp": "renamed"}]))
    assert main(["builder", "--snapshot", fixture_path("fig4"), "--builders", str(override), "Created"]) == 0
    assert json.loads(capsys.readouterr().out)["dapp"] == "renamed"


def test_module_entry_point_runs():
    proc = subprocess.run([sys.executable, "-m", "rorscan.cli", "detect", "--snapshot", fixture_path("fig2"),
                           "--target", "Pool", "--analyze-only"], capture_output=True, text=True, cwd=ROOT)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["candidates"]


def test_shipped_docs_match_package_schemas():
    for name in ("snapshot.schema.json", "ir.schema.json", "report.schema.json"):
        packaged = resources.files("rorscan.schemas").joinpath(name).read_text()
        assert json.loads((ROOT / "docs" / name).read_text()) == json.loads(packaged)
    jsonschema.validate(json.loads((ROOT / "docs" / "example-report.json").read_text()), report_schema())
