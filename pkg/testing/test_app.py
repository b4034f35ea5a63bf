import json

import pandas as pd
import pytest

import app
from core.analysis_config import RPC_URL_ENV
from engine.chain_client import ContractId
from services.report_service import load_report
from testing.fake_rpc import FakeNodeSession
from testing.fixture_corpus import corpus, erc1155_claim, toy_callback, write_corpus


@pytest.fixture(autouse=True)
def isolated_run(monkeypatch, tmp_path):
    monkeypatch.delenv(RPC_URL_ENV, raising=False)
    monkeypatch.chdir(tmp_path)


def error_line(capsys):
    lines = [line for line in capsys.readouterr().err.splitlines() if line.startswith('{"error"')]
    assert lines
    return json.loads(lines[-1])


# ============================================================================
# ANALYZE
# ============================================================================

def test_trivial_hex_is_benign(capsys):
    assert app.main(["analyze", "--hex", "0x00"]) == app.EXIT_BENIGN
    assert "VERDICT: BENIGN" in capsys.readouterr().out


def test_report_defaults_to_entry_name_in_working_directory(tmp_path):
    entry = ContractId.for_code(bytes.fromhex("00"))

    assert app.main(["analyze", "--hex", "0x00"]) == app.EXIT_BENIGN

    report = load_report(tmp_path / f"{entry.hex}.json")
    assert report.entry == entry.hex
    assert report.verdict == "benign"


def test_hex_file_with_fixtures_is_flagged(tmp_path, capsys):
    entry_file = toy_callback().write(tmp_path / "fixtures")
    out = tmp_path / "report.json"

    status = app.main([
        "analyze", "--hex-file", str(entry_file), "--fixtures", str(tmp_path / "fixtures"), "--out", str(out),
    ])

    assert status == app.EXIT_ATTACKER
    report = load_report(out)
    assert report.verdict == "attacker"
    assert report.entry == entry_file.stem
    assert report.findings[0].attack_type == "user-defined"
    assert "VERDICT: ATTACKER" in capsys.readouterr().out


def test_emit_xgraph_adds_graph_to_report(tmp_path):
    entry_file = toy_callback().write(tmp_path / "fixtures")
    out = tmp_path / "report.json"

    app.main([
        "analyze", "--hex-file", str(entry_file), "--fixtures", str(tmp_path / "fixtures"),
        "--out", str(out), "--emit-xgraph",
    ])

    graph = load_report(out).xgraph
    assert graph["entry"] == entry_file.stem
    assert graph["metrics"]["edges"] == 2


def test_malformed_hex_is_an_input_error(capsys):
    assert app.main(["analyze", "--hex", "0xzz"]) == app.EXIT_ERROR
    assert error_line(capsys)["error"] == "input-error"


@pytest.mark.parametrize("argv", [
    ["analyze", "--address", "0x" + "11" * 20],
    ["analyze", "--hex", "0x00", "--fixtures", ".", "--rpc", "http://node"],
    ["analyze", "--hex", "0x00", "--record", "out"],
    ["analyze", "--hex", "0x00", "--depth", "0"],
])
def test_invalid_run_configuration(argv, capsys):
    assert app.main(argv) == app.EXIT_ERROR
    assert error_line(capsys)["error"] == "input-error"


def test_missing_fixture_directory(tmp_path, capsys):
    status = app.main(["analyze", "--hex", "0x00", "--fixtures", str(tmp_path / "absent")])

    assert status == app.EXIT_ERROR
    assert error_line(capsys)["error"] == "input-error"


def test_recorded_rpc_run_replays_from_fixtures(tmp_path):
    case = erc1155_claim()
    session = FakeNodeSession.for_case(case)
    recorded, live_out, replay_out = tmp_path / "recorded", tmp_path / "live.json", tmp_path / "replay.json"

    live = app.main([
        "analyze", "--address", case.entry.checksum, "--rpc", "http://node",
        "--record", str(recorded), "--out", str(live_out),
    ], session=session)
    replay = app.main([
        "analyze", "--address", case.entry.hex, "--fixtures", str(recorded), "--out", str(replay_out),
    ])

    assert live == replay == app.EXIT_ATTACKER
    assert session.methods[0] == "eth_blockNumber"
    assert "eth_getStorageAt" in session.methods
    assert load_report(live_out).model_dump(exclude={"timing"}) == \
        load_report(replay_out).model_dump(exclude={"timing"})


def test_rpc_url_from_environment(tmp_path, monkeypatch):
    case = toy_callback()
    monkeypatch.setenv(RPC_URL_ENV, "http://node")

    status = app.main(["analyze", "--address", case.entry.hex], session=FakeNodeSession.for_case(case))

    assert status == app.EXIT_ATTACKER
    assert load_report(tmp_path / f"{case.entry.hex}.json").verdict == "attacker"


# ============================================================================
# BATCH
# ============================================================================

def test_batch_over_corpus_with_a_bad_line(tmp_path, capsys):
    cases = corpus()
    entries = write_corpus(tmp_path / "fixtures", cases)
    listing = tmp_path / "inputs.txt"
    listing.write_text("# corpus\n\n" + "\n".join(str(path) for path in entries) + "\n0xnothex\n")
    out = tmp_path / "results"

    status = app.main([
        "batch", str(listing), "--fixtures", str(tmp_path / "fixtures"), "--jobs", "3", "--out", str(out),
    ])

    attackers = sum(case.is_attacker for case in cases)
    assert status == app.EXIT_ATTACKER
    assert (
        f"ITEMS: {len(cases) + 1}  ATTACKER: {attackers}  "
        f"BENIGN: {len(cases) - attackers}  ERROR: 1"
    ) in capsys.readouterr().out

    summary = json.loads((out / "summary.json").read_text())
    verdicts = [row["verdict"] for row in summary["results"]]
    assert verdicts == [case.expected_verdict for case in cases] + ["error"]
    assert summary["results"][-1]["error"]["kind"] == "input-error"
    assert len(list((out / "reports").glob("*.json"))) == len(cases)

    sheet = pd.read_excel(out / "summary.xlsx", sheet_name="Summary")
    assert len(sheet) == len(cases) + 2
    assert sheet["Index"].iloc[-1] == "Total"
    types = pd.read_excel(out / "summary.xlsx", sheet_name="Attack Types")
    assert types["Attackers"].iloc[-1] == attackers


def test_batch_reports_validate(tmp_path):
    cases = corpus()[:3]
    entries = write_corpus(tmp_path / "fixtures", cases)
    listing = tmp_path / "inputs.txt"
    listing.write_text("\n".join(str(path) for path in entries) + "\n")

    app.main(["batch", str(listing), "--fixtures", str(tmp_path / "fixtures"), "--out", str(tmp_path / "results")])

    for path in sorted((tmp_path / "results" / "reports").glob("*.json")):
        assert load_report(path).schema_version == 1


def test_empty_batch_is_benign(tmp_path, capsys):
    listing = tmp_path / "inputs.txt"
    listing.write_text("# nothing yet\n")

    status = app.main(["batch", str(listing), "--out", str(tmp_path / "results")])

    assert status == app.EXIT_BENIGN
    assert "ITEMS: 0" in capsys.readouterr().out
    assert json.loads((tmp_path / "results" / "summary.json").read_text())["items"] == 0


def test_missing_batch_list(tmp_path, capsys):
    assert app.main(["batch", str(tmp_path / "absent.txt")]) == app.EXIT_ERROR
    assert error_line(capsys)["error"] == "input-error"
