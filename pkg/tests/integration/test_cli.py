"""Integration tests for the command-line interface."""
import json

import pytest
from typer.testing import CliRunner

from cli import app, main
from modelmix.accountant import AccountantConfig, epsilon_for
from modelmix.core.session import Session

runner = CliRunner()


@pytest.fixture(autouse=True)
def _stop_cli_session():
    yield
    session = Session.get_instance()
    if session is not None:
        session.stop()


def test_account_writes_record(temp_db, tmp_path):
    out = tmp_path / "record.json"
    result = runner.invoke(app, ["--db", temp_db, "account", "--q", "0.02", "--sigma", "1.1", "--T", "1000", "--out", str(out)])
    assert result.exit_code == 0, result.output

    record = json.loads(out.read_text())
    assert set(record) == {"config", "curve", "spend"}
    assert set(record["spend"]) == {"eps", "delta", "alpha"}
    assert record["curve"][0]["alpha"] == 2
    expected = epsilon_for(AccountantConfig(q=0.02, sigma=1.1, sensitivity=1.0, T=1000))
    assert record["spend"]["eps"] == pytest.approx(expected)


def test_account_csv_lists_the_curve(temp_db, tmp_path):
    out = tmp_path / "record.json"
    result = runner.invoke(app, [
        "--db", temp_db, "account", "--q", "0.02", "--sigma", "1.1", "--T", "1000", "--output", "csv", "--out", str(out),
    ])
    assert result.exit_code == 0, result.output

    lines = (tmp_path / "record.csv").read_text().splitlines()
    spend = json.loads(lines[0][len("# spend: "):])
    assert set(spend) == {"eps", "delta", "alpha"}
    assert lines[1] == "alpha,eps"
    rows = [line.split(",") for line in lines[2:]]
    assert [int(alpha) for alpha, _ in rows] == list(AccountantConfig(q=0.02, sigma=1.1, sensitivity=1.0).orders)
    assert spend["eps"] == pytest.approx(json.loads(out.read_text())["spend"]["eps"])


def test_account_rejects_bad_rate(temp_db):
    assert main(["--db", temp_db, "account", "--q", "2", "--sigma", "1"]) == 1


def test_unknown_flag_is_a_usage_error():
    assert main(["--bogus"]) == 1


def test_mix_off_matches_degenerate_mixing(temp_db, tmp_path):
    """--mix off and --mix on with tau 0 and alpha 1 produce the same trajectory."""
    common = [
        "--db", temp_db, "train", "--problem", "logistic", "--n", "100", "--d", "4",
        "--eta", "0.05", "--clip", "1", "--q", "0.5", "--sigma", "0.5", "--T", "25", "--seed", "3",
    ]
    off = runner.invoke(app, common + ["--mix", "off", "--out", str(tmp_path / "off")])
    on = runner.invoke(app, common + ["--mix", "on", "--tau", "0", "--alpha-fixed", "1", "--out", str(tmp_path / "on")])
    assert off.exit_code == 0, off.output
    assert on.exit_code == 0, on.output

    off_results = json.loads((tmp_path / "off.json").read_text())["results"]
    on_results = json.loads((tmp_path / "on.json").read_text())["results"]
    assert off_results["method"] == "dpsgd"
    assert on_results["method"] == "modelmix"
    assert off_results["trajectory_hash"] == on_results["trajectory_hash"]
    assert off_results["final"] == on_results["final"]


def test_example31_and_replay(temp_db, tmp_path):
    stem = tmp_path / "ex31"
    result = runner.invoke(app, ["--db", temp_db, "example31", "--steps", "20", "--out", str(stem)])
    assert result.exit_code == 0, result.output

    stored = json.loads((tmp_path / "ex31.json").read_text())
    assert stored["results"]["kappa_hat"] == pytest.approx(30.0)
    assert stored["spec"]["kind"] == "example31"

    replayed = runner.invoke(app, ["--db", temp_db, "replay", str(tmp_path / "ex31.json")])
    assert replayed.exit_code == 0, replayed.output
    assert "identical" in replayed.output


def test_replay_of_missing_file_fails(temp_db, tmp_path):
    result = runner.invoke(app, ["--db", temp_db, "replay", str(tmp_path / "nope.json")])
    assert result.exit_code == 1


def test_runs_lists_ledger(temp_db, tmp_path):
    calibrated = runner.invoke(app, [
        "--db", temp_db, "calibrate", "--target-eps", "2", "--q", "0.1", "--T", "100", "--out", str(tmp_path / "cal"),
    ])
    assert calibrated.exit_code == 0, calibrated.output
    sigma = json.loads((tmp_path / "cal.json").read_text())["results"]["sigma"]
    assert sigma > 0

    Session.get_instance().stop()
    listed = runner.invoke(app, ["--db", temp_db, "runs", "--kind", "calibrate"])
    assert listed.exit_code == 0, listed.output
    assert "calibrate" in listed.output


def test_runs_without_ledger(tmp_path):
    result = runner.invoke(app, ["--db", str(tmp_path / "absent.db"), "runs"])
    assert result.exit_code == 0
    assert "No run ledger" in result.output
