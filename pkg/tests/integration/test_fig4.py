"""Integration tests for the amplification grid reproduction."""
import pytest

from modelmix.harness import FIG4_EXPECTED, ExperimentSpec, run_experiment, save_results
from modelmix.harness.results import fig4_csv_paths, read_fig4_csv


@pytest.fixture(autouse=True)
def _ledger(headless_session):
    yield headless_session


def test_short_grid_without_oracle_is_unverified(tmp_path):
    payload = {"T": 200, "checkpoints": 5, "check_oracle": False, "workers": 2}
    spec = ExperimentSpec.build("fig4", payload, output=str(tmp_path / "grid"))
    report = run_experiment(spec)

    assert report.status == "UNVERIFIED"
    assert report.ordering_ok
    assert report.oracle_passed is None
    assert [panel.q for panel in report.panels] == [0.02, 0.04]
    for panel in report.panels:
        assert panel.calibrated_epsilon == pytest.approx(200.0, rel=2e-3)
    # reference values only apply to the full-length run
    assert all(e.expected is None for e in report.endpoints)
    assert len(report.endpoints) == 9

    save_results(spec, report)
    paths = fig4_csv_paths(tmp_path / "grid", report)
    assert [p.name for p in paths] == ["grid.csv", "grid_q0.04.csv"]
    key, rows = read_fig4_csv(paths[0])
    assert key["kind"] == "fig4"
    assert len(rows) == 10 * 5
    assert {row["T"] for row in rows} == {40, 80, 120, 160, 200}


def test_reference_endpoints_without_oracle():
    """The per-step curve does not depend on T, so the full-length endpoints come cheap."""
    payload = {"checkpoints": 1, "extra_qs": [], "check_oracle": False}
    report = run_experiment(ExperimentSpec.build("fig4", payload))

    checked = {(e.tau_over_eta, e.p): e for e in report.endpoints if e.expected is not None}
    assert len(checked) == 9
    for tau_over_eta, by_p in FIG4_EXPECTED.items():
        for p, expected in by_p.items():
            endpoint = checked[(tau_over_eta, p)]
            assert endpoint.within_band, (tau_over_eta, p, endpoint.epsilon, expected)
    assert report.ordering_ok
    assert report.status == "UNVERIFIED"
    assert [panel.q for panel in report.panels] == [0.02]


@pytest.mark.slow
def test_full_reproduction_passes(tmp_path):
    spec = ExperimentSpec.build("fig4", {}, output=str(tmp_path / "fig4"))
    report = run_experiment(spec)

    checked = {(e.tau_over_eta, e.p): e for e in report.endpoints if e.expected is not None}
    assert len(checked) == 9
    for tau_over_eta, by_p in FIG4_EXPECTED.items():
        for p, expected in by_p.items():
            endpoint = checked[(tau_over_eta, p)]
            assert endpoint.within_band, (tau_over_eta, p, endpoint.epsilon, expected)
    assert report.ordering_ok
    assert report.oracle_passed
    assert report.status == "PASS"

    save_results(spec, report)
    assert (tmp_path / "fig4.json").exists()
    assert (tmp_path / "fig4_q0.04.csv").exists()
