"""Integration tests for the experiment drivers, result files and replay."""
import json
import math

import pytest

from modelmix.accountant import epsilon_for
from modelmix.errors import ContractError
from modelmix.harness import ExperimentSpec, replay, run_experiment, save_results
from modelmix.harness.results import read_json


@pytest.fixture(autouse=True)
def _ledger(headless_session):
    yield headless_session


def test_example31_report():
    report = run_experiment(ExperimentSpec.build("example31"))

    assert report.optimum == pytest.approx(20.0)
    assert report.true_gradient_at_start == pytest.approx(-20.0)
    assert report.kappa_hat == pytest.approx(30.0)
    assert report.sampling_noise_std == pytest.approx(49.67, abs=0.01)
    assert report.recommended_clip == pytest.approx(4 * 30 * math.log(10))

    small, large = report.runs
    assert small.clipped_gradient_at_start == pytest.approx(1 / 3)
    assert small.clipped_gradient_at_optimum == pytest.approx(1 / 3)
    assert small.final_w == pytest.approx(-10 / 3)
    assert small.moved_away
    assert large.steps == 300
    assert large.final_w == pytest.approx(20.0, abs=1e-6)
    assert not large.moved_away


def test_calibrate_report():
    config = {"q": 0.1, "sigma": 1.0, "sensitivity": 1.0, "T": 100}
    report = run_experiment(ExperimentSpec.build("calibrate", {"target_eps": 2.0, "config": config}))
    assert abs(report.residual) <= 1e-3
    assert report.spend.epsilon == pytest.approx(2.0, rel=1e-3)


def test_oracle_report_passes_on_a_mild_mechanism():
    payload = {"sigma": 2.0, "halfwidth": 0.5, "k_list": [1, 2, 3], "n_samples": 400_000}
    report = run_experiment(ExperimentSpec.build("oracle", payload, seed=1))
    assert report.passed
    assert report.pointwise.mean > 0
    assert report.bernstein_epsilon is not None and report.bernstein_epsilon > 0


def test_train_report_accounts_private_runs():
    payload = {
        "problem": "logistic",
        "n": 200,
        "d": 5,
        "mix": {"eta": 0.01, "clip": {"c": 1.0}, "tau_schedule": {"values": [0.002]}, "q": 0.1, "sigma": 1.0, "T": 30},
    }
    report = run_experiment(ExperimentSpec.build("train", payload, seed=4))
    again = run_experiment(ExperimentSpec.build("train", payload, seed=4))

    assert report.trajectory_hash == again.trajectory_hash
    assert report.accounting is not None
    assert report.accounting.spend.epsilon == pytest.approx(epsilon_for(report.accounting.config))
    assert report.iterates is None


def test_train_report_without_noise_has_no_accounting():
    payload = {"problem": "quadratic", "d": 3, "mix": {"eta": 0.1, "T": 10, "release": "trajectory"}}
    report = run_experiment(ExperimentSpec.build("train", payload))
    assert report.accounting is None
    assert len(report.iterates) == 10


def test_convergence_report_small():
    payload = {
        "n": 200, "d": 5, "Ts": [50, 400], "tau_over_eta": 0.05,
        "equal_noise_sigma": 0.5, "equal_noise_clip": 5.0, "log_points": 10,
    }
    report = run_experiment(ExperimentSpec.build("convergence", payload, seed=2))

    assert [row.T for row in report.rows] == [50, 400]
    assert all(row.gap is not None and row.gap >= 0 for row in report.rows)
    assert all(row.within_bound for row in report.rows)
    assert report.rows[1].gap < report.rows[0].gap
    assert report.slope is not None and report.slope < 0
    assert [run.method.value for run in report.head_to_head] == ["sgd", "dpsgd", "modelmix", "strawman"]
    assert report.equal_noise.epsilon > 0
    assert report.equal_noise.thm32_bound > 0
    assert report.grad_stats.n_draws == 1000
    assert report.recommended_clip > 0


@pytest.mark.slow
def test_convergence_gap_falls_with_T():
    """Default least-squares study: the averaged-iterate gap shrinks polynomially in T."""
    payload = {"methods": ["modelmix"], "equal_noise_sigma": 0.0}
    report = run_experiment(ExperimentSpec.build("convergence", payload, seed=0))

    assert [row.T for row in report.rows] == [100, 1000, 10_000]
    assert all(row.within_bound for row in report.rows)
    assert -1.2 <= report.slope <= -0.4
    assert report.equal_noise is None


def test_save_and_replay(tmp_path):
    payload = {"problem": "least-squares", "n": 100, "d": 3, "mix": {"eta": 0.001, "clip": {"c": 1.0}, "q": 0.5, "sigma": 0.5, "T": 15}}
    spec = ExperimentSpec.build("train", payload, seed=9, output=str(tmp_path / "run"))
    envelope = save_results(spec, run_experiment(spec))

    path = tmp_path / "run.json"
    stored = json.loads(path.read_text())
    assert stored["results_hash"] == envelope.results_hash
    assert stored["spec"]["seed"] == 9

    fresh, identical = replay(path)
    assert identical
    assert fresh.results_hash == envelope.results_hash


def test_replay_rejects_tampered_files(tmp_path):
    spec = ExperimentSpec.build("example31", {"steps": 5, "converge_steps": 5}, output=str(tmp_path / "ex"))
    save_results(spec, run_experiment(spec))
    path = tmp_path / "ex.json"

    stored = json.loads(path.read_text())
    stored["spec"]["payload"]["eta"] = 0.2
    path.write_text(json.dumps(stored))
    with pytest.raises(ContractError):
        replay(path)

    with pytest.raises(ContractError):
        read_json(tmp_path / "missing.json")
