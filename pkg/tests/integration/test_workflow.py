"""Integration test for full workflow."""
import sqlite3

import numpy as np

import modelmix as mm
from modelmix.core.session import Session
from modelmix.exporter import list_runs
from modelmix.harness import ExperimentSpec, run_experiment


def test_basic_workflow(temp_db):
    """Test basic mm.init() and tracing workflow."""
    # Initialize
    session = mm.init(mode="headless", db_path=temp_db)

    # Use decorator
    @mm.trace
    def test_function():
        return "success"

    result = test_function()
    assert result == "success"
    session.stop()


def test_accounting_and_training_are_traced(temp_db):
    """Accounting, training and experiment spans all land in one ledger."""
    session = mm.init(mode="headless", db_path=temp_db)

    record = mm.account(mm.AccountantConfig(q=0.02, sigma=1.1, sensitivity=1.0, T=1000))
    assert record.spend.epsilon > 0

    problem = mm.registry.create("least-squares", n=100, d=4, seed=1)
    cfg = mm.MixConfig(eta=0.001, clip=mm.ClipConfig(c=1.0), tau_schedule=mm.TauSchedule.constant(0.001), T=20)
    with mm.span("workflow.train") as s:
        result = mm.Trainer(problem, cfg).run()
        s.set_metric("final_loss", result.final_loss)
    assert np.isfinite(result.final_loss)

    report = run_experiment(ExperimentSpec.build("example31", {"steps": 10, "converge_steps": 10}))
    assert report.optimum == 20.0
    session.stop()

    with sqlite3.connect(temp_db) as conn:
        names = {row[0] for row in conn.execute("SELECT name FROM spans")}
    assert {"accountant.rdp_curve", "workflow.train", "harness.example31"} <= names
    runs = list_runs(temp_db)
    assert [r["experiment_kind"] for r in runs] == ["example31"]
    assert runs[0]["memory_mb"] > 0


def test_spans_after_stop_are_dropped(temp_db):
    session = mm.init(mode="headless", db_path=temp_db)
    session.stop()
    with mm.span("after.stop"):
        pass
    with sqlite3.connect(temp_db) as conn:
        assert conn.execute("SELECT COUNT(*) FROM spans WHERE name = 'after.stop'").fetchone()[0] == 0
    assert Session.get_instance() is session
