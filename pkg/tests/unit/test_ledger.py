"""Unit tests for the run ledger, trajectory recorder and resource monitor."""
import math

from opentelemetry.sdk.trace.export import SpanExportResult

from modelmix.core.decorators import span
from modelmix.exporter import EXPERIMENT_COLUMNS, SQLiteSpanExporter, list_runs
from modelmix.resource_monitor import ResourceMonitor
from modelmix.trajectory import TrajectoryRecorder, read_trajectory


class _FakeSpan:
    def __init__(self):
        self.attributes = {}

    def set_attribute(self, key, value):
        self.attributes[key] = value


def test_list_runs_returns_experiment_spans(headless_session):
    with span("harness.calibrate") as s:
        s.set_attribute("mm.experiment_kind", "calibrate")
        s.set_attribute("mm.config_hash", "abc")
        s.set_attribute("mm.seed", 7)
        s.set_metric("epsilon", 2.0)
    with span("harness.train") as s:
        s.set_attribute("mm.experiment_kind", "train")
    with span("accountant.rdp_curve"):
        pass

    runs = list_runs(headless_session.db_path)
    assert [r["experiment_kind"] for r in runs] == ["train", "calibrate"]
    calibrate = runs[1]
    assert (calibrate["config_hash"], calibrate["seed"], calibrate["epsilon"]) == ("abc", 7, 2.0)
    assert set(EXPERIMENT_COLUMNS) <= set(calibrate)

    assert [r["name"] for r in list_runs(headless_session.db_path, kind="calibrate")] == ["harness.calibrate"]
    assert len(list_runs(headless_session.db_path, limit=1)) == 1


def test_exporter_refuses_spans_after_shutdown(temp_db):
    exporter = SQLiteSpanExporter(temp_db)
    exporter.shutdown()
    assert exporter.export([]) == SpanExportResult.FAILURE


def test_callback_sees_exported_spans(headless_session):
    seen = []
    headless_session.exporter.set_callback(lambda s: seen.append(s.name))
    with span("unit.callback"):
        pass
    assert seen == ["unit.callback"]


def test_trajectory_recorder_writes_ndjson(tmp_path):
    fake = _FakeSpan()
    path = tmp_path / "run.ndjson"
    recorder = TrajectoryRecorder(fake, path=path)
    recorder.record({"k": 1, "loss": 2.0, "grad_norm": 1.0, "min_coord_gap": math.nan, "batch_size": 4, "extra": 1})
    recorder.record({"k": 2, "loss": 1.5, "grad_norm": 0.5, "min_coord_gap": 0.1, "batch_size": 3})
    recorder.finalize()

    rows = read_trajectory(path)
    assert [r["k"] for r in rows] == [1, 2]
    assert rows[0]["min_coord_gap"] is None
    assert set(rows[0]) == set(TrajectoryRecorder.FIELDS)
    assert fake.attributes["mm.iterations"] == 2
    assert "mm.elapsed_ms" in fake.attributes


def test_trajectory_recorder_without_outputs():
    recorder = TrajectoryRecorder()
    assert recorder.get_metrics()["iterations"] == 0
    recorder.finalize()


def test_resource_monitor_attaches_usage():
    fake = _FakeSpan()
    ResourceMonitor.capture(fake, interval=0.0)
    assert fake.attributes["system.memory_mb"] > 0
    assert set(ResourceMonitor.get_current_usage(0.0)) <= {"cpu_percent", "memory_mb"}
