"""
Trajectory tracking for optimizer runs.

Records the per-iteration log (loss, gradient norm, coordinate gap, batch
size) as newline-delimited JSON and attaches throughput figures to the run's
span when the run finishes.
"""
import json
import math
import time
from pathlib import Path
from typing import IO, List, Optional, Union


class TrajectoryRecorder:
    """
    Track an optimizer trajectory.

    Usage:
        with mm.span("train") as s:
            recorder = TrajectoryRecorder(s.raw, path="run.ndjson")
            result = Trainer(problem, cfg, recorder=recorder).run()
            recorder.finalize()
    """

    FIELDS = ("k", "loss", "grad_norm", "min_coord_gap", "batch_size")

    def __init__(self, span=None, path: Optional[Union[str, Path]] = None):
        """
        Args:
            span: OpenTelemetry span to attach metrics to (optional)
            path: NDJSON file to append records to (optional)
        """
        self.span = span
        self.path = Path(path) if path is not None else None
        self.start_time = time.time()
        self.end_time: Optional[float] = None
        self.records: List[dict] = []
        self._handle: Optional[IO[str]] = None
        if self.path is not None:
            self._handle = self.path.open("w", encoding="utf-8")

    def record(self, entry: dict):
        """Store one iteration's record, keeping only the logged fields."""
        row = {key: entry.get(key) for key in self.FIELDS}
        gap = row.get("min_coord_gap")
        if isinstance(gap, float) and math.isnan(gap):
            row["min_coord_gap"] = None
        self.records.append(row)
        if self._handle is not None:
            self._handle.write(json.dumps(row, sort_keys=True) + "\n")

    @property
    def iterations(self) -> int:
        return self.records[-1]["k"] if self.records else 0

    def finalize(self):
        """
        Close the log and record:
            - mm.iterations
            - mm.elapsed_ms
            - mm.iterations_per_second
        """
        self.end_time = time.time()
        if self._handle is not None:
            self._handle.close()
            self._handle = None
        if self.span is None:
            return
        metrics = self.get_metrics()
        self.span.set_attribute("mm.iterations", metrics["iterations"])
        self.span.set_attribute("mm.elapsed_ms", metrics["elapsed_ms"])
        if "iterations_per_second" in metrics:
            self.span.set_attribute("mm.iterations_per_second", metrics["iterations_per_second"])

    def get_metrics(self) -> dict:
        end = self.end_time if self.end_time is not None else time.time()
        elapsed_ms = (end - self.start_time) * 1000
        metrics = {"iterations": self.iterations, "elapsed_ms": round(elapsed_ms, 2)}
        if self.iterations > 0 and elapsed_ms > 0:
            metrics["iterations_per_second"] = round(self.iterations / elapsed_ms * 1000, 2)
        return metrics


def read_trajectory(path: Union[str, Path]) -> List[dict]:
    """Records of an NDJSON trajectory log, in order."""
    with Path(path).open(encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
