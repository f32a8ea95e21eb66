import json
import sqlite3
import traceback
from typing import Any, Dict, List, Optional, Sequence

from opentelemetry.sdk.trace import ReadableSpan
from opentelemetry.sdk.trace.export import SpanExporter, SpanExportResult

# Experiment columns lifted out of the attribute JSON: column -> attribute key
EXPERIMENT_COLUMNS = {
    "experiment_kind": "mm.experiment_kind",
    "config_hash": "mm.config_hash",
    "seed": "mm.seed",
    "epsilon": "mm.epsilon",
    "final_loss": "mm.final_loss",
    "iterations_per_second": "mm.iterations_per_second",
    "cpu_percent": "system.cpu_percent",
    "memory_mb": "system.memory_mb",
}


class SQLiteSpanExporter(SpanExporter):
    """
    Run ledger: every finished span becomes a row of the `spans` table.

    Usage:
        exporter = SQLiteSpanExporter("modelmix_runs.db")
        provider.add_span_processor(SimpleSpanProcessor(exporter))
    """

    def __init__(self, db_path: str):
        self.db_path = db_path
        self.callback = None  # Callback for terminal UI
        self._closed = False
        self._init_schema()

    def _init_schema(self):
        with sqlite3.connect(self.db_path) as conn:
            conn.execute("""
                CREATE TABLE IF NOT EXISTS spans (
                    span_id TEXT PRIMARY KEY,
                    trace_id TEXT NOT NULL,
                    parent_span_id TEXT,
                    name TEXT,
                    kind TEXT,
                    start_time INTEGER,
                    end_time INTEGER,
                    status_code TEXT,
                    status_message TEXT,
                    attributes JSON,
                    events JSON,
                    resource JSON,

                    experiment_kind TEXT,
                    config_hash TEXT,
                    seed INTEGER,
                    epsilon REAL,
                    final_loss REAL,
                    iterations_per_second REAL,
                    cpu_percent REAL,
                    memory_mb REAL
                );
            """)
            conn.execute("CREATE INDEX IF NOT EXISTS idx_trace_id ON spans(trace_id);")
            conn.execute("CREATE INDEX IF NOT EXISTS idx_start_time ON spans(start_time);")
            conn.execute("CREATE INDEX IF NOT EXISTS idx_experiment_kind ON spans(experiment_kind);")
            conn.execute("CREATE INDEX IF NOT EXISTS idx_config_hash ON spans(config_hash);")

    def export(self, spans: Sequence[ReadableSpan]) -> SpanExportResult:
        if self._closed:
            return SpanExportResult.FAILURE
        try:
            data = []
            for span in spans:
                span_ctx = span.get_span_context()
                parent_ctx = span.parent

                trace_id = f"{span_ctx.trace_id:032x}"
                span_id = f"{span_ctx.span_id:016x}"
                parent_id = f"{parent_ctx.span_id:016x}" if parent_ctx else None

                attrs = dict(span.attributes) if span.attributes else {}
                events_json = json.dumps([
                    {
                        "name": e.name,
                        "timestamp": e.timestamp,
                        "attributes": dict(e.attributes) if e.attributes else {},
                    } for e in span.events
                ], default=list)

                data.append((
                    span_id, trace_id, parent_id, span.name, span.kind.name,
                    span.start_time, span.end_time, span.status.status_code.name,
                    span.status.description, json.dumps(attrs, default=list), events_json,
                    json.dumps(dict(span.resource.attributes), default=list),
                    *(attrs.get(key) for key in EXPERIMENT_COLUMNS.values()),
                ))

            columns = ", ".join(EXPERIMENT_COLUMNS)
            placeholders = ",".join("?" * (12 + len(EXPERIMENT_COLUMNS)))
            with sqlite3.connect(self.db_path) as conn:
                conn.executemany(f"""
                    INSERT OR REPLACE INTO spans
                    (span_id, trace_id, parent_span_id, name, kind, start_time, end_time,
                     status_code, status_message, attributes, events, resource, {columns})
                    VALUES ({placeholders})
                """, data)

            if self.callback:
                for span in spans:
                    self.callback(span)

            return SpanExportResult.SUCCESS
        except Exception as e:
            print(f"Error exporting spans: {e}")
            traceback.print_exc()
            return SpanExportResult.FAILURE

    def set_callback(self, callback):
        """Set a callback function to be called when spans are exported."""
        self.callback = callback

    def shutdown(self):
        """Stop writing; spans exported afterwards are dropped."""
        self._closed = True


def list_runs(db_path: str, kind: Optional[str] = None, limit: int = 20) -> List[Dict[str, Any]]:
    """Most recent experiment spans (rows with an experiment_kind), newest first."""
    query = f"""
        SELECT span_id, trace_id, name, start_time, end_time, status_code, {", ".join(EXPERIMENT_COLUMNS)}
        FROM spans WHERE experiment_kind IS NOT NULL
    """
    params: list = []
    if kind:
        query += " AND experiment_kind = ?"
        params.append(kind)
    query += " ORDER BY start_time DESC LIMIT ?"
    params.append(limit)
    with sqlite3.connect(db_path) as conn:
        conn.row_factory = sqlite3.Row
        return [dict(row) for row in conn.execute(query, params)]
