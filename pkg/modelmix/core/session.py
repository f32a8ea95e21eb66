"""
ModelMix Session Manager

In-process session: installs tracing into the SQLite run ledger and, in
terminal mode, streams finished experiment spans to the Rich UI.
"""
import atexit
import os
import threading
from typing import Literal, Optional

from opentelemetry import trace
from opentelemetry.sdk.trace import TracerProvider

from ..exporter import SQLiteSpanExporter
from ..instrumentation import setup_instrumentation
from ..ui.terminal import TerminalUI

DEFAULT_DB_PATH = "modelmix_runs.db"
DB_PATH_ENV = "MODELMIX_DB_PATH"


def resolve_db_path(db_path: Optional[str] = None) -> str:
    """Explicit path, else $MODELMIX_DB_PATH, else modelmix_runs.db."""
    return db_path or os.environ.get(DB_PATH_ENV) or DEFAULT_DB_PATH


class Session:
    """
    Manages the ModelMix session lifecycle.

    Usage:
        session = Session(mode="headless")
        session.start()
        # experiments run here...
        session.stop()
    """

    _instance: Optional["Session"] = None
    _lock = threading.Lock()

    def __init__(
        self,
        mode: Literal["terminal", "headless"] = "terminal",
        db_path: Optional[str] = None,
        service_name: str = "modelmix",
    ):
        if mode not in ("terminal", "headless"):
            raise ValueError(f"unknown session mode {mode!r}")
        self.mode = mode
        self.db_path = resolve_db_path(db_path)
        self.service_name = service_name

        self.tracer_provider: Optional[TracerProvider] = None
        self.exporter: Optional[SQLiteSpanExporter] = None
        self.terminal_ui: Optional[TerminalUI] = None

        self._active = False

    @property
    def active(self) -> bool:
        return self._active

    @classmethod
    def get_instance(cls) -> Optional["Session"]:
        """Get the current session instance."""
        return cls._instance

    @classmethod
    def set_instance(cls, session: "Session"):
        """Set the global session instance, stopping the previous one."""
        with cls._lock:
            if cls._instance is not None and cls._instance is not session:
                cls._instance.stop()
            cls._instance = session

    def start(self):
        """Start the session and initialize telemetry."""
        if self._active:
            return

        self.exporter = SQLiteSpanExporter(db_path=self.db_path)
        self.tracer_provider = setup_instrumentation(
            service_name=self.service_name,
            debug=True,
            db_path=self.db_path,
            exporter=self.exporter,
        )

        if self.mode == "terminal":
            self.terminal_ui = TerminalUI()
            self.terminal_ui.start()
            self.exporter.set_callback(self.terminal_ui.on_span_end)

        self._active = True
        atexit.register(self.stop)

    def stop(self):
        """Stop the session; the provider stays installed for the next one."""
        if not self._active:
            return

        if self.terminal_ui:
            self.terminal_ui.stop()

        if self.tracer_provider:
            self.tracer_provider.force_flush()

        if self.exporter:
            self.exporter.shutdown()

        self._active = False

    def get_tracer(self, name: str = __name__):
        """Get a tracer instance."""
        return trace.get_tracer(name)
