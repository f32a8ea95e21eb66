"""
ModelMix - differentially private training with iterate mixing

Package API:
    import modelmix as mm

    mm.init(mode="headless")
    record = mm.account(mm.AccountantConfig(q=0.02, sigma=1.1, sensitivity=1.0, T=1000))

    @mm.trace
    def my_study():
        ...
"""
from typing import Optional

__version__ = "0.1.0"

from .accountant import (
    AccountantConfig,
    PrivacySpend,
    RdpCurve,
    account,
    calibrate_sigma,
    compose_to_dp,
    rdp_curve,
)
from .clipping import ClipConfig, clip_rows
from .core.decorators import annotate, span
from .core.decorators import trace_function as trace
from .core.session import Session
from .errors import CalibrationError, ContractError, ModelMixError, NumericalFailureError
from .optimizer import Method, MixConfig, TauSchedule, Trainer
from .registry import registry

_session: Optional[Session] = None


def init(
    mode: str = "terminal",
    db_path: Optional[str] = None,
    service_name: str = "modelmix",
) -> Session:
    """
    Start a tracing session.

    Args:
        mode: "terminal" (live Rich output) or "headless"
        db_path: SQLite run ledger; defaults to $MODELMIX_DB_PATH or modelmix_runs.db
        service_name: OpenTelemetry service name
    """
    global _session

    _session = Session(mode=mode, db_path=db_path, service_name=service_name)
    _session.start()
    Session.set_instance(_session)
    return _session


__all__ = [
    'AccountantConfig',
    'CalibrationError',
    'ClipConfig',
    'ContractError',
    'Method',
    'MixConfig',
    'ModelMixError',
    'NumericalFailureError',
    'PrivacySpend',
    'RdpCurve',
    'Session',
    'TauSchedule',
    'Trainer',
    'account',
    'annotate',
    'calibrate_sigma',
    'clip_rows',
    'compose_to_dp',
    'init',
    'rdp_curve',
    'registry',
    'span',
    'trace',
]
