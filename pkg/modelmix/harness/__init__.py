"""Experiment harness: specs, drivers, Monte-Carlo oracle and result artifacts."""

from .experiments import DRIVERS, FIG4_EXPECTED, run_experiment
from .results import ResultEnvelope, replay, save_results, write_fig4_csv, write_json
from .specs import ExperimentKind, ExperimentSpec

__all__ = [
    'DRIVERS',
    'ExperimentKind',
    'ExperimentSpec',
    'FIG4_EXPECTED',
    'ResultEnvelope',
    'replay',
    'run_experiment',
    'save_results',
    'write_fig4_csv',
    'write_json',
]
