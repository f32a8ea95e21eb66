"""
ModelMix Tracing Helpers

Provides the @trace decorator and span() context manager used around
accounting, calibration, training and experiment runs.
"""
import functools
from typing import Any, Callable, Dict, Optional

from opentelemetry import trace
from pydantic import BaseModel

ATTRIBUTE_PREFIX = "mm."


def _attribute_value(value: Any):
    """Coerce a value into something an OTel attribute accepts."""
    if isinstance(value, (bool, int, float, str)):
        return value
    if hasattr(value, "value") and isinstance(getattr(value, "value"), str):
        return value.value
    if isinstance(value, (list, tuple)) and all(isinstance(v, (int, float)) for v in value):
        return [float(v) for v in value]
    return str(value)


def config_attributes(config: BaseModel, prefix: str = ATTRIBUTE_PREFIX) -> Dict[str, Any]:
    """
    Flatten a pydantic config into span attributes.

    Nested models become dotted keys: MixConfig.clip.c -> "mm.clip.c".
    """
    flat: Dict[str, Any] = {}
    for key, value in config.model_dump(mode="json").items():
        if isinstance(value, dict):
            for sub_key, sub_value in value.items():
                if sub_value is not None:
                    flat[f"{prefix}{key}.{sub_key}"] = _attribute_value(sub_value)
        elif value is not None:
            flat[f"{prefix}{key}"] = _attribute_value(value)
    return flat


def annotate(**attributes: Any) -> None:
    """Attach `mm.*` attributes to the currently active span."""
    current = trace.get_current_span()
    for key, value in attributes.items():
        if value is not None:
            current.set_attribute(f"{ATTRIBUTE_PREFIX}{key}", _attribute_value(value))


def record_event(name: str, **attributes: Any) -> None:
    """Record a span event (warnings, residuals, oracle disagreements)."""
    trace.get_current_span().add_event(
        name, {key: _attribute_value(value) for key, value in attributes.items()}
    )


def trace_function(name: Optional[str] = None):
    """
    Decorator to automatically create a span for a function.

    Usage:
        @trace
        def rdp_curve(config):
            ...

        @trace(name="harness.fig4")
        def run_fig4(spec):
            ...
    """
    def decorator(func: Callable) -> Callable:
        span_name = name if name else func.__qualname__

        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            tracer = trace.get_tracer(__name__)

            with tracer.start_as_current_span(span_name):
                return func(*args, **kwargs)

        return wrapper

    # Support both @trace and @trace(name="...")
    if callable(name):
        func = name
        name = None
        return decorator(func)
    return decorator


class SpanWrapper:
    """Convenience methods over an OTel span."""

    def __init__(self, span):
        self._span = span

    @property
    def raw(self):
        return self._span

    def set_attribute(self, key: str, value) -> "SpanWrapper":
        self._span.set_attribute(key, _attribute_value(value))
        return self

    def set_metric(self, key: str, value: float) -> "SpanWrapper":
        self._span.set_attribute(f"{ATTRIBUTE_PREFIX}{key}", float(value))
        return self

    def set_config(self, config: BaseModel, prefix: str = ATTRIBUTE_PREFIX) -> "SpanWrapper":
        for key, value in config_attributes(config, prefix).items():
            self._span.set_attribute(key, value)
        return self

    def add_event(self, name: str, **attributes: Any) -> "SpanWrapper":
        self._span.add_event(name, {k: _attribute_value(v) for k, v in attributes.items()})
        return self


class SpanContext:
    """
    Context manager for manual spans.

    Usage:
        with mm.span("fig4.cell") as s:
            s.set_config(config)
            s.set_metric("epsilon", spend.epsilon)
    """
    def __init__(self, name: str):
        self.name = name
        self._manager = None
        self.span = None

    def __enter__(self) -> SpanWrapper:
        tracer = trace.get_tracer(__name__)
        self._manager = tracer.start_as_current_span(self.name)
        self.span = self._manager.__enter__()
        return SpanWrapper(self.span)

    def __exit__(self, exc_type, exc_val, exc_tb):
        if self._manager is not None:
            return self._manager.__exit__(exc_type, exc_val, exc_tb)
        return None


def span(name: str) -> SpanContext:
    """
    Create a manual span context.

    Usage:
        with mm.span("calibrate") as s:
            sigma = calibrate_sigma(200.0, config)
            s.set_metric("sigma", sigma)
    """
    return SpanContext(name)
