from typing import Optional

from opentelemetry import trace
from opentelemetry.sdk.resources import Resource
from opentelemetry.sdk.trace import TracerProvider
from opentelemetry.sdk.trace.export import BatchSpanProcessor, SimpleSpanProcessor
from opentelemetry.semconv.resource import ResourceAttributes

from .exporter import SQLiteSpanExporter


def setup_instrumentation(
    service_name: str = "modelmix",
    debug: bool = False,
    db_path: str = "modelmix_runs.db",
    exporter: Optional[SQLiteSpanExporter] = None,
) -> TracerProvider:
    """
    Initializes the OpenTelemetry tracing system with the SQLite run ledger.

    The global provider can only be installed once per process; later calls
    attach their exporter to the provider already in place.
    """
    exporter = exporter if exporter is not None else SQLiteSpanExporter(db_path)
    # Simple writes every span immediately; Batch buffers them
    processor_type = SimpleSpanProcessor if debug else BatchSpanProcessor

    current = trace.get_tracer_provider()
    if isinstance(current, TracerProvider):
        current.add_span_processor(processor_type(exporter))
        return current

    resource = Resource.create({
        ResourceAttributes.SERVICE_NAME: service_name,
        "deployment.environment": "local",
        "telemetry.sdk.name": "modelmix",
    })
    provider = TracerProvider(resource=resource)
    provider.add_span_processor(processor_type(exporter))
    trace.set_tracer_provider(provider)
    return provider
