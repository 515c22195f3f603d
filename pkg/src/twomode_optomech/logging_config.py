"""
Logging configuration for the two-mode optomechanics simulator
Keeps third-party libraries quiet and optionally wires span export
"""

import logging
import os
from pathlib import Path
from typing import Optional


def setup_logging(log_level: str = "INFO", log_file: Optional[str] = None):
    """
    Setup logging configuration with appropriate levels

    All records go to stderr so that the data channel (stdout or the
    output file) carries nothing but data rows.

    Args:
        log_level: Root log level (DEBUG, INFO, WARNING, ERROR)
        log_file: Optional path of an additional log file
    """
    level = getattr(logging, log_level.upper())

    handlers: list[logging.Handler] = [logging.StreamHandler()]
    if log_file:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_file))

    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True,
    )

    # Too verbose at DEBUG level
    third_party_loggers = [
        'urllib3',
        'grpc',
        'opentelemetry',
    ]

    for logger_name in third_party_loggers:
        logging.getLogger(logger_name).setLevel(logging.WARNING)

    our_loggers = [
        'twomode_optomech',
        '__main__'
    ]

    for logger_name in our_loggers:
        logging.getLogger(logger_name).setLevel(level)

    logging.getLogger(__name__).debug(f"Logging configured with level: {log_level}")


def setup_tracing(service_name: str = "twomode_optomech") -> bool:
    """
    Install an OTLP span exporter when OTEL_EXPORTER_OTLP_ENDPOINT is set.

    Returns:
        True when a tracer provider was installed
    """
    if not os.getenv("OTEL_EXPORTER_OTLP_ENDPOINT"):
        return False

    from opentelemetry import trace
    from opentelemetry.exporter.otlp.proto.http.trace_exporter import OTLPSpanExporter
    from opentelemetry.sdk.resources import Resource
    from opentelemetry.sdk.trace import TracerProvider
    from opentelemetry.sdk.trace.export import BatchSpanProcessor

    provider = TracerProvider(resource=Resource.create({"service.name": service_name}))
    provider.add_span_processor(BatchSpanProcessor(OTLPSpanExporter()))
    trace.set_tracer_provider(provider)
    logging.getLogger(__name__).info(f"Span export enabled for service {service_name}")
    return True
