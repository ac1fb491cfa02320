"""
Structured logging setup

All modules obtain loggers with ``structlog.get_logger(__name__)``; this module
wires the processor chain once per process (CLI entry point or service start).
"""

import logging
import sys

import structlog


def _stderr_logger(*args) -> structlog.PrintLogger:
    # sys.stderr is looked up per logger so redirected streams are honoured
    return structlog.PrintLogger(sys.stderr)


def configure_logging(level: str = 'INFO', json_output: bool = False) -> None:
    """Configure structlog to render key-value (or JSON) lines on stderr."""
    log_level = getattr(logging, level.upper(), logging.INFO)
    logging.basicConfig(format='%(message)s', stream=sys.stderr, level=log_level)

    renderer = (structlog.processors.JSONRenderer() if json_output
                else structlog.dev.ConsoleRenderer(colors=False))

    structlog.configure(
        processors=[
            structlog.contextvars.merge_contextvars,
            structlog.processors.add_log_level,
            structlog.processors.TimeStamper(fmt='iso'),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            renderer,
        ],
        wrapper_class=structlog.make_filtering_bound_logger(log_level),
        logger_factory=_stderr_logger,
        cache_logger_on_first_use=False,
    )
