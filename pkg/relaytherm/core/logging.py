import logging
import sys

import structlog
from pythonjsonlogger import jsonlogger

_CONFIGURED = False


def setup_logging(level: str = "INFO", fmt: str = "console"):
    """Structured logging setup; console rendering for desks, JSON for batch runs."""
    global _CONFIGURED

    renderer = structlog.processors.JSONRenderer() if fmt == "json" else structlog.dev.ConsoleRenderer()
    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.add_log_level,
            structlog.processors.StackInfoRenderer(),
            renderer,
        ],
        wrapper_class=structlog.stdlib.BoundLogger,
        logger_factory=structlog.stdlib.LoggerFactory(),
        cache_logger_on_first_use=True,
    )

    root = logging.getLogger()
    root.setLevel(getattr(logging, level.upper(), logging.INFO))
    if not _CONFIGURED:
        # stderr keeps stdout free for artifacts piped by the CLI
        handler = logging.StreamHandler(sys.stderr)
        if fmt == "json":
            handler.setFormatter(jsonlogger.JsonFormatter(fmt="%(asctime)s %(name)s %(levelname)s %(message)s"))
        else:
            handler.setFormatter(logging.Formatter("%(message)s"))
        root.addHandler(handler)
        _CONFIGURED = True

    return structlog.get_logger("relaytherm")
