"""Package logging for rod_studio.

Only the ``rod_studio`` logger is configured, so embedding the engine in
another program leaves that program's root logging alone. Records always go
to stderr; stdout carries the JSON that commands print.
"""

import logging
import os
import sys
from typing import Optional

PACKAGE = "rod_studio"
DEFAULT_LEVEL = "INFO"
LEVEL_ENV = "ROD_STUDIO_LOG_LEVEL"
LOG_FORMAT = "%(asctime)s %(levelname)s [%(name)s] %(message)s"

_LEVELS = {
    "CRITICAL": logging.CRITICAL,
    "ERROR": logging.ERROR,
    "WARNING": logging.WARNING,
    "INFO": logging.INFO,
    "DEBUG": logging.DEBUG,
}


class _StderrHandler(logging.StreamHandler):
    """Writes to whatever ``sys.stderr`` is when a record is emitted."""

    @property
    def stream(self):
        return sys.stderr

    @stream.setter
    def stream(self, value) -> None:
        pass


def parse_level(level: Optional[str]) -> int:
    if level is None:
        level = os.getenv(LEVEL_ENV, DEFAULT_LEVEL)
    return _LEVELS.get(str(level).upper(), logging.INFO)


def _package_handler(logger: logging.Logger) -> Optional[logging.Handler]:
    for handler in logger.handlers:
        if isinstance(handler, _StderrHandler):
            return handler
    return None


def init_logging(level: Optional[str] = None) -> None:
    """Attach the stderr handler to the package logger and set its level.

    Calling again only changes the level.
    """
    logger = logging.getLogger(PACKAGE)
    logger.setLevel(parse_level(level))
    if _package_handler(logger) is None:
        handler = _StderrHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt="%H:%M:%S"))
        logger.addHandler(handler)


def get_logger(name: str) -> logging.Logger:
    """Logger under the ``rod_studio`` namespace, initializing on first use."""
    if name != PACKAGE and not name.startswith(PACKAGE + "."):
        name = f"{PACKAGE}.{name}"
    if _package_handler(logging.getLogger(PACKAGE)) is None:
        init_logging()
    return logging.getLogger(name)
