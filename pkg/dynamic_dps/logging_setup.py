# dynamic_dps/logging_setup.py

import json
import logging
import logging.handlers
from typing import Optional

from dynamic_dps.config import LoggingConfig
from dynamic_dps.constants import (
    LogFormat,
    STRUCTURED_LOG_FORMAT,
    PLAIN_LOG_FORMAT,
    LOG_DATE_FORMAT,
)

logger = logging.getLogger(__name__)

ROOT_LOGGER_NAME = "dynamic_dps"


class JsonFormatter(logging.Formatter):
    """One JSON object per record."""

    def format(self, record: logging.LogRecord) -> str:
        payload = {
            "time": self.formatTime(record, LOG_DATE_FORMAT),
            "logger": record.name,
            "level": record.levelname,
            "message": record.getMessage(),
        }
        if record.exc_info:
            payload["exception"] = self.formatException(record.exc_info)
        return json.dumps(payload)


def _make_formatter(fmt: str) -> logging.Formatter:
    if fmt == LogFormat.JSON:
        return JsonFormatter()
    if fmt == LogFormat.PLAIN:
        return logging.Formatter(PLAIN_LOG_FORMAT)
    return logging.Formatter(STRUCTURED_LOG_FORMAT, datefmt=LOG_DATE_FORMAT)


def configure_logging(
    config: Optional[LoggingConfig] = None, force: bool = True
) -> logging.Logger:
    """
    Attach console and optional rotating-file handlers to the package logger.

    Args:
        config: Logging configuration (defaults if omitted)
        force: Remove handlers installed by an earlier call

    Returns:
        The configured package logger
    """
    config = config or LoggingConfig()
    config.validate()

    package_logger = logging.getLogger(ROOT_LOGGER_NAME)
    if force:
        for handler in list(package_logger.handlers):
            package_logger.removeHandler(handler)
            handler.close()

    formatter = _make_formatter(str(getattr(config.format, "value", config.format)))
    level = str(getattr(config.level, "value", config.level))

    console = logging.StreamHandler()
    console.setFormatter(formatter)
    package_logger.addHandler(console)

    if config.output_file is not None:
        config.output_file.parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.handlers.RotatingFileHandler(
            config.output_file,
            maxBytes=config.max_file_size,
            backupCount=config.backup_count,
            encoding="utf-8",
        )
        file_handler.setFormatter(formatter)
        package_logger.addHandler(file_handler)

    package_logger.setLevel(level)
    logger.debug(f"Logging configured: level={level}, format={config.format}, file={config.output_file}")
    return package_logger
