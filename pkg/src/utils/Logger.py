import json
import logging
import os
import sys

LOG_LEVEL = os.environ.get("LOG_LEVEL", "INFO").upper()
LOG_FILE = os.environ.get("POTFLOW_LOG_FILE")
numeric_level = getattr(logging, LOG_LEVEL, None)
if not isinstance(numeric_level, int):
    raise ValueError(f"Invalid log level: {LOG_LEVEL}")


class JsonLineFormatter(logging.Formatter):
    """One JSON object per record; messages may contain quotes and newlines."""

    def format(self, record: logging.LogRecord) -> str:
        payload = {
            "time": self.formatTime(record),
            "level": record.levelname,
            "name": record.name,
            "where": f"{record.module}:{record.lineno}",
            "message": record.getMessage(),
        }
        if record.exc_info:
            payload["exception"] = self.formatException(record.exc_info)
        return json.dumps(payload)


logger = logging.getLogger("potflow_app_logger")
logger.setLevel(numeric_level)

logger.propagate = False

if not logger.handlers:
    # stderr keeps stdout free for command output
    stream_handler = logging.StreamHandler(sys.stderr)
    stream_handler.setFormatter(JsonLineFormatter())
    logger.addHandler(stream_handler)

    if LOG_FILE:
        file_handler = logging.FileHandler(LOG_FILE, encoding="utf-8")
        file_handler.setFormatter(JsonLineFormatter())
        logger.addHandler(file_handler)

    logger.debug(f"Application logging initialized with level {LOG_LEVEL}" + (f", file {LOG_FILE}" if LOG_FILE else ""))
