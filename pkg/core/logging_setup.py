"""
Logging Setup
Configures loguru sinks with line-oriented key=value records
"""

import os
import sys
from pathlib import Path

from loguru import logger

LINE_FORMAT = (
    "ts={time:YYYY-MM-DDTHH:mm:ss.SSS} level={level} src={name}:{function} msg={message}"
)


def setup_logging(
    level: str | None = None,
    log_file: str | Path | None = None,
    rotation: str = "100 MB",
    retention: str = "30 days",
) -> None:
    """Configure loguru: one stderr sink plus an optional rotating file sink"""
    level = (level or os.environ.get("LOG_LEVEL") or "INFO").upper()

    logger.remove()
    logger.add(sys.stderr, level=level, format=LINE_FORMAT, colorize=False)

    if log_file:
        log_path = Path(log_file)
        log_path.parent.mkdir(parents=True, exist_ok=True)
        logger.add(
            str(log_path),
            rotation=rotation,
            retention=retention,
            level=level,
            format=LINE_FORMAT,
        )
    logger.debug(f"logging_ready level={level} file={log_file}")
