"""
Centralized logging configuration for the compression engine.
"""
import sys
from loguru import logger
from tqdm import tqdm

from utils.config import settings


def _tqdm_sink(message):
    """Route console records through tqdm so progress bars stay intact."""
    tqdm.write(message, end="", file=sys.stderr)


def setup_logging(log_file=None,
                  console_level=None,
                  file_level=None,
                  rotation=None,
                  retention=None):
    """
    Set up logging configuration for the application.

    Args:
        log_file: Log file path (None disables the file sink when the
            setting is empty as well)
        console_level: Logging level for console output
        file_level: Logging level for file output
        rotation: When to rotate log files
        retention: Number of log files to keep
    """
    log_file = log_file if log_file is not None else settings.PPCD_LOG_FILE
    console_level = console_level or settings.PPCD_CONSOLE_LEVEL
    file_level = file_level or settings.PPCD_FILE_LEVEL
    rotation = rotation or settings.PPCD_LOG_ROTATION
    retention = retention if retention is not None else settings.PPCD_LOG_RETENTION

    # Remove default logger
    logger.remove()

    # Configure console logger with colors
    logger.add(
        _tqdm_sink,
        level=console_level,
        colorize=True,
        format="<green>{time:YYYY-MM-DD HH:mm:ss.SSS}</green> | <level>{level: <8}</level> | <cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> - <level>{message}</level>"
    )

    # Configure file logger for more detailed logging
    if log_file:
        logger.add(
            log_file,
            level=file_level,
            format="{time:YYYY-MM-DD HH:mm:ss.SSS} | {level: <8} | {name}:{function}:{line} - {message}",
            rotation=rotation,
            retention=retention
        )

    return logger
