# utils/logger.py
import logging
import sys
from pathlib import Path

from config.settings import Config


def get_logger(name: str = "FEENORM"):
    """Pipe-formatted logger; console output goes to stderr so stdout stays machine-readable."""
    logger = logging.getLogger(name)
    logger.setLevel(getattr(logging, Config.LOGGING.level, logging.INFO))

    # avoid stacking handlers on repeated calls
    if logger.handlers:
        return logger

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(logging.INFO)
    console_formatter = logging.Formatter(
        "%(asctime)s | %(name)s | %(levelname)-8s | %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S"
    )
    console_handler.setFormatter(console_formatter)
    logger.addHandler(console_handler)

    if Config.LOGGING.file:
        Path(Config.LOGGING.file).parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(Config.LOGGING.file, encoding="utf-8")
        file_handler.setLevel(logging.DEBUG)
        file_formatter = logging.Formatter(
            "%(asctime)s | %(name)s | %(levelname)-8s | %(funcName)s:%(lineno)d | %(message)s",
            datefmt="%Y-%m-%d %H:%M:%S"
        )
        file_handler.setFormatter(file_formatter)
        logger.addHandler(file_handler)

    return logger


logger = get_logger()


def set_level(level: str):
    """Apply a level to every logger handed out by get_logger (CLI --log-level, DEBUG=1)."""
    value = getattr(logging, str(level).upper(), logging.INFO)
    for obj in list(logging.Logger.manager.loggerDict.values()):
        if isinstance(obj, logging.Logger) and obj.handlers:
            obj.setLevel(value)
            for handler in obj.handlers:
                if isinstance(handler, logging.StreamHandler) and not isinstance(handler, logging.FileHandler):
                    handler.setLevel(value)
