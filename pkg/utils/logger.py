"""
Logging configuration using loguru.

Every record carries a ``run`` field: ``-`` outside a training run, ``<name>/seed<N>``
inside one (see ``run_logger``).
"""
import sys
from loguru import logger
from config.settings import LOG_LEVEL, LOG_FORMAT, LOG_FILE, LOG_ROTATION, LOG_RETENTION, LOGS_DIR

NO_RUN = "-"


def setup_logger():
    """Configure the logger with console output on stderr and a rotating file."""
    LOGS_DIR.mkdir(parents=True, exist_ok=True)

    logger.remove()
    logger.configure(extra={"run": NO_RUN})

    # stdout is reserved for machine-readable CLI output
    logger.add(
        sys.stderr,
        format=LOG_FORMAT,
        level=LOG_LEVEL,
        colorize=True,
    )

    logger.add(
        LOG_FILE,
        format=LOG_FORMAT,
        level=LOG_LEVEL,
        rotation=LOG_ROTATION,
        retention=LOG_RETENTION,
        encoding="utf-8",
    )

    logger.debug("Logger initialized")
    return logger


def run_label(name: str, seed: int) -> str:
    return f"{name}/seed{seed}"


def run_logger(name: str, seed: int):
    """Logger whose records are tagged with the experiment name and seed."""
    return log.bind(run=run_label(name, seed))


# Create singleton logger instance
log = setup_logger()
