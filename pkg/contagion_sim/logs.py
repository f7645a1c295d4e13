import logging
import os

LOG_FORMAT = "%(asctime)s - %(levelname)s - %(name)s - %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


def configure_logging(level=None, log_file=None):
    """Send package logs to stderr and, if requested, append them to a file.

    ``level`` and ``log_file`` fall back to ``CONTAGION_LOG_LEVEL`` and
    ``CONTAGION_LOG_FILE``.
    """
    level = level or os.getenv("CONTAGION_LOG_LEVEL", "INFO")
    log_file = log_file or os.getenv("CONTAGION_LOG_FILE")

    handlers = [logging.StreamHandler()]
    if log_file:
        handlers.append(logging.FileHandler(log_file, mode="a"))

    formatter = logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT)
    root = logging.getLogger("contagion_sim")
    for handler in list(root.handlers):
        root.removeHandler(handler)
        handler.close()
    for handler in handlers:
        handler.setFormatter(formatter)
        root.addHandler(handler)
    root.setLevel(level.upper() if isinstance(level, str) else level)
    root.propagate = False
    return root
