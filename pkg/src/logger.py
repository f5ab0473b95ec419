"""
Logging system for ResidueBench
Centralized workbench logging: level from the environment or the CLI, optional log file, progress lines
"""
import logging
import os
import sys
import threading
from typing import Optional

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
WORKBENCH_LOGGER = 'src'

# RESIDUEBENCH_DEBUG wins over RESIDUEBENCH_LOG_LEVEL
DEBUG_MODE = os.getenv('RESIDUEBENCH_DEBUG', 'false').lower() in ('true', '1', 'yes')
LOG_LEVEL = os.getenv('RESIDUEBENCH_LOG_LEVEL', 'INFO')
LOG_FILE = os.getenv('RESIDUEBENCH_LOG_FILE', '')


def parse_level(name: str) -> int:
    """Map a level name ('debug', 'WARNING', ...) to its logging constant; unknown names give INFO"""
    level = logging.getLevelName(str(name).strip().upper())
    return level if isinstance(level, int) else logging.INFO


def _level() -> int:
    return logging.DEBUG if DEBUG_MODE else parse_level(LOG_LEVEL)


def _configure():
    root = logging.getLogger(WORKBENCH_LOGGER)
    if root.handlers:
        return
    formatter = logging.Formatter(LOG_FORMAT)
    stream = logging.StreamHandler(sys.stdout)
    stream.setFormatter(formatter)
    root.addHandler(stream)
    if LOG_FILE:
        log_to_file(LOG_FILE)
    root.setLevel(_level())
    root.propagate = False


def get_logger(name: str) -> logging.Logger:
    """Get a logger instance for the given module name (children of the workbench logger)"""
    _configure()
    if name != WORKBENCH_LOGGER and not name.startswith(WORKBENCH_LOGGER + '.'):
        name = f'{WORKBENCH_LOGGER}.{name}'
    return logging.getLogger(name)


def set_debug_mode(enabled: bool):
    """Enable or disable debug mode globally"""
    global DEBUG_MODE
    DEBUG_MODE = enabled
    logging.getLogger(WORKBENCH_LOGGER).setLevel(_level())


def set_log_level(name: str):
    global LOG_LEVEL
    LOG_LEVEL = name
    logging.getLogger(WORKBENCH_LOGGER).setLevel(_level())


def log_to_file(path: str) -> logging.FileHandler:
    """Also append workbench log records to `path`"""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    handler = logging.FileHandler(path, encoding='utf-8')
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    logging.getLogger(WORKBENCH_LOGGER).addHandler(handler)
    return handler


class ProgressLog:
    """
    Thread-safe counter that logs `what: done/total` at DEBUG every `every` steps
    and once at the end.
    """

    def __init__(self, logger: logging.Logger, what: str, total: int, every: Optional[int] = None):
        self.logger = logger
        self.what = what
        self.total = total
        self.every = every or max(1, total // 10)
        self.done = 0
        self._lock = threading.Lock()

    def step(self):
        with self._lock:
            self.done += 1
            done = self.done
        if done == self.total or done % self.every == 0:
            self.logger.debug(f"{self.what}: {done}/{self.total}")


def close_log_file(handler: logging.Handler):
    logging.getLogger(WORKBENCH_LOGGER).removeHandler(handler)
    handler.close()
