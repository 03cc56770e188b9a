"""
Runtime configuration and logging setup.

Settings come from the environment (optionally a .env file in the working
directory). Counting pipeline defaults live here as constants.
"""

import logging
import os
from dataclasses import dataclass
from logging.handlers import RotatingFileHandler
from typing import Optional

from dotenv import load_dotenv

from pcq.errors import UsageError

load_dotenv()

# ===============================
# PIPELINE DEFAULTS
# ===============================
DEFAULT_PARTITIONS = 4
DEFAULT_OVERLAP = 0.2
DEFAULT_THRESHOLD = 0.5
DEFAULT_ALPHA = 2.0
DEFAULT_EPSILON = 0.15
DEFAULT_TOLERANCE = 0.1
DEFAULT_MERGE_RADIUS = 4.0  # fallback when no scene profile gives extents
DEFAULT_QUERIES = 1000
DEFAULT_GROUPS = 500
DEFAULT_GROUP_LENGTH = (100, 500)

PROBABILITY_EPS = 1e-6
OTSU_BINS = 256
OCCUPANCY_LEVEL = 0.1

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


@dataclass(frozen=True)
class Settings:
    threads: int
    log_level: str
    log_file: Optional[str]
    catalog: str


def load_settings() -> Settings:
    raw_threads = os.getenv("PCQ_THREADS", str(os.cpu_count() or 1))
    try:
        threads = int(raw_threads)
    except ValueError:
        raise UsageError(f"PCQ_THREADS must be an integer, got '{raw_threads}'") from None
    return Settings(
        threads=max(1, threads),
        log_level=os.getenv("PCQ_LOG_LEVEL", "INFO").upper(),
        log_file=os.getenv("PCQ_LOG_FILE") or None,
        catalog=os.getenv("PCQ_CATALOG", "nuscenes"),
    )


def setup_logging(level: str = "INFO", log_file: Optional[str] = None) -> logging.Logger:
    """Configure the ``pcq`` logger: stderr always, rotating file when asked."""
    logger = logging.getLogger("pcq")
    logger.setLevel(level)
    logger.handlers.clear()

    formatter = logging.Formatter(LOG_FORMAT)

    stream = logging.StreamHandler()
    stream.setFormatter(formatter)
    logger.addHandler(stream)

    if log_file:
        directory = os.path.dirname(log_file)
        if directory:
            os.makedirs(directory, exist_ok=True)
        handler = RotatingFileHandler(log_file, maxBytes=10 * 1024 * 1024, backupCount=5)
        handler.setFormatter(formatter)
        logger.addHandler(handler)

    return logger
