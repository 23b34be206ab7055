"""
Run configuration and logging setup.

Settings come from command-line flags first, then from the environment
(optionally populated from a .env file), then from built-in defaults.
"""

import logging
import os
from dataclasses import dataclass, field
from logging.handlers import RotatingFileHandler
from pathlib import Path

from dotenv import load_dotenv

from hullwalk.errors import ConfigError

LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'
LOG_DATE_FORMAT = '%Y-%m-%d %H:%M:%S'

DEFAULT_SEED = 0
DEFAULT_JOBS = 1
SEED_MASK = (1 << 64) - 1


def load_environment(env_file=".env"):
    """
    Load variables from a .env file into the process environment.

    Existing environment variables win over the file.

    Args:
        env_file (str): Path to the .env file

    Returns:
        bool: True if a file was found and loaded
    """
    if env_file and os.path.exists(env_file):
        load_dotenv(env_file, override=False)
        return True
    return False


def env_seed(default=DEFAULT_SEED):
    """Seed fallback from HULLWALK_SEED."""
    raw = os.getenv("HULLWALK_SEED")
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw, 0) & SEED_MASK
    except ValueError:
        raise ConfigError(f"HULLWALK_SEED is not an integer: {raw!r}")


def env_jobs(default=DEFAULT_JOBS):
    """Thread count fallback from HULLWALK_JOBS."""
    raw = os.getenv("HULLWALK_JOBS")
    if raw is None or raw.strip() == "":
        return default
    try:
        jobs = int(raw)
    except ValueError:
        raise ConfigError(f"HULLWALK_JOBS is not an integer: {raw!r}")
    if jobs < 1:
        raise ConfigError(f"HULLWALK_JOBS must be at least 1, got {jobs}")
    return jobs


def setup_logging(verbose=False, log_file=None):
    """
    Configure the hullwalk logger.

    Args:
        verbose (bool): Log at DEBUG instead of INFO
        log_file (str, optional): Also log to this file, rotated at 10 MiB

    Returns:
        logging.Logger: The configured package logger
    """
    log_level = logging.DEBUG if verbose else logging.INFO
    logger = logging.getLogger('hullwalk')
    logger.setLevel(log_level)
    logger.handlers = []

    formatter = logging.Formatter(LOG_FORMAT, LOG_DATE_FORMAT)

    console_handler = logging.StreamHandler()
    console_handler.setLevel(log_level)
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    if log_file:
        log_dir = Path(log_file).parent
        if not log_dir.exists():
            log_dir.mkdir(parents=True, exist_ok=True)

        file_handler = RotatingFileHandler(
            log_file, maxBytes=10*1024*1024, backupCount=5
        )
        file_handler.setLevel(log_level)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

        logger.info(f"Logging to file: {log_file}")

    return logger


@dataclass(frozen=True)
class RunConfig:
    """Everything one CLI invocation needs to reproduce its report."""

    subcommand: str
    params: dict = field(default_factory=dict)
    seed: int = DEFAULT_SEED
    jobs: int = DEFAULT_JOBS
    out_path: str = None
    fmt: str = "json"

    def __post_init__(self):
        if self.fmt not in ("json", "csv"):
            raise ConfigError(f"unknown format {self.fmt!r}")
        if self.jobs < 1:
            raise ConfigError(f"--jobs must be at least 1, got {self.jobs}")

    @classmethod
    def build(cls, subcommand, params, allowed, seed=None, jobs=None,
              out_path=None, fmt="json"):
        """
        Validate parameters against the subcommand's allowed keys.

        Args:
            subcommand (str): Subcommand name
            params (dict): Experiment parameters
            allowed (iterable): Keys the subcommand accepts
            seed (int, optional): Root seed; falls back to HULLWALK_SEED
            jobs (int, optional): Worker threads; falls back to HULLWALK_JOBS

        Returns:
            RunConfig: The validated configuration
        """
        allowed = set(allowed)
        unknown = sorted(key for key in params if key not in allowed)
        if unknown:
            raise ConfigError(f"unknown parameter(s) for {subcommand}: {', '.join(unknown)}")
        if seed is None:
            seed = env_seed()
        if jobs is None:
            jobs = env_jobs()
        return cls(subcommand=subcommand, params=dict(params), seed=int(seed) & SEED_MASK,
                   jobs=int(jobs), out_path=out_path, fmt=fmt)

    def echo(self):
        """Parameters as written into a report (jobs and output path excluded)."""
        echoed = dict(self.params)
        echoed["seed"] = self.seed
        return echoed
