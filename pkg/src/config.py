"""
Configuration management for cutlocus
Handles environment variables and solver defaults
"""

import os
from pathlib import Path
from dotenv import load_dotenv

from .errors import ConfigError


def _resolve_dir(explicit_env: str, xdg_env: str, xdg_default: str) -> Path:
    """Resolve a directory following the XDG Base Directory rules.

    Priority:
      1) app-specific override variable (explicit_env), used verbatim
      2) XDG base variable (xdg_env), with a 'cutlocus' subdirectory
      3) the default (xdg_default)
    """
    explicit = os.environ.get(explicit_env)
    if explicit:
        return Path(os.path.expanduser(explicit))
    base = os.environ.get(xdg_env)
    if base:
        return Path(base) / "cutlocus"
    return Path(os.path.expanduser(xdg_default))


CONFIG_DIR = _resolve_dir("CUTLOCUS_CONFIG_DIR", "XDG_CONFIG_HOME", "~/.config/cutlocus")
DATA_DIR = _resolve_dir("CUTLOCUS_DATA_DIR", "XDG_DATA_HOME", "~/.local/share/cutlocus")

# The config-dir .env wins over ./.env; load_dotenv never overrides set values.
load_dotenv(CONFIG_DIR / ".env")
load_dotenv()


def _env_bool(name: str, default: str = 'false') -> bool:
    return os.getenv(name, default).lower() == 'true'


class Config:
    """Central configuration class for cutlocus"""

    # Worker Configuration
    THREADS = int(os.getenv('CUTLOCUS_THREADS', '0'))
    MIN_WORKER = 1
    MAX_WORKER = int(os.getenv('CUTLOCUS_MAX_WORKER', '8'))

    # Numerics
    TOL = float(os.getenv('CUTLOCUS_TOL', '1e-10'))
    EPSILON_MIN = float(os.getenv('CUTLOCUS_EPSILON_MIN', '1e-4'))
    BOUNDARY_SAMPLES = int(os.getenv('CUTLOCUS_BOUNDARY_SAMPLES', '2048'))
    SHOOTING_STARTS = int(os.getenv('CUTLOCUS_SHOOTING_STARTS', '32'))
    DELTA_SEP = float(os.getenv('CUTLOCUS_DELTA_SEP', '1e-2'))
    SLACK_C = float(os.getenv('CUTLOCUS_SLACK_C', '1e-2'))
    RANK_TOL = 1e-7
    CONJUGACY_TOL = float(os.getenv('CUTLOCUS_CONJUGACY_TOL', '1e-4'))
    SEED = int(os.getenv('CUTLOCUS_SEED', '0'))

    # Paths
    CONFIG_DIR = CONFIG_DIR
    OUTPUT_DIR = Path(os.getenv('CUTLOCUS_OUTPUT_DIR') or (DATA_DIR / 'runs'))

    VERBOSE = _env_bool('CUTLOCUS_VERBOSE')
    DEBUG = _env_bool('DEBUG')

    @classmethod
    def create_directories(cls):
        """Create the output directory if it doesn't exist"""
        cls.OUTPUT_DIR.mkdir(parents=True, exist_ok=True)

    @classmethod
    def validate(cls):
        """Raise ConfigError if a tolerance or sample count is not positive"""
        for name in ('TOL', 'EPSILON_MIN', 'DELTA_SEP', 'SLACK_C', 'CONJUGACY_TOL'):
            if not getattr(cls, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(cls, name)}")
        for name in ('BOUNDARY_SAMPLES', 'SHOOTING_STARTS', 'MAX_WORKER'):
            if getattr(cls, name) < 1:
                raise ConfigError(f"{name} must be at least 1, got {getattr(cls, name)}")
        if cls.THREADS < 0:
            raise ConfigError(f"CUTLOCUS_THREADS must be >= 0, got {cls.THREADS}")
