"""
Configuration module for cascade-lab settings and numerical constants.
"""
import math
import os

# Try to load environment variables from .env file (for local development)
# In batch runs, environment variables should be set directly by the scheduler
try:
    from dotenv import load_dotenv
    load_dotenv()
except ImportError:
    # python-dotenv not available (this is fine, defaults apply)
    pass


def _env_int(name, default):
    value = os.getenv(name)
    if value is None or value == '':
        return default
    try:
        return int(value)
    except ValueError:
        return value  # rejected by Config.validate()


def _env_float(name, default):
    value = os.getenv(name)
    if value is None or value == '':
        return default
    try:
        return float(value)
    except ValueError:
        return value


class Config:
    """Configuration class for lab settings."""

    VERSION = '1.0.0'

    # Run settings
    WORKERS = _env_int('CASCADE_LAB_WORKERS', os.cpu_count() or 1)
    SEED = _env_int('CASCADE_LAB_SEED', 20240101)
    GRID_RESOLUTION = _env_int('CASCADE_LAB_GRID', 400)
    S_MAX = _env_float('CASCADE_LAB_S_MAX', 6.0)
    OUT_DIR = os.getenv('CASCADE_LAB_OUT', 'runs')
    LOG_LEVEL = os.getenv('CASCADE_LAB_LOG_LEVEL', 'INFO')

    # Work caps
    MAX_DEPTH = _env_int('CASCADE_LAB_MAX_DEPTH', 16)  # at N = 2
    MAX_POOL_SIZE = _env_int('CASCADE_LAB_MAX_POOL', 10_000_000)
    POWER_ITERATION_CAP = _env_int('CASCADE_LAB_POWER_CAP', 100_000)

    # Perron data
    PERRON_RAYLEIGH_TOL = 1e-12
    PERRON_SHIFT = 1e-12  # times trace(m)
    RANK_TOL = 1e-8

    # Transfer operator
    OPERATOR_TOL = 1e-13
    GROWTH_WINDOW = 10
    MIN_EIGENFUNCTION = 1e-14
    DUAL_KAPPA_RTOL = 1e-4
    FD_STEP = 1e-3
    CHI_OFFSET = 1e-4
    CHI_XTOL = 1e-8

    # Monte Carlo
    PARTICLE_CHUNK = 8192
    MIN_TAIL_POOL = 100_000
    MIN_MOMENT_POOL = 10_000
    BOOTSTRAP_RESAMPLES = 200

    # Pass bands
    MARTINGALE_Z_MAX = 4.0
    HARMONICITY_BAND = (0.8, 1.25)
    SHAPE_CORRELATION_MIN = 0.9

    @classmethod
    def max_log_work(cls):
        """Largest admissible log of the number of tree leaves."""
        return cls.MAX_DEPTH * math.log(2.0)

    @classmethod
    def validate(cls):
        """Validate that all configuration values are usable."""
        problems = []
        for var in ['WORKERS', 'SEED', 'GRID_RESOLUTION', 'MAX_DEPTH',
                    'MAX_POOL_SIZE', 'POWER_ITERATION_CAP']:
            value = getattr(cls, var)
            if not isinstance(value, int) or value < 0:
                problems.append(var)
        if cls.WORKERS == 0:
            problems.append('WORKERS')
        if not isinstance(cls.S_MAX, float) or cls.S_MAX <= 1.0:
            problems.append('S_MAX')

        if problems:
            raise ValueError(f"Invalid configuration values: {', '.join(sorted(set(problems)))}")

        return True
