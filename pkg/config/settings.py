import os
from dotenv import load_dotenv

load_dotenv()


def _env_float(name: str, default: float) -> float:
    return float(os.getenv(name, default))


def _env_int(name: str, default: int) -> int:
    return int(float(os.getenv(name, default)))


class Config:
    # Quadrature
    QUADRATURE_ABS_TOL = _env_float('MPE_QUADRATURE_ABS_TOL', 1e-8)
    GL_ORDER = _env_int('MPE_GL_ORDER', 20)
    MAX_PANELS = _env_int('MPE_MAX_PANELS', 4000)
    TAIL_MASS = _env_float('MPE_TAIL_MASS', 1e-12)
    DENSITY_FLOOR = 1e-300
    DIVERGENCE_RADIUS = _env_float('MPE_DIVERGENCE_RADIUS', 1e8)
    DIVERGENCE_REL_TOL = _env_float('MPE_DIVERGENCE_REL_TOL', 1e-6)

    # Distribution validation
    MASS_TOL = _env_float('MPE_MASS_TOL', 1e-9)
    TABULATED_MASS_TOL = _env_float('MPE_TABULATED_MASS_TOL', 1e-6)
    POSTERIOR_TOL = 1e-12

    # Map certification
    PROBE_POINTS = _env_int('MPE_PROBE_POINTS', 10000)
    UNIT_TOL = _env_float('MPE_UNIT_TOL', 1e-6)
    BIJECTIVITY_TOL = _env_float('MPE_BIJECTIVITY_TOL', 1e-9)
    FD_STEP = _env_float('MPE_FD_STEP', 1e-6)
    TABULATED_KNOTS = _env_int('MPE_TABULATED_KNOTS', 4096)

    # Vector quadrature
    VECTOR_DENSE_MAX_DIM = _env_int('MPE_VECTOR_DENSE_MAX_DIM', 4)
    VECTOR_MESH_BUDGET = _env_int('MPE_VECTOR_MESH_BUDGET', 2_000_000)

    # Sampling and estimation
    MC_SAMPLES = _env_int('MPE_MC_SAMPLES', 100_000)
    KNN_K = _env_int('MPE_KNN_K', 3)
    BOOTSTRAP_RESAMPLES = _env_int('MPE_BOOTSTRAP_RESAMPLES', 200)
    MIN_SPLIT_EVENTS = _env_int('MPE_MIN_SPLIT_EVENTS', 100)

    # Processes
    POISSON_MAX_MEAN = _env_float('MPE_POISSON_MAX_MEAN', 1e5)
    POISSON_TAIL = _env_float('MPE_POISSON_TAIL', 1e-15)
    IDENTITY_TOL = _env_float('MPE_IDENTITY_TOL', 1e-12)

    # Goodness defaults for CLI invocations
    DEFAULT_EPSILON = _env_float('MPE_DEFAULT_EPSILON', 1.0)
    DEFAULT_DELTA = _env_float('MPE_DEFAULT_DELTA', 1.0)

    # Application Settings
    MAX_WORKERS = _env_int('MPE_MAX_WORKERS', 4)
    OUTPUT_DIGITS = 9
    LOG_LEVEL = os.getenv('MPE_LOG_LEVEL', 'INFO')
    SECRET_KEY = os.getenv('SECRET_KEY', 'mixed-pair-entropy-dev-key')

    def __init__(self, **overrides):
        for name, value in overrides.items():
            if not name.isupper() or not hasattr(type(self), name):
                raise TypeError(f"Unknown configuration setting: {name}")
            setattr(self, name, value)
