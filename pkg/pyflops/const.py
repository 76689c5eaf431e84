import logging
import platform
from typing import Final

import numpy as np
import scipy

LOG: Final = logging.getLogger(__package__)
PYFLOPS_VERSION: Final = "2025.3.0"
# TODO: Find a way to keep previous line in sync with pyproject.toml automatically

TOOL_STRING: Final = f"pyflops/{PYFLOPS_VERSION} numpy/{np.__version__} scipy/{scipy.__version__} Python/{platform.python_version()}"
PLATFORM_STRING: Final = platform.platform()

# Schedule constants
SCHEDULE_KINDS: Final = ("vp-linear", "vp-cosine", "generic-quadrature")
DEFAULT_SCHEDULE_KIND: Final = "vp-linear"
DEFAULT_BETA_MIN: Final = 0.1
DEFAULT_BETA_MAX: Final = 20.0
DEFAULT_HORIZON: Final = 1.0
DEFAULT_COSINE_S: Final = 0.008
DEFAULT_THETA_MAX: Final = 1.55
DEFAULT_QUADRATURE_PANELS: Final = 4096
DEFAULT_DISCRETE_STEPS: Final = 1000
INVERSE_MODES: Final = ("continuous", "discrete")
BISECTION_XTOL: Final = 1e-14
BISECTION_RTOL: Final = 1e-15
BISECTION_MAXITER: Final = 200

# Flow time constants
# Fields are never evaluated closer to t=1 than this.
EVAL_MARGIN: Final = 1e-6
TIE_ATOL: Final = 1e-15

# Target constants
TARGET_KINDS: Final = ("dirac", "gaussian", "gaussian-mixture")
WEIGHT_TOL: Final = 1e-12
DEFAULT_DIMENSION: Final = 2

# Sampler constants
SAMPLER_IDS: Final = (
    "ddim",
    "euler-fm",
    "heun-fm",
    "flops",
    "aflops",
    "a-euler",
    "rk4-oracle",
)
DEFAULT_SAMPLERS: Final = ("ddim", "euler-fm", "heun-fm", "flops", "aflops", "a-euler")
ADAPTIVE_SAMPLERS: Final = ("aflops", "a-euler")
COEFFICIENT_MODES: Final = ("taylor2", "exact-integral", "paper-eq12")
DEFAULT_COEFFICIENT_MODE: Final = "taylor2"
DEFAULT_LAMBDA_CLAMP: Final = (-1.0, 1.0)
DEFAULT_DELTA_EPSILON: Final = 1e-12
SMALL_Z: Final = 1e-8
SERIES_Z: Final = 1e-3
GRID_KINDS: Final = ("uniform", "quadratic")
MIN_ORACLE_STEPS: Final = 10_000

# Metric constants
DEFAULT_PROJECTIONS: Final = 128
DEFAULT_ENERGY_POINTS: Final = 2048

# Harness constants
DEFAULT_STEPS: Final = (5, 6, 7, 8, 9, 10)
DEFAULT_CHAINS: Final = 10_000
DEFAULT_SEEDS: Final = (0, 1, 2, 3, 4)
DEFAULT_ORDER_STEPS: Final = (10, 20, 40, 80, 160)
DEFAULT_ORDER_CHAINS: Final = 256
DEFAULT_OUTPUT_DIR: Final = "results"
DEFAULT_WORKERS: Final = 1
ENV_OUTPUT_DIR: Final = "PYFLOPS_OUTPUT_DIR"
ENV_WORKERS: Final = "PYFLOPS_WORKERS"
REFERENCE_STREAM: Final = 0x5EED
SWEEP_CSV: Final = "sweep.csv"
ORDER_CSV: Final = "order.csv"
MANIFEST_FILE: Final = "manifest.yaml"
MANIFEST_FLUSH_EVERY: Final = 128
ENDPOINTS_DIR: Final = "endpoints"
PLOTS_DIR: Final = "plots"
CSV_COLUMNS: Final = (
    "target",
    "sampler",
    "N",
    "nfe",
    "seed",
    "sliced_w2",
    "energy",
    "mean_err",
    "cov_err",
    "oracle_rmse",
    "wall_ms",
)
ORDER_COLUMNS: Final = ("target", "sampler", "steps", "rmse", "slope")
ORDER_SAMPLERS: Final = ("euler-fm", "heun-fm", "flops", "aflops", "a-euler", "rk4-oracle")

# Exit codes
EXIT_OK: Final = 0
EXIT_CELL_FAILURE: Final = 1
EXIT_CONFIG_ERROR: Final = 2
