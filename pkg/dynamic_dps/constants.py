"""
Centralized constants for the DynamicDPS reconstruction system.
All magic numbers and configuration defaults are defined here.
"""

from enum import Enum, IntEnum
from typing import Final, Tuple, Dict


# Logging Constants
class LogLevel(str, Enum):
    """Enumeration of logging levels."""

    DEBUG = "DEBUG"
    INFO = "INFO"
    WARNING = "WARNING"
    ERROR = "ERROR"
    CRITICAL = "CRITICAL"


class LogFormat(str, Enum):
    """Enumeration of log output formats."""

    STRUCTURED = "structured"
    JSON = "json"
    PLAIN = "plain"


DEFAULT_LOG_LEVEL: Final[str] = LogLevel.INFO
DEFAULT_LOG_FORMAT: Final[str] = LogFormat.STRUCTURED
DEFAULT_LOG_MAX_FILE_SIZE: Final[int] = 10_000_000  # 10MB
DEFAULT_LOG_BACKUP_COUNT: Final[int] = 5
STRUCTURED_LOG_FORMAT: Final[str] = "%(asctime)s - %(name)s %(levelname)s %(message)s"
PLAIN_LOG_FORMAT: Final[str] = "%(levelname)s %(message)s"
LOG_DATE_FORMAT: Final[str] = "%Y-%m-%d %H:%M:%S"


# Pipeline enums
class SolveMode(str, Enum):
    """Reverse-process variants run by the solver."""

    DYNAMIC = "dynamic"
    VANILLA = "vanilla"
    UNCONDITIONAL = "unconditional"


class Partition(str, Enum):
    """Test partitions: matched degradation and the two shifted presets."""

    IND = "ind"
    OOD_CONTRAST = "ood-contrast"
    OOD_RES = "ood-res"


class ConditionalKind(str, Enum):
    """Phase I conditional models."""

    NAIVE = "naive"
    RIDGE = "ridge"


class TissueClass(IntEnum):
    """Phantom label ids."""

    BACKGROUND = 0
    WHITE = 1
    GRAY = 2
    DEEP = 3


class ExitCode(IntEnum):
    """Process exit codes of the command-line driver."""

    SUCCESS = 0
    RUNTIME_ERROR = 1
    CONFIG_ERROR = 2
    FINGERPRINT_MISMATCH = 3
    MISSING_ARTIFACT = 4


# Degradation Constants
DEFAULT_GAMMA: Final[float] = 0.7
DEFAULT_BLUR_SIGMA: Final[float] = 1.0
DEFAULT_BLUR_RADIUS: Final[int] = 3
DEFAULT_FACTOR_K: Final[int] = 2
DEFAULT_NOISE_SIGMA: Final[float] = 0.02
DEFAULT_GAMMA_FLOOR: Final[float] = 1e-6
MAX_GAMMA_FLOOR: Final[float] = 0.01
OOD_CONTRAST_GAMMA: Final[float] = 0.4
OOD_RES_FACTOR_K: Final[int] = 3


# Pseudo-inverse (conjugate gradient) Constants
DEFAULT_PINV_EPS: Final[float] = 1e-4
DEFAULT_PINV_TOL: Final[float] = 1e-8
DEFAULT_PINV_MAX_ITER: Final[int] = 500


# Diffusion Constants
DEFAULT_NUM_STEPS: Final[int] = 1000
DEFAULT_BETA_MIN: Final[float] = 1e-4
DEFAULT_BETA_MAX: Final[float] = 0.02


# Consistency loss Constants
DEFAULT_LAMBDA1: Final[float] = 0.5
DEFAULT_LAMBDA2: Final[float] = 0.1
DEFAULT_SSIM_WINDOW: Final[int] = 11
DEFAULT_SSIM_K1: Final[float] = 0.01
DEFAULT_SSIM_K2: Final[float] = 0.03
DEFAULT_PEAK: Final[float] = 1.0
SOBEL_EPS: Final[float] = 1e-8
SOBEL_SMOOTH: Final[Tuple[float, ...]] = (1.0, 2.0, 1.0)
SOBEL_DIFF: Final[Tuple[float, ...]] = (-1.0, 0.0, 1.0)


# Line search Constants
DEFAULT_WOLFE_C1: Final[float] = 1e-4
DEFAULT_WOLFE_C2: Final[float] = 0.9
DEFAULT_ALPHA_INIT: Final[float] = 1.0
DEFAULT_ALPHA_MAX: Final[float] = 100.0
DEFAULT_WOLFE_MAX_ITERS: Final[int] = 25
INTERPOLATION_MARGIN: Final[float] = 0.1  # keep trial steps in the middle 80%
FD_STEP_SCALE: Final[float] = 1e-4


# DCATS Constants
DEFAULT_TAU: Final[float] = 0.4
DEFAULT_GRID_DIVISOR: Final[int] = 40
DEFAULT_N_DRAWS: Final[int] = 4
DEFAULT_BANK_SEED: Final[int] = 7


# Conditional model Constants
DEFAULT_CONDITIONAL: Final[str] = ConditionalKind.RIDGE
DEFAULT_PATCH_IN: Final[int] = 5
DEFAULT_RIDGE_LAMBDA: Final[float] = 1e-3
RIDGE_CLAMP_HI: Final[float] = 1.2


# Solver Constants
DEFAULT_SOLVE_MODE: Final[str] = SolveMode.DYNAMIC
DEFAULT_RHO: Final[float] = 0.5
DEFAULT_SOLVE_SEED: Final[int] = 0


# Phantom Constants
DEFAULT_IMAGE_SIZE: Final[int] = 72
DEFAULT_N_CLASSES: Final[int] = 4
DEFAULT_N_TEMPLATES: Final[int] = 8
DEFAULT_SIGMA_P: Final[float] = 0.05
DEFAULT_PHANTOM_SEED: Final[int] = 2025
MIN_BAND_SEPARATION: Final[float] = 0.08
CLASS_BANDS: Final[Dict[int, Tuple[float, float]]] = {
    TissueClass.BACKGROUND: (0.00, 0.12),
    TissueClass.WHITE: (0.70, 0.94),
    TissueClass.GRAY: (0.44, 0.62),
    TissueClass.DEEP: (0.20, 0.36),
}


# Dataset Constants
DEFAULT_N_TEST: Final[int] = 50
DEFAULT_N_REFS: Final[int] = 16
DEFAULT_TEST_SEED: Final[int] = 0
DEFAULT_REF_SEED: Final[int] = 100_000


# Metrics Constants
DEFAULT_DILATION_RADIUS: Final[int] = 2
PSNR_INFINITY: Final[float] = float("inf")


# Persistence Constants
RAW_MAGIC: Final[bytes] = b"DDPSRAW1"
RIDGE_MAGIC: Final[bytes] = b"DDPSRIDG"
PGM_MAXVAL: Final[int] = 65535
FINGERPRINT_LENGTH: Final[int] = 16
CONFIG_SECTION: Final[str] = "run"
ENV_PREFIX: Final[str] = "DYNAMIC_DPS_"
