"""
Configuration management for the DynamicDPS reconstruction system.

This module provides validated dataclasses for every parameter group of the
pipeline (degradation, diffusion schedule, phantom prior, consistency loss,
line search, time selection, conditional model, solver, data, metrics,
paths, logging) and a builder for fluent setup from flat ``key = value``
files, dictionaries and environment variables. It also defines the stable
configuration fingerprints that artifacts carry on disk.
"""

from dataclasses import dataclass, field, asdict, replace
from enum import Enum
from typing import Optional, Dict, Any, Union, Callable, Tuple, Mapping
from pathlib import Path
import configparser
import hashlib
import math
import os

from pathvalidate import is_valid_filepath

from dynamic_dps.constants import (
    DEFAULT_LOG_LEVEL,
    DEFAULT_LOG_FORMAT,
    DEFAULT_LOG_MAX_FILE_SIZE,
    DEFAULT_LOG_BACKUP_COUNT,
    DEFAULT_GAMMA,
    DEFAULT_BLUR_SIGMA,
    DEFAULT_BLUR_RADIUS,
    DEFAULT_FACTOR_K,
    DEFAULT_NOISE_SIGMA,
    DEFAULT_GAMMA_FLOOR,
    MAX_GAMMA_FLOOR,
    OOD_CONTRAST_GAMMA,
    OOD_RES_FACTOR_K,
    DEFAULT_PINV_EPS,
    DEFAULT_PINV_TOL,
    DEFAULT_PINV_MAX_ITER,
    DEFAULT_NUM_STEPS,
    DEFAULT_BETA_MIN,
    DEFAULT_BETA_MAX,
    DEFAULT_LAMBDA1,
    DEFAULT_LAMBDA2,
    DEFAULT_SSIM_WINDOW,
    DEFAULT_SSIM_K1,
    DEFAULT_SSIM_K2,
    DEFAULT_PEAK,
    DEFAULT_WOLFE_C1,
    DEFAULT_WOLFE_C2,
    DEFAULT_ALPHA_INIT,
    DEFAULT_ALPHA_MAX,
    DEFAULT_WOLFE_MAX_ITERS,
    DEFAULT_TAU,
    DEFAULT_GRID_DIVISOR,
    DEFAULT_N_DRAWS,
    DEFAULT_BANK_SEED,
    DEFAULT_CONDITIONAL,
    DEFAULT_PATCH_IN,
    DEFAULT_RIDGE_LAMBDA,
    DEFAULT_SOLVE_MODE,
    DEFAULT_RHO,
    DEFAULT_SOLVE_SEED,
    DEFAULT_IMAGE_SIZE,
    DEFAULT_N_CLASSES,
    DEFAULT_N_TEMPLATES,
    DEFAULT_SIGMA_P,
    DEFAULT_PHANTOM_SEED,
    MIN_BAND_SEPARATION,
    CLASS_BANDS,
    DEFAULT_N_TEST,
    DEFAULT_N_REFS,
    DEFAULT_TEST_SEED,
    DEFAULT_REF_SEED,
    DEFAULT_DILATION_RADIUS,
    FINGERPRINT_LENGTH,
    CONFIG_SECTION,
    ENV_PREFIX,
    LogLevel,
    LogFormat,
    SolveMode,
    Partition,
    ConditionalKind,
)
from dynamic_dps.exceptions import ConfigurationError


def _canonical_value(value: Any) -> str:
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, Path):
        return value.as_posix()
    if isinstance(value, dict):
        return ";".join(f"{k}:{_canonical_value(v)}" for k, v in sorted(value.items()))
    if isinstance(value, (tuple, list)):
        return ",".join(_canonical_value(v) for v in value)
    if value is None:
        return "none"
    return str(value)


def canonical_fingerprint(mapping: Mapping[str, Any]) -> str:
    """
    Stable hash of a flat mapping.

    Keys are sorted, values rendered canonically (floats via repr), joined
    as ``key=value`` lines and hashed with SHA-256.
    """
    lines = [f"{key}={_canonical_value(mapping[key])}" for key in sorted(mapping)]
    digest = hashlib.sha256("\n".join(lines).encode("utf-8")).hexdigest()
    return digest[:FINGERPRINT_LENGTH]


def _require(condition: bool, message: str, key: str, value: Any, **extra: Any) -> None:
    if not condition:
        raise ConfigurationError(message, config_key=key, config_value=value, **extra)


@dataclass
class DegradationConfig:
    """
    Parameters of the forward operator y = Blur(DS_k(Gamma(x))) + n.

    Attributes:
        gamma: Contrast exponent
        blur_sigma: Gaussian kernel std in pixels (0 disables blur)
        blur_radius: Kernel half-width in pixels
        factor_k: Block-mean downsampling factor
        noise_sigma: Std of additive Gaussian measurement noise
        gamma_floor: Clamp applied before exponentiation
    """

    gamma: float = DEFAULT_GAMMA
    blur_sigma: float = DEFAULT_BLUR_SIGMA
    blur_radius: int = DEFAULT_BLUR_RADIUS
    factor_k: int = DEFAULT_FACTOR_K
    noise_sigma: float = DEFAULT_NOISE_SIGMA
    gamma_floor: float = DEFAULT_GAMMA_FLOOR

    def validate(self) -> None:
        """
        Validate degradation parameters.

        Raises:
            ConfigurationError: If a parameter is out of range
        """
        _require(self.gamma > 0, f"gamma must be positive, got {self.gamma}", "gamma", self.gamma)
        _require(
            self.blur_sigma >= 0,
            f"blur_sigma must be non-negative, got {self.blur_sigma}",
            "blur_sigma",
            self.blur_sigma,
        )
        _require(
            self.blur_radius >= 0,
            f"blur_radius must be non-negative, got {self.blur_radius}",
            "blur_radius",
            self.blur_radius,
        )
        if self.blur_sigma > 0:
            required = math.ceil(3 * self.blur_sigma)
            _require(
                self.blur_radius >= required,
                f"blur_radius must be >= ceil(3 * blur_sigma) = {required}, got {self.blur_radius}",
                "blur_radius",
                self.blur_radius,
                blur_sigma=self.blur_sigma,
            )
        _require(
            self.factor_k >= 1,
            f"factor_k must be a positive integer, got {self.factor_k}",
            "factor_k",
            self.factor_k,
        )
        _require(
            self.noise_sigma >= 0,
            f"noise_sigma must be non-negative, got {self.noise_sigma}",
            "noise_sigma",
            self.noise_sigma,
        )
        _require(
            0 < self.gamma_floor <= MAX_GAMMA_FLOOR,
            f"gamma_floor must be in (0, {MAX_GAMMA_FLOOR}], got {self.gamma_floor}",
            "gamma_floor",
            self.gamma_floor,
        )

    def fingerprint(self) -> str:
        return canonical_fingerprint(asdict(self))


@dataclass
class ScheduleConfig:
    """
    Linear variance-preserving noise schedule.

    Attributes:
        num_steps: Total number of diffusion steps T
        beta_min: First beta of the linear ramp
        beta_max: Last beta of the linear ramp
    """

    num_steps: int = DEFAULT_NUM_STEPS
    beta_min: float = DEFAULT_BETA_MIN
    beta_max: float = DEFAULT_BETA_MAX

    def validate(self) -> None:
        _require(
            self.num_steps >= 2,
            f"num_steps must be >= 2, got {self.num_steps}",
            "num_steps",
            self.num_steps,
        )
        _require(
            0 < self.beta_min < self.beta_max < 1,
            f"need 0 < beta_min < beta_max < 1, got ({self.beta_min}, {self.beta_max})",
            "beta_min",
            self.beta_min,
            beta_max=self.beta_max,
        )


@dataclass
class PhantomSpec:
    """
    Synthetic phantom and prior parameters.

    Attributes:
        image_size: Side of the square phantoms in pixels
        n_classes: Number of tissue classes
        n_templates: Number of mixture components K
        sigma_p: Per-component isotropic std of the prior
        phantom_seed: Seed of the template geometry
        class_bands: Intensity interval of each class id
    """

    image_size: int = DEFAULT_IMAGE_SIZE
    n_classes: int = DEFAULT_N_CLASSES
    n_templates: int = DEFAULT_N_TEMPLATES
    sigma_p: float = DEFAULT_SIGMA_P
    phantom_seed: int = DEFAULT_PHANTOM_SEED
    class_bands: Dict[int, Tuple[float, float]] = field(
        default_factory=lambda: dict(CLASS_BANDS)
    )

    def validate(self) -> None:
        _require(
            self.image_size >= 8,
            f"image_size must be >= 8, got {self.image_size}",
            "image_size",
            self.image_size,
        )
        _require(
            self.n_classes == len(self.class_bands),
            f"n_classes ({self.n_classes}) must match the number of class bands ({len(self.class_bands)})",
            "n_classes",
            self.n_classes,
        )
        _require(
            self.n_templates >= 1,
            f"n_templates must be >= 1, got {self.n_templates}",
            "n_templates",
            self.n_templates,
        )
        _require(
            self.sigma_p > 0,
            f"sigma_p must be positive, got {self.sigma_p}",
            "sigma_p",
            self.sigma_p,
        )
        ordered = sorted(self.class_bands.values())
        for (lo, hi) in ordered:
            _require(lo < hi, f"empty class band ({lo}, {hi})", "class_bands", self.class_bands)
        for (_, hi_prev), (lo_next, _) in zip(ordered, ordered[1:]):
            _require(
                lo_next - hi_prev >= MIN_BAND_SEPARATION - 1e-12,
                f"class bands must be separated by >= {MIN_BAND_SEPARATION}",
                "class_bands",
                self.class_bands,
            )

    def band_center(self, class_id: int) -> float:
        lo, hi = self.class_bands[class_id]
        return 0.5 * (lo + hi)


@dataclass
class ConsistencyWeights:
    """
    Weights and SSIM constants of the composite data-consistency loss.

    Attributes:
        lambda1: Weight of the Sobel edge term
        lambda2: Weight of the SSIM term
        ssim_window: Odd side of the Gaussian SSIM window (std = window / 6)
        ssim_k1: SSIM luminance constant factor
        ssim_k2: SSIM contrast constant factor
        peak: Dynamic range of the intensities
    """

    lambda1: float = DEFAULT_LAMBDA1
    lambda2: float = DEFAULT_LAMBDA2
    ssim_window: int = DEFAULT_SSIM_WINDOW
    ssim_k1: float = DEFAULT_SSIM_K1
    ssim_k2: float = DEFAULT_SSIM_K2
    peak: float = DEFAULT_PEAK

    def validate(self) -> None:
        _require(self.lambda1 >= 0, f"lambda1 must be non-negative, got {self.lambda1}", "lambda1", self.lambda1)
        _require(self.lambda2 >= 0, f"lambda2 must be non-negative, got {self.lambda2}", "lambda2", self.lambda2)
        _require(
            self.ssim_window >= 3 and self.ssim_window % 2 == 1,
            f"ssim_window must be odd and >= 3, got {self.ssim_window}",
            "ssim_window",
            self.ssim_window,
        )
        _require(self.ssim_k1 > 0, f"ssim_k1 must be positive, got {self.ssim_k1}", "ssim_k1", self.ssim_k1)
        _require(self.ssim_k2 > 0, f"ssim_k2 must be positive, got {self.ssim_k2}", "ssim_k2", self.ssim_k2)
        _require(self.peak > 0, f"peak must be positive, got {self.peak}", "peak", self.peak)

    @property
    def c1(self) -> float:
        return (self.ssim_k1 * self.peak) ** 2

    @property
    def c2(self) -> float:
        return (self.ssim_k2 * self.peak) ** 2


@dataclass
class WolfeParams:
    """
    Strong Wolfe line-search parameters.

    Attributes:
        c1: Sufficient-decrease constant
        c2: Curvature constant, c1 < c2 < 1
        alpha_init: First trial step
        alpha_max: Largest admissible step
        max_iters: Budget of trial points (bracket and zoom combined)
    """

    c1: float = DEFAULT_WOLFE_C1
    c2: float = DEFAULT_WOLFE_C2
    alpha_init: float = DEFAULT_ALPHA_INIT
    alpha_max: float = DEFAULT_ALPHA_MAX
    max_iters: int = DEFAULT_WOLFE_MAX_ITERS

    def validate(self) -> None:
        _require(
            0 < self.c1 < self.c2 < 1,
            f"need 0 < c1 < c2 < 1, got c1={self.c1}, c2={self.c2}",
            "c1",
            self.c1,
            c2=self.c2,
        )
        _require(
            self.alpha_init > 0,
            f"alpha_init must be positive, got {self.alpha_init}",
            "alpha_init",
            self.alpha_init,
        )
        _require(
            self.alpha_max >= self.alpha_init,
            f"alpha_max must be >= alpha_init, got {self.alpha_max}",
            "alpha_max",
            self.alpha_max,
        )
        _require(
            self.max_iters >= 1,
            f"max_iters must be >= 1, got {self.max_iters}",
            "max_iters",
            self.max_iters,
        )


@dataclass
class DcatsParams:
    """
    Data-consistency-aware time selection parameters.

    Attributes:
        tau: Temperature applied to the conditional log-likelihood
        t_grid_stride: Stride of the bank time grid (None: T / 40)
        n_draws: Forward-noising draws per reference pair and time
        bank_seed: Seed of the bank draws
    """

    tau: float = DEFAULT_TAU
    t_grid_stride: Optional[int] = None
    n_draws: int = DEFAULT_N_DRAWS
    bank_seed: int = DEFAULT_BANK_SEED

    def validate(self) -> None:
        _require(0 < self.tau <= 1, f"tau must be in (0, 1], got {self.tau}", "tau", self.tau)
        _require(
            self.t_grid_stride is None or self.t_grid_stride >= 1,
            f"t_grid_stride must be >= 1, got {self.t_grid_stride}",
            "t_grid_stride",
            self.t_grid_stride,
        )
        _require(self.n_draws >= 1, f"n_draws must be >= 1, got {self.n_draws}", "n_draws", self.n_draws)

    def stride_for(self, num_steps: int) -> int:
        if self.t_grid_stride is not None:
            return self.t_grid_stride
        return max(1, num_steps // DEFAULT_GRID_DIVISOR)


@dataclass
class ConditionalConfig:
    """
    Phase I conditional model selection and ridge hyper-parameters.

    Attributes:
        conditional_model: "ridge" or "naive"
        patch_in: Odd side of the low-field input patch
        ridge_lambda: Ridge regularization, must be positive
        ridge_seed: Seed of optional patch subsampling
    """

    conditional_model: str = DEFAULT_CONDITIONAL
    patch_in: int = DEFAULT_PATCH_IN
    ridge_lambda: float = DEFAULT_RIDGE_LAMBDA
    ridge_seed: int = 0

    def validate(self) -> None:
        allowed = [kind.value for kind in ConditionalKind]
        _require(
            self.conditional_model in allowed,
            f"Invalid conditional model: {self.conditional_model}",
            "conditional_model",
            self.conditional_model,
            allowed_values=allowed,
        )
        _require(
            self.patch_in >= 1 and self.patch_in % 2 == 1,
            f"patch_in must be an odd positive integer, got {self.patch_in}",
            "patch_in",
            self.patch_in,
        )
        _require(
            self.ridge_lambda > 0,
            f"ridge_lambda must be positive, got {self.ridge_lambda}",
            "ridge_lambda",
            self.ridge_lambda,
        )


@dataclass
class SolveParams:
    """
    Parameters of one DynamicDPS or vanilla DPS run.

    Attributes:
        mode: dynamic, vanilla or unconditional
        rho: Fixed consistency step of the vanilla mode
        wolfe: Line-search parameters of the dynamic modes
        dcats: Time-selection parameters
        weights: Composite loss weights
        seed: Seed of all reverse-process noise
        t_start_override: Start time replacing the DCATS choice
    """

    mode: str = DEFAULT_SOLVE_MODE
    rho: float = DEFAULT_RHO
    wolfe: WolfeParams = field(default_factory=WolfeParams)
    dcats: DcatsParams = field(default_factory=DcatsParams)
    weights: ConsistencyWeights = field(default_factory=ConsistencyWeights)
    seed: int = DEFAULT_SOLVE_SEED
    t_start_override: Optional[int] = None

    def validate(self) -> None:
        allowed = [mode.value for mode in SolveMode]
        _require(
            self.mode in allowed,
            f"Invalid solve mode: {self.mode}",
            "mode",
            self.mode,
            allowed_values=allowed,
        )
        _require(self.rho > 0, f"rho must be positive, got {self.rho}", "rho", self.rho)
        _require(
            self.t_start_override is None or self.t_start_override >= 1,
            f"t_start_override must be >= 1, got {self.t_start_override}",
            "t_start_override",
            self.t_start_override,
        )
        self.wolfe.validate()
        self.dcats.validate()
        self.weights.validate()


@dataclass
class DataConfig:
    """
    Dataset sizes and seed ranges of the test and reference partitions.

    Attributes:
        n_test: Number of test samples per partition
        n_refs: Number of reference samples (bank and ridge training)
        test_seed: First truth seed of the test range
        ref_seed: First truth seed of the reference range
    """

    n_test: int = DEFAULT_N_TEST
    n_refs: int = DEFAULT_N_REFS
    test_seed: int = DEFAULT_TEST_SEED
    ref_seed: int = DEFAULT_REF_SEED

    def validate(self) -> None:
        _require(self.n_test >= 1, f"n_test must be >= 1, got {self.n_test}", "n_test", self.n_test)
        _require(self.n_refs >= 1, f"n_refs must be >= 1, got {self.n_refs}", "n_refs", self.n_refs)
        _require(
            self.test_seed >= 0 and self.ref_seed >= 0,
            "seeds must be non-negative",
            "test_seed",
            self.test_seed,
            ref_seed=self.ref_seed,
        )
        test_range = range(self.test_seed, self.test_seed + self.n_test)
        ref_range = range(self.ref_seed, self.ref_seed + self.n_refs)
        overlap = max(test_range.start, ref_range.start) < min(test_range.stop, ref_range.stop)
        _require(
            not overlap,
            "test and reference seed ranges must be disjoint",
            "ref_seed",
            self.ref_seed,
            test_seed=self.test_seed,
        )


@dataclass
class MetricsConfig:
    """
    Attributes:
        pinv_eps: Tikhonov regularization of the pseudo-inverse
        pinv_tol: Relative residual tolerance of the Krylov solve
        pinv_max_iter: Iteration cap of the Krylov solve
        dilation_radius: Radius of the RVE mask dilation
    """

    pinv_eps: float = DEFAULT_PINV_EPS
    pinv_tol: float = DEFAULT_PINV_TOL
    pinv_max_iter: int = DEFAULT_PINV_MAX_ITER
    dilation_radius: int = DEFAULT_DILATION_RADIUS

    def validate(self) -> None:
        _require(self.pinv_eps > 0, f"pinv_eps must be positive, got {self.pinv_eps}", "pinv_eps", self.pinv_eps)
        _require(self.pinv_tol > 0, f"pinv_tol must be positive, got {self.pinv_tol}", "pinv_tol", self.pinv_tol)
        _require(
            self.pinv_max_iter >= 1,
            f"pinv_max_iter must be >= 1, got {self.pinv_max_iter}",
            "pinv_max_iter",
            self.pinv_max_iter,
        )
        _require(
            self.dilation_radius >= 0,
            f"dilation_radius must be non-negative, got {self.dilation_radius}",
            "dilation_radius",
            self.dilation_radius,
        )


@dataclass
class PathsConfig:
    """
    Attributes:
        data_dir: Root of datasets, templates, banks and models
        output_dir: Root of solve outputs and evaluation reports
        bank_file: Explicit bank table (default: data_dir/banks/bank_<partition>.txt)
    """

    data_dir: Path = Path("data")
    output_dir: Path = Path("outputs")
    bank_file: Optional[Path] = None

    def validate(self) -> None:
        for key in ("data_dir", "output_dir", "bank_file"):
            value = getattr(self, key)
            if value is None:
                continue
            _require(
                is_valid_filepath(str(value), platform="auto"),
                f"Invalid path for {key}: {value}",
                key,
                str(value),
            )

    def check_exists(self) -> None:
        """
        Check that every configured path can be reached when a command starts.

        data_dir and output_dir are created on demand, so only their parents
        must exist; the same holds for an explicit bank_file, which
        bank-build writes.

        Raises:
            ConfigurationError: If a parent directory is missing
        """
        for key in ("data_dir", "output_dir", "bank_file"):
            value = getattr(self, key)
            if value is None:
                continue
            parent = Path(value).parent
            _require(
                parent.is_dir(),
                f"Directory for {key} does not exist: {parent}",
                key,
                str(value),
            )


@dataclass
class LoggingConfig:
    """
    Configuration for the logging system.

    Attributes:
        level: Log level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        format: Log output format (structured, json, plain)
        output_file: Optional path to log file
        max_file_size: Maximum log file size in bytes before rotation
        backup_count: Number of backup log files to keep
    """

    level: str = DEFAULT_LOG_LEVEL
    format: str = DEFAULT_LOG_FORMAT
    output_file: Optional[Path] = None
    max_file_size: int = DEFAULT_LOG_MAX_FILE_SIZE
    backup_count: int = DEFAULT_LOG_BACKUP_COUNT

    def validate(self) -> None:
        """
        Validate logging configuration values.

        Raises:
            ConfigurationError: If configuration values are invalid
        """
        valid_levels = [level.value for level in LogLevel]
        _require(
            self.level in valid_levels,
            f"Invalid log level: {self.level}",
            "level",
            self.level,
            allowed_values=valid_levels,
        )

        valid_formats = [fmt.value for fmt in LogFormat]
        _require(
            self.format in valid_formats,
            f"Invalid log format: {self.format}",
            "format",
            self.format,
            allowed_values=valid_formats,
        )

        _require(
            self.max_file_size > 0,
            f"max_file_size must be positive, got {self.max_file_size}",
            "max_file_size",
            self.max_file_size,
        )
        _require(
            self.backup_count >= 0,
            f"backup_count must be non-negative, got {self.backup_count}",
            "backup_count",
            self.backup_count,
        )


def _parse_int(raw: Any) -> int:
    if isinstance(raw, bool):
        raise ValueError(f"expected an integer, got {raw!r}")
    if isinstance(raw, int):
        return raw
    if isinstance(raw, float):
        if not raw.is_integer():
            raise ValueError(f"expected an integer, got {raw!r}")
        return int(raw)
    return int(str(raw).strip())


def _parse_float(raw: Any) -> float:
    return float(str(raw).strip()) if isinstance(raw, str) else float(raw)


def _parse_str(raw: Any) -> str:
    if isinstance(raw, Enum):
        return str(raw.value)
    return str(raw).strip()


def _parse_path(raw: Any) -> Path:
    return Path(str(raw).strip())


def _optional(parser: Callable[[Any], Any]) -> Callable[[Any], Any]:
    def parse(raw: Any) -> Any:
        if raw is None or (isinstance(raw, str) and raw.strip().lower() in ("", "none")):
            return None
        return parser(raw)

    return parse


# flat key -> (RunConfig section, field name, parser)
KEY_MAP: Dict[str, Tuple[str, str, Callable[[Any], Any]]] = {
    "gamma": ("degradation", "gamma", _parse_float),
    "blur_sigma": ("degradation", "blur_sigma", _parse_float),
    "blur_radius": ("degradation", "blur_radius", _parse_int),
    "factor_k": ("degradation", "factor_k", _parse_int),
    "noise_sigma": ("degradation", "noise_sigma", _parse_float),
    "gamma_floor": ("degradation", "gamma_floor", _parse_float),
    "num_steps": ("schedule", "num_steps", _parse_int),
    "beta_min": ("schedule", "beta_min", _parse_float),
    "beta_max": ("schedule", "beta_max", _parse_float),
    "image_size": ("phantom", "image_size", _parse_int),
    "n_classes": ("phantom", "n_classes", _parse_int),
    "n_templates": ("phantom", "n_templates", _parse_int),
    "sigma_p": ("phantom", "sigma_p", _parse_float),
    "phantom_seed": ("phantom", "phantom_seed", _parse_int),
    "lambda1": ("weights", "lambda1", _parse_float),
    "lambda2": ("weights", "lambda2", _parse_float),
    "ssim_window": ("weights", "ssim_window", _parse_int),
    "ssim_k1": ("weights", "ssim_k1", _parse_float),
    "ssim_k2": ("weights", "ssim_k2", _parse_float),
    "peak": ("weights", "peak", _parse_float),
    "c1": ("wolfe", "c1", _parse_float),
    "c2": ("wolfe", "c2", _parse_float),
    "alpha_init": ("wolfe", "alpha_init", _parse_float),
    "alpha_max": ("wolfe", "alpha_max", _parse_float),
    "max_iters": ("wolfe", "max_iters", _parse_int),
    "tau": ("dcats", "tau", _parse_float),
    "t_grid_stride": ("dcats", "t_grid_stride", _optional(_parse_int)),
    "n_draws": ("dcats", "n_draws", _parse_int),
    "bank_seed": ("dcats", "bank_seed", _parse_int),
    "conditional_model": ("conditional", "conditional_model", _parse_str),
    "patch_in": ("conditional", "patch_in", _parse_int),
    "ridge_lambda": ("conditional", "ridge_lambda", _parse_float),
    "ridge_seed": ("conditional", "ridge_seed", _parse_int),
    "mode": ("solve", "mode", _parse_str),
    "rho": ("solve", "rho", _parse_float),
    "solve_seed": ("solve", "seed", _parse_int),
    "t_start_override": ("solve", "t_start_override", _optional(_parse_int)),
    "n_test": ("data", "n_test", _parse_int),
    "n_refs": ("data", "n_refs", _parse_int),
    "test_seed": ("data", "test_seed", _parse_int),
    "ref_seed": ("data", "ref_seed", _parse_int),
    "pinv_eps": ("metrics", "pinv_eps", _parse_float),
    "pinv_tol": ("metrics", "pinv_tol", _parse_float),
    "pinv_max_iter": ("metrics", "pinv_max_iter", _parse_int),
    "dilation_radius": ("metrics", "dilation_radius", _parse_int),
    "data_dir": ("paths", "data_dir", _parse_path),
    "output_dir": ("paths", "output_dir", _parse_path),
    "bank_file": ("paths", "bank_file", _optional(_parse_path)),
    "log_level": ("logging", "level", _parse_str),
    "log_format": ("logging", "format", _parse_str),
    "log_file": ("logging", "output_file", _optional(_parse_path)),
    "log_max_file_size": ("logging", "max_file_size", _parse_int),
    "log_backup_count": ("logging", "backup_count", _parse_int),
}

ENV_KEYS: Tuple[str, ...] = ("log_level", "log_format", "log_file")


@dataclass
class RunConfig:
    """
    Main configuration container for one pipeline run.

    Aggregates every parameter section and validates cross-section
    constraints (phantom size divisible by every degradation factor,
    start override below T).
    """

    degradation: DegradationConfig = field(default_factory=DegradationConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    phantom: PhantomSpec = field(default_factory=PhantomSpec)
    weights: ConsistencyWeights = field(default_factory=ConsistencyWeights)
    wolfe: WolfeParams = field(default_factory=WolfeParams)
    dcats: DcatsParams = field(default_factory=DcatsParams)
    conditional: ConditionalConfig = field(default_factory=ConditionalConfig)
    solve: SolveParams = field(default_factory=SolveParams)
    data: DataConfig = field(default_factory=DataConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)
    logging: LoggingConfig = field(default_factory=LoggingConfig)

    def __post_init__(self) -> None:
        # the solver sees the same wolfe/dcats/weights instances as the run
        self.solve.wolfe = self.wolfe
        self.solve.dcats = self.dcats
        self.solve.weights = self.weights

    def validate(self) -> None:
        """
        Validate the entire configuration.

        Raises:
            ConfigurationError: If any configuration value is invalid
        """
        self.degradation.validate()
        self.schedule.validate()
        self.phantom.validate()
        self.conditional.validate()
        self.solve.validate()
        self.data.validate()
        self.metrics.validate()
        self.paths.validate()
        self.logging.validate()

        size = self.phantom.image_size
        for factor in (self.degradation.factor_k, OOD_RES_FACTOR_K):
            _require(
                size % factor == 0,
                f"image_size {size} must be divisible by factor {factor}",
                "image_size",
                size,
                factor=factor,
            )
        override = self.solve.t_start_override
        _require(
            override is None or override < self.schedule.num_steps,
            f"t_start_override must be < num_steps ({self.schedule.num_steps})",
            "t_start_override",
            override,
        )

    def degradation_for(self, partition: Union[str, Partition]) -> DegradationConfig:
        """Degradation of a partition: the configured one or an OOD preset."""
        partition = Partition(partition)
        if partition is Partition.OOD_CONTRAST:
            return replace(self.degradation, gamma=OOD_CONTRAST_GAMMA)
        if partition is Partition.OOD_RES:
            return replace(self.degradation, factor_k=OOD_RES_FACTOR_K)
        return replace(self.degradation)

    def to_flat_dict(self) -> Dict[str, Any]:
        flat: Dict[str, Any] = {}
        for key, (section, name, _) in KEY_MAP.items():
            flat[key] = getattr(getattr(self, section), name)
        return flat

    def to_text(self) -> str:
        """Render as a flat key = value file accepted by from_file."""
        lines = []
        for key, value in self.to_flat_dict().items():
            if value is None:
                continue
            lines.append(f"{key} = {_canonical_value(value)}")
        return "\n".join(lines) + "\n"

    def fingerprint(self) -> str:
        return canonical_fingerprint(self.to_flat_dict())

    def _phantom_items(self) -> Dict[str, Any]:
        items = {f"phantom.{k}": v for k, v in asdict(self.phantom).items()}
        return items

    def dataset_fingerprint(self, partition: Union[str, Partition]) -> str:
        items = {f"degradation.{k}": v for k, v in asdict(self.degradation_for(partition)).items()}
        items.update(self._phantom_items())
        items.update({f"data.{k}": v for k, v in asdict(self.data).items()})
        return canonical_fingerprint(items)

    def conditional_fingerprint(self) -> str:
        items = {f"degradation.{k}": v for k, v in asdict(self.degradation_for(Partition.IND)).items()}
        items.update(self._phantom_items())
        items.update({f"conditional.{k}": v for k, v in asdict(self.conditional).items()})
        return canonical_fingerprint(items)


class RunConfigBuilder:
    """
    Builder class for fluent configuration setup.

    Values are collected under their flat keys and converted when
    ``build`` is called, so files, dictionaries, environment variables and
    explicit setters can be layered in any order.

    Example:
        config = (RunConfigBuilder()
                 .from_file("run.cfg")
                 .with_log_level("DEBUG")
                 .build())
    """

    def __init__(self):
        """Initialize the configuration builder with default values."""
        self._values: Dict[str, Any] = {}

    def with_option(self, key: str, value: Any) -> "RunConfigBuilder":
        """Set one flat configuration key."""
        if key not in KEY_MAP:
            raise ConfigurationError(
                f"Unknown configuration key: {key}",
                context={"config_key": key, "config_value": value},
            )
        self._values[key] = value
        return self

    # Logging configuration methods
    def with_log_level(self, level: str) -> "RunConfigBuilder":
        """Set the log level."""
        return self.with_option("log_level", level)

    def with_log_format(self, format: str) -> "RunConfigBuilder":
        """Set the log format."""
        return self.with_option("log_format", format)

    def with_log_file(self, output_file: Union[str, Path]) -> "RunConfigBuilder":
        """Set the log output file."""
        return self.with_option("log_file", output_file)

    # Path configuration methods
    def with_data_dir(self, data_dir: Union[str, Path]) -> "RunConfigBuilder":
        """Set the dataset root."""
        return self.with_option("data_dir", data_dir)

    def with_output_dir(self, output_dir: Union[str, Path]) -> "RunConfigBuilder":
        """Set the output root."""
        return self.with_option("output_dir", output_dir)

    def with_mode(self, mode: Union[str, SolveMode]) -> "RunConfigBuilder":
        """Set the solve mode."""
        return self.with_option("mode", mode)

    # Configuration loading methods
    def from_dict(self, config_dict: Mapping[str, Any]) -> "RunConfigBuilder":
        """
        Load configuration from a flat dictionary.

        Args:
            config_dict: Mapping of flat keys to values

        Returns:
            Self for method chaining
        """
        for key, value in config_dict.items():
            self.with_option(key, value)
        return self

    def from_file(self, file_path: Union[str, Path]) -> "RunConfigBuilder":
        """
        Load configuration from a flat ``key = value`` file with '#' comments.

        Args:
            file_path: Path to the configuration file

        Returns:
            Self for method chaining

        Raises:
            ConfigurationError: If file cannot be read or parsed
        """
        path = Path(file_path)
        parser = configparser.ConfigParser(
            inline_comment_prefixes=("#",), interpolation=None, strict=True
        )
        parser.optionxform = str
        try:
            text = path.read_text(encoding="utf-8")
            parser.read_string(f"[{CONFIG_SECTION}]\n{text}", source=str(path))
        except FileNotFoundError:
            raise ConfigurationError(
                f"Configuration file not found: {file_path}",
                context={"file_path": str(file_path)},
            )
        except configparser.Error as e:
            raise ConfigurationError(
                f"Invalid configuration file: {file_path}",
                context={"file_path": str(file_path), "error": str(e)},
            )
        return self.from_dict(dict(parser.items(CONFIG_SECTION)))

    def from_env(self, prefix: str = ENV_PREFIX) -> "RunConfigBuilder":
        """
        Load logging configuration from environment variables.

        Only logging keys are read (e.g. DYNAMIC_DPS_LOG_LEVEL), so that
        numerical results depend on the configuration file alone.

        Args:
            prefix: Prefix for environment variables

        Returns:
            Self for method chaining
        """
        for key in ENV_KEYS:
            env_name = f"{prefix}{key.upper()}"
            if env_name in os.environ:
                self.with_option(key, os.environ[env_name])
        return self

    def build(self, check_paths: bool = False) -> RunConfig:
        """
        Build and validate the configuration.

        Args:
            check_paths: Also require the configured paths to be reachable

        Returns:
            A validated RunConfig object

        Raises:
            ConfigurationError: If configuration is invalid
        """
        config = RunConfig()
        for key, raw in self._values.items():
            section, name, parse = KEY_MAP[key]
            try:
                value = parse(raw)
            except (TypeError, ValueError) as e:
                raise ConfigurationError(
                    f"Invalid value for {key}: {raw!r}",
                    context={"config_key": key, "config_value": raw, "error": str(e)},
                )
            setattr(getattr(config, section), name, value)

        config.validate()
        if check_paths:
            config.paths.check_exists()

        return config
