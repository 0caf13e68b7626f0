"""
Unit tests for the constants module.
Tests that enums and defaults are defined with consistent values.
"""

import math

from dynamic_dps.constants import (
    # Enums
    LogLevel,
    LogFormat,
    SolveMode,
    Partition,
    ConditionalKind,
    TissueClass,
    ExitCode,
    # Logging constants
    DEFAULT_LOG_LEVEL,
    DEFAULT_LOG_FORMAT,
    DEFAULT_LOG_MAX_FILE_SIZE,
    DEFAULT_LOG_BACKUP_COUNT,
    # Degradation constants
    DEFAULT_GAMMA,
    DEFAULT_BLUR_SIGMA,
    DEFAULT_BLUR_RADIUS,
    DEFAULT_FACTOR_K,
    OOD_CONTRAST_GAMMA,
    OOD_RES_FACTOR_K,
    # Line search constants
    DEFAULT_WOLFE_C1,
    DEFAULT_WOLFE_C2,
    DEFAULT_ALPHA_INIT,
    DEFAULT_ALPHA_MAX,
    DEFAULT_WOLFE_MAX_ITERS,
    # Time selection and solver constants
    DEFAULT_TAU,
    DEFAULT_GRID_DIVISOR,
    DEFAULT_NUM_STEPS,
    DEFAULT_SOLVE_MODE,
    DEFAULT_CONDITIONAL,
    # Phantom and dataset constants
    DEFAULT_IMAGE_SIZE,
    DEFAULT_N_CLASSES,
    CLASS_BANDS,
    MIN_BAND_SEPARATION,
    DEFAULT_N_TEST,
    DEFAULT_N_REFS,
    DEFAULT_TEST_SEED,
    DEFAULT_REF_SEED,
    # Persistence constants
    RAW_MAGIC,
    RIDGE_MAGIC,
    PGM_MAXVAL,
    FINGERPRINT_LENGTH,
    ENV_PREFIX,
)


class TestEnums:
    """Test enum definitions."""

    def test_log_level_enum_values(self):
        assert [level.value for level in LogLevel] == ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]

    def test_log_format_enum_values(self):
        assert {fmt.value for fmt in LogFormat} == {"structured", "json", "plain"}

    def test_string_enums_compare_to_their_values(self):
        """Enum members can be compared directly to config file strings."""
        assert SolveMode.DYNAMIC == "dynamic"
        assert SolveMode("vanilla") is SolveMode.VANILLA
        assert Partition("ood-contrast") is Partition.OOD_CONTRAST
        assert ConditionalKind.RIDGE == "ridge"

    def test_partitions(self):
        assert [p.value for p in Partition] == ["ind", "ood-contrast", "ood-res"]

    def test_tissue_classes_are_label_ids(self):
        assert [int(c) for c in TissueClass] == [0, 1, 2, 3]
        assert len(TissueClass) == DEFAULT_N_CLASSES

    def test_exit_codes(self):
        assert ExitCode.SUCCESS == 0
        assert ExitCode.RUNTIME_ERROR == 1
        assert ExitCode.CONFIG_ERROR == 2
        assert ExitCode.FINGERPRINT_MISMATCH == 3
        assert ExitCode.MISSING_ARTIFACT == 4


class TestDefaults:
    """Defaults are consistent with one another."""

    def test_logging_defaults(self):
        assert DEFAULT_LOG_LEVEL == LogLevel.INFO
        assert DEFAULT_LOG_FORMAT == LogFormat.STRUCTURED
        assert DEFAULT_LOG_MAX_FILE_SIZE > 0
        assert DEFAULT_LOG_BACKUP_COUNT >= 0

    def test_blur_kernel_covers_three_sigma(self):
        assert DEFAULT_BLUR_RADIUS >= math.ceil(3 * DEFAULT_BLUR_SIGMA)

    def test_shifted_presets_differ_from_defaults(self):
        assert OOD_CONTRAST_GAMMA != DEFAULT_GAMMA
        assert OOD_RES_FACTOR_K != DEFAULT_FACTOR_K

    def test_image_size_fits_every_factor(self):
        assert DEFAULT_IMAGE_SIZE % DEFAULT_FACTOR_K == 0
        assert DEFAULT_IMAGE_SIZE % OOD_RES_FACTOR_K == 0

    def test_wolfe_defaults(self):
        assert 0 < DEFAULT_WOLFE_C1 < DEFAULT_WOLFE_C2 < 1
        assert 0 < DEFAULT_ALPHA_INIT <= DEFAULT_ALPHA_MAX
        assert DEFAULT_WOLFE_MAX_ITERS >= 1

    def test_time_selection_defaults(self):
        assert 0 < DEFAULT_TAU <= 1
        assert DEFAULT_NUM_STEPS // DEFAULT_GRID_DIVISOR >= 1

    def test_mode_defaults(self):
        assert DEFAULT_SOLVE_MODE == SolveMode.DYNAMIC
        assert DEFAULT_CONDITIONAL == ConditionalKind.RIDGE

    def test_seed_ranges_are_disjoint(self):
        test_range = set(range(DEFAULT_TEST_SEED, DEFAULT_TEST_SEED + DEFAULT_N_TEST))
        ref_range = set(range(DEFAULT_REF_SEED, DEFAULT_REF_SEED + DEFAULT_N_REFS))
        assert test_range.isdisjoint(ref_range)


class TestClassBands:
    def test_one_band_per_class(self):
        assert set(CLASS_BANDS) == {int(c) for c in TissueClass}

    def test_bands_are_separated(self):
        ordered = sorted(CLASS_BANDS.values())
        for lo, hi in ordered:
            assert 0.0 <= lo < hi <= 1.0
        for (_, hi_prev), (lo_next, _) in zip(ordered, ordered[1:]):
            assert lo_next - hi_prev >= MIN_BAND_SEPARATION - 1e-12


class TestPersistenceConstants:
    def test_magics_are_eight_bytes_and_distinct(self):
        assert len(RAW_MAGIC) == len(RIDGE_MAGIC) == 8
        assert RAW_MAGIC != RIDGE_MAGIC

    def test_pgm_and_fingerprint(self):
        assert PGM_MAXVAL == 65535
        assert FINGERPRINT_LENGTH == 16
        assert ENV_PREFIX.endswith("_")
