# tests/conftest.py

import logging
from pathlib import Path
from typing import Generator

import numpy as np
import pytest
from dotenv import load_dotenv

from dynamic_dps.config import ConsistencyWeights, DegradationConfig, RunConfig, RunConfigBuilder
from dynamic_dps.diffusion import DiffusionSchedule, GaussianMixturePrior, make_schedule

logger = logging.getLogger(__name__)

# Small but complete pipeline: 24 is divisible by both factors, measurement
# grids (12 and 8) are larger than the SSIM window.
SMALL_RUN_OPTIONS = {
    "gamma": 0.7,
    "blur_sigma": 1.0,
    "blur_radius": 3,
    "factor_k": 2,
    "noise_sigma": 0.02,
    "num_steps": 40,
    "beta_min": 0.0001,
    "beta_max": 0.2,
    "image_size": 24,
    "n_templates": 3,
    "sigma_p": 0.05,
    "phantom_seed": 11,
    "ssim_window": 5,
    "t_grid_stride": 4,
    "n_draws": 1,
    "bank_seed": 3,
    "patch_in": 3,
    "n_test": 2,
    "n_refs": 3,
    "test_seed": 0,
    "ref_seed": 1000,
    "max_iters": 10,
    "pinv_max_iter": 200,
}


@pytest.fixture(scope="session", autouse=True)
def load_env() -> Generator[None, None, None]:
    load_dotenv()
    yield


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def degradation() -> DegradationConfig:
    """Default in-distribution degradation."""
    return DegradationConfig(gamma=0.7, blur_sigma=1.0, blur_radius=3, factor_k=2, noise_sigma=0.02)


@pytest.fixture
def linear_degradation() -> DegradationConfig:
    """gamma = 1, so the forward operator is exactly linear."""
    return DegradationConfig(gamma=1.0, blur_sigma=1.0, blur_radius=3, factor_k=2, noise_sigma=0.02)


@pytest.fixture
def small_weights() -> ConsistencyWeights:
    return ConsistencyWeights(lambda1=0.5, lambda2=0.1, ssim_window=3)


@pytest.fixture
def short_schedule() -> DiffusionSchedule:
    return make_schedule(100, 1e-4, 0.05)


@pytest.fixture
def tiny_prior() -> GaussianMixturePrior:
    """Two 8x8 components with intensities in [0.3, 0.8], away from the gamma floor."""
    generator = np.random.default_rng(7)
    templates = generator.uniform(0.3, 0.8, size=(2, 8, 8))
    return GaussianMixturePrior(templates=templates, weights=np.array([0.4, 0.6]), sigma_p=0.05)


@pytest.fixture
def small_run_config(tmp_path: Path) -> RunConfig:
    options = dict(SMALL_RUN_OPTIONS)
    options["data_dir"] = tmp_path / "data"
    options["output_dir"] = tmp_path / "outputs"
    return RunConfigBuilder().from_dict(options).build()


def write_run_config(root: Path, name: str = "run.cfg", **overrides) -> Path:
    """Write the small run as a flat key = value file rooted at ``root``."""
    options = dict(SMALL_RUN_OPTIONS)
    options.update(overrides)
    lines = [f"{key} = {value}" for key, value in options.items()]
    lines.append(f"data_dir = {(root / 'data').as_posix()}")
    lines.append(f"output_dir = {(root / 'outputs').as_posix()}")
    lines.append("log_level = DEBUG  # verbose test runs")
    path = root / name
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.debug(f"Wrote test config to {path}")
    return path


@pytest.fixture(scope="session")
def run_config_writer():
    return write_run_config


@pytest.fixture
def small_config_file(tmp_path: Path) -> Path:
    return write_run_config(tmp_path)
